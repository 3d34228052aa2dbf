#pragma once

#include "pal/providers/mock.hpp"
#include "pal/providers/provider.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pal {

struct EndpointConfig {
    std::string url;
    std::string model;
};

struct ProviderConfig {
    enum class Mode { mock, remote };
    Mode mode = Mode::mock;

    EndpointConfig chat{"https://api.openai.com/v1/chat/completions", "gpt-4o"};
    EndpointConfig stt{"https://api.openai.com/v1/audio/transcriptions", "whisper-1"};
    EndpointConfig tts{"https://api.openai.com/v1/audio/speech", "tts-1"};
    std::string tts_voice = "alloy";
    // Requested output format; "wav", "mp3", "opus" or "pcm".
    std::string tts_format = "wav";
    double timeout_seconds = 60.0;
    std::optional<double> temperature;
    Rates rates;

    std::optional<std::filesystem::path> mock_script;
    std::chrono::milliseconds mock_chunk_delay{0};

    // Read from the environment only; never serialized.
    std::string chat_api_key;
    std::string stt_api_key;
    std::string tts_api_key;
};

struct AppConfig {
    ProviderConfig providers;
    // Spoken when a voice reply has no speech left after removing cues.
    std::string silence_placeholder = "\xE2\x80\xA6";
    int feedback_parse_retries = 2;
    std::string cors_origin = "*";
};

using EnvLookup = std::function<std::optional<std::string>(std::string_view name)>;

EnvLookup process_env();

// Defaults, then the optional JSON config file, then environment variables:
//   PAL_PROVIDER=mock|remote, PAL_{CHAT,STT,TTS}_API_KEY,
//   PAL_{CHAT,STT,TTS}_ENDPOINT, PAL_{CHAT,STT,TTS}_MODEL, PAL_TTS_VOICE,
//   PAL_MOCK_SCRIPT.
// Throws Error(parse_error) for malformed files and Error(validation_failed)
// for out-of-range values.
AppConfig load_app_config(const std::optional<std::filesystem::path>& file,
                          const EnvLookup& env = process_env());

AppConfig app_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// Credential-free view, suitable for logs and diagnostics.
nlohmann::json redacted_json(const AppConfig& config);

// Built-in script used when mock mode has no script file: a generic patient
// reply, the example feedback for the feedback prompt, and a fixed STT line.
MockScript default_mock_script();

ProviderSet make_providers(const ProviderConfig& config, const Meter& meter);

} // namespace pal
