#include "pal/config.hpp"

#include "pal/feedback.hpp"
#include "pal/providers/remote.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace pal {
namespace {

using json = nlohmann::json;

[[noreturn]] void config_error(const std::string& message) {
    throw Error(Errc::parse_error, "config: " + message);
}

void check_keys(const json& j, std::string_view where, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
        config_error(std::string(where) + " must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            config_error("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

template <typename T>
T get_as(const json& j, std::string_view key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        config_error("wrong type for '" + std::string(key) + "'");
    }
}

std::int64_t rate_value(const json& j, std::string_view key) {
    if (j.is_string()) {
        return parse_rate(j.get<std::string>());
    }
    if (j.is_number()) {
        // Shortest round-trip form of the number, e.g. 0.006 -> "0.006".
        return parse_rate(j.dump());
    }
    config_error("rate '" + std::string(key) + "' must be a decimal string or number");
}

void read_endpoint(const json& j, std::string_view name, EndpointConfig& out,
                   std::set<std::string> extra = {}) {
    extra.insert({"url", "model"});
    check_keys(j, name, extra);
    if (j.contains("url")) out.url = get_as<std::string>(j["url"], "url");
    if (j.contains("model")) out.model = get_as<std::string>(j["model"], "model");
}

void validate(const AppConfig& config) {
    const auto& p = config.providers;
    auto fail = [](const std::string& m) { throw Error(Errc::validation_failed, "config: " + m); };
    if (!(p.timeout_seconds > 0)) fail("timeout_seconds must be positive");
    if (p.temperature && (*p.temperature < 0 || *p.temperature > 2)) {
        fail("temperature must be within [0, 2]");
    }
    if (config.feedback_parse_retries < 0 || config.feedback_parse_retries > 10) {
        fail("feedback_parse_retries must be within [0, 10]");
    }
    if (p.mock_chunk_delay.count() < 0) fail("mock chunk_delay_ms must be >= 0");
    static const std::set<std::string> formats = {"wav", "mp3", "opus", "pcm"};
    if (!formats.contains(p.tts_format)) fail("tts format must be wav, mp3, opus or pcm");
    for (const auto* e : {&p.chat, &p.stt, &p.tts}) {
        try {
            parse_endpoint_url(e->url);
        } catch (const Error& err) {
            fail(err.what());
        }
        if (e->model.empty()) fail("endpoint model must not be empty");
    }
}

} // namespace

EnvLookup process_env() {
    return [](std::string_view name) -> std::optional<std::string> {
        const char* v = std::getenv(std::string(name).c_str());
        if (v == nullptr) {
            return std::nullopt;
        }
        return std::string(v);
    };
}

AppConfig app_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    AppConfig config;
    auto& p = config.providers;
    check_keys(j, "config", {"provider", "chat", "stt", "tts", "timeout_seconds", "temperature",
                             "rates", "mock", "silence_placeholder", "feedback_parse_retries",
                             "cors_origin"});
    if (j.contains("provider")) {
        auto mode = get_as<std::string>(j["provider"], "provider");
        if (mode == "mock") {
            p.mode = ProviderConfig::Mode::mock;
        } else if (mode == "remote") {
            p.mode = ProviderConfig::Mode::remote;
        } else {
            config_error("provider must be 'mock' or 'remote'");
        }
    }
    if (j.contains("chat")) read_endpoint(j["chat"], "chat", p.chat);
    if (j.contains("stt")) read_endpoint(j["stt"], "stt", p.stt);
    if (j.contains("tts")) {
        const auto& t = j["tts"];
        read_endpoint(t, "tts", p.tts, {"voice", "format"});
        if (t.contains("voice")) p.tts_voice = get_as<std::string>(t["voice"], "voice");
        if (t.contains("format")) p.tts_format = get_as<std::string>(t["format"], "format");
    }
    if (j.contains("timeout_seconds")) {
        p.timeout_seconds = get_as<double>(j["timeout_seconds"], "timeout_seconds");
    }
    if (j.contains("temperature") && !j["temperature"].is_null()) {
        p.temperature = get_as<double>(j["temperature"], "temperature");
    }
    if (j.contains("rates")) {
        const auto& r = j["rates"];
        check_keys(r, "rates", {"chat_input_per_million_tokens", "chat_output_per_million_tokens",
                                "stt_per_audio_minute", "tts_per_thousand_chars"});
        auto set = [&](const char* key, std::int64_t& out) {
            if (r.contains(key)) out = rate_value(r[key], key);
        };
        set("chat_input_per_million_tokens", p.rates.input_per_million_tokens);
        set("chat_output_per_million_tokens", p.rates.output_per_million_tokens);
        set("stt_per_audio_minute", p.rates.per_audio_minute);
        set("tts_per_thousand_chars", p.rates.per_thousand_chars);
    }
    if (j.contains("mock")) {
        const auto& m = j["mock"];
        check_keys(m, "mock", {"script", "chunk_delay_ms"});
        if (m.contains("script") && !m["script"].is_null()) {
            std::filesystem::path script = get_as<std::string>(m["script"], "script");
            p.mock_script = script.is_relative() && !base_dir.empty() ? base_dir / script : script;
        }
        if (m.contains("chunk_delay_ms")) {
            p.mock_chunk_delay =
                std::chrono::milliseconds(get_as<std::int64_t>(m["chunk_delay_ms"], "chunk_delay_ms"));
        }
    }
    if (j.contains("silence_placeholder")) {
        config.silence_placeholder = get_as<std::string>(j["silence_placeholder"], "silence_placeholder");
    }
    if (j.contains("feedback_parse_retries")) {
        config.feedback_parse_retries = get_as<int>(j["feedback_parse_retries"], "feedback_parse_retries");
    }
    if (j.contains("cors_origin")) {
        config.cors_origin = get_as<std::string>(j["cors_origin"], "cors_origin");
    }
    validate(config);
    return config;
}

AppConfig load_app_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
    AppConfig config;
    if (file) {
        std::ifstream in(*file, std::ios::binary);
        if (!in) {
            throw Error(Errc::io_error, "cannot read config file " + file->string());
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        json j;
        try {
            j = json::parse(buffer.str());
        } catch (const json::parse_error& e) {
            throw Error(Errc::parse_error, file->string() + ": " + e.what());
        }
        config = app_config_from_json(j, file->parent_path());
    }
    auto& p = config.providers;
    if (auto v = env("PAL_PROVIDER")) {
        if (*v == "mock") {
            p.mode = ProviderConfig::Mode::mock;
        } else if (*v == "remote") {
            p.mode = ProviderConfig::Mode::remote;
        } else {
            throw Error(Errc::validation_failed, "PAL_PROVIDER must be 'mock' or 'remote'");
        }
    }
    struct Slot {
        const char* prefix;
        EndpointConfig* endpoint;
        std::string* key;
    };
    for (const Slot& s : {Slot{"CHAT", &p.chat, &p.chat_api_key}, Slot{"STT", &p.stt, &p.stt_api_key},
                          Slot{"TTS", &p.tts, &p.tts_api_key}}) {
        std::string base = std::string("PAL_") + s.prefix;
        if (auto v = env(base + "_API_KEY")) *s.key = *v;
        if (auto v = env(base + "_ENDPOINT")) s.endpoint->url = *v;
        if (auto v = env(base + "_MODEL")) s.endpoint->model = *v;
    }
    if (auto v = env("PAL_TTS_VOICE")) p.tts_voice = *v;
    if (auto v = env("PAL_MOCK_SCRIPT")) p.mock_script = std::filesystem::path(*v);
    validate(config);
    return config;
}

json redacted_json(const AppConfig& config) {
    const auto& p = config.providers;
    auto endpoint = [](const EndpointConfig& e, const std::string& key) {
        return json{{"url", e.url}, {"model", e.model}, {"api_key_set", !key.empty()}};
    };
    json tts = endpoint(p.tts, p.tts_api_key);
    tts["voice"] = p.tts_voice;
    tts["format"] = p.tts_format;
    return json{
        {"provider", p.mode == ProviderConfig::Mode::mock ? "mock" : "remote"},
        {"chat", endpoint(p.chat, p.chat_api_key)},
        {"stt", endpoint(p.stt, p.stt_api_key)},
        {"tts", tts},
        {"timeout_seconds", p.timeout_seconds},
        {"temperature", p.temperature ? json(*p.temperature) : json(nullptr)},
        {"rates",
         {{"chat_input_per_million_tokens", format_rate(p.rates.input_per_million_tokens)},
          {"chat_output_per_million_tokens", format_rate(p.rates.output_per_million_tokens)},
          {"stt_per_audio_minute", format_rate(p.rates.per_audio_minute)},
          {"tts_per_thousand_chars", format_rate(p.rates.per_thousand_chars)}}},
        {"mock",
         {{"script", p.mock_script ? json(p.mock_script->string()) : json(nullptr)},
          {"chunk_delay_ms", p.mock_chunk_delay.count()}}},
        {"silence_placeholder", config.silence_placeholder},
        {"feedback_parse_retries", config.feedback_parse_retries},
        {"cors_origin", config.cors_origin},
    };
}

MockScript default_mock_script() {
    MockScript script;
    for (const char* reply : {
             "*shifts in the chair* I was hoping you'd have some news for me. Nobody has really "
             "explained what's going on.",
             "*looks down* That's a lot to take in. What does that mean for me?",
             "*voice wavers* I don't know what to say. I thought I still had more time.",
         }) {
        script.add_chat("*", {reply, std::nullopt});
    }
    script.add_chat(MockScript::system_key(feedback_system_prompt()),
                    {std::string(feedback_prompt_example()), std::nullopt});
    script.add_stt("*", {"I have your results here and I'd like to go through them with you.",
                         std::nullopt});
    return script;
}

ProviderSet make_providers(const ProviderConfig& config, const Meter& meter) {
    if (config.mode == ProviderConfig::Mode::mock) {
        MockScript script = config.mock_script ? MockScript::load(*config.mock_script)
                                               : default_mock_script();
        MockProvider::Options options;
        options.chunk_delay = config.mock_chunk_delay;
        auto mock = std::make_shared<MockProvider>(std::move(script), meter, options);
        return {mock, mock, mock};
    }
    auto endpoint = [&](const EndpointConfig& e, const std::string& key) {
        return RemoteEndpoint{e.url, e.model, key, config.timeout_seconds};
    };
    return {
        std::make_shared<RemoteChatProvider>(endpoint(config.chat, config.chat_api_key), meter,
                                             config.temperature),
        std::make_shared<RemoteSpeechToText>(endpoint(config.stt, config.stt_api_key), meter),
        std::make_shared<RemoteTextToSpeech>(endpoint(config.tts, config.tts_api_key), meter,
                                             config.tts_voice, config.tts_format),
    };
}

} // namespace pal
