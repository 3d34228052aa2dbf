#pragma once

#include "pal/providers/provider.hpp"

#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace pal {

struct MockFailure {
    ProviderFailure kind = ProviderFailure::transport;
    int http_status = 0;
    // Chunks delivered before the failure (chat only).
    std::size_t after_chunks = 0;

    bool operator==(const MockFailure&) const = default;
};

// One scripted answer: either a reply text or an injected failure.
struct MockResponse {
    std::string text;
    std::optional<MockFailure> failure;

    bool operator==(const MockResponse&) const = default;
};

// Plain-text table mapping input hashes to responses. One entry per line:
//
//   <kind> <key> <response>
//
//   kind      chat | stt
//   key       *                      any input
//             sha256:<hex>           chat: last message content; stt: audio bytes
//             system:sha256:<hex>    chat: first (system) message content
//   response  text with \n \t \\ escapes,
//             @file:<path>           contents of a file relative to the script,
//             !fail <kind> [status=<n>] [after=<chunks>]
//
// Blank lines and lines starting with '#' are ignored. Repeating a key
// queues responses: the n-th matching call gets the n-th response and the
// last one repeats. Chat lookups try the last-message hash, then the system
// hash, then '*'.
class MockScript {
public:
    static MockScript parse(std::string_view text,
                            const std::filesystem::path& base_dir = {},
                            std::string_view origin = "<mock script>");
    static MockScript load(const std::filesystem::path& path);

    void add_chat(std::string key, MockResponse response);
    void add_stt(std::string key, MockResponse response);

    const std::vector<MockResponse>* chat_entry(const std::string& key) const;
    const std::vector<MockResponse>* stt_entry(const std::string& key) const;

    static std::string hash_key(std::string_view content) { return "sha256:" + hash_hex(content); }
    static std::string system_key(std::string_view content) {
        return "system:sha256:" + hash_hex(content);
    }

private:
    static std::string hash_hex(std::string_view content);

    std::map<std::string, std::vector<MockResponse>> chat_;
    std::map<std::string, std::vector<MockResponse>> stt_;
};

// Pseudo-audio produced by the mock TTS: a 16 kHz mono 16-bit WAV whose
// samples are a SHA-256 keystream seeded by the text, 320 bytes of PCM per
// character.
std::string mock_tts_audio(std::string_view text);
inline constexpr std::size_t kMockTtsBytesPerChar = 320;
inline constexpr std::size_t kMockTtsChunkBytes = 4096;

// Splits a reply into word-sized chunks (each word with its trailing
// whitespace); concatenating them gives the reply back.
std::vector<std::string> mock_chunks(std::string_view reply);

// Deterministic offline adapter for all three provider roles. Selected with
// PAL_PROVIDER=mock; also what the test suites run against.
class MockProvider : public ChatProvider, public SpeechToText, public TextToSpeech {
public:
    struct Options {
        std::string model = "mock-chat";
        std::chrono::milliseconds chunk_delay{0};
    };

    MockProvider(MockScript script, const Meter& meter, Options options);
    MockProvider(MockScript script, const Meter& meter);

    UsageRecord chat_stream(const std::vector<ChatMessage>& messages, const ChatParams& params,
                            const ChunkSink& on_chunk) override;
    std::string model_id() const override { return options_.model; }

    Transcription transcribe(const std::string& audio, std::string_view media_type,
                             const CallContext& context) override;

    UsageRecord synthesize_stream(std::string_view text, std::string_view voice_id,
                                  const ChunkSink& on_chunk, const CallContext& context) override;
    std::string output_media_type() const override { return "audio/wav"; }

    // Makes the next chat call fail regardless of the script. The scripted
    // reply is still consumed, and after_chunks of it are delivered first.
    void inject_chat_failure(MockFailure failure);

    struct Calls {
        std::size_t chat = 0;
        std::size_t stt = 0;
        std::size_t tts = 0;
        std::size_t total() const { return chat + stt + tts; }
    };
    Calls calls() const;
    std::vector<std::vector<ChatMessage>> chat_requests() const;
    std::vector<std::string> tts_inputs() const;

private:
    MockResponse next_chat(const std::vector<ChatMessage>& messages);
    static ProviderError to_error(const MockFailure& f);

    MockScript script_;
    const Meter* meter_;
    Options options_;

    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> cursor_;
    std::deque<MockFailure> injected_;
    Calls calls_;
    std::vector<std::vector<ChatMessage>> chat_requests_;
    std::vector<std::string> tts_inputs_;
};

} // namespace pal
