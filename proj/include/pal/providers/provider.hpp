#pragma once

#include "pal/error.hpp"
#include "pal/providers/usage.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

struct ChatMessage {
    enum class Role { system, user, assistant };
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

std::string_view to_string(ChatMessage::Role role);

// Attribution carried into every usage record.
struct CallContext {
    std::string session_id;
};

struct ChatParams {
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    CallContext context;
};

// Receives streamed text or audio bytes in arrival order.
using ChunkSink = std::function<void(std::string_view chunk)>;

enum class ProviderFailure {
    timeout,
    transport,
    http_status,
    malformed_response,
    not_configured,
};

std::string_view to_string(ProviderFailure failure);

// Whether repeating the same call can reasonably succeed.
bool is_retryable(ProviderFailure failure, int http_status = 0);

class ProviderError : public Error {
public:
    ProviderError(ProviderFailure failure, const std::string& message, int http_status = 0)
        : Error(Errc::provider_error, message), failure_(failure), http_status_(http_status) {}

    ProviderFailure failure() const noexcept { return failure_; }
    int http_status() const noexcept { return http_status_; }
    bool retryable() const noexcept { return is_retryable(failure_, http_status_); }

private:
    ProviderFailure failure_;
    int http_status_;
};

class ChatProvider {
public:
    struct Completion {
        std::string text;
        UsageRecord usage;
    };

    virtual ~ChatProvider() = default;

    // Chunks are delivered through `on_chunk`; the returned record is the
    // one handed to the meter. No chunk is delivered after an error.
    virtual UsageRecord chat_stream(const std::vector<ChatMessage>& messages,
                                    const ChatParams& params, const ChunkSink& on_chunk) = 0;

    virtual Completion chat_complete(const std::vector<ChatMessage>& messages,
                                     const ChatParams& params);

    virtual std::string model_id() const = 0;
};

class SpeechToText {
public:
    struct Transcription {
        std::string text;
        UsageRecord usage;
    };

    virtual ~SpeechToText() = default;

    // Throws contract_error for empty input, Error(unsupported_media_type)
    // or Error(invalid_audio) before contacting the provider.
    virtual Transcription transcribe(const std::string& audio, std::string_view media_type,
                                     const CallContext& context) = 0;
};

class TextToSpeech {
public:
    virtual ~TextToSpeech() = default;

    // Throws contract_error for empty text.
    virtual UsageRecord synthesize_stream(std::string_view text, std::string_view voice_id,
                                          const ChunkSink& on_chunk,
                                          const CallContext& context) = 0;

    // Media type of the produced audio stream.
    virtual std::string output_media_type() const = 0;
};

struct ProviderSet {
    std::shared_ptr<ChatProvider> chat;
    std::shared_ptr<SpeechToText> stt;
    std::shared_ptr<TextToSpeech> tts;
};

} // namespace pal
