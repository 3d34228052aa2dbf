#pragma once

#include "pal/providers/provider.hpp"

#include <optional>
#include <string>

namespace pal {

struct RemoteEndpoint {
    // Full URL, e.g. "https://api.openai.com/v1/chat/completions".
    std::string url;
    std::string model;
    // Sent as a bearer token when non-empty.
    std::string api_key;
    double timeout_seconds = 60.0;
};

struct ParsedUrl {
    std::string scheme_host_port;  // "https://host:443"
    std::string path;              // "/v1/chat/completions"
};

// Throws contract_error for anything but http(s)://host[:port][/path].
ParsedUrl parse_endpoint_url(std::string_view url);

// OpenAI-compatible chat completions with `stream: true`.
class RemoteChatProvider : public ChatProvider {
public:
    RemoteChatProvider(RemoteEndpoint endpoint, const Meter& meter,
                       std::optional<double> default_temperature = std::nullopt);

    UsageRecord chat_stream(const std::vector<ChatMessage>& messages, const ChatParams& params,
                            const ChunkSink& on_chunk) override;
    std::string model_id() const override { return endpoint_.model; }

private:
    RemoteEndpoint endpoint_;
    ParsedUrl url_;
    const Meter* meter_;
    std::optional<double> default_temperature_;
};

// OpenAI-compatible multipart transcription endpoint.
class RemoteSpeechToText : public SpeechToText {
public:
    RemoteSpeechToText(RemoteEndpoint endpoint, const Meter& meter);

    Transcription transcribe(const std::string& audio, std::string_view media_type,
                             const CallContext& context) override;

private:
    RemoteEndpoint endpoint_;
    ParsedUrl url_;
    const Meter* meter_;
};

// OpenAI-compatible speech endpoint; the body is streamed as it arrives.
class RemoteTextToSpeech : public TextToSpeech {
public:
    // `format` is one of wav, mp3, opus, pcm.
    RemoteTextToSpeech(RemoteEndpoint endpoint, const Meter& meter, std::string default_voice,
                       std::string format = "wav");

    UsageRecord synthesize_stream(std::string_view text, std::string_view voice_id,
                                  const ChunkSink& on_chunk, const CallContext& context) override;
    std::string output_media_type() const override;

private:
    RemoteEndpoint endpoint_;
    ParsedUrl url_;
    const Meter* meter_;
    std::string default_voice_;
    std::string format_;
};

} // namespace pal
