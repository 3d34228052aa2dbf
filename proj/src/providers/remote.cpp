#include "pal/providers/remote.hpp"

#include "pal/providers/audio.hpp"
#include "pal/providers/sse.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <exception>
#include <regex>

namespace pal {
namespace {

using json = nlohmann::json;

std::unique_ptr<httplib::Client> make_client(const ParsedUrl& url, double timeout_seconds) {
    auto client = std::make_unique<httplib::Client>(url.scheme_host_port);
    auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(timeout_seconds));
    auto sec = static_cast<time_t>(timeout.count() / 1'000'000);
    auto usec = static_cast<time_t>(timeout.count() % 1'000'000);
    client->set_connection_timeout(sec, usec);
    client->set_read_timeout(sec, usec);
    client->set_write_timeout(sec, usec);
    client->set_keep_alive(false);
    return client;
}

httplib::Headers auth_headers(const RemoteEndpoint& endpoint) {
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    }
    return headers;
}

std::string truncate_body(std::string body) {
    constexpr std::size_t limit = 512;
    if (body.size() > limit) {
        body.resize(limit);
        body += "...";
    }
    return body;
}

// Maps a transport-level httplib failure, using elapsed time to tell read
// timeouts (reported as Error::Read) apart from dropped connections.
ProviderError transport_error(httplib::Error err, std::chrono::steady_clock::duration elapsed,
                              double timeout_seconds, std::string_view what) {
    bool timed_out = err == httplib::Error::ConnectionTimeout ||
                     ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                      std::chrono::duration<double>(elapsed).count() >= timeout_seconds * 0.95);
    return ProviderError(timed_out ? ProviderFailure::timeout : ProviderFailure::transport,
                         std::string(what) + ": " + httplib::to_string(err));
}

ProviderError status_error(int status, const std::string& body, std::string_view what) {
    std::string message = std::string(what) + ": HTTP " + std::to_string(status);
    try {
        auto j = json::parse(body);
        if (j.contains("error") && j["error"].is_object() && j["error"].contains("message")) {
            message += ": " + j["error"]["message"].get<std::string>();
        }
    } catch (const std::exception&) {
        if (!body.empty()) {
            message += ": " + truncate_body(body);
        }
    }
    return ProviderError(ProviderFailure::http_status, message, status);
}

std::string file_name_for(std::string_view media_type) {
    auto container = container_for_media_type(media_type);
    return container == AudioContainer::wav ? "audio.wav" : "audio.ogg";
}

} // namespace

ParsedUrl parse_endpoint_url(std::string_view url) {
    static const std::regex re(R"(^(https?)://([^/:?#]+|\[[0-9A-Fa-f:.]+\])(?::(\d+))?(/[^#]*)?$)");
    std::string s(url);
    std::smatch m;
    if (!std::regex_match(s, m, re)) {
        throw contract_error("invalid endpoint URL: " + s);
    }
    ParsedUrl out;
    out.scheme_host_port = m[1].str() + "://" + m[2].str();
    if (m[3].matched) {
        out.scheme_host_port += ":" + m[3].str();
    }
    out.path = m[4].matched ? m[4].str() : "/";
    return out;
}

RemoteChatProvider::RemoteChatProvider(RemoteEndpoint endpoint, const Meter& meter,
                                       std::optional<double> default_temperature)
    : endpoint_(std::move(endpoint)),
      url_(parse_endpoint_url(endpoint_.url)),
      meter_(&meter),
      default_temperature_(default_temperature) {}

UsageRecord RemoteChatProvider::chat_stream(const std::vector<ChatMessage>& messages,
                                            const ChatParams& params, const ChunkSink& on_chunk) {
    if (messages.empty()) {
        throw contract_error("chat request has no messages");
    }
    json body;
    body["model"] = endpoint_.model;
    body["stream"] = true;
    body["stream_options"] = {{"include_usage", true}};
    body["messages"] = json::array();
    std::string prompt_text;
    for (const auto& m : messages) {
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
        prompt_text += m.content;
    }
    if (auto t = params.temperature ? params.temperature : default_temperature_) {
        body["temperature"] = *t;
    }
    if (params.max_tokens) {
        body["max_tokens"] = *params.max_tokens;
    }

    UsageRecord usage;
    usage.kind = CallKind::chat;
    usage.model = endpoint_.model;
    usage.session_id = params.context.session_id;

    std::string delivered;
    std::optional<std::int64_t> reported_in;
    std::optional<std::int64_t> reported_out;
    std::string error_body;
    std::exception_ptr failure;
    bool done = false;
    SseDecoder decoder;

    auto handle_events = [&](const std::vector<SseEvent>& events) {
        for (const auto& ev : events) {
            if (done) {
                return;
            }
            if (ev.data == "[DONE]") {
                done = true;
                return;
            }
            json j;
            try {
                j = json::parse(ev.data);
            } catch (const std::exception& e) {
                throw ProviderError(ProviderFailure::malformed_response,
                                    std::string("chat stream: unparseable event: ") + e.what());
            }
            if (j.contains("error")) {
                throw ProviderError(ProviderFailure::malformed_response,
                                    "chat stream: error event: " + j["error"].dump());
            }
            if (j.contains("usage") && j["usage"].is_object()) {
                const auto& u = j["usage"];
                if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer()) {
                    reported_in = u["prompt_tokens"].get<std::int64_t>();
                }
                if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer()) {
                    reported_out = u["completion_tokens"].get<std::int64_t>();
                }
            }
            if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
                const auto& choice = j["choices"][0];
                if (choice.contains("delta") && choice["delta"].contains("content") &&
                    choice["delta"]["content"].is_string()) {
                    std::string piece = choice["delta"]["content"].get<std::string>();
                    if (!piece.empty()) {
                        delivered += piece;
                        on_chunk(piece);
                    }
                }
            }
        }
    };

    httplib::Request req;
    req.method = "POST";
    req.path = url_.path;
    req.headers = auth_headers(endpoint_);
    req.headers.emplace("Accept", "text/event-stream");
    req.set_header("Content-Type", "application/json");
    req.body = body.dump();
    int status = 0;
    req.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            if (error_body.size() < 64 * 1024) {
                error_body.append(data, n);
            }
            return true;
        }
        try {
            handle_events(decoder.feed(std::string_view(data, n)));
        } catch (...) {
            failure = std::current_exception();
            return false;
        }
        return !done;
    };

    auto finish = [&](bool failed) {
        usage.failed = failed;
        usage.estimated = !(reported_in && reported_out);
        usage.input_tokens = reported_in.value_or(estimate_tokens(prompt_text));
        usage.output_tokens = reported_out.value_or(estimate_tokens(delivered));
        return meter_->record(usage);
    };

    auto client = make_client(url_, endpoint_.timeout_seconds);
    auto started = std::chrono::steady_clock::now();
    auto result = client->send(req);
    auto elapsed = std::chrono::steady_clock::now() - started;

    if (failure) {
        finish(true);
        std::rethrow_exception(failure);
    }
    if (!result && !(done && result.error() == httplib::Error::Canceled)) {
        finish(true);
        throw transport_error(result.error(), elapsed, endpoint_.timeout_seconds, "chat");
    }
    if (status != 200) {
        finish(true);
        throw status_error(status, error_body, "chat");
    }
    if (!done) {
        try {
            handle_events(decoder.finish());
        } catch (...) {
            finish(true);
            throw;
        }
    }
    if (!done) {
        finish(true);
        throw ProviderError(ProviderFailure::malformed_response,
                            "chat stream ended without [DONE]");
    }
    return finish(false);
}

RemoteSpeechToText::RemoteSpeechToText(RemoteEndpoint endpoint, const Meter& meter)
    : endpoint_(std::move(endpoint)), url_(parse_endpoint_url(endpoint_.url)), meter_(&meter) {}

SpeechToText::Transcription RemoteSpeechToText::transcribe(const std::string& audio,
                                                           std::string_view media_type,
                                                           const CallContext& context) {
    std::int64_t duration = check_audio_input(audio, media_type);

    UsageRecord usage;
    usage.kind = CallKind::stt;
    usage.model = endpoint_.model;
    usage.audio_ms = duration;
    usage.session_id = context.session_id;
    auto fail = [&]() {
        usage.failed = true;
        meter_->record(usage);
    };

    httplib::MultipartFormDataItems items = {
        {"file", audio, file_name_for(media_type), base_media_type(media_type)},
        {"model", endpoint_.model, "", ""},
        {"response_format", "json", "", ""},
    };
    auto client = make_client(url_, endpoint_.timeout_seconds);
    auto started = std::chrono::steady_clock::now();
    auto result = client->Post(url_.path, auth_headers(endpoint_), items);
    auto elapsed = std::chrono::steady_clock::now() - started;
    if (!result) {
        fail();
        throw transport_error(result.error(), elapsed, endpoint_.timeout_seconds, "stt");
    }
    if (result->status != 200) {
        fail();
        throw status_error(result->status, result->body, "stt");
    }
    std::string text;
    try {
        auto j = json::parse(result->body);
        text = j.at("text").get<std::string>();
    } catch (const std::exception& e) {
        fail();
        throw ProviderError(ProviderFailure::malformed_response,
                            std::string("stt: unexpected response: ") + e.what());
    }
    return {std::move(text), meter_->record(usage)};
}

RemoteTextToSpeech::RemoteTextToSpeech(RemoteEndpoint endpoint, const Meter& meter,
                                       std::string default_voice, std::string format)
    : endpoint_(std::move(endpoint)),
      url_(parse_endpoint_url(endpoint_.url)),
      meter_(&meter),
      default_voice_(std::move(default_voice)),
      format_(std::move(format)) {
    if (format_ != "wav" && format_ != "mp3" && format_ != "opus" && format_ != "pcm") {
        throw contract_error("unsupported TTS format: " + format_);
    }
}

std::string RemoteTextToSpeech::output_media_type() const {
    if (format_ == "mp3") return "audio/mpeg";
    if (format_ == "opus") return "audio/ogg";
    if (format_ == "pcm") return "audio/pcm";
    return "audio/wav";
}

UsageRecord RemoteTextToSpeech::synthesize_stream(std::string_view text, std::string_view voice_id,
                                                  const ChunkSink& on_chunk,
                                                  const CallContext& context) {
    if (text.empty()) {
        throw contract_error("nothing to synthesize");
    }
    std::string voice = voice_id.empty() ? default_voice_ : std::string(voice_id);
    json body = {{"model", endpoint_.model},
                 {"input", std::string(text)},
                 {"voice", voice},
                 {"response_format", format_}};

    UsageRecord usage;
    usage.kind = CallKind::tts;
    usage.model = endpoint_.model;
    usage.synthesized_chars = count_characters(text);
    usage.session_id = context.session_id;

    int status = 0;
    std::string error_body;
    std::exception_ptr failure;
    std::size_t received = 0;
    httplib::Request req;
    req.method = "POST";
    req.path = url_.path;
    req.headers = auth_headers(endpoint_);
    req.set_header("Content-Type", "application/json");
    req.body = body.dump();
    req.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            if (error_body.size() < 64 * 1024) {
                error_body.append(data, n);
            }
            return true;
        }
        try {
            received += n;
            on_chunk(std::string_view(data, n));
        } catch (...) {
            failure = std::current_exception();
            return false;
        }
        return true;
    };

    auto fail = [&]() {
        usage.failed = true;
        meter_->record(usage);
    };
    auto client = make_client(url_, endpoint_.timeout_seconds);
    auto started = std::chrono::steady_clock::now();
    auto result = client->send(req);
    auto elapsed = std::chrono::steady_clock::now() - started;
    if (failure) {
        fail();
        std::rethrow_exception(failure);
    }
    if (!result) {
        fail();
        throw transport_error(result.error(), elapsed, endpoint_.timeout_seconds, "tts");
    }
    if (status != 200) {
        fail();
        throw status_error(status, error_body, "tts");
    }
    if (received == 0) {
        fail();
        throw ProviderError(ProviderFailure::malformed_response, "tts: empty audio response");
    }
    return meter_->record(usage);
}

} // namespace pal
