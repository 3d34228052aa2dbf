#pragma once

#include "pal/conversation.hpp"

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace pal {

// Wire form of an error: {"error": {"code", "message", "retryable"}}.
struct ApiError {
    int status = 500;
    std::string code;
    std::string message;
    bool retryable = false;
};

// Every Errc maps to exactly one (status, code) pair.
ApiError api_error_for(Errc code, std::string message);
// Errors thrown by lower layers, including ProviderError's retry hint.
ApiError api_error_for(const std::exception& e);
nlohmann::json api_error_json(const ApiError& error);

// Codes produced by the HTTP layer itself rather than by an Errc.
inline constexpr std::string_view kRouteNotFoundCode = "route_not_found";
inline constexpr std::string_view kPayloadTooLargeCode = "payload_too_large";

// One documented endpoint; `path` uses {name} placeholders.
struct ApiRoute {
    std::string method;
    std::string path;
};

const std::vector<ApiRoute>& api_routes();

// --- response views ------------------------------------------------------

nlohmann::json persona_summary_json(const PersonaProfile& persona);
nlohmann::json persona_detail_json(const PersonaProfile& persona);
nlohmann::json session_summary_json(const SessionSummary& summary);
// Full session. Patient turns of an active voice session carry audio only:
// their text, raw text and cues are left out.
nlohmann::json session_detail_json(const Session& session, const PersonaLibrary& personas);
nlohmann::json feedback_json(const FeedbackReport& report);

// Header-safe form of UTF-8 text (RFC 3986 unreserved characters kept).
std::string percent_encode(std::string_view text);
std::string percent_decode(std::string_view text);

struct ApiOptions {
    std::string cors_origin = "*";
    std::size_t max_upload_bytes = 32u << 20;
};

// HTTP front end over a ConversationEngine. Text replies stream as
// server-sent events (cue, text, done, error); voice replies stream as
// chunked audio with the clinician's transcription in X-Pal-Transcript.
class ApiServer {
public:
    ApiServer(ConversationEngine& engine, ApiOptions options = {});
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Returns false when the address cannot be bound.
    bool bind(const std::string& host, int port);
    // Binds an ephemeral port and returns it, or -1.
    int bind_any_port(const std::string& host);
    // Blocks until stop().
    bool listen_after_bind();
    // Stops accepting requests and waits for open reply streams to end.
    void stop();
    bool is_running() const;
    void wait_until_ready() const;

    httplib::Server& http();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pal
