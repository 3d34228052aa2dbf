#include "pal/api.hpp"

#include "pal/providers/audio.hpp"
#include "pal/providers/sse.hpp"
#include "pal/serialization.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <deque>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace pal {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string path_to_regex(std::string_view path) {
    std::string out;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] == '{') {
            std::size_t close = path.find('}', i);
            std::string_view name = path.substr(i + 1, close - i - 1);
            out += name.ends_with("*") ? "(.+)" : "([^/]+)";
            i = close + 1;
        } else {
            char c = path[i++];
            if (std::string_view(".+*?^$()[]{}|\\").find(c) != std::string_view::npos) {
                out.push_back('\\');
            }
            out.push_back(c);
        }
    }
    return out;
}

std::string media_type_for_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "application/octet-stream";
}

std::string image_url(const std::optional<std::string>& ref) {
    return ref ? "/assets/" + *ref : std::string();
}

json turn_json(const Turn& t, const std::string& session_id, bool withhold_text) {
    json j = {{"index", t.index},
              {"role", to_string(t.role)},
              {"started_at", format_iso8601(t.started_at)},
              {"completed_at", format_iso8601(t.completed_at)}};
    if (!withhold_text) {
        j["text"] = t.text;
        j["raw_text"] = t.raw_text;
        j["cues"] = json::array();
        for (const auto& c : t.cues) {
            j["cues"].push_back({{"position", c.position}, {"action", c.action}});
        }
    }
    if (t.audio_ref) {
        j["audio_url"] = "/sessions/" + session_id + "/turns/" + std::to_string(t.index) + "/audio";
        j["audio_media_type"] = t.audio_ref->media_type;
    }
    return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) {
    send_json(res, e.status, api_error_json(e));
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        throw Error(Errc::parse_error, "request body must be a JSON object");
    }
    json j;
    try {
        j = json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse_error, std::string("malformed JSON body: ") + e.what());
    }
    if (!j.is_object()) {
        throw Error(Errc::parse_error, "request body must be a JSON object");
    }
    return j;
}

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw contract_error(std::string("field '") + key + "' must be a string");
    }
    return j[key].get<std::string>();
}

// Producer/consumer buffer between the engine thread and the HTTP writer.
struct ReplyStream {
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::string> chunks;
    bool started = false;
    bool finished = false;
    bool aborted = false;
    std::optional<ApiError> early_error;
    std::string transcript;
    int clinician_index = -1;

    void push(std::string chunk) {
        {
            std::lock_guard lock(m);
            chunks.push_back(std::move(chunk));
            started = true;
        }
        cv.notify_all();
    }
};

} // namespace

ApiError api_error_for(Errc code, std::string message) {
    auto make = [&](int status, std::string_view c, bool retryable) {
        return ApiError{status, std::string(c), std::move(message), retryable};
    };
    switch (code) {
    case Errc::contract_violation: return make(422, "invalid_request", false);
    case Errc::io_error: return make(500, "storage_error", true);
    case Errc::parse_error: return make(400, "malformed_request", false);
    case Errc::validation_failed: return make(422, "validation_failed", false);
    case Errc::user_not_found: return make(404, "user_not_found", false);
    case Errc::persona_not_found: return make(404, "persona_not_found", false);
    case Errc::session_not_found: return make(404, "session_not_found", false);
    case Errc::blob_not_found: return make(404, "audio_not_found", false);
    case Errc::session_finished: return make(409, "session_finished", false);
    case Errc::out_of_turn: return make(409, "out_of_turn", false);
    case Errc::reply_in_progress: return make(409, "reply_in_progress", true);
    case Errc::modality_mismatch: return make(409, "modality_mismatch", false);
    case Errc::nothing_to_analyze: return make(409, "nothing_to_analyze", false);
    case Errc::unsupported_media_type: return make(415, "unsupported_media_type", false);
    case Errc::invalid_audio: return make(422, "invalid_audio", false);
    case Errc::provider_error: return make(502, "provider_error", true);
    case Errc::feedback_parse_failed: return make(502, "feedback_parse_failed", true);
    case Errc::internal: return make(500, "internal", false);
    }
    return make(500, "internal", false);
}

ApiError api_error_for(const std::exception& e) {
    if (const auto* pe = dynamic_cast<const ProviderError*>(&e)) {
        ApiError out = api_error_for(Errc::provider_error, pe->what());
        out.retryable = pe->retryable();
        return out;
    }
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        return api_error_for(err->code(), err->what());
    }
    return api_error_for(Errc::internal, e.what());
}

json api_error_json(const ApiError& error) {
    return json{{"error",
                 {{"code", error.code}, {"message", error.message}, {"retryable", error.retryable}}}};
}

const std::vector<ApiRoute>& api_routes() {
    static const std::vector<ApiRoute> routes = {
        {"GET", "/healthz"},
        {"POST", "/users"},
        {"GET", "/personas"},
        {"GET", "/personas/{persona_id}"},
        {"GET", "/assets/{path*}"},
        {"POST", "/sessions"},
        {"GET", "/sessions"},
        {"GET", "/sessions/{session_id}"},
        {"POST", "/sessions/{session_id}/message"},
        {"POST", "/sessions/{session_id}/audio"},
        {"POST", "/sessions/{session_id}/retry"},
        {"POST", "/sessions/{session_id}/stage"},
        {"POST", "/sessions/{session_id}/finish"},
        {"GET", "/sessions/{session_id}/turns/{turn_index}/audio"},
    };
    return routes;
}

json persona_summary_json(const PersonaProfile& p) {
    return json{{"id", p.id},
                {"display_name", p.display_name},
                {"age", p.age},
                {"gender", p.gender},
                {"image_url", image_url(p.profile_image_ref)},
                {"setting", p.setting},
                {"stage_count", p.stages.size()}};
}

json persona_detail_json(const PersonaProfile& p) {
    json j = persona_summary_json(p);
    j["purpose"] = p.purpose;
    j["disposition"] = p.disposition;
    j["past_medical_history"] = p.past_medical_history;
    j["social_history"] = p.social_history;
    j["initial_stage_index"] = p.initial_stage_index;
    j["stages"] = json::array();
    for (const auto& s : p.stages) {
        j["stages"].push_back({{"name", s.name}, {"description", s.description}});
    }
    return j;
}

json session_summary_json(const SessionSummary& s) {
    return json{{"id", s.id},
                {"user_id", s.user_id},
                {"persona_id", s.persona_id},
                {"persona",
                 {{"display_name", s.persona_display_name},
                  {"age", s.persona_age ? json(*s.persona_age) : json(nullptr)},
                  {"gender", s.persona_gender},
                  {"image_url", image_url(s.persona_image_ref)}}},
                {"modality", to_string(s.modality)},
                {"created_at", format_iso8601(s.created_at)},
                {"status", to_string(s.status)},
                {"turn_count", s.turn_count},
                {"stage_index", s.stage_index}};
}

json feedback_json(const FeedbackReport& report) {
    json j;
    to_json(j, report);
    return j;
}

json session_detail_json(const Session& session, const PersonaLibrary& personas) {
    json j = session_summary_json(summarize(session, personas));
    bool withhold = session.modality == Modality::voice && session.status == SessionStatus::active;
    j["transcript_withheld"] = withhold;
    j["turns"] = json::array();
    for (const Turn& t : session.turns) {
        j["turns"].push_back(turn_json(t, session.id, withhold && t.role == Role::patient));
    }
    if (const PersonaProfile* p = personas.find(session.persona_id)) {
        if (session.stage_index >= 0 && session.stage_index < static_cast<int>(p->stages.size())) {
            j["stage_name"] = p->stages[static_cast<std::size_t>(session.stage_index)].name;
        }
    }
    j["finished_at"] = session.finished_at ? json(format_iso8601(*session.finished_at)) : json(nullptr);
    j["feedback"] = session.feedback ? feedback_json(*session.feedback) : json(nullptr);
    return j;
}

std::string percent_encode(std::string_view text) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 15]);
        }
    }
    return out;
}

std::string percent_decode(std::string_view text) {
    auto value = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '%' && i + 2 < text.size() && value(text[i + 1]) >= 0 &&
            value(text[i + 2]) >= 0) {
            out.push_back(static_cast<char>(value(text[i + 1]) * 16 + value(text[i + 2])));
            i += 2;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

// --- server ----------------------------------------------------------------

struct ApiServer::Impl {
    ConversationEngine* engine;
    ApiOptions options;
    httplib::Server server;

    std::mutex workers_mutex;
    std::condition_variable workers_cv;
    int workers = 0;

    using Handler = void (Impl::*)(const httplib::Request&, httplib::Response&);

    void route(const ApiRoute& r, Handler h) {
        std::string pattern = path_to_regex(r.path);
        auto wrapped = [this, h](const httplib::Request& req, httplib::Response& res) {
            try {
                (this->*h)(req, res);
            } catch (const std::exception& e) {
                ApiError err = api_error_for(e);
                if (err.status >= 500) {
                    spdlog::error("{} {}: {}", req.method, req.path, e.what());
                }
                send_error(res, err);
            }
        };
        if (r.method == "GET") {
            server.Get(pattern, wrapped);
        } else if (r.method == "POST") {
            server.Post(pattern, wrapped);
        } else {
            throw contract_error("unsupported method " + r.method);
        }
    }

    void install() {
        static const std::vector<Handler> handlers = {
            &Impl::healthz,     &Impl::create_user,    &Impl::list_personas,
            &Impl::get_persona, &Impl::get_asset,      &Impl::create_session,
            &Impl::list_user_sessions, &Impl::get_session, &Impl::post_message,
            &Impl::post_audio,  &Impl::retry,          &Impl::set_stage,
            &Impl::finish,      &Impl::get_turn_audio,
        };
        const auto& routes = api_routes();
        for (std::size_t i = 0; i < routes.size(); ++i) {
            route(routes[i], handlers[i]);
        }
        server.Options(".*", [this](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Max-Age", "600");
        });
        server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
            if (!options.cors_origin.empty()) {
                res.set_header("Access-Control-Allow-Origin", options.cors_origin);
                res.set_header("Access-Control-Expose-Headers",
                               "X-Pal-Transcript, X-Pal-Clinician-Turn");
            }
        });
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) {
                return;
            }
            if (res.status == 404) {
                send_error(res, ApiError{404, std::string(kRouteNotFoundCode),
                                         "no route for " + req.method + " " + req.path, false});
            } else if (res.status == 413) {
                send_error(res, ApiError{413, std::string(kPayloadTooLargeCode),
                                         "request body too large", false});
            } else if (res.status == 400) {
                send_error(res, api_error_for(Errc::parse_error, "malformed HTTP request"));
            }
        });
        server.set_exception_handler(
            [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
                try {
                    std::rethrow_exception(ep);
                } catch (const std::exception& e) {
                    send_error(res, api_error_for(e));
                } catch (...) {
                    send_error(res, api_error_for(Errc::internal, "unknown failure"));
                }
            });
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            spdlog::info("{} {} -> {}", req.method, req.path, res.status);
        });
        server.set_payload_max_length(options.max_upload_bytes);
        // httplib's defaults include SO_REUSEPORT, which lets a second server
        // bind a port that is already serving.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
        });
    }

    // --- handlers ---------------------------------------------------------

    void healthz(const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    }

    void create_user(const httplib::Request&, httplib::Response& res) {
        UserRecord u = engine->create_user();
        json body;
        to_json(body, u);
        send_json(res, 201, body);
    }

    void list_personas(const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& p : engine->personas().all()) {
            out.push_back(persona_summary_json(p));
        }
        send_json(res, 200, out);
    }

    void get_persona(const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, persona_detail_json(engine->personas().at(req.matches[1].str())));
    }

    void get_asset(const httplib::Request& req, httplib::Response& res) {
        const fs::path& root = engine->personas().asset_root();
        std::string rel = req.matches[1].str();
        auto not_found = [&] {
            send_error(res, ApiError{404, "asset_not_found", "no asset " + rel, false});
        };
        if (root.empty()) {
            return not_found();
        }
        std::error_code ec;
        fs::path base = fs::weakly_canonical(root, ec);
        fs::path target = fs::weakly_canonical(root / rel, ec);
        auto [b, t] = std::mismatch(base.begin(), base.end(), target.begin(), target.end());
        if (ec || b != base.end() || !fs::is_regular_file(target)) {
            return not_found();
        }
        std::ifstream in(target, std::ios::binary);
        std::ostringstream bytes;
        bytes << in.rdbuf();
        res.status = 200;
        res.set_content(bytes.str(), media_type_for_extension(target));
    }

    void create_session(const httplib::Request& req, httplib::Response& res) {
        json body = parse_body(req);
        std::string user_id = string_field(body, "user_id");
        std::string persona_id = string_field(body, "persona_id");
        std::string modality_name = string_field(body, "modality");
        auto modality = modality_from_string(modality_name);
        if (!modality) {
            throw contract_error("modality must be 'text' or 'voice', got '" + modality_name + "'");
        }
        Session s = engine->start_session(user_id, persona_id, *modality);
        send_json(res, 201, session_summary_json(summarize(s, engine->personas())));
    }

    void list_user_sessions(const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("user_id")) {
            throw contract_error("query parameter user_id is required");
        }
        json out = json::array();
        for (const auto& s : engine->list_sessions(req.get_param_value("user_id"))) {
            out.push_back(session_summary_json(s));
        }
        send_json(res, 200, out);
    }

    void get_session(const httplib::Request& req, httplib::Response& res) {
        Session s = engine->get_session(req.matches[1].str());
        send_json(res, 200, session_detail_json(s, engine->personas()));
    }

    // Runs `work` on its own thread and answers once the first reply output
    // (or an error) is available, so that failures before any output still
    // get a proper status code.
    template <typename Work>
    void stream_reply(httplib::Response& res, bool audio, Work work) {
        auto stream = std::make_shared<ReplyStream>();
        {
            std::lock_guard lock(workers_mutex);
            ++workers;
        }
        std::thread([this, stream, audio, work = std::move(work)]() mutable {
            ReplyHandlers h;
            h.on_clinician_turn = [&](const Turn& t) {
                std::lock_guard lock(stream->m);
                stream->transcript = t.text;
                stream->clinician_index = t.index;
            };
            if (audio) {
                h.on_audio = [&](std::string_view bytes) { stream->push(std::string(bytes)); };
            } else {
                h.on_text = [&](std::string_view text) {
                    stream->push(format_sse_event("text", json{{"text", text}}.dump()));
                };
                h.on_cue = [&](const EmotionalCue& cue) {
                    stream->push(format_sse_event(
                        "cue", json{{"action", cue.action}, {"position", cue.position}}.dump()));
                };
            }
            try {
                TurnSummary summary = work(h);
                if (!audio) {
                    json done = {{"clinician_turn", turn_json(summary.clinician, "", false)},
                                 {"patient_turn", turn_json(summary.patient, "", false)}};
                    stream->push(format_sse_event("done", done.dump()));
                }
                std::lock_guard lock(stream->m);
                stream->started = true;
                stream->finished = true;
            } catch (const std::exception& e) {
                ApiError err = api_error_for(e);
                spdlog::warn("reply failed: {}", e.what());
                std::lock_guard lock(stream->m);
                if (!stream->started) {
                    stream->early_error = err;
                } else if (audio) {
                    stream->aborted = true;
                } else {
                    stream->chunks.push_back(
                        format_sse_event("error", api_error_json(err)["error"].dump()));
                }
                stream->finished = true;
            }
            stream->cv.notify_all();
            {
                std::lock_guard lock(workers_mutex);
                --workers;
            }
            workers_cv.notify_all();
        }).detach();

        std::unique_lock lock(stream->m);
        stream->cv.wait(lock, [&] { return stream->started || stream->finished; });
        if (stream->early_error) {
            send_error(res, *stream->early_error);
            return;
        }
        res.status = 200;
        if (stream->clinician_index >= 0) {
            res.set_header("X-Pal-Clinician-Turn", std::to_string(stream->clinician_index));
        }
        if (audio) {
            res.set_header("X-Pal-Transcript", percent_encode(stream->transcript));
        } else {
            res.set_header("Cache-Control", "no-cache");
        }
        std::string content_type =
            audio ? engine->patient_audio_media_type() : std::string("text/event-stream");
        res.set_chunked_content_provider(
            content_type, [stream](std::size_t, httplib::DataSink& sink) {
                std::unique_lock lk(stream->m);
                stream->cv.wait(lk, [&] { return !stream->chunks.empty() || stream->finished; });
                while (!stream->chunks.empty()) {
                    std::string chunk = std::move(stream->chunks.front());
                    stream->chunks.pop_front();
                    lk.unlock();
                    if (!sink.write(chunk.data(), chunk.size())) {
                        return false;
                    }
                    lk.lock();
                }
                if (stream->finished && stream->chunks.empty()) {
                    if (stream->aborted) {
                        return false;
                    }
                    sink.done();
                }
                return true;
            });
    }

    void post_message(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1].str();
        json body = parse_body(req);
        std::string text = string_field(body, "text");
        stream_reply(res, false, [this, id, text](const ReplyHandlers& h) {
            return engine->submit_text(id, text, h);
        });
    }

    void post_audio(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1].str();
        std::string bytes;
        std::string media_type;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("audio")) {
                throw contract_error("multipart body needs an 'audio' part");
            }
            auto part = req.get_file_value("audio");
            bytes = part.content;
            media_type = part.content_type;
        } else {
            bytes = req.body;
            media_type = req.get_header_value("Content-Type");
        }
        // Cheap checks first so a bad upload on a text session reports the
        // modality, and unknown types are refused before any provider call.
        Session s = engine->get_session(id);
        if (s.modality != Modality::voice && s.status == SessionStatus::active) {
            throw Error(Errc::modality_mismatch, "session " + id + " takes text turns");
        }
        stream_reply(res, true, [this, id, bytes = std::move(bytes), media_type](const ReplyHandlers& h) {
            return engine->submit_audio(id, bytes, media_type, h);
        });
    }

    void retry(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1].str();
        Session s = engine->get_session(id);
        stream_reply(res, s.modality == Modality::voice, [this, id](const ReplyHandlers& h) {
            return engine->regenerate_reply(id, h);
        });
    }

    void set_stage(const httplib::Request& req, httplib::Response& res) {
        json body = parse_body(req);
        if (!body.contains("stage_index") || !body["stage_index"].is_number_integer()) {
            throw contract_error("field 'stage_index' must be an integer");
        }
        Session s = engine->set_stage(req.matches[1].str(), body["stage_index"].get<int>());
        send_json(res, 200, session_detail_json(s, engine->personas()));
    }

    void finish(const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, feedback_json(engine->finish_session(req.matches[1].str())));
    }

    void get_turn_audio(const httplib::Request& req, httplib::Response& res) {
        Session s = engine->get_session(req.matches[1].str());
        std::string index_text = req.matches[2].str();
        int index = -1;
        try {
            std::size_t used = 0;
            index = std::stoi(index_text, &used);
            if (used != index_text.size()) index = -1;
        } catch (const std::exception&) {
            index = -1;
        }
        if (index < 0 || index >= static_cast<int>(s.turns.size()) ||
            !s.turns[static_cast<std::size_t>(index)].audio_ref) {
            throw Error(Errc::blob_not_found, "turn " + index_text + " has no audio");
        }
        const AudioRef& ref = *s.turns[static_cast<std::size_t>(index)].audio_ref;
        res.status = 200;
        res.set_content(engine->store().get_audio(ref), ref.media_type);
    }
};

ApiServer::ApiServer(ConversationEngine& engine, ApiOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->engine = &engine;
    impl_->options = std::move(options);
    impl_->install();
}

ApiServer::~ApiServer() {
    stop();
}

bool ApiServer::bind(const std::string& host, int port) {
    return impl_->server.bind_to_port(host, port);
}

int ApiServer::bind_any_port(const std::string& host) {
    return impl_->server.bind_to_any_port(host);
}

bool ApiServer::listen_after_bind() {
    return impl_->server.listen_after_bind();
}

void ApiServer::stop() {
    impl_->server.stop();
    std::unique_lock lock(impl_->workers_mutex);
    impl_->workers_cv.wait(lock, [&] { return impl_->workers == 0; });
}

bool ApiServer::is_running() const {
    return impl_->server.is_running();
}

void ApiServer::wait_until_ready() const {
    impl_->server.wait_until_ready();
}

httplib::Server& ApiServer::http() {
    return impl_->server;
}

} // namespace pal
