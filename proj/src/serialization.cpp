#include "pal/serialization.hpp"

namespace pal {
namespace {

using json = nlohmann::json;

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json opt_time(const std::optional<Timestamp>& t) {
    return t ? json(format_iso8601(*t)) : json(nullptr);
}

Timestamp time_at(const json& j, const char* key) {
    return parse_iso8601(j.at(key).get<std::string>());
}

std::optional<Timestamp> opt_time_at(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    return time_at(j, key);
}

template <typename T, typename F>
T enum_at(const json& j, const char* key, F from_string) {
    std::string s = j.at(key).get<std::string>();
    auto v = from_string(s);
    if (!v) {
        throw Error(Errc::parse_error, std::string("invalid ") + key + " '" + s + "'");
    }
    return *v;
}

} // namespace

void to_json(json& j, const UsageRecord& r) {
    j = json{{"kind", to_string(r.kind)},
             {"input_tokens", r.input_tokens},
             {"output_tokens", r.output_tokens},
             {"audio_ms", r.audio_ms},
             {"synthesized_chars", r.synthesized_chars},
             {"estimated", r.estimated},
             {"failed", r.failed},
             {"model", r.model},
             {"cost_ticks", r.cost.ticks()},
             {"cost", r.cost.to_string()},
             {"timestamp", format_iso8601(r.timestamp)},
             {"session_id", r.session_id}};
}

void from_json(const json& j, UsageRecord& r) {
    r.kind = enum_at<CallKind>(j, "kind", call_kind_from_string);
    r.input_tokens = j.at("input_tokens").get<std::int64_t>();
    r.output_tokens = j.at("output_tokens").get<std::int64_t>();
    r.audio_ms = j.at("audio_ms").get<std::int64_t>();
    r.synthesized_chars = j.at("synthesized_chars").get<std::int64_t>();
    r.estimated = j.at("estimated").get<bool>();
    r.failed = j.at("failed").get<bool>();
    r.model = j.at("model").get<std::string>();
    r.cost = Cost::from_ticks(j.at("cost_ticks").get<std::int64_t>());
    r.timestamp = time_at(j, "timestamp");
    r.session_id = j.at("session_id").get<std::string>();
}

void to_json(json& j, const EmotionalCue& c) {
    j = json{{"position", c.position}, {"action", c.action}, {"source", c.source}};
}

void from_json(const json& j, EmotionalCue& c) {
    c.position = j.at("position").get<std::size_t>();
    c.action = j.at("action").get<std::string>();
    c.source = j.at("source").get<std::string>();
}

void to_json(json& j, const AudioRef& a) {
    j = json{{"digest", a.digest}, {"media_type", a.media_type}};
}

void from_json(const json& j, AudioRef& a) {
    a.digest = j.at("digest").get<std::string>();
    a.media_type = j.at("media_type").get<std::string>();
}

void to_json(json& j, const Turn& t) {
    j = json{{"index", t.index},
             {"role", to_string(t.role)},
             {"text", t.text},
             {"cues", t.cues},
             {"raw_text", t.raw_text},
             {"audio_ref", opt(t.audio_ref)},
             {"started_at", format_iso8601(t.started_at)},
             {"completed_at", format_iso8601(t.completed_at)},
             {"usage", t.usage}};
}

void from_json(const json& j, Turn& t) {
    t.index = j.at("index").get<int>();
    t.role = enum_at<Role>(j, "role", role_from_string);
    t.text = j.at("text").get<std::string>();
    t.cues = j.at("cues").get<std::vector<EmotionalCue>>();
    t.raw_text = j.at("raw_text").get<std::string>();
    t.audio_ref.reset();
    if (j.contains("audio_ref") && !j["audio_ref"].is_null()) {
        t.audio_ref = j["audio_ref"].get<AudioRef>();
    }
    t.started_at = time_at(j, "started_at");
    t.completed_at = time_at(j, "completed_at");
    t.usage = j.at("usage").get<std::vector<UsageRecord>>();
}

void to_json(json& j, const FeedbackItem& i) {
    j = json{{"ordinal", i.ordinal},
             {"scenario", i.scenario},
             {"current_approach", i.current_approach},
             {"improvement_suggestion", i.improvement_suggestion},
             {"nurse_category", i.nurse_category ? json(to_string(*i.nurse_category)) : json(nullptr)},
             {"grounded", to_string(i.grounded)}};
}

void from_json(const json& j, FeedbackItem& i) {
    i.ordinal = j.at("ordinal").get<int>();
    i.scenario = j.at("scenario").get<std::string>();
    i.current_approach = j.at("current_approach").get<std::string>();
    i.improvement_suggestion = j.at("improvement_suggestion").get<std::string>();
    i.nurse_category.reset();
    if (j.contains("nurse_category") && !j["nurse_category"].is_null()) {
        i.nurse_category = enum_at<NurseCategory>(j, "nurse_category", nurse_category_from_string);
    }
    i.grounded = enum_at<Grounding>(j, "grounded", grounding_from_string);
}

void to_json(json& j, const GroundingVerdict& v) {
    j = json{{"verdict", to_string(v.verdict)},
             {"turn_index", opt(v.turn_index)},
             {"match_begin", v.match_begin},
             {"match_end", v.match_end}};
}

void from_json(const json& j, GroundingVerdict& v) {
    v.verdict = enum_at<Grounding>(j, "verdict", grounding_from_string);
    v.turn_index.reset();
    if (j.contains("turn_index") && !j["turn_index"].is_null()) {
        v.turn_index = j["turn_index"].get<int>();
    }
    v.match_begin = j.at("match_begin").get<std::size_t>();
    v.match_end = j.at("match_end").get<std::size_t>();
}

void to_json(json& j, const FeedbackParseIssue& i) {
    j = json{{"ordinal", i.ordinal}, {"message", i.message}};
}

void from_json(const json& j, FeedbackParseIssue& i) {
    i.ordinal = j.at("ordinal").get<int>();
    i.message = j.at("message").get<std::string>();
}

void to_json(json& j, const FeedbackReport& r) {
    j = json{{"session_id", r.session_id},
             {"items", r.items},
             {"grounding", r.grounding.verdicts},
             {"parse_issues", r.parse_issues},
             {"raw_response", r.raw_response},
             {"model_id", r.model_id},
             {"generated_at", format_iso8601(r.generated_at)},
             {"parse_retries", r.parse_retries},
             {"usage", r.usage}};
}

void from_json(const json& j, FeedbackReport& r) {
    r.session_id = j.at("session_id").get<std::string>();
    r.items = j.at("items").get<std::vector<FeedbackItem>>();
    r.grounding.verdicts = j.at("grounding").get<std::vector<GroundingVerdict>>();
    r.parse_issues = j.at("parse_issues").get<std::vector<FeedbackParseIssue>>();
    r.raw_response = j.at("raw_response").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.generated_at = time_at(j, "generated_at");
    r.parse_retries = j.at("parse_retries").get<int>();
    r.usage = j.at("usage").get<std::vector<UsageRecord>>();
}

void to_json(json& j, const UserRecord& u) {
    j = json{{"id", u.id}, {"created_at", format_iso8601(u.created_at)}};
}

void from_json(const json& j, UserRecord& u) {
    u.id = j.at("id").get<std::string>();
    u.created_at = time_at(j, "created_at");
}

json session_header_json(const Session& s) {
    return json{{"type", "session"},
                {"format", 1},
                {"id", s.id},
                {"user_id", s.user_id},
                {"persona_id", s.persona_id},
                {"modality", to_string(s.modality)},
                {"created_at", format_iso8601(s.created_at)},
                {"stage_index", s.stage_index},
                {"status", to_string(s.status)},
                {"finished_at", opt_time(s.finished_at)},
                {"turn_count", s.turns.size()}};
}

Session session_from_header_json(const json& j) {
    if (j.at("type").get<std::string>() != "session") {
        throw Error(Errc::parse_error, "expected a session header");
    }
    if (j.at("format").get<int>() != 1) {
        throw Error(Errc::parse_error, "unsupported session format");
    }
    Session s;
    s.id = j.at("id").get<std::string>();
    s.user_id = j.at("user_id").get<std::string>();
    s.persona_id = j.at("persona_id").get<std::string>();
    s.modality = enum_at<Modality>(j, "modality", modality_from_string);
    s.created_at = time_at(j, "created_at");
    s.stage_index = j.at("stage_index").get<int>();
    s.status = enum_at<SessionStatus>(j, "status", session_status_from_string);
    s.finished_at = opt_time_at(j, "finished_at");
    return s;
}

std::string serialize_session(const Session& s) {
    std::string out = session_header_json(s).dump();
    out.push_back('\n');
    for (const Turn& t : s.turns) {
        json line = t;
        line["type"] = "turn";
        out += line.dump();
        out.push_back('\n');
    }
    if (s.feedback) {
        json line = *s.feedback;
        line["type"] = "feedback";
        out += line.dump();
        out.push_back('\n');
    }
    return out;
}

Session parse_session(std::string_view text, std::string_view origin) {
    Session s;
    bool have_header = false;
    std::size_t expected_turns = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto fail = [&](const std::string& why) {
            return Error(Errc::parse_error,
                         std::string(origin) + ":" + std::to_string(line_no) + ": " + why);
        };
        try {
            json j = json::parse(line);
            std::string type = j.at("type").get<std::string>();
            if (!have_header) {
                s = session_from_header_json(j);
                expected_turns = j.at("turn_count").get<std::size_t>();
                have_header = true;
            } else if (type == "turn") {
                s.turns.push_back(j.get<Turn>());
            } else if (type == "feedback") {
                s.feedback = j.get<FeedbackReport>();
            } else {
                throw fail("unknown record type '" + type + "'");
            }
        } catch (const Error& e) {
            if (std::string_view(e.what()).starts_with(origin)) {
                throw;
            }
            throw fail(e.what());
        } catch (const json::exception& e) {
            throw fail(e.what());
        }
    }
    if (!have_header) {
        throw Error(Errc::parse_error, std::string(origin) + ": empty session document");
    }
    if (s.turns.size() != expected_turns) {
        throw Error(Errc::parse_error, std::string(origin) + ": truncated session document");
    }
    return s;
}

} // namespace pal
