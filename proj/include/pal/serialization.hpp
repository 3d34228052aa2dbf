#pragma once

#include "pal/feedback.hpp"
#include "pal/session.hpp"

#include <json.hpp>

// JSON mapping for every persisted type. Timestamps are ISO-8601 strings,
// costs are exact tick counts. from_json throws Error(parse_error).
namespace pal {

void to_json(nlohmann::json& j, const UsageRecord& r);
void from_json(const nlohmann::json& j, UsageRecord& r);

void to_json(nlohmann::json& j, const EmotionalCue& c);
void from_json(const nlohmann::json& j, EmotionalCue& c);

void to_json(nlohmann::json& j, const AudioRef& a);
void from_json(const nlohmann::json& j, AudioRef& a);

void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);

void to_json(nlohmann::json& j, const FeedbackItem& i);
void from_json(const nlohmann::json& j, FeedbackItem& i);

void to_json(nlohmann::json& j, const GroundingVerdict& v);
void from_json(const nlohmann::json& j, GroundingVerdict& v);

void to_json(nlohmann::json& j, const FeedbackParseIssue& i);
void from_json(const nlohmann::json& j, FeedbackParseIssue& i);

void to_json(nlohmann::json& j, const FeedbackReport& r);
void from_json(const nlohmann::json& j, FeedbackReport& r);

void to_json(nlohmann::json& j, const UserRecord& u);
void from_json(const nlohmann::json& j, UserRecord& u);

// Header fields only; turns and feedback are written as separate lines by
// the session file format.
nlohmann::json session_header_json(const Session& s);
Session session_from_header_json(const nlohmann::json& j);

// Session document: header line, one line per turn, optional feedback line.
std::string serialize_session(const Session& s);
Session parse_session(std::string_view text, std::string_view origin = "<session>");

} // namespace pal
