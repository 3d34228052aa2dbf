#include "pal/session.hpp"

namespace pal {

std::string_view to_string(SessionStatus status) {
    return status == SessionStatus::active ? "active" : "finished";
}

std::optional<SessionStatus> session_status_from_string(std::string_view s) {
    if (s == "active") return SessionStatus::active;
    if (s == "finished") return SessionStatus::finished;
    return std::nullopt;
}

std::optional<std::string> session_invariant_violation(const Session& session) {
    for (std::size_t i = 0; i < session.turns.size(); ++i) {
        const Turn& t = session.turns[i];
        std::string where = "turn " + std::to_string(i);
        if (t.index != static_cast<int>(i)) {
            return where + ": index " + std::to_string(t.index);
        }
        Role expected = i % 2 == 0 ? Role::clinician : Role::patient;
        if (t.role != expected) {
            return where + ": role " + std::string(to_string(t.role)) + " breaks alternation";
        }
        if (reassemble_raw(t.text, t.cues) != t.raw_text) {
            return where + ": text and cues do not reassemble raw_text";
        }
        if (t.role == Role::clinician && session.modality == Modality::voice && !t.audio_ref) {
            return where + ": voice clinician turn without audio";
        }
        if (session.modality == Modality::text && t.audio_ref) {
            return where + ": text-modality turn with audio";
        }
    }
    if (session.feedback && session.status != SessionStatus::finished) {
        return std::string("feedback on an active session");
    }
    if (session.stage_index < 0) {
        return std::string("negative stage index");
    }
    return std::nullopt;
}

} // namespace pal
