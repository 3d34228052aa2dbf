#pragma once

#include "pal/clock.hpp"
#include "pal/feedback.hpp"
#include "pal/turn.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

enum class SessionStatus { active, finished };

std::string_view to_string(SessionStatus status);
std::optional<SessionStatus> session_status_from_string(std::string_view s);

struct UserRecord {
    std::string id;
    Timestamp created_at{};

    bool operator==(const UserRecord&) const = default;
};

struct Session {
    std::string id;
    std::string user_id;
    std::string persona_id;
    Modality modality = Modality::text;
    Timestamp created_at{};
    // Alternating clinician/patient, starting with the clinician.
    std::vector<Turn> turns;
    int stage_index = 0;
    SessionStatus status = SessionStatus::active;
    std::optional<Timestamp> finished_at;
    // Present only once finished.
    std::optional<FeedbackReport> feedback;

    bool clinician_to_move() const { return turns.size() % 2 == 0; }
    bool operator==(const Session&) const = default;
};

// Structural checks that hold for every persisted session: alternation,
// contiguous indices, cue/raw consistency, feedback only when finished.
// Returns the first violation, if any.
std::optional<std::string> session_invariant_violation(const Session& session);

} // namespace pal
