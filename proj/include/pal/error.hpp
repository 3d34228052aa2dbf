#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pal {

// Closed taxonomy of everything the core can fail with. The HTTP layer maps
// each value to exactly one API error code (see api.hpp).
enum class Errc {
    contract_violation,
    io_error,
    parse_error,
    validation_failed,
    user_not_found,
    persona_not_found,
    session_not_found,
    blob_not_found,
    session_finished,
    out_of_turn,
    reply_in_progress,
    modality_mismatch,
    nothing_to_analyze,
    unsupported_media_type,
    invalid_audio,
    provider_error,
    feedback_parse_failed,
    internal,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Thrown for precondition failures (bad index, empty input, ...).
inline Error contract_error(const std::string& message) {
    return Error(Errc::contract_violation, message);
}

} // namespace pal
