#include "pal/error.hpp"

namespace pal {

std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::contract_violation: return "contract_violation";
    case Errc::io_error: return "io_error";
    case Errc::parse_error: return "parse_error";
    case Errc::validation_failed: return "validation_failed";
    case Errc::user_not_found: return "user_not_found";
    case Errc::persona_not_found: return "persona_not_found";
    case Errc::session_not_found: return "session_not_found";
    case Errc::blob_not_found: return "blob_not_found";
    case Errc::session_finished: return "session_finished";
    case Errc::out_of_turn: return "out_of_turn";
    case Errc::reply_in_progress: return "reply_in_progress";
    case Errc::modality_mismatch: return "modality_mismatch";
    case Errc::nothing_to_analyze: return "nothing_to_analyze";
    case Errc::unsupported_media_type: return "unsupported_media_type";
    case Errc::invalid_audio: return "invalid_audio";
    case Errc::provider_error: return "provider_error";
    case Errc::feedback_parse_failed: return "feedback_parse_failed";
    case Errc::internal: return "internal";
    }
    return "internal";
}

} // namespace pal
