#include "pal/turn.hpp"

namespace pal {

std::string_view to_string(Role role) {
    return role == Role::clinician ? "clinician" : "patient";
}

std::string_view to_string(Modality modality) {
    return modality == Modality::text ? "text" : "voice";
}

std::optional<Role> role_from_string(std::string_view s) {
    if (s == "clinician") return Role::clinician;
    if (s == "patient") return Role::patient;
    return std::nullopt;
}

std::optional<Modality> modality_from_string(std::string_view s) {
    if (s == "text") return Modality::text;
    if (s == "voice") return Modality::voice;
    return std::nullopt;
}

} // namespace pal
