#pragma once

#include "pal/clock.hpp"
#include "pal/cues.hpp"
#include "pal/providers/usage.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

enum class Role { clinician, patient };
enum class Modality { text, voice };

std::string_view to_string(Role role);
std::string_view to_string(Modality modality);
std::optional<Role> role_from_string(std::string_view s);
std::optional<Modality> modality_from_string(std::string_view s);

// Content-addressed handle into the store's blob area.
struct AudioRef {
    std::string digest;  // lowercase hex SHA-256 of the bytes
    std::string media_type;

    bool operator==(const AudioRef&) const = default;
};

struct Turn {
    int index = 0;
    Role role = Role::clinician;
    // Speech content with cue markers removed.
    std::string text;
    std::vector<EmotionalCue> cues;
    // As typed, transcribed or generated, markers included.
    std::string raw_text;
    std::optional<AudioRef> audio_ref;
    Timestamp started_at{};
    Timestamp completed_at{};
    // Provider calls that produced this turn (transcription for voice
    // clinician turns; chat and synthesis for patient turns).
    std::vector<UsageRecord> usage;

    bool operator==(const Turn&) const = default;
};

} // namespace pal
