#pragma once

#include "pal/turn.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

// Encounter transcript lines:
//
//   Doctor: <clinician text>
//   Patient: <patient text, cues as [action]>
//
// One line per turn, in turn order. Newlines inside a turn become spaces.
std::string render_transcript(std::span<const Turn> turns);

// Reads the format above. Blank lines are skipped; any other prefix is an
// error, as is a transcript without a Doctor line. Patient cues are turned
// back into canonical `*action*` markup in raw_text.
// Throws Error(parse_error) as "<origin>:<line>: message".
std::vector<Turn> parse_transcript(std::string_view text, std::string_view origin = "<transcript>");

} // namespace pal
