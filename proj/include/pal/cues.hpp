#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

// A non-verbal action ("pauses", "starts crying") that stood at `position`
// in the cue-free text. `source` is the exact slice of raw text the cue
// replaced: the marker plus any whitespace it absorbed.
struct EmotionalCue {
    std::size_t position = 0;
    std::string action;
    std::string source;

    bool operator==(const EmotionalCue&) const = default;
};

struct CueParse {
    std::string text;
    std::vector<EmotionalCue> cues;
};

// Cue grammar:
//   - a cue is `*action*` where the action has no newline, no asterisk and at
//     least one non-whitespace character; it is trimmed;
//   - markers pair left to right, and an asterisk that cannot pair is literal;
//   - whitespace touching a cue collapses into one space between the
//     neighbouring words, or disappears at the start or end of the text;
//   - a cue's position is the offset in the resulting text where the next
//     word begins (after the collapsed space).
CueParse parse_emotional_cues(std::string_view raw);

// Same grammar with arbitrary single-character delimiters; used for the
// bracketed "[pauses]" form in rendered transcripts.
CueParse parse_cue_markup(std::string_view raw, char open, char close);

// Speech content only: the text component of parse_emotional_cues.
std::string strip_cues_for_tts(std::string_view raw);

// Inverse of parse_emotional_cues using each cue's recorded source slice:
// reassemble_raw(p.text, p.cues) == raw for p = parse_emotional_cues(raw).
std::string reassemble_raw(std::string_view text, const std::vector<EmotionalCue>& cues);

// Canonical markup for (text, cues) pairs built without source slices: each
// cue becomes `*action*` separated from neighbouring words by one space.
// Round-trips through parse_emotional_cues for well-formed pairs (see
// is_well_formed_cue_pair).
std::string render_cue_markup(std::string_view text, const std::vector<EmotionalCue>& cues,
                              char open = '*', char close = '*');

// True when (text, cues) is something the parser could have produced: text
// has no '*' or newline, actions are trimmed and marker-free, positions are
// non-decreasing and each sits at a word boundary that the whitespace rule
// reproduces.
bool is_well_formed_cue_pair(std::string_view text, const std::vector<EmotionalCue>& cues,
                             char open = '*', char close = '*');

// Incremental view of a streamed reply. Emits text and cue events only once
// further input can no longer change them, so that the concatenated text
// events equal parse_emotional_cues(full).text and the cue events equal its
// cues, for any chunking of `full`.
struct CueStreamEvent {
    enum class Kind { text, cue };
    Kind kind = Kind::text;
    std::string text;        // Kind::text
    EmotionalCue cue;        // Kind::cue
};

class CueStreamParser {
public:
    std::vector<CueStreamEvent> feed(std::string_view chunk);
    std::vector<CueStreamEvent> finish();

    const std::string& raw() const { return raw_; }

private:
    std::vector<CueStreamEvent> emit(const CueParse& parsed, std::size_t text_limit,
                                     std::size_t cue_limit);

    std::string raw_;
    std::size_t emitted_text_ = 0;
    std::size_t emitted_cues_ = 0;
};

} // namespace pal
