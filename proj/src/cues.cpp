#include "pal/cues.hpp"

#include <algorithm>

namespace pal {
namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

struct Scan {
    CueParse parse;
    // First opening marker whose fate depends on input not seen yet.
    std::optional<std::size_t> open_marker;
};

Scan scan(std::string_view raw, char open, char close) {
    Scan result;
    std::string& out = result.parse.text;
    auto& cues = result.parse.cues;
    bool pending_sep = false;
    std::size_t unresolved_from = 0;

    auto append_literal = [&](char c) {
        if (pending_sep) {
            if (!out.empty()) {
                out.push_back(' ');
            }
            pending_sep = false;
        }
        for (std::size_t k = unresolved_from; k < cues.size(); ++k) {
            cues[k].position = out.size();
        }
        unresolved_from = cues.size();
        out.push_back(c);
    };

    std::size_t i = 0;
    const std::size_t n = raw.size();
    while (i < n) {
        char c = raw[i];
        if (c != open) {
            append_literal(c);
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < n && raw[j] != close && raw[j] != '\n' && !(open != close && raw[j] == open)) {
            ++j;
        }
        if (j >= n) {
            if (!result.open_marker) {
                result.open_marker = i;
            }
            append_literal(c);
            ++i;
            continue;
        }
        std::string_view action = trim(raw.substr(i + 1, j - i - 1));
        if (raw[j] != close || action.empty()) {
            append_literal(c);
            ++i;
            continue;
        }

        std::size_t before = 0;
        while (!out.empty() && is_space(out.back())) {
            out.pop_back();
            ++before;
        }
        std::size_t m = j + 1;
        while (m < n && is_space(raw[m])) {
            ++m;
        }
        if (before > 0 || m > j + 1) {
            pending_sep = true;
        }
        EmotionalCue cue;
        cue.position = out.size();
        cue.action = std::string(action);
        cue.source = std::string(raw.substr(i - before, m - (i - before)));
        cues.push_back(std::move(cue));
        i = m;
    }
    for (std::size_t k = unresolved_from; k < cues.size(); ++k) {
        cues[k].position = out.size();
    }
    return result;
}

bool source_has_outer_space(const std::string& source) {
    return !source.empty() && (is_space(source.front()) || is_space(source.back()));
}

} // namespace

CueParse parse_cue_markup(std::string_view raw, char open, char close) {
    return scan(raw, open, close).parse;
}

CueParse parse_emotional_cues(std::string_view raw) {
    return parse_cue_markup(raw, '*', '*');
}

std::string strip_cues_for_tts(std::string_view raw) {
    return parse_emotional_cues(raw).text;
}

std::string reassemble_raw(std::string_view text, const std::vector<EmotionalCue>& cues) {
    std::string out;
    std::size_t t = 0;
    std::size_t k = 0;
    while (k < cues.size()) {
        std::size_t p = std::min(cues[k].position, text.size());
        std::size_t end = k;
        bool has_space = false;
        while (end < cues.size() && cues[end].position == cues[k].position) {
            has_space = has_space || source_has_outer_space(cues[end].source);
            ++end;
        }
        bool separator = has_space && p > 0 && p < text.size();
        std::size_t cut = separator ? p - 1 : p;
        if (cut > t) {
            out.append(text.substr(t, cut - t));
        }
        t = std::max(t, p);
        for (; k < end; ++k) {
            out += cues[k].source;
        }
    }
    if (t < text.size()) {
        out.append(text.substr(t));
    }
    return out;
}

std::string render_cue_markup(std::string_view text, const std::vector<EmotionalCue>& cues,
                              char open, char close) {
    std::string out;
    std::size_t t = 0;
    std::size_t k = 0;
    while (k < cues.size()) {
        std::size_t p = std::min(cues[k].position, text.size());
        std::string marks;
        bool spaced = p == 0 || p == text.size() || text[p - 1] == ' ';
        while (k < cues.size() && std::min(cues[k].position, text.size()) == p) {
            if (!marks.empty() && spaced) {
                marks.push_back(' ');
            }
            marks.push_back(open);
            marks += cues[k].action;
            marks.push_back(close);
            ++k;
        }
        out.append(text.substr(t, p - t));
        t = p;
        if (p == text.size() && p > 0) {
            out.push_back(' ');
        }
        out += marks;
        if (spaced && p < text.size()) {
            out.push_back(' ');
        }
    }
    out.append(text.substr(t));
    return out;
}

bool is_well_formed_cue_pair(std::string_view text, const std::vector<EmotionalCue>& cues,
                             char open, char close) {
    if (text.find_first_of(std::string{open, close, '\n'}) != std::string_view::npos) {
        return false;
    }
    std::size_t prev = 0;
    for (const auto& cue : cues) {
        if (cue.action.empty() || trim(cue.action).size() != cue.action.size()) {
            return false;
        }
        if (cue.action.find_first_of(std::string{open, close, '\n'}) != std::string::npos) {
            return false;
        }
        std::size_t p = cue.position;
        if (p < prev || p > text.size()) {
            return false;
        }
        prev = p;
        const std::size_t n = text.size();
        if (p == 0) {
            if (n > 0 && is_space(text[0])) {
                return false;
            }
        } else if (p == n) {
            if (is_space(text[n - 1])) {
                return false;
            }
        } else if (is_space(text[p])) {
            return false;
        } else if (is_space(text[p - 1])) {
            if (text[p - 1] != ' ' || p < 2 || is_space(text[p - 2])) {
                return false;
            }
        }
    }
    return true;
}

std::vector<CueStreamEvent> CueStreamParser::feed(std::string_view chunk) {
    raw_.append(chunk);
    Scan full = scan(raw_, '*', '*');
    std::size_t cut = full.open_marker.value_or(raw_.size());
    while (cut > 0 && is_space(raw_[cut - 1])) {
        --cut;
    }
    CueParse stable = scan(std::string_view(raw_).substr(0, cut), '*', '*').parse;
    std::size_t resolved = 0;
    while (resolved < stable.cues.size() && stable.cues[resolved].position < stable.text.size()) {
        ++resolved;
    }
    return emit(stable, stable.text.size(), resolved);
}

std::vector<CueStreamEvent> CueStreamParser::finish() {
    CueParse all = parse_emotional_cues(raw_);
    return emit(all, all.text.size(), all.cues.size());
}

std::vector<CueStreamEvent> CueStreamParser::emit(const CueParse& parsed, std::size_t text_limit,
                                                  std::size_t cue_limit) {
    std::vector<CueStreamEvent> events;
    auto emit_text_to = [&](std::size_t limit) {
        if (limit > emitted_text_) {
            CueStreamEvent ev;
            ev.kind = CueStreamEvent::Kind::text;
            ev.text = parsed.text.substr(emitted_text_, limit - emitted_text_);
            events.push_back(std::move(ev));
            emitted_text_ = limit;
        }
    };
    for (; emitted_cues_ < cue_limit; ++emitted_cues_) {
        const auto& cue = parsed.cues[emitted_cues_];
        emit_text_to(cue.position);
        CueStreamEvent ev;
        ev.kind = CueStreamEvent::Kind::cue;
        ev.cue = cue;
        events.push_back(std::move(ev));
    }
    emit_text_to(text_limit);
    return events;
}

} // namespace pal
