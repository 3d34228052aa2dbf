#include "pal/feedback.hpp"

#include "pal/transcript.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace pal {
namespace detail {
std::string_view feedback_prompt_text();
}

namespace {

std::string_view trim(std::string_view s) {
    auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (!s.empty() && ws(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && ws(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

// Removes one pair of matching quotes around the whole string.
std::string strip_surrounding_quotes(std::string_view s) {
    static const std::pair<std::string_view, std::string_view> pairs[] = {
        {"\"", "\""},
        {"'", "'"},
        {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // curly double
        {"\xE2\x80\x98", "\xE2\x80\x99"},  // curly single
    };
    for (const auto& [open, close] : pairs) {
        if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
            return std::string(trim(s.substr(open.size(), s.size() - open.size() - close.size())));
        }
    }
    return std::string(s);
}

enum Field { kScenario = 0, kCurrent = 1, kSuggestion = 2 };

struct Draft {
    int listed = 0;
    std::array<std::optional<std::string>, 3> fields;
    std::string unlabeled;
    int open_field = -1;
};

const std::regex& item_start_re() {
    static const std::regex re(R"(^(?:#+\s*)?(?:\*\*)?(\d+)[.)](?:\*\*)?\s+(.*)$)");
    return re;
}

const std::regex& label_re() {
    static const std::regex re(
        R"(^(?:(?:-|\*|•)\s+)?\*\*\s*(scenario(?:/moment)?|current approach|improvement suggestions?)\s*:?\s*\*\*\s*:?\s*(.*)$)",
        std::regex::icase);
    return re;
}

const std::regex& plain_label_re() {
    static const std::regex re(
        R"(^(?:(?:-|\*|•)\s+)?(scenario|current approach|improvement suggestions?)\s*:\s*(.*)$)",
        std::regex::icase);
    return re;
}

std::optional<std::pair<Field, std::string>> match_label(std::string_view line) {
    std::string s(line);
    std::smatch m;
    if (std::regex_match(s, m, label_re()) || std::regex_match(s, m, plain_label_re())) {
        std::string name = lower_ascii(m[1].str());
        Field f = name.starts_with("scenario") ? kScenario
                  : name.starts_with("current") ? kCurrent
                                                : kSuggestion;
        return std::pair{f, std::string(trim(m[2].str()))};
    }
    return std::nullopt;
}

std::string_view field_label(int f) {
    switch (f) {
    case kScenario: return "Scenario";
    case kCurrent: return "Current Approach";
    default: return "Improvement Suggestion";
    }
}

} // namespace

std::string_view to_string(NurseCategory category) {
    switch (category) {
    case NurseCategory::naming: return "naming";
    case NurseCategory::understanding: return "understanding";
    case NurseCategory::respecting: return "respecting";
    case NurseCategory::supporting: return "supporting";
    case NurseCategory::exploring: return "exploring";
    }
    return "naming";
}

std::optional<NurseCategory> nurse_category_from_string(std::string_view s) {
    for (auto c : kNurseOrder) {
        if (to_string(c) == s) {
            return c;
        }
    }
    return std::nullopt;
}

std::string_view to_string(Grounding grounding) {
    switch (grounding) {
    case Grounding::grounded: return "grounded";
    case Grounding::ungrounded: return "ungrounded";
    case Grounding::unchecked: return "unchecked";
    }
    return "unchecked";
}

std::optional<Grounding> grounding_from_string(std::string_view s) {
    if (s == "grounded") return Grounding::grounded;
    if (s == "ungrounded") return Grounding::ungrounded;
    if (s == "unchecked") return Grounding::unchecked;
    return std::nullopt;
}

std::string_view feedback_system_prompt() {
    return detail::feedback_prompt_text();
}

std::string_view feedback_prompt_example() {
    constexpr std::string_view begin_marker = "Example Feedback Segment:\n";
    constexpr std::string_view end_marker = "\n# Notes";
    std::string_view prompt = feedback_system_prompt();
    std::size_t begin = prompt.find(begin_marker);
    std::size_t end = prompt.find(end_marker);
    if (begin == std::string_view::npos || end == std::string_view::npos || end < begin) {
        return {};
    }
    begin += begin_marker.size();
    return prompt.substr(begin, end - begin);
}

std::vector<ChatMessage> build_feedback_prompt(std::span<const Turn> transcript) {
    bool has_clinician = std::any_of(transcript.begin(), transcript.end(),
                                     [](const Turn& t) { return t.role == Role::clinician; });
    if (!has_clinician) {
        throw contract_error("transcript has no clinician turn");
    }
    return {
        {ChatMessage::Role::system, std::string(feedback_system_prompt())},
        {ChatMessage::Role::user, render_transcript(transcript)},
    };
}

FeedbackParse parse_feedback_response(std::string_view raw) {
    FeedbackParse out;
    std::optional<Draft> draft;
    int last_ordinal = 0;

    auto finalize = [&]() {
        if (!draft) {
            return;
        }
        Draft d = std::move(*draft);
        draft.reset();
        FeedbackItem item;
        item.scenario = std::string(trim(d.fields[kScenario].value_or(d.unlabeled)));
        item.current_approach = strip_surrounding_quotes(trim(d.fields[kCurrent].value_or("")));
        item.improvement_suggestion = std::string(trim(d.fields[kSuggestion].value_or("")));
        std::string missing;
        for (int f = 0; f < 3; ++f) {
            const std::string& value = f == kScenario   ? item.scenario
                                       : f == kCurrent ? item.current_approach
                                                       : item.improvement_suggestion;
            if (value.empty()) {
                missing += missing.empty() ? "" : ", ";
                missing += field_label(f);
            }
        }
        if (!missing.empty()) {
            out.issues.push_back({d.listed, "item " + std::to_string(d.listed) +
                                                " skipped: missing " + missing});
            return;
        }
        if (d.listed > last_ordinal) {
            item.ordinal = d.listed;
        } else {
            item.ordinal = last_ordinal + 1;
            out.issues.push_back({item.ordinal, "item listed as " + std::to_string(d.listed) +
                                                    " renumbered to " +
                                                    std::to_string(item.ordinal)});
        }
        last_ordinal = item.ordinal;
        out.items.push_back(std::move(item));
    };

    auto apply_text = [&](std::string_view text, bool numbered_line) {
        if (auto label = match_label(text)) {
            draft->fields[label->first] = label->second;
            draft->open_field = label->first;
        } else if (numbered_line) {
            std::string s(trim(text));
            if (s.size() > 4 && s.starts_with("**") && s.ends_with("**")) {
                s = s.substr(2, s.size() - 4);
            }
            draft->unlabeled = s;
            draft->open_field = -1;
        } else if (draft->open_field >= 0) {
            auto& field = *draft->fields[draft->open_field];
            if (!field.empty()) {
                field.push_back('\n');
            }
            field.append(trim(text));
        }
    };

    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t nl = raw.find('\n', pos);
        std::string_view line = raw.substr(pos, nl == std::string_view::npos ? raw.npos : nl - pos);
        pos = nl == std::string_view::npos ? raw.size() + 1 : nl + 1;
        std::string_view t = trim(line);
        if (t.empty()) {
            if (draft) {
                draft->open_field = -1;
            }
            continue;
        }
        std::string s(t);
        std::smatch m;
        if (std::regex_match(s, m, item_start_re())) {
            finalize();
            draft.emplace();
            try {
                draft->listed = std::stoi(m[1].str());
            } catch (const std::out_of_range&) {
                draft->listed = last_ordinal + 1;
            }
            apply_text(m[2].str(), true);
            continue;
        }
        if (!draft) {
            continue;
        }
        apply_text(t, false);
    }
    finalize();

    if (out.items.empty()) {
        throw FeedbackParseError("no feedback items found in model output", std::string(raw));
    }
    return out;
}

std::string render_feedback_items(std::span<const FeedbackItem> items) {
    std::string out;
    for (const auto& item : items) {
        out += std::to_string(item.ordinal) + ". **Scenario**: " + item.scenario + "\n";
        out += "   - **Current Approach**: \"" + item.current_approach + "\"\n";
        out += "   - **Improvement Suggestion**: " + item.improvement_suggestion + "\n\n";
    }
    return out;
}

std::string normalize_for_grounding(std::string_view text) {
    std::string mapped;
    mapped.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
            static_cast<unsigned char>(text[i + 1]) == 0x80) {
            auto third = static_cast<unsigned char>(text[i + 2]);
            if (third == 0x98 || third == 0x99) {
                mapped.push_back('\'');
                i += 2;
                continue;
            }
            if (third == 0x9C || third == 0x9D) {
                mapped.push_back('"');
                i += 2;
                continue;
            }
        }
        mapped.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    }
    std::string collapsed;
    collapsed.reserve(mapped.size());
    bool in_space = false;
    for (char c : mapped) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in_space = true;
            continue;
        }
        if (in_space && !collapsed.empty()) {
            collapsed.push_back(' ');
        }
        in_space = false;
        collapsed.push_back(c);
    }
    auto strip = [](unsigned char c) { return c == ' ' || (c < 0x80 && std::ispunct(c)); };
    std::size_t b = 0;
    std::size_t e = collapsed.size();
    while (b < e && strip(static_cast<unsigned char>(collapsed[b]))) {
        ++b;
    }
    while (e > b && strip(static_cast<unsigned char>(collapsed[e - 1]))) {
        --e;
    }
    return collapsed.substr(b, e - b);
}

GroundingReport ground_quotes(std::span<const FeedbackItem> items, std::span<const Turn> transcript) {
    std::vector<std::pair<int, std::string>> clinician;
    for (const auto& turn : transcript) {
        if (turn.role == Role::clinician) {
            clinician.emplace_back(turn.index, normalize_for_grounding(turn.text));
        }
    }
    GroundingReport report;
    report.verdicts.reserve(items.size());
    for (const auto& item : items) {
        GroundingVerdict v;
        v.verdict = Grounding::ungrounded;
        std::string quote = normalize_for_grounding(item.current_approach);
        if (!quote.empty()) {
            for (const auto& [index, text] : clinician) {
                std::size_t at = text.find(quote);
                if (at != std::string::npos) {
                    v.verdict = Grounding::grounded;
                    v.turn_index = index;
                    v.match_begin = at;
                    v.match_end = at + quote.size();
                    break;
                }
            }
        }
        report.verdicts.push_back(v);
    }
    return report;
}

NurseLexicon NurseLexicon::defaults() {
    NurseLexicon lex;
    lex[NurseCategory::naming] = {"name the emotion", "naming"};
    lex[NurseCategory::understanding] = {"understanding statement", "validate"};
    lex[NurseCategory::respecting] = {"respect"};
    lex[NurseCategory::supporting] = {"support"};
    lex[NurseCategory::exploring] = {"explore", "tell me more"};
    return lex;
}

std::optional<NurseCategory> tag_nurse_category(const FeedbackItem& item,
                                                const NurseLexicon& lexicon) {
    std::string suggestion = lower_ascii(item.improvement_suggestion);
    for (auto category : kNurseOrder) {
        for (const auto& keyword : lexicon[category]) {
            if (!keyword.empty() && suggestion.find(lower_ascii(keyword)) != std::string::npos) {
                return category;
            }
        }
    }
    return std::nullopt;
}

FeedbackGenerator::FeedbackGenerator(ChatProvider& chat, FeedbackOptions options)
    : chat_(&chat), options_(std::move(options)) {
    if (options_.max_parse_retries < 0) {
        throw contract_error("max_parse_retries must be >= 0");
    }
}

FeedbackReport FeedbackGenerator::generate(std::span<const Turn> transcript,
                                           std::string_view session_id) {
    auto messages = build_feedback_prompt(transcript);
    ChatParams params = options_.params;
    params.context.session_id = std::string(session_id);

    FeedbackReport report;
    report.session_id = std::string(session_id);
    report.model_id = chat_->model_id();
    std::string last_raw;
    const int attempts = options_.max_parse_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        auto completion = chat_->chat_complete(messages, params);
        report.usage.push_back(completion.usage);
        last_raw = completion.text;
        FeedbackParse parsed;
        try {
            parsed = parse_feedback_response(completion.text);
        } catch (const FeedbackParseError&) {
            continue;
        }
        report.raw_response = std::move(completion.text);
        report.items = std::move(parsed.items);
        report.parse_issues = std::move(parsed.issues);
        report.parse_retries = attempt;
        report.grounding = ground_quotes(report.items, transcript);
        for (std::size_t i = 0; i < report.items.size(); ++i) {
            report.items[i].grounded = report.grounding.verdicts[i].verdict;
            report.items[i].nurse_category = tag_nurse_category(report.items[i], options_.lexicon);
        }
        report.generated_at = options_.clock();
        return report;
    }
    throw FeedbackParseError("model output had no parseable feedback items after " +
                                 std::to_string(attempts) + " attempts",
                             last_raw, attempts);
}

} // namespace pal
