#pragma once

#include "pal/clock.hpp"
#include "pal/providers/provider.hpp"
#include "pal/turn.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

enum class NurseCategory { naming, understanding, respecting, supporting, exploring };
inline constexpr std::array<NurseCategory, 5> kNurseOrder = {
    NurseCategory::naming, NurseCategory::understanding, NurseCategory::respecting,
    NurseCategory::supporting, NurseCategory::exploring};

std::string_view to_string(NurseCategory category);
std::optional<NurseCategory> nurse_category_from_string(std::string_view s);

enum class Grounding { grounded, ungrounded, unchecked };

std::string_view to_string(Grounding grounding);
std::optional<Grounding> grounding_from_string(std::string_view s);

struct FeedbackItem {
    int ordinal = 0;
    std::string scenario;
    std::string current_approach;
    std::string improvement_suggestion;
    std::optional<NurseCategory> nurse_category;
    Grounding grounded = Grounding::unchecked;

    bool operator==(const FeedbackItem&) const = default;
};

// Where a quote was found: the clinician turn and the matching byte range of
// that turn's normalized text.
struct GroundingVerdict {
    Grounding verdict = Grounding::unchecked;
    std::optional<int> turn_index;
    std::size_t match_begin = 0;
    std::size_t match_end = 0;

    bool operator==(const GroundingVerdict&) const = default;
};

struct GroundingReport {
    std::vector<GroundingVerdict> verdicts;

    bool operator==(const GroundingReport&) const = default;
};

struct FeedbackParseIssue {
    int ordinal = 0;
    std::string message;

    bool operator==(const FeedbackParseIssue&) const = default;
};

struct FeedbackParse {
    std::vector<FeedbackItem> items;
    // Items that were dropped or renumbered, with the reason.
    std::vector<FeedbackParseIssue> issues;
};

struct FeedbackReport {
    std::string session_id;
    std::vector<FeedbackItem> items;
    GroundingReport grounding;
    std::vector<FeedbackParseIssue> parse_issues;
    std::string raw_response;
    std::string model_id;
    Timestamp generated_at{};
    // Re-asks spent on unparseable output before this report succeeded.
    int parse_retries = 0;
    // One record per provider call made for this report.
    std::vector<UsageRecord> usage;

    bool operator==(const FeedbackReport&) const = default;
};

class FeedbackParseError : public Error {
public:
    FeedbackParseError(const std::string& message, std::string raw_response, int attempts = 1)
        : Error(Errc::feedback_parse_failed, message),
          raw_response_(std::move(raw_response)),
          attempts_(attempts) {}

    const std::string& raw_response() const noexcept { return raw_response_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string raw_response_;
    int attempts_;
};

// The feedback system prompt, compiled in from data/feedback_prompt.txt.
std::string_view feedback_system_prompt();
inline constexpr std::string_view kFeedbackPromptSha256 =
    "0f8de1602e925679e310f22b16b2c052612e3f6298b5c4b25b4af2943106296c";

// The worked example embedded in the prompt (the three numbered items).
std::string_view feedback_prompt_example();

// Throws contract_error when the transcript has no clinician turn.
std::vector<ChatMessage> build_feedback_prompt(std::span<const Turn> transcript);

// Parses the numbered "**Scenario**" / "**Current Approach**" /
// "**Improvement Suggestion**" list. Throws FeedbackParseError when no
// complete item is found.
FeedbackParse parse_feedback_response(std::string_view raw);

// Writes items in the same list format the parser reads.
std::string render_feedback_items(std::span<const FeedbackItem> items);

// Case-folds, maps curly quotes to straight ones, collapses whitespace and
// strips punctuation and quotes from both ends.
std::string normalize_for_grounding(std::string_view text);

// An item is grounded when its normalized quote occurs in the normalized
// text of a clinician turn; the first such turn is reported.
GroundingReport ground_quotes(std::span<const FeedbackItem> items, std::span<const Turn> transcript);

// Keyword sets per NURSE category, matched case-insensitively against the
// improvement suggestion.
struct NurseLexicon {
    std::array<std::vector<std::string>, 5> keywords;

    static NurseLexicon defaults();
    std::vector<std::string>& operator[](NurseCategory c) {
        return keywords[static_cast<std::size_t>(c)];
    }
    const std::vector<std::string>& operator[](NurseCategory c) const {
        return keywords[static_cast<std::size_t>(c)];
    }
};

// First category in N, U, R, S, E order with a keyword hit.
std::optional<NurseCategory> tag_nurse_category(const FeedbackItem& item,
                                                const NurseLexicon& lexicon = NurseLexicon::defaults());

struct FeedbackOptions {
    int max_parse_retries = 2;
    ChatParams params;
    NurseLexicon lexicon = NurseLexicon::defaults();
    Clock clock = now_utc;
};

// prompt -> provider -> parse -> ground -> tag.
class FeedbackGenerator {
public:
    FeedbackGenerator(ChatProvider& chat, FeedbackOptions options = {});

    // Provider failures propagate as ProviderError. Unparseable output is
    // re-requested up to max_parse_retries times before FeedbackParseError.
    FeedbackReport generate(std::span<const Turn> transcript, std::string_view session_id);

private:
    ChatProvider* chat_;
    FeedbackOptions options_;
};

} // namespace pal
