#include "pal/feedback.hpp"
#include "pal/providers/mock.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace pal;
using pal::test::Rng;

namespace {

Turn clinician(int index, const std::string& text) {
    Turn t;
    t.index = index;
    t.role = Role::clinician;
    t.text = text;
    t.raw_text = text;
    return t;
}

Turn patient(int index, const std::string& raw) {
    Turn t;
    t.index = index;
    t.role = Role::patient;
    auto p = parse_emotional_cues(raw);
    t.text = p.text;
    t.cues = p.cues;
    t.raw_text = raw;
    return t;
}

const char* kQuote1 = "The prognosis is not very good.";
const char* kQuote2 = "There's evidence of multisystem organ failure.";
const char* kQuote3 = "This must be really hard. But let's talk about next steps.";

FeedbackItem random_item(Rng& rng, int ordinal) {
    static const std::vector<std::string> words = {
        "Doctor", "says", "\"hard\"", "news,", "feel", "it's", "*really*", "50%", "(pause)",
        "\xE2\x80\x9Csoft\xE2\x80\x9D", "next:", "steps.", "family", "-", "why?"};
    auto sentence = [&](int lo, int hi) {
        std::string s;
        int n = static_cast<int>(rng.between(lo, hi));
        for (int i = 0; i < n; ++i) {
            if (!s.empty()) s += ' ';
            s += rng.pick(words);
        }
        return s;
    };
    FeedbackItem item;
    item.ordinal = ordinal;
    item.scenario = sentence(1, 8);
    item.current_approach = sentence(1, 10);
    item.improvement_suggestion = sentence(1, 12);
    return item;
}

} // namespace

TEST_SUITE("feedback") {

TEST_CASE("prompt is the fixture, byte for byte") {
    std::string fixture = pal::test::read_file(pal::test::source_dir() / "data/feedback_prompt.txt");
    CHECK(pal::test::oracle_sha256_hex(fixture) == kFeedbackPromptSha256);
    CHECK(std::string(feedback_system_prompt()) == fixture);
    CHECK(feedback_system_prompt().starts_with("Analyze a transcript from a doctor-patient encounter"));
}

TEST_CASE("example items parse to three grounded-ready quotes") {
    auto parsed = parse_feedback_response(feedback_prompt_example());
    CHECK(parsed.issues.empty());
    REQUIRE(parsed.items.size() == 3);
    CHECK(parsed.items[0].current_approach == kQuote1);
    CHECK(parsed.items[1].current_approach == kQuote2);
    CHECK(parsed.items[2].current_approach == kQuote3);
    CHECK(parsed.items[0].scenario == "Doctor introduces prognosis without assessing the emotion.");
    CHECK(parsed.items[2].improvement_suggestion.starts_with("Instead, pause after"));
    for (int i = 0; i < 3; ++i) CHECK(parsed.items[static_cast<std::size_t>(i)].ordinal == i + 1);
}

TEST_CASE("tolerated layout variants") {
    const char* raw =
        "Here is my feedback.\n\n"
        "### 1. **Opening**\n"
        "- **Current approach:** \xE2\x80\x9CLet's get started.\xE2\x80\x9D\n"
        "- **Improvement Suggestions:** Ask what they know first.\n"
        "  Then pause.\n\n"
        "2) Scenario: Headline buried\n"
        "   * Current Approach: 'So the scan shows'\n"
        "   * Improvement Suggestion: Lead with the headline.\n"
        "**3.** **Scenario/Moment**: Empathy\n"
        "   \xE2\x80\xA2 **Current Approach**: \"I understand.\"\n"
        "   \xE2\x80\xA2 **Improvement Suggestion**: Try a naming statement.\n"
        "\nOverall, good effort.\n";
    auto parsed = parse_feedback_response(raw);
    REQUIRE(parsed.items.size() == 3);
    CHECK(parsed.items[0].scenario == "Opening");
    CHECK(parsed.items[0].current_approach == "Let's get started.");
    CHECK(parsed.items[0].improvement_suggestion == "Ask what they know first.\nThen pause.");
    CHECK(parsed.items[1].scenario == "Headline buried");
    CHECK(parsed.items[1].current_approach == "So the scan shows");
    CHECK(parsed.items[2].scenario == "Empathy");
    CHECK(parsed.items[2].current_approach == "I understand.");
    CHECK(parsed.items[2].improvement_suggestion == "Try a naming statement.");
}

TEST_CASE("incomplete and misnumbered items are reported") {
    const char* raw =
        "1. **Scenario**: A\n   - **Current Approach**: \"a\"\n   - **Improvement Suggestion**: x\n"
        "2. **Scenario**: B\n   - **Improvement Suggestion**: y\n"
        "1. **Scenario**: C\n   - **Current Approach**: \"c\"\n   - **Improvement Suggestion**: z\n";
    auto parsed = parse_feedback_response(raw);
    REQUIRE(parsed.items.size() == 2);
    CHECK(parsed.items[1].scenario == "C");
    CHECK(parsed.items[1].ordinal == 2);
    REQUIRE(parsed.issues.size() == 2);
    CHECK(parsed.issues[0].message == "item 2 skipped: missing Current Approach");
    CHECK(parsed.issues[1].message == "item listed as 1 renumbered to 2");
}

TEST_CASE("output without items is a parse error carrying the raw text") {
    for (std::string raw : {"", "I cannot help with that.", "1. **Scenario**: only a scenario\n"}) {
        try {
            parse_feedback_response(raw);
            FAIL("expected failure");
        } catch (const FeedbackParseError& e) {
            CHECK(e.code() == Errc::feedback_parse_failed);
            CHECK(e.raw_response() == raw);
        }
    }
}

TEST_CASE("property: render then parse is the identity") {
    Rng rng(pal::test::property_seed() + 60);
    for (int i = 0; i < 1000; ++i) {
        std::vector<FeedbackItem> items;
        int n = static_cast<int>(rng.between(1, 6));
        int ordinal = 0;
        for (int k = 0; k < n; ++k) {
            ordinal += static_cast<int>(rng.between(1, 3));
            items.push_back(random_item(rng, ordinal));
        }
        std::string text = render_feedback_items(items);
        INFO(text);
        auto parsed = parse_feedback_response(text);
        REQUIRE(parsed.issues.empty());
        REQUIRE(parsed.items == items);
    }
}

TEST_CASE("normalization") {
    CHECK(normalize_for_grounding("  \xE2\x80\x9CThe  Prognosis\nis\xE2\x80\x99 OK.\xE2\x80\x9D ") ==
          "the prognosis is' ok");
    CHECK(normalize_for_grounding("...") == "");
    CHECK(normalize_for_grounding("It's") == "it's");
}

TEST_CASE("grounding finds the first clinician turn containing the quote") {
    std::vector<Turn> transcript = {
        clinician(0, "Hello. I have your results."),
        patient(1, "*nods* Okay."),
        clinician(2, "I'm afraid the prognosis is NOT very good."),
        patient(3, "Okay."),
        clinician(4, "This must be really hard.  But let\xE2\x80\x99s talk about next steps."),
        patient(5, "The prognosis is not very good."),
    };
    auto parsed = parse_feedback_response(feedback_prompt_example());
    auto report = ground_quotes(parsed.items, transcript);
    REQUIRE(report.verdicts.size() == 3);
    CHECK(report.verdicts[0].verdict == Grounding::grounded);
    CHECK(report.verdicts[0].turn_index == 2);
    std::string norm = normalize_for_grounding(transcript[2].text);
    CHECK(norm.substr(report.verdicts[0].match_begin,
                      report.verdicts[0].match_end - report.verdicts[0].match_begin) ==
          "the prognosis is not very good");
    CHECK(report.verdicts[1].verdict == Grounding::ungrounded);
    CHECK_FALSE(report.verdicts[1].turn_index);
    CHECK(report.verdicts[2].verdict == Grounding::grounded);
    CHECK(report.verdicts[2].turn_index == 4);

    FeedbackItem empty_quote;
    empty_quote.current_approach = "\"\"";
    std::vector<FeedbackItem> only{empty_quote};
    CHECK(ground_quotes(only, transcript).verdicts[0].verdict == Grounding::ungrounded);
}

TEST_CASE("patient lines never ground a quote") {
    std::vector<Turn> transcript = {clinician(0, "Hi."), patient(1, "The prognosis is not very good.")};
    FeedbackItem item;
    item.current_approach = kQuote1;
    std::vector<FeedbackItem> items{item};
    CHECK(ground_quotes(items, transcript).verdicts[0].verdict == Grounding::ungrounded);
}

TEST_CASE("NURSE tagging") {
    auto parsed = parse_feedback_response(feedback_prompt_example());
    CHECK(tag_nurse_category(parsed.items[0]) == NurseCategory::understanding);
    CHECK_FALSE(tag_nurse_category(parsed.items[1]));
    CHECK(tag_nurse_category(parsed.items[2]) == NurseCategory::exploring);

    FeedbackItem item;
    item.improvement_suggestion = "Offer SUPPORT and explore feelings.";
    CHECK(tag_nurse_category(item) == NurseCategory::supporting);
    NurseLexicon custom;
    custom[NurseCategory::exploring] = {"feelings"};
    CHECK(tag_nurse_category(item, custom) == NurseCategory::exploring);
    for (auto c : kNurseOrder) CHECK(nurse_category_from_string(to_string(c)) == c);
}

TEST_CASE("prompt carries the transcript as the user message") {
    std::vector<Turn> transcript = {clinician(0, "Hello."), patient(1, "*sighs* Hi.")};
    auto messages = build_feedback_prompt(transcript);
    REQUIRE(messages.size() == 2);
    CHECK(messages[0].role == ChatMessage::Role::system);
    CHECK(messages[0].content == feedback_system_prompt());
    CHECK(messages[1].role == ChatMessage::Role::user);
    CHECK(messages[1].content == "Doctor: Hello.\nPatient: [sighs] Hi.\n");
    std::vector<Turn> none = {patient(0, "Hi.")};
    CHECK_THROWS_AS(build_feedback_prompt(none), Error);
}

TEST_CASE("generator grounds, tags and retries unparseable output") {
    UsageCollector sink;
    Meter meter(Rates{}, sink);
    MockScript script;
    script.add_chat(MockScript::system_key(feedback_system_prompt()), {"Sorry, no.", {}});
    script.add_chat(MockScript::system_key(feedback_system_prompt()),
                    {std::string(feedback_prompt_example()), {}});
    MockProvider mock(script, meter);
    pal::test::SteppingClock clock(pal::test::at(2026, 10, 16, 9), 0);
    FeedbackOptions options;
    options.clock = std::ref(clock);
    FeedbackGenerator gen(mock, options);

    std::vector<Turn> transcript = {clinician(0, kQuote1), patient(1, "Oh."), clinician(2, kQuote3)};
    auto report = gen.generate(transcript, "s1");
    CHECK(report.parse_retries == 1);
    CHECK(report.usage.size() == 2);
    CHECK(sink.size() == 2);
    CHECK(report.session_id == "s1");
    CHECK(report.model_id == "mock-chat");
    CHECK(report.generated_at == pal::test::at(2026, 10, 16, 9));
    CHECK(report.raw_response == feedback_prompt_example());
    REQUIRE(report.items.size() == 3);
    CHECK(report.items[0].grounded == Grounding::grounded);
    CHECK(report.items[1].grounded == Grounding::ungrounded);
    CHECK(report.items[2].grounded == Grounding::grounded);
    CHECK(report.items[0].nurse_category == NurseCategory::understanding);
    for (const auto& u : report.usage) CHECK(u.session_id == "s1");
}

TEST_CASE("generator gives up after the retry budget") {
    UsageCollector sink;
    Meter meter(Rates{}, sink);
    MockScript script;
    script.add_chat("*", {"no list here", {}});
    MockProvider mock(script, meter);
    FeedbackOptions options;
    options.max_parse_retries = 2;
    FeedbackGenerator gen(mock, options);
    std::vector<Turn> transcript = {clinician(0, "Hello.")};
    try {
        gen.generate(transcript, "s");
        FAIL("expected failure");
    } catch (const FeedbackParseError& e) {
        CHECK(e.attempts() == 3);
        CHECK(e.raw_response() == "no list here");
    }
    CHECK(sink.size() == 3);
}

TEST_CASE("provider errors propagate from the generator") {
    UsageCollector sink;
    Meter meter(Rates{}, sink);
    MockProvider mock(MockScript{}, meter);
    mock.inject_chat_failure({ProviderFailure::timeout, 0, 0});
    FeedbackGenerator gen(mock);
    std::vector<Turn> transcript = {clinician(0, "Hello.")};
    CHECK_THROWS_AS(gen.generate(transcript, "s"), ProviderError);
    CHECK(sink.size() == 1);
}

}
