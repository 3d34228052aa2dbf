#include "pal/error.hpp"
#include "pal/transcript.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace pal;
using pal::test::Rng;

namespace {

Turn make_turn(int index, Role role, const std::string& raw) {
    Turn t;
    t.index = index;
    t.role = role;
    t.raw_text = raw;
    if (role == Role::patient) {
        auto p = parse_emotional_cues(raw);
        t.text = p.text;
        t.cues = p.cues;
    } else {
        t.text = raw;
    }
    return t;
}

} // namespace

TEST_SUITE("transcript") {

TEST_CASE("render") {
    std::vector<Turn> turns = {
        make_turn(0, Role::clinician, "Hello, how are you\nfeeling?"),
        make_turn(1, Role::patient, "*looks down* Not great. I *sighs* worry."),
    };
    CHECK(render_transcript(turns) ==
          "Doctor: Hello, how are you feeling?\n"
          "Patient: [looks down] Not great. I [sighs] worry.\n");
}

TEST_CASE("parse restores canonical cue markup") {
    auto turns = parse_transcript("\nDoctor:  Hi there.\r\n\nPatient: [pauses] Hello. [cries]\n", "t.txt");
    REQUIRE(turns.size() == 2);
    CHECK(turns[0].role == Role::clinician);
    CHECK(turns[0].text == "Hi there.");
    CHECK(turns[1].index == 1);
    CHECK(turns[1].text == "Hello.");
    CHECK(turns[1].raw_text == "*pauses* Hello. *cries*");
    REQUIRE(turns[1].cues.size() == 2);
    CHECK(turns[1].cues[1].position == 6);
    CHECK(reassemble_raw(turns[1].text, turns[1].cues) == turns[1].raw_text);
}

TEST_CASE("parse errors") {
    try {
        parse_transcript("Doctor: hi\nNurse: hello\n", "t.txt");
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse_error);
        CHECK(std::string(e.what()) == "t.txt:2: expected 'Doctor:' or 'Patient:'");
    }
    CHECK_THROWS_AS(parse_transcript("Patient: only me\n"), Error);
    CHECK_THROWS_AS(parse_transcript(""), Error);
}

TEST_CASE("property: render then parse keeps roles, text and cues") {
    Rng rng(pal::test::property_seed() + 50);
    const std::vector<std::string> words = {"I", "see", "hard.", "okay,", "what", "now?"};
    const std::vector<std::string> cues = {"*pauses*", "*starts crying*", "*looks away*"};
    for (int i = 0; i < 500; ++i) {
        std::vector<Turn> turns;
        int n = static_cast<int>(rng.between(1, 6));
        for (int k = 0; k < n; ++k) {
            Role role = k % 2 == 0 ? Role::clinician : Role::patient;
            std::string raw;
            int w = static_cast<int>(rng.between(1, 6));
            for (int j = 0; j < w; ++j) {
                if (!raw.empty()) raw += ' ';
                raw += role == Role::patient && rng.chance(0.3) ? rng.pick(cues) : rng.pick(words);
            }
            if (parse_emotional_cues(raw).text.empty() && role == Role::patient) raw += " fine";
            turns.push_back(make_turn(k, role, raw));
        }
        std::string rendered = render_transcript(turns);
        auto back = parse_transcript(rendered);
        INFO(rendered);
        REQUIRE(back.size() == turns.size());
        for (std::size_t k = 0; k < turns.size(); ++k) {
            REQUIRE(back[k].role == turns[k].role);
            REQUIRE(back[k].text == turns[k].text);
            REQUIRE(back[k].cues.size() == turns[k].cues.size());
            for (std::size_t c = 0; c < turns[k].cues.size(); ++c) {
                REQUIRE(back[k].cues[c].position == turns[k].cues[c].position);
                REQUIRE(back[k].cues[c].action == turns[k].cues[c].action);
            }
        }
        REQUIRE(render_transcript(back) == rendered);
    }
}

}
