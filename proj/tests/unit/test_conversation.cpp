#include "pal/conversation.hpp"
#include "pal/error.hpp"
#include "pal/providers/mock.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <atomic>
#include <thread>

using namespace pal;
using pal::test::Rng;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::internal;
}

struct Harness {
    explicit Harness(MockScript script, MockProvider::Options mock_options = {},
                     std::string placeholder = "\xE2\x80\xA6")
        : personas({pal::test::sample_persona("pat", 3)}),
          clock(pal::test::at(2026, 10, 16, 9), 1000),
          meter(Rates{1'000'000, 1'000'000, 6'000, 15'000}, store, std::ref(clock)),
          mock(std::make_shared<MockProvider>(std::move(script), meter, mock_options)) {
        EngineOptions options;
        options.clock = std::ref(clock);
        options.new_id = [this] { return "id" + std::to_string(next_id++); };
        options.silence_placeholder = std::move(placeholder);
        options.tts_voice = "alloy";
        engine = std::make_unique<ConversationEngine>(personas, store, ProviderSet{mock, mock, mock},
                                                      options);
    }

    PersonaLibrary personas;
    MemoryStore store;
    pal::test::SteppingClock clock;
    Meter meter;
    std::shared_ptr<MockProvider> mock;
    int next_id = 1;
    std::unique_ptr<ConversationEngine> engine;
};

MockScript replies(std::initializer_list<const char*> texts) {
    MockScript s;
    for (auto t : texts) s.add_chat("*", {t, {}});
    s.add_chat(MockScript::system_key(feedback_system_prompt()), {std::string(feedback_prompt_example()), {}});
    s.add_stt("*", {"How are you feeling today?", {}});
    return s;
}

} // namespace

TEST_SUITE("conversation") {

TEST_CASE("text turn streams cue and text events, then persists both turns") {
    Harness h(replies({"*pauses* I don't *sighs* know."}));
    auto user = h.engine->create_user();
    auto session = h.engine->start_session(user.id, "pat", Modality::text);
    CHECK(session.stage_index == 0);
    CHECK(session.created_at == pal::test::at(2026, 10, 16, 9, 0, 1));

    std::vector<std::string> events;
    std::string text;
    std::vector<EmotionalCue> cues;
    ReplyHandlers handlers;
    handlers.on_clinician_turn = [&](const Turn& t) { events.push_back("clinician:" + t.text); };
    handlers.on_text = [&](std::string_view s) {
        events.push_back("text");
        text += s;
    };
    handlers.on_cue = [&](const EmotionalCue& c) {
        events.push_back("cue:" + c.action);
        cues.push_back(c);
    };
    auto turn = h.engine->submit_text(session.id, "Hello, I have your results.", handlers);
    REQUIRE(!events.empty());
    CHECK(events.front() == "clinician:Hello, I have your results.");
    CHECK(events[1] == "cue:pauses");
    CHECK(turn.patient.text == "I don't know.");
    CHECK(text == turn.patient.text);
    CHECK(cues == turn.patient.cues);
    CHECK(turn.patient.raw_text == "*pauses* I don't *sighs* know.");
    REQUIRE(turn.patient.usage.size() == 1);
    CHECK(turn.patient.usage[0].session_id == session.id);

    auto stored = h.engine->get_session(session.id);
    REQUIRE(stored.turns.size() == 2);
    CHECK(stored.turns[0] == turn.clinician);
    CHECK(stored.turns[1] == turn.patient);
    CHECK_FALSE(session_invariant_violation(stored));
}

TEST_CASE("the patient sees the stage prompt and the whole history") {
    Harness h(replies({"*nods* one", "two"}));
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::text);
    h.engine->submit_text(s.id, "first");
    h.engine->set_stage(s.id, 2);
    h.engine->submit_text(s.id, "second");
    auto requests = h.mock->chat_requests();
    REQUIRE(requests.size() == 2);
    const auto& last = requests[1];
    REQUIRE(last.size() == 4);
    CHECK(last[0].content == render_patient_system_prompt(h.personas.at("pat"), 2));
    CHECK(last[1].role == ChatMessage::Role::user);
    CHECK(last[1].content == "first");
    CHECK(last[2].role == ChatMessage::Role::assistant);
    CHECK(last[2].content == "*nods* one");
    CHECK(last[3].content == "second");
    CHECK(requests[0][0].content == render_patient_system_prompt(h.personas.at("pat"), 0));
    CHECK(code_of([&] { h.engine->set_stage(s.id, 3); }) == Errc::contract_violation);
    CHECK(code_of([&] { h.engine->set_stage(s.id, -1); }) == Errc::contract_violation);
}

TEST_CASE("start errors") {
    Harness h(replies({"x"}));
    auto user = h.engine->create_user();
    CHECK(code_of([&] { h.engine->start_session("ghost", "pat", Modality::text); }) == Errc::user_not_found);
    CHECK(code_of([&] { h.engine->start_session(user.id, "nobody", Modality::text); }) == Errc::persona_not_found);
    CHECK(code_of([&] { h.engine->get_session("nope"); }) == Errc::session_not_found);
}

TEST_CASE("submission checks") {
    Harness h(replies({"reply"}));
    auto user = h.engine->create_user();
    auto text = h.engine->start_session(user.id, "pat", Modality::text);
    auto voice = h.engine->start_session(user.id, "pat", Modality::voice);
    CHECK(code_of([&] { h.engine->submit_text(voice.id, "hi"); }) == Errc::modality_mismatch);
    CHECK(code_of([&] {
              h.engine->submit_audio(text.id, pal::test::wav_of_duration(100), "audio/wav");
          }) == Errc::modality_mismatch);
    CHECK(code_of([&] { h.engine->submit_text(text.id, "  \n"); }) == Errc::contract_violation);
    CHECK(code_of([&] { h.engine->submit_text("nope", "hi"); }) == Errc::session_not_found);
    CHECK(code_of([&] { h.engine->regenerate_reply(text.id); }) == Errc::out_of_turn);
    CHECK(h.engine->get_session(text.id).turns.empty());
    CHECK(h.mock->calls().total() == 0);
}

TEST_CASE("a failed reply keeps the clinician turn and can be regenerated") {
    Harness h(replies({"*sighs* Okay."}));
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::text);
    h.mock->inject_chat_failure({ProviderFailure::timeout, 0, 0});
    CHECK_THROWS_AS(h.engine->submit_text(s.id, "Hello."), ProviderError);
    auto stored = h.engine->get_session(s.id);
    REQUIRE(stored.turns.size() == 1);
    CHECK(stored.turns[0].role == Role::clinician);
    CHECK(code_of([&] { h.engine->submit_text(s.id, "Hello again."); }) == Errc::out_of_turn);

    auto again = h.engine->regenerate_reply(s.id);
    CHECK(again.clinician == stored.turns[0]);
    CHECK(again.patient.text == "Okay.");
    CHECK(h.engine->get_session(s.id).turns.size() == 2);
    CHECK(h.store.usage_records().size() == 2);
    CHECK(h.store.usage_records()[0].failed);
}

TEST_CASE("finish generates feedback once") {
    Harness h(replies({"I see."}));
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::text);
    CHECK(code_of([&] { h.engine->finish_session(s.id); }) == Errc::nothing_to_analyze);
    h.engine->submit_text(s.id, "The prognosis is not very good.");
    auto report = h.engine->finish_session(s.id);
    REQUIRE(report.items.size() == 3);
    CHECK(report.items[0].grounded == Grounding::grounded);
    CHECK(report.items[1].grounded == Grounding::ungrounded);
    auto calls = h.mock->calls().chat;
    auto again = h.engine->finish_session(s.id);
    CHECK(again == report);
    CHECK(h.mock->calls().chat == calls);

    auto stored = h.engine->get_session(s.id);
    CHECK(stored.status == SessionStatus::finished);
    CHECK(stored.finished_at);
    CHECK(stored.feedback == report);
    CHECK(code_of([&] { h.engine->submit_text(s.id, "more"); }) == Errc::session_finished);
    CHECK(code_of([&] { h.engine->set_stage(s.id, 1); }) == Errc::session_finished);
    CHECK(code_of([&] { h.engine->regenerate_reply(s.id); }) == Errc::session_finished);
}

TEST_CASE("feedback failures leave the session active") {
    MockScript script;
    script.add_chat("*", {"fine", {}});
    Harness h(script);
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::text);
    h.engine->submit_text(s.id, "hello");
    // The wildcard answer is not a feedback list: every attempt fails to parse.
    CHECK(code_of([&] { h.engine->finish_session(s.id); }) == Errc::feedback_parse_failed);
    CHECK(h.engine->get_session(s.id).status == SessionStatus::active);
    h.mock->inject_chat_failure({ProviderFailure::http_status, 503, 0});
    CHECK(code_of([&] { h.engine->finish_session(s.id); }) == Errc::provider_error);
    CHECK(h.engine->get_session(s.id).status == SessionStatus::active);
}

TEST_CASE("voice turn: transcription in, synthesized speech out") {
    Harness h(replies({"*looks away* I was afraid of that."}));
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::voice);
    std::string recording = pal::test::wav_of_duration(1200);
    std::string streamed;
    auto turn = h.engine->submit_audio(s.id, recording, "audio/wav; codecs=1",
                                       {nullptr, nullptr, nullptr,
                                        [&](std::string_view b) { streamed += b; }});
    CHECK(turn.clinician.text == "How are you feeling today?");
    REQUIRE(turn.clinician.audio_ref);
    CHECK(turn.clinician.audio_ref->media_type == "audio/wav");
    CHECK(h.store.get_audio(*turn.clinician.audio_ref) == recording);
    CHECK(turn.clinician.usage.at(0).audio_ms == 1200);

    CHECK(streamed == pal::test::oracle_mock_tts_audio("I was afraid of that."));
    REQUIRE(turn.patient.audio_ref);
    CHECK(h.store.get_audio(*turn.patient.audio_ref) == streamed);
    CHECK(turn.patient.text == "I was afraid of that.");
    CHECK(turn.patient.cues.at(0).action == "looks away");
    CHECK(h.mock->tts_inputs() == std::vector<std::string>{"I was afraid of that."});
    CHECK(turn.patient.usage.size() == 2);
    CHECK(h.store.usage_records().size() == 3);
    CHECK(h.engine->patient_audio_media_type() == "audio/wav");
    CHECK_FALSE(session_invariant_violation(h.engine->get_session(s.id)));
}

TEST_CASE("a reply that is only cues is spoken as the placeholder") {
    Harness h(replies({"*starts crying*"}), {}, "Mm.");
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::voice);
    std::string audio;
    auto turn = h.engine->submit_audio(s.id, pal::test::wav_of_duration(100), "audio/wav",
                                       {nullptr, nullptr, nullptr, [&](std::string_view b) { audio += b; }});
    CHECK(turn.patient.text.empty());
    CHECK(turn.patient.cues.size() == 1);
    CHECK(h.mock->tts_inputs() == std::vector<std::string>{"Mm."});
    CHECK(audio == pal::test::oracle_mock_tts_audio("Mm."));
}

TEST_CASE("unusable recordings leave no turn behind") {
    MockScript script = replies({"x"});
    script.add_stt(MockScript::hash_key(pal::test::wav_of_duration(50)), {"   ", {}});
    Harness h(script);
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::voice);
    CHECK(code_of([&] { h.engine->submit_audio(s.id, pal::test::wav_of_duration(50), "audio/wav"); }) ==
          Errc::invalid_audio);
    CHECK(code_of([&] { h.engine->submit_audio(s.id, "garbage", "audio/wav"); }) == Errc::invalid_audio);
    CHECK(code_of([&] { h.engine->submit_audio(s.id, "garbage", "audio/mpeg"); }) ==
          Errc::unsupported_media_type);
    CHECK(code_of([&] { h.engine->submit_audio(s.id, "", "audio/wav"); }) == Errc::contract_violation);
    CHECK(h.engine->get_session(s.id).turns.empty());
    CHECK(h.mock->calls().chat == 0);
}

TEST_CASE("concurrent operations on one session are rejected, not queued") {
    MockProvider::Options slow;
    slow.chunk_delay = std::chrono::milliseconds(40);
    Harness h(replies({"one two three four five six"}), slow);
    auto user = h.engine->create_user();
    auto s = h.engine->start_session(user.id, "pat", Modality::text);
    std::atomic<bool> started{false};
    std::thread first([&] {
        ReplyHandlers handlers;
        handlers.on_clinician_turn = [&](const Turn&) { started = true; };
        h.engine->submit_text(s.id, "hello", handlers);
    });
    while (!started) std::this_thread::yield();
    CHECK(code_of([&] { h.engine->submit_text(s.id, "again"); }) == Errc::reply_in_progress);
    CHECK(code_of([&] { h.engine->finish_session(s.id); }) == Errc::reply_in_progress);
    first.join();
    CHECK(h.engine->get_session(s.id).turns.size() == 2);
}

TEST_CASE("listing through the engine") {
    Harness h(replies({"x"}));
    auto user = h.engine->create_user();
    auto a = h.engine->start_session(user.id, "pat", Modality::text);
    auto b = h.engine->start_session(user.id, "pat", Modality::voice);
    auto rows = h.engine->list_sessions(user.id);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].id == b.id);
    CHECK(rows[1].id == a.id);
    CHECK(rows[0].persona_display_name == "Test Patient pat");
    CHECK(code_of([&] { h.engine->list_sessions("ghost"); }) == Errc::user_not_found);
}

TEST_CASE("property: random operations with injected failures keep sessions well-formed") {
    Rng rng(pal::test::property_seed() + 90);
    MockScript script = replies({"*pauses* I see.", "Okay *sighs* then.", "*cries*", "Fine."});
    for (int round = 0; round < 40; ++round) {
        Harness h(script);
        auto user = h.engine->create_user();
        std::vector<std::string> ids;
        for (int op = 0; op < 40; ++op) {
            if (ids.empty() || rng.chance(0.1)) {
                ids.push_back(h.engine->start_session(user.id, "pat", rng.chance(0.5) ? Modality::text
                                                                                       : Modality::voice).id);
                continue;
            }
            const std::string& id = rng.pick(ids);
            if (rng.chance(0.2)) {
                h.mock->inject_chat_failure({ProviderFailure::transport, 0, static_cast<std::size_t>(rng.between(0, 2))});
            }
            try {
                switch (rng.between(0, 5)) {
                case 0:
                case 1: h.engine->submit_text(id, "words " + std::to_string(op)); break;
                case 2: h.engine->submit_audio(id, pal::test::wav_of_duration(100 + op), "audio/wav"); break;
                case 3: h.engine->regenerate_reply(id); break;
                case 4: h.engine->set_stage(id, static_cast<int>(rng.between(-1, 3))); break;
                default: h.engine->finish_session(id); break;
                }
            } catch (const Error&) {
            }
            auto s = h.engine->get_session(id);
            auto violation = session_invariant_violation(s);
            REQUIRE_MESSAGE(!violation, *violation);
        }
        // One usage record per provider call, failed or not.
        REQUIRE(h.store.usage_records().size() == h.mock->calls().total());
    }
}

}
