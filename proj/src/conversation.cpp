#include "pal/conversation.hpp"

#include "pal/providers/audio.hpp"

namespace pal {
namespace {

bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::string_view trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Holds one session's operation slot for the lifetime of the object.
class SessionGuard {
public:
    explicit SessionGuard(std::shared_ptr<std::mutex> m) : m_(std::move(m)) {
        if (!m_->try_lock()) {
            throw Error(Errc::reply_in_progress, "another operation on this session is running");
        }
    }
    ~SessionGuard() { m_->unlock(); }
    SessionGuard(const SessionGuard&) = delete;
    SessionGuard& operator=(const SessionGuard&) = delete;

private:
    std::shared_ptr<std::mutex> m_;
};

} // namespace

std::vector<ChatMessage> assemble_context(const PersonaProfile& persona, const Session& session) {
    std::vector<ChatMessage> messages;
    messages.reserve(session.turns.size() + 1);
    messages.push_back(
        {ChatMessage::Role::system, render_patient_system_prompt(persona, session.stage_index)});
    for (const Turn& t : session.turns) {
        messages.push_back({t.role == Role::clinician ? ChatMessage::Role::user
                                                      : ChatMessage::Role::assistant,
                            t.raw_text});
    }
    return messages;
}

ConversationEngine::ConversationEngine(const PersonaLibrary& personas, Store& store,
                                       ProviderSet providers, EngineOptions options)
    : personas_(&personas), store_(&store), providers_(std::move(providers)),
      options_(std::move(options)) {
    if (!providers_.chat || !providers_.stt || !providers_.tts) {
        throw contract_error("engine needs chat, speech-to-text and text-to-speech providers");
    }
    if (is_blank(options_.silence_placeholder)) {
        throw contract_error("silence placeholder must contain speech");
    }
}

std::shared_ptr<std::mutex> ConversationEngine::session_mutex(const std::string& session_id) {
    std::lock_guard lock(locks_mutex_);
    auto& slot = locks_[session_id];
    if (!slot) {
        slot = std::make_shared<std::mutex>();
    }
    return slot;
}

UserRecord ConversationEngine::create_user() {
    UserRecord user{options_.new_id(), options_.clock()};
    store_->put_user(user);
    return user;
}

Session ConversationEngine::start_session(const std::string& user_id, const std::string& persona_id,
                                          Modality modality) {
    if (!store_->find_user(user_id)) {
        throw Error(Errc::user_not_found, "unknown user " + user_id);
    }
    const PersonaProfile& persona = personas_->at(persona_id);
    Session s;
    s.id = options_.new_id();
    s.user_id = user_id;
    s.persona_id = persona.id;
    s.modality = modality;
    s.created_at = options_.clock();
    s.stage_index = persona.initial_stage_index;
    store_->save_session(s);
    return s;
}

Session ConversationEngine::get_session(const std::string& session_id) const {
    return store_->load_session(session_id);
}

std::vector<SessionSummary> ConversationEngine::list_sessions(const std::string& user_id) const {
    return pal::list_sessions(*store_, user_id, *personas_);
}

Session ConversationEngine::load_active(const std::string& session_id) const {
    Session s = store_->load_session(session_id);
    if (s.status == SessionStatus::finished) {
        throw Error(Errc::session_finished, "session " + session_id + " is finished");
    }
    return s;
}

Turn ConversationEngine::produce_reply(Session& session, const ReplyHandlers& handlers) {
    const PersonaProfile& persona = personas_->at(session.persona_id);
    auto messages = assemble_context(persona, session);
    ChatParams params;
    params.context.session_id = session.id;

    Turn patient;
    patient.index = static_cast<int>(session.turns.size());
    patient.role = Role::patient;
    patient.started_at = options_.clock();

    std::string raw;
    if (session.modality == Modality::text) {
        CueStreamParser parser;
        auto dispatch = [&](const std::vector<CueStreamEvent>& events) {
            for (const auto& ev : events) {
                if (ev.kind == CueStreamEvent::Kind::text) {
                    if (handlers.on_text) handlers.on_text(ev.text);
                } else if (handlers.on_cue) {
                    handlers.on_cue(ev.cue);
                }
            }
        };
        patient.usage.push_back(providers_.chat->chat_stream(
            messages, params, [&](std::string_view chunk) { dispatch(parser.feed(chunk)); }));
        dispatch(parser.finish());
        raw = parser.raw();
    } else {
        patient.usage.push_back(providers_.chat->chat_stream(
            messages, params, [&](std::string_view chunk) { raw.append(chunk); }));
        std::string speech = strip_cues_for_tts(raw);
        if (is_blank(speech)) {
            speech = options_.silence_placeholder;
        }
        std::string audio;
        patient.usage.push_back(providers_.tts->synthesize_stream(
            speech, options_.tts_voice,
            [&](std::string_view bytes) {
                audio.append(bytes);
                if (handlers.on_audio) handlers.on_audio(bytes);
            },
            params.context));
        patient.audio_ref = store_->put_audio(session.id, patient.index, audio,
                                              providers_.tts->output_media_type());
    }

    CueParse parsed = parse_emotional_cues(raw);
    patient.text = std::move(parsed.text);
    patient.cues = std::move(parsed.cues);
    patient.raw_text = std::move(raw);
    patient.completed_at = options_.clock();
    session.turns.push_back(patient);
    store_->save_session(session);
    return patient;
}

TurnSummary ConversationEngine::submit_text(const std::string& session_id, std::string_view text,
                                            const ReplyHandlers& handlers) {
    SessionGuard guard(session_mutex(session_id));
    Session s = load_active(session_id);
    if (s.modality != Modality::text) {
        throw Error(Errc::modality_mismatch, "session " + session_id + " takes audio turns");
    }
    if (!s.clinician_to_move()) {
        throw Error(Errc::out_of_turn, "the patient reply for the last turn is missing");
    }
    if (is_blank(text)) {
        throw contract_error("message text is empty");
    }
    Turn clinician;
    clinician.index = static_cast<int>(s.turns.size());
    clinician.role = Role::clinician;
    clinician.text = std::string(text);
    clinician.raw_text = clinician.text;
    clinician.started_at = options_.clock();
    clinician.completed_at = clinician.started_at;
    s.turns.push_back(clinician);
    store_->save_session(s);
    if (handlers.on_clinician_turn) handlers.on_clinician_turn(clinician);
    Turn patient = produce_reply(s, handlers);
    return {std::move(clinician), std::move(patient)};
}

TurnSummary ConversationEngine::submit_audio(const std::string& session_id, const std::string& audio,
                                             std::string_view media_type,
                                             const ReplyHandlers& handlers) {
    SessionGuard guard(session_mutex(session_id));
    Session s = load_active(session_id);
    if (s.modality != Modality::voice) {
        throw Error(Errc::modality_mismatch, "session " + session_id + " takes text turns");
    }
    if (!s.clinician_to_move()) {
        throw Error(Errc::out_of_turn, "the patient reply for the last turn is missing");
    }
    Turn clinician;
    clinician.index = static_cast<int>(s.turns.size());
    clinician.role = Role::clinician;
    clinician.started_at = options_.clock();
    auto transcription = providers_.stt->transcribe(audio, media_type, {s.id});
    std::string_view spoken = trim(transcription.text);
    if (spoken.empty()) {
        throw Error(Errc::invalid_audio, "no speech recognized in the recording");
    }
    clinician.text = std::string(spoken);
    clinician.raw_text = clinician.text;
    clinician.usage.push_back(transcription.usage);
    clinician.audio_ref = store_->put_audio(s.id, clinician.index, audio, base_media_type(media_type));
    clinician.completed_at = options_.clock();
    s.turns.push_back(clinician);
    store_->save_session(s);
    if (handlers.on_clinician_turn) handlers.on_clinician_turn(clinician);
    Turn patient = produce_reply(s, handlers);
    return {std::move(clinician), std::move(patient)};
}

TurnSummary ConversationEngine::regenerate_reply(const std::string& session_id,
                                                 const ReplyHandlers& handlers) {
    SessionGuard guard(session_mutex(session_id));
    Session s = load_active(session_id);
    if (s.clinician_to_move()) {
        throw Error(Errc::out_of_turn, "no clinician turn is waiting for a reply");
    }
    Turn clinician = s.turns.back();
    Turn patient = produce_reply(s, handlers);
    return {std::move(clinician), std::move(patient)};
}

Session ConversationEngine::set_stage(const std::string& session_id, int stage_index) {
    SessionGuard guard(session_mutex(session_id));
    Session s = load_active(session_id);
    const PersonaProfile& persona = personas_->at(s.persona_id);
    if (stage_index < 0 || stage_index >= static_cast<int>(persona.stages.size())) {
        throw contract_error("stage index " + std::to_string(stage_index) + " outside 0.." +
                             std::to_string(persona.stages.size() - 1));
    }
    s.stage_index = stage_index;
    store_->save_session(s);
    return s;
}

FeedbackReport ConversationEngine::finish_session(const std::string& session_id) {
    SessionGuard guard(session_mutex(session_id));
    Session s = store_->load_session(session_id);
    if (s.status == SessionStatus::finished) {
        return s.feedback.value_or(FeedbackReport{});
    }
    bool has_clinician = false;
    for (const Turn& t : s.turns) {
        has_clinician = has_clinician || t.role == Role::clinician;
    }
    if (!has_clinician) {
        throw Error(Errc::nothing_to_analyze, "session has no clinician turn to analyze");
    }
    FeedbackOptions fo = options_.feedback;
    fo.clock = options_.clock;
    FeedbackGenerator generator(*providers_.chat, fo);
    FeedbackReport report = generator.generate(s.turns, s.id);
    s.status = SessionStatus::finished;
    s.finished_at = options_.clock();
    s.feedback = report;
    store_->save_session(s);
    return report;
}

std::string ConversationEngine::patient_audio_media_type() const {
    return providers_.tts->output_media_type();
}

} // namespace pal
