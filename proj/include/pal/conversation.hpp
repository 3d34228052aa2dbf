#pragma once

#include "pal/feedback.hpp"
#include "pal/hashing.hpp"
#include "pal/persona.hpp"
#include "pal/providers/provider.hpp"
#include "pal/session.hpp"
#include "pal/store.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace pal {

// Callbacks for one clinician submission. All are optional and run on the
// calling thread, in order: clinician turn (once persisted), then the
// reply as text/cue events (text sessions) or audio bytes (voice sessions).
struct ReplyHandlers {
    std::function<void(const Turn& clinician)> on_clinician_turn;
    std::function<void(std::string_view text)> on_text;
    std::function<void(const EmotionalCue& cue)> on_cue;
    std::function<void(std::string_view bytes)> on_audio;
};

struct TurnSummary {
    Turn clinician;
    Turn patient;
};

struct EngineOptions {
    // Spoken when a voice reply has no speech left once cues are removed.
    std::string silence_placeholder = "\xE2\x80\xA6";
    std::string tts_voice;
    FeedbackOptions feedback;
    Clock clock = now_utc;
    std::function<std::string()> new_id = [] { return random_hex_id(); };
};

// Session state machine. Operations on one session are serialized: a call
// that finds another operation running on the same session fails with
// Error(reply_in_progress) instead of waiting.
class ConversationEngine {
public:
    ConversationEngine(const PersonaLibrary& personas, Store& store, ProviderSet providers,
                       EngineOptions options = {});

    UserRecord create_user();

    // Throws Error(user_not_found), Error(persona_not_found).
    Session start_session(const std::string& user_id, const std::string& persona_id,
                          Modality modality);

    Session get_session(const std::string& session_id) const;
    std::vector<SessionSummary> list_sessions(const std::string& user_id) const;

    // Errors: session_not_found, session_finished, out_of_turn,
    // modality_mismatch, reply_in_progress, contract_violation (blank text),
    // ProviderError. After a provider failure the clinician turn stays and
    // no patient turn is written; regenerate_reply retries the reply.
    TurnSummary submit_text(const std::string& session_id, std::string_view text,
                            const ReplyHandlers& handlers = {});

    // Voice sessions. The transcription becomes the clinician turn and the
    // recording is kept as its audio. Additional errors:
    // unsupported_media_type, invalid_audio (including no speech recognized).
    TurnSummary submit_audio(const std::string& session_id, const std::string& audio,
                             std::string_view media_type, const ReplyHandlers& handlers = {});

    // Produces the missing patient reply after a failed one.
    // Throws Error(out_of_turn) unless the last turn is the clinician's.
    TurnSummary regenerate_reply(const std::string& session_id, const ReplyHandlers& handlers = {});

    // Throws contract_error for an index outside the persona's stages.
    Session set_stage(const std::string& session_id, int stage_index);

    // Generates, attaches and persists feedback; later calls return the
    // stored report without contacting the provider. Throws
    // Error(nothing_to_analyze) without a clinician turn; provider and parse
    // failures leave the session active.
    FeedbackReport finish_session(const std::string& session_id);

    std::string patient_audio_media_type() const;

    const PersonaLibrary& personas() const { return *personas_; }
    const Store& store() const { return *store_; }

private:
    std::shared_ptr<std::mutex> session_mutex(const std::string& session_id);

    Session load_active(const std::string& session_id) const;
    Turn produce_reply(Session& session, const ReplyHandlers& handlers);

    const PersonaLibrary* personas_;
    Store* store_;
    ProviderSet providers_;
    EngineOptions options_;

    std::mutex locks_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

// Patient context for the next reply: system prompt for the current stage,
// then every turn's raw text in order.
std::vector<ChatMessage> assemble_context(const PersonaProfile& persona, const Session& session);

} // namespace pal
