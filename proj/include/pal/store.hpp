#pragma once

#include "pal/persona.hpp"
#include "pal/session.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace pal {

// Listing row: the stored session plus the persona metadata shown next to it.
struct SessionSummary {
    std::string id;
    std::string user_id;
    std::string persona_id;
    // Empty when the persona is no longer in the library.
    std::string persona_display_name;
    std::optional<int> persona_age;
    std::string persona_gender;
    std::optional<std::string> persona_image_ref;
    Modality modality = Modality::text;
    Timestamp created_at{};
    SessionStatus status = SessionStatus::active;
    std::size_t turn_count = 0;
    int stage_index = 0;

    bool operator==(const SessionSummary&) const = default;
};

SessionSummary summarize(const Session& session, const PersonaLibrary& personas);

// Newest first; equal timestamps ordered by ascending id.
bool listing_before(const Session& a, const Session& b);

// Persistence for users, sessions, audio blobs and the usage log. Append or
// overwrite only; nothing is ever deleted.
class Store : public UsageSink {
public:
    // Throws contract_error for an empty or duplicate id.
    virtual void put_user(const UserRecord& user) = 0;
    virtual std::optional<UserRecord> find_user(const std::string& id) const = 0;

    // Overwrites the stored version atomically. Throws Error(user_not_found)
    // for an unknown owner and Error(io_error) when the write fails.
    virtual void save_session(const Session& session) = 0;
    // Throws Error(session_not_found).
    virtual Session load_session(const std::string& id) const = 0;
    // Throws Error(user_not_found). Ordered by listing_before.
    virtual std::vector<Session> user_sessions(const std::string& user_id) const = 0;

    // Content-addressed: identical bytes give identical refs.
    // Throws Error(session_not_found) if the session does not exist.
    virtual AudioRef put_audio(const std::string& session_id, int turn_index,
                               std::string_view bytes, std::string_view media_type) = 0;
    // Throws Error(blob_not_found).
    virtual std::string get_audio(const AudioRef& ref) const = 0;

    // Usage log, optionally restricted to one "YYYY-MM" month.
    virtual std::vector<UsageRecord> usage_records(
        std::optional<std::string_view> month = std::nullopt) const = 0;
};

// Sessions of one user as listing rows.
std::vector<SessionSummary> list_sessions(const Store& store, const std::string& user_id,
                                          const PersonaLibrary& personas);

// On-disk layout under the data directory:
//   users/<id>.json
//   sessions/<id>.session     header line, one line per turn, feedback line
//   blobs/<sha256 hex>
//   usage/<YYYY-MM>.log       one usage record per line
// Every document write goes to a temporary file that is flushed to disk and
// then renamed over the target.
class FileStore : public Store {
public:
    explicit FileStore(std::filesystem::path root);

    void put_user(const UserRecord& user) override;
    std::optional<UserRecord> find_user(const std::string& id) const override;
    void save_session(const Session& session) override;
    Session load_session(const std::string& id) const override;
    std::vector<Session> user_sessions(const std::string& user_id) const override;
    AudioRef put_audio(const std::string& session_id, int turn_index, std::string_view bytes,
                       std::string_view media_type) override;
    std::string get_audio(const AudioRef& ref) const override;
    void record(const UsageRecord& record) override;
    std::vector<UsageRecord> usage_records(
        std::optional<std::string_view> month = std::nullopt) const override;

    const std::filesystem::path& root() const { return root_; }

    // Test hook run after the temporary file is durable and before the
    // rename. An exception thrown here propagates and leaves the target
    // untouched, as a crash at that point would.
    using BeforeRenameHook = std::function<void(const std::filesystem::path& target)>;
    void set_before_rename_hook(BeforeRenameHook hook);

private:
    void write_atomically(const std::filesystem::path& target, std::string_view content) const;
    std::filesystem::path session_path(const std::string& id) const;

    std::filesystem::path root_;
    BeforeRenameHook before_rename_;
    mutable std::mutex usage_mutex_;
    mutable std::mutex users_mutex_;
};

// Non-durable store for tests.
class MemoryStore : public Store {
public:
    void put_user(const UserRecord& user) override;
    std::optional<UserRecord> find_user(const std::string& id) const override;
    void save_session(const Session& session) override;
    Session load_session(const std::string& id) const override;
    std::vector<Session> user_sessions(const std::string& user_id) const override;
    AudioRef put_audio(const std::string& session_id, int turn_index, std::string_view bytes,
                       std::string_view media_type) override;
    std::string get_audio(const AudioRef& ref) const override;
    void record(const UsageRecord& record) override;
    std::vector<UsageRecord> usage_records(
        std::optional<std::string_view> month = std::nullopt) const override;

private:
    mutable std::mutex mutex_;
    std::map<std::string, UserRecord> users_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::string> blobs_;
    std::vector<UsageRecord> usage_;
};

// Ids that may become file names: 1-128 of [A-Za-z0-9_-].
bool is_valid_record_id(std::string_view id);

} // namespace pal
