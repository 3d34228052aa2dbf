#include "pal/store.hpp"

#include "pal/hashing.hpp"
#include "pal/serialization.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace pal {
namespace fs = std::filesystem;
namespace {

using json = nlohmann::json;

[[noreturn]] void io_fail(const std::string& what, const fs::path& path) {
    throw Error(Errc::io_error, what + " " + path.string() + ": " + std::strerror(errno));
}

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) {
        throw Error(Errc::io_error, "cannot read " + path.string());
    }
    return buffer.str();
}

void write_all(int fd, std::string_view content, const fs::path& path) {
    while (!content.empty()) {
        ssize_t n = ::write(fd, content.data(), content.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            io_fail("cannot write", path);
        }
        content.remove_prefix(static_cast<std::size_t>(n));
    }
}

void fsync_directory(const fs::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

bool is_hex_digest(std::string_view s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

void check_id(std::string_view id, std::string_view what) {
    if (!is_valid_record_id(id)) {
        throw contract_error("invalid " + std::string(what) + " id '" + std::string(id) + "'");
    }
}

bool in_month(const UsageRecord& r, std::optional<std::string_view> month) {
    return !month || month_key(r.timestamp) == *month;
}

} // namespace

bool is_valid_record_id(std::string_view id) {
    return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '-';
    });
}

bool listing_before(const Session& a, const Session& b) {
    if (a.created_at != b.created_at) {
        return a.created_at > b.created_at;
    }
    return a.id < b.id;
}

SessionSummary summarize(const Session& session, const PersonaLibrary& personas) {
    SessionSummary s;
    s.id = session.id;
    s.user_id = session.user_id;
    s.persona_id = session.persona_id;
    if (const PersonaProfile* p = personas.find(session.persona_id)) {
        s.persona_display_name = p->display_name;
        s.persona_age = p->age;
        s.persona_gender = p->gender;
        s.persona_image_ref = p->profile_image_ref;
    }
    s.modality = session.modality;
    s.created_at = session.created_at;
    s.status = session.status;
    s.turn_count = session.turns.size();
    s.stage_index = session.stage_index;
    return s;
}

std::vector<SessionSummary> list_sessions(const Store& store, const std::string& user_id,
                                          const PersonaLibrary& personas) {
    std::vector<SessionSummary> out;
    for (const Session& s : store.user_sessions(user_id)) {
        out.push_back(summarize(s, personas));
    }
    return out;
}

// --- FileStore -------------------------------------------------------------

FileStore::FileStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    for (const char* sub : {"users", "sessions", "blobs", "usage"}) {
        fs::create_directories(root_ / sub, ec);
        if (ec) {
            throw Error(Errc::io_error,
                        "cannot create " + (root_ / sub).string() + ": " + ec.message());
        }
    }
}

void FileStore::set_before_rename_hook(BeforeRenameHook hook) {
    before_rename_ = std::move(hook);
}

void FileStore::write_atomically(const fs::path& target, std::string_view content) const {
    fs::path tmp = target;
    tmp += ".tmp-" + random_hex_id(8);
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) {
        io_fail("cannot create", tmp);
    }
    try {
        write_all(fd, content, tmp);
        if (::fsync(fd) != 0) {
            io_fail("cannot sync", tmp);
        }
    } catch (...) {
        ::close(fd);
        ::unlink(tmp.c_str());
        throw;
    }
    ::close(fd);
    // A failure injected here models a crash: the temporary file stays
    // behind and the target keeps its previous contents.
    if (before_rename_) {
        before_rename_(target);
    }
    if (::rename(tmp.c_str(), target.c_str()) != 0) {
        int saved = errno;
        ::unlink(tmp.c_str());
        errno = saved;
        io_fail("cannot rename onto", target);
    }
    fsync_directory(target.parent_path());
}

fs::path FileStore::session_path(const std::string& id) const {
    return root_ / "sessions" / (id + ".session");
}

void FileStore::put_user(const UserRecord& user) {
    check_id(user.id, "user");
    std::lock_guard lock(users_mutex_);
    fs::path path = root_ / "users" / (user.id + ".json");
    if (fs::exists(path)) {
        throw contract_error("user " + user.id + " already exists");
    }
    write_atomically(path, json(user).dump() + "\n");
}

std::optional<UserRecord> FileStore::find_user(const std::string& id) const {
    if (!is_valid_record_id(id)) {
        return std::nullopt;
    }
    auto text = read_file(root_ / "users" / (id + ".json"));
    if (!text) {
        return std::nullopt;
    }
    try {
        return json::parse(*text).get<UserRecord>();
    } catch (const json::exception& e) {
        throw Error(Errc::parse_error, "user " + id + ": " + e.what());
    }
}

void FileStore::save_session(const Session& session) {
    check_id(session.id, "session");
    if (!find_user(session.user_id)) {
        throw Error(Errc::user_not_found, "unknown user " + session.user_id);
    }
    write_atomically(session_path(session.id), serialize_session(session));
}

Session FileStore::load_session(const std::string& id) const {
    if (!is_valid_record_id(id)) {
        throw Error(Errc::session_not_found, "no session " + id);
    }
    fs::path path = session_path(id);
    auto text = read_file(path);
    if (!text) {
        throw Error(Errc::session_not_found, "no session " + id);
    }
    return parse_session(*text, path.string());
}

std::vector<Session> FileStore::user_sessions(const std::string& user_id) const {
    if (!find_user(user_id)) {
        throw Error(Errc::user_not_found, "unknown user " + user_id);
    }
    std::vector<Session> out;
    for (const auto& entry : fs::directory_iterator(root_ / "sessions")) {
        const fs::path& path = entry.path();
        if (path.extension() != ".session") {
            continue;
        }
        std::ifstream in(path, std::ios::binary);
        std::string header;
        if (!std::getline(in, header)) {
            continue;
        }
        std::string owner;
        try {
            owner = json::parse(header).at("user_id").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::parse_error, path.string() + ":1: " + e.what());
        }
        if (owner == user_id) {
            out.push_back(load_session(path.stem().string()));
        }
    }
    std::sort(out.begin(), out.end(), listing_before);
    return out;
}

AudioRef FileStore::put_audio(const std::string& session_id, int turn_index, std::string_view bytes,
                              std::string_view media_type) {
    if (!is_valid_record_id(session_id) || !fs::exists(session_path(session_id))) {
        throw Error(Errc::session_not_found, "no session " + session_id);
    }
    if (turn_index < 0) {
        throw contract_error("negative turn index");
    }
    AudioRef ref{sha256_hex(bytes), std::string(media_type)};
    fs::path path = root_ / "blobs" / ref.digest;
    if (!fs::exists(path)) {
        write_atomically(path, bytes);
    }
    return ref;
}

std::string FileStore::get_audio(const AudioRef& ref) const {
    if (!is_hex_digest(ref.digest)) {
        throw Error(Errc::blob_not_found, "no audio " + ref.digest);
    }
    auto bytes = read_file(root_ / "blobs" / ref.digest);
    if (!bytes) {
        throw Error(Errc::blob_not_found, "no audio " + ref.digest);
    }
    return std::move(*bytes);
}

void FileStore::record(const UsageRecord& record) {
    std::string line = json(record).dump() + "\n";
    fs::path path = root_ / "usage" / (month_key(record.timestamp) + ".log");
    std::lock_guard lock(usage_mutex_);
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) {
        io_fail("cannot open", path);
    }
    try {
        write_all(fd, line, path);
        ::fsync(fd);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

std::vector<UsageRecord> FileStore::usage_records(std::optional<std::string_view> month) const {
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(root_ / "usage")) {
        const fs::path& path = entry.path();
        if (path.extension() != ".log") {
            continue;
        }
        if (month && path.stem().string() != *month) {
            continue;
        }
        logs.push_back(path);
    }
    std::sort(logs.begin(), logs.end());
    std::vector<UsageRecord> out;
    std::lock_guard lock(usage_mutex_);
    for (const auto& path : logs) {
        std::ifstream in(path, std::ios::binary);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            try {
                UsageRecord r = json::parse(line).get<UsageRecord>();
                if (in_month(r, month)) {
                    out.push_back(std::move(r));
                }
            } catch (const std::exception& e) {
                throw Error(Errc::parse_error,
                            path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    return out;
}

// --- MemoryStore -----------------------------------------------------------

void MemoryStore::put_user(const UserRecord& user) {
    check_id(user.id, "user");
    std::lock_guard lock(mutex_);
    if (!users_.emplace(user.id, user).second) {
        throw contract_error("user " + user.id + " already exists");
    }
}

std::optional<UserRecord> MemoryStore::find_user(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = users_.find(id);
    if (it == users_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void MemoryStore::save_session(const Session& session) {
    check_id(session.id, "session");
    std::lock_guard lock(mutex_);
    if (!users_.contains(session.user_id)) {
        throw Error(Errc::user_not_found, "unknown user " + session.user_id);
    }
    sessions_[session.id] = session;
}

Session MemoryStore::load_session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(Errc::session_not_found, "no session " + id);
    }
    return it->second;
}

std::vector<Session> MemoryStore::user_sessions(const std::string& user_id) const {
    std::lock_guard lock(mutex_);
    if (!users_.contains(user_id)) {
        throw Error(Errc::user_not_found, "unknown user " + user_id);
    }
    std::vector<Session> out;
    for (const auto& [id, s] : sessions_) {
        if (s.user_id == user_id) {
            out.push_back(s);
        }
    }
    std::sort(out.begin(), out.end(), listing_before);
    return out;
}

AudioRef MemoryStore::put_audio(const std::string& session_id, int turn_index,
                                std::string_view bytes, std::string_view media_type) {
    std::lock_guard lock(mutex_);
    if (!sessions_.contains(session_id)) {
        throw Error(Errc::session_not_found, "no session " + session_id);
    }
    if (turn_index < 0) {
        throw contract_error("negative turn index");
    }
    AudioRef ref{sha256_hex(bytes), std::string(media_type)};
    blobs_.emplace(ref.digest, std::string(bytes));
    return ref;
}

std::string MemoryStore::get_audio(const AudioRef& ref) const {
    std::lock_guard lock(mutex_);
    auto it = blobs_.find(ref.digest);
    if (it == blobs_.end()) {
        throw Error(Errc::blob_not_found, "no audio " + ref.digest);
    }
    return it->second;
}

void MemoryStore::record(const UsageRecord& record) {
    std::lock_guard lock(mutex_);
    usage_.push_back(record);
}

std::vector<UsageRecord> MemoryStore::usage_records(std::optional<std::string_view> month) const {
    std::lock_guard lock(mutex_);
    std::vector<UsageRecord> out;
    for (const auto& r : usage_) {
        if (in_month(r, month)) {
            out.push_back(r);
        }
    }
    return out;
}

} // namespace pal
