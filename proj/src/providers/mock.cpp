#include "pal/providers/mock.hpp"

#include "pal/hashing.hpp"
#include "pal/providers/audio.hpp"

#include <fstream>
#include <sstream>
#include <thread>

namespace pal {
namespace {

std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char e = s[++i];
            switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '\\': out.push_back('\\'); break;
            default: out.push_back('\\'); out.push_back(e); break;
            }
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::optional<ProviderFailure> failure_from_string(std::string_view s) {
    if (s == "timeout") return ProviderFailure::timeout;
    if (s == "transport") return ProviderFailure::transport;
    if (s == "http_status") return ProviderFailure::http_status;
    if (s == "malformed_response") return ProviderFailure::malformed_response;
    if (s == "not_configured") return ProviderFailure::not_configured;
    return std::nullopt;
}

std::string_view next_field(std::string_view& line) {
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string_view::npos) {
        line = {};
        return {};
    }
    line.remove_prefix(start);
    std::size_t end = line.find_first_of(" \t");
    std::string_view field = line.substr(0, end);
    line.remove_prefix(end == std::string_view::npos ? line.size() : end);
    return field;
}

} // namespace

std::string MockScript::hash_hex(std::string_view content) {
    return sha256_hex(content);
}

MockScript MockScript::parse(std::string_view text, const std::filesystem::path& base_dir,
                             std::string_view origin) {
    MockScript script;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        auto fail = [&](const std::string& why) {
            return Error(Errc::parse_error,
                         std::string(origin) + ":" + std::to_string(line_no) + ": " + why);
        };
        std::string_view rest = line;
        std::string_view kind = next_field(rest);
        if (kind.empty() || kind.front() == '#') {
            continue;
        }
        std::string_view key = next_field(rest);
        if (key.empty()) {
            throw fail("missing key");
        }
        std::size_t body = rest.find_first_not_of(" \t");
        rest = body == std::string_view::npos ? std::string_view{} : rest.substr(body);

        MockResponse response;
        if (rest.starts_with("@file:")) {
            std::filesystem::path file = base_dir / std::string(rest.substr(6));
            std::ifstream in(file, std::ios::binary);
            if (!in) {
                throw fail("cannot read " + file.string());
            }
            std::ostringstream buf;
            buf << in.rdbuf();
            response.text = buf.str();
        } else if (rest.starts_with("!fail")) {
            rest.remove_prefix(5);
            MockFailure f;
            auto kind_name = next_field(rest);
            auto parsed = failure_from_string(kind_name);
            if (!parsed) {
                throw fail("unknown failure kind '" + std::string(kind_name) + "'");
            }
            f.kind = *parsed;
            for (auto opt = next_field(rest); !opt.empty(); opt = next_field(rest)) {
                try {
                    if (opt.starts_with("status=")) {
                        f.http_status = std::stoi(std::string(opt.substr(7)));
                    } else if (opt.starts_with("after=")) {
                        f.after_chunks = std::stoul(std::string(opt.substr(6)));
                    } else {
                        throw fail("unknown failure option '" + std::string(opt) + "'");
                    }
                } catch (const std::logic_error&) {
                    throw fail("bad number in '" + std::string(opt) + "'");
                }
            }
            response.failure = f;
        } else {
            response.text = unescape(rest);
        }

        if (kind == "chat") {
            script.add_chat(std::string(key), std::move(response));
        } else if (kind == "stt") {
            script.add_stt(std::string(key), std::move(response));
        } else {
            throw fail("unknown kind '" + std::string(kind) + "'");
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::io_error, "cannot read mock script " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.parent_path(), path.string());
}

void MockScript::add_chat(std::string key, MockResponse response) {
    chat_[std::move(key)].push_back(std::move(response));
}

void MockScript::add_stt(std::string key, MockResponse response) {
    stt_[std::move(key)].push_back(std::move(response));
}

const std::vector<MockResponse>* MockScript::chat_entry(const std::string& key) const {
    auto it = chat_.find(key);
    return it == chat_.end() ? nullptr : &it->second;
}

const std::vector<MockResponse>* MockScript::stt_entry(const std::string& key) const {
    auto it = stt_.find(key);
    return it == stt_.end() ? nullptr : &it->second;
}

std::string mock_tts_audio(std::string_view text) {
    const Sha256Digest seed = sha256(text);
    const std::size_t pcm_len = kMockTtsBytesPerChar * static_cast<std::size_t>(count_characters(text));
    std::string pcm;
    pcm.reserve(pcm_len + 32);
    for (std::uint64_t block = 0; pcm.size() < pcm_len; ++block) {
        std::string input(seed.begin(), seed.end());
        for (int shift = 56; shift >= 0; shift -= 8) {
            input.push_back(static_cast<char>((block >> shift) & 0xff));
        }
        auto digest = sha256(input);
        pcm.append(digest.begin(), digest.end());
    }
    pcm.resize(pcm_len);
    return make_wav(pcm, 16000, 1, 16);
}

std::vector<std::string> mock_chunks(std::string_view reply) {
    std::vector<std::string> chunks;
    std::size_t i = 0;
    auto is_ws = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; };
    while (i < reply.size()) {
        std::size_t start = i;
        while (i < reply.size() && is_ws(reply[i])) {
            ++i;
        }
        while (i < reply.size() && !is_ws(reply[i])) {
            ++i;
        }
        while (i < reply.size() && is_ws(reply[i])) {
            ++i;
        }
        chunks.emplace_back(reply.substr(start, i - start));
    }
    return chunks;
}

MockProvider::MockProvider(MockScript script, const Meter& meter, Options options)
    : script_(std::move(script)), meter_(&meter), options_(std::move(options)) {}

MockProvider::MockProvider(MockScript script, const Meter& meter)
    : MockProvider(std::move(script), meter, Options{}) {}

ProviderError MockProvider::to_error(const MockFailure& f) {
    std::string message = "mock " + std::string(to_string(f.kind));
    if (f.http_status != 0) {
        message += " (status " + std::to_string(f.http_status) + ")";
    }
    return ProviderError(f.kind, message, f.http_status);
}

void MockProvider::inject_chat_failure(MockFailure failure) {
    std::lock_guard lock(mutex_);
    injected_.push_back(failure);
}

MockResponse MockProvider::next_chat(const std::vector<ChatMessage>& messages) {
    std::lock_guard lock(mutex_);
    ++calls_.chat;
    chat_requests_.push_back(messages);
    std::optional<MockFailure> injected;
    if (!injected_.empty()) {
        injected = injected_.front();
        injected_.pop_front();
    }
    std::vector<std::string> keys;
    keys.push_back(MockScript::hash_key(messages.back().content));
    if (messages.front().role == ChatMessage::Role::system) {
        keys.push_back(MockScript::system_key(messages.front().content));
    }
    keys.emplace_back("*");
    MockResponse r;
    r.failure = MockFailure{ProviderFailure::not_configured, 0, 0};
    for (const auto& key : keys) {
        if (const auto* entry = script_.chat_entry(key)) {
            std::size_t& n = cursor_["chat " + key];
            r = (*entry)[std::min(n, entry->size() - 1)];
            ++n;
            break;
        }
    }
    if (injected) {
        r.failure = injected;
    }
    return r;
}

UsageRecord MockProvider::chat_stream(const std::vector<ChatMessage>& messages,
                                      const ChatParams& params, const ChunkSink& on_chunk) {
    if (messages.empty()) {
        throw contract_error("chat request has no messages");
    }
    MockResponse response = next_chat(messages);

    UsageRecord usage;
    usage.kind = CallKind::chat;
    usage.model = options_.model;
    usage.session_id = params.context.session_id;
    usage.estimated = true;
    std::string prompt;
    for (const auto& m : messages) {
        prompt += m.content;
    }
    usage.input_tokens = estimate_tokens(prompt);

    auto chunks = mock_chunks(response.text);
    std::size_t limit = response.failure ? std::min(response.failure->after_chunks, chunks.size())
                                         : chunks.size();
    std::string delivered;
    try {
        for (std::size_t i = 0; i < limit; ++i) {
            if (options_.chunk_delay.count() > 0) {
                std::this_thread::sleep_for(options_.chunk_delay);
            }
            delivered += chunks[i];
            on_chunk(chunks[i]);
        }
    } catch (...) {
        usage.failed = true;
        usage.output_tokens = estimate_tokens(delivered);
        meter_->record(usage);
        throw;
    }
    usage.output_tokens = estimate_tokens(delivered);
    if (response.failure) {
        usage.failed = true;
        meter_->record(usage);
        throw to_error(*response.failure);
    }
    return meter_->record(usage);
}

SpeechToText::Transcription MockProvider::transcribe(const std::string& audio,
                                                     std::string_view media_type,
                                                     const CallContext& context) {
    std::int64_t duration = check_audio_input(audio, media_type);
    MockResponse response;
    {
        std::lock_guard lock(mutex_);
        ++calls_.stt;
        bool found = false;
        for (const std::string& key : {MockScript::hash_key(audio), std::string("*")}) {
            if (const auto* entry = script_.stt_entry(key)) {
                std::size_t& n = cursor_["stt " + key];
                response = (*entry)[std::min(n, entry->size() - 1)];
                ++n;
                found = true;
                break;
            }
        }
        if (!found) {
            response.failure = MockFailure{ProviderFailure::not_configured, 0, 0};
        }
    }
    UsageRecord usage;
    usage.kind = CallKind::stt;
    usage.model = "mock-stt";
    usage.audio_ms = duration;
    usage.session_id = context.session_id;
    if (response.failure) {
        usage.failed = true;
        meter_->record(usage);
        throw to_error(*response.failure);
    }
    return {response.text, meter_->record(usage)};
}

UsageRecord MockProvider::synthesize_stream(std::string_view text, std::string_view voice_id,
                                            const ChunkSink& on_chunk, const CallContext& context) {
    if (text.empty()) {
        throw contract_error("nothing to synthesize");
    }
    {
        std::lock_guard lock(mutex_);
        ++calls_.tts;
        tts_inputs_.emplace_back(text);
    }
    UsageRecord usage;
    usage.kind = CallKind::tts;
    usage.model = voice_id.empty() ? "mock-tts" : "mock-tts/" + std::string(voice_id);
    usage.synthesized_chars = count_characters(text);
    usage.session_id = context.session_id;

    std::string audio = mock_tts_audio(text);
    try {
        for (std::size_t off = 0; off < audio.size(); off += kMockTtsChunkBytes) {
            on_chunk(std::string_view(audio).substr(off, kMockTtsChunkBytes));
        }
    } catch (...) {
        usage.failed = true;
        meter_->record(usage);
        throw;
    }
    return meter_->record(usage);
}

MockProvider::Calls MockProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<std::vector<ChatMessage>> MockProvider::chat_requests() const {
    std::lock_guard lock(mutex_);
    return chat_requests_;
}

std::vector<std::string> MockProvider::tts_inputs() const {
    std::lock_guard lock(mutex_);
    return tts_inputs_;
}

} // namespace pal
