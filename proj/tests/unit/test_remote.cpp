#include "pal/error.hpp"
#include "pal/providers/remote.hpp"
#include "pal/providers/sse.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace pal;
using json = nlohmann::json;

namespace {

// OpenAI-shaped fake on an ephemeral loopback port.
class FakeApi {
public:
    FakeApi() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeApi() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }
    int port() const { return port_; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string chat_event(const std::string& content) {
    json j = {{"choices", json::array({{{"index", 0}, {"delta", {{"content", content}}}}})}};
    return format_sse_event("", j.dump());
}

struct Rig {
    UsageCollector sink;
    Meter meter{Rates{1'000'000, 2'000'000, 0, 0}, sink};
};

std::vector<ChatMessage> messages() {
    return {{ChatMessage::Role::system, "You are a patient."}, {ChatMessage::Role::user, "Hello."}};
}

ProviderError chat_error(RemoteChatProvider& chat) {
    try {
        chat.chat_stream(messages(), {}, [](std::string_view) {});
    } catch (const ProviderError& e) {
        return e;
    }
    FAIL("expected a provider error");
    return ProviderError(ProviderFailure::transport, "unreachable");
}

} // namespace

TEST_SUITE("remote") {

TEST_CASE("endpoint URLs") {
    auto u = parse_endpoint_url("https://api.example.com/v1/chat/completions");
    CHECK(u.scheme_host_port == "https://api.example.com");
    CHECK(u.path == "/v1/chat/completions");
    auto v = parse_endpoint_url("http://127.0.0.1:8080");
    CHECK(v.scheme_host_port == "http://127.0.0.1:8080");
    CHECK(v.path == "/");
    CHECK(parse_endpoint_url("http://[::1]:9/x").scheme_host_port == "http://[::1]:9");
    for (auto bad : {"", "ftp://x/y", "http://", "localhost:80/x", "http://h:port/"}) {
        CHECK_THROWS_AS(parse_endpoint_url(bad), Error);
    }
}

TEST_CASE("retry policy") {
    CHECK(is_retryable(ProviderFailure::timeout));
    CHECK(is_retryable(ProviderFailure::transport));
    CHECK(is_retryable(ProviderFailure::http_status, 429));
    CHECK(is_retryable(ProviderFailure::http_status, 503));
    CHECK_FALSE(is_retryable(ProviderFailure::http_status, 400));
    CHECK_FALSE(is_retryable(ProviderFailure::http_status, 401));
    CHECK_FALSE(is_retryable(ProviderFailure::malformed_response));
    CHECK_FALSE(is_retryable(ProviderFailure::not_configured));
}

TEST_CASE("chat streams deltas and uses reported usage") {
    FakeApi api;
    json seen;
    std::string auth;
    api.server().Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        std::string body = chat_event("*sighs* ") + chat_event("I see.") +
                           format_sse_event("", R"({"choices":[],"usage":{"prompt_tokens":42,"completion_tokens":7}})") +
                           format_sse_event("", "[DONE]");
        res.set_content(body, "text/event-stream");
    });
    Rig rig;
    RemoteChatProvider chat({api.url("/v1/chat"), "gpt-test", "sk-test", 5}, rig.meter, 0.4);
    std::vector<std::string> chunks;
    ChatParams params;
    params.context.session_id = "s1";
    auto usage = chat.chat_stream(messages(), params, [&](std::string_view c) { chunks.emplace_back(c); });
    CHECK(chunks == std::vector<std::string>{"*sighs* ", "I see."});
    CHECK(usage.input_tokens == 42);
    CHECK(usage.output_tokens == 7);
    CHECK_FALSE(usage.estimated);
    CHECK_FALSE(usage.failed);
    CHECK(usage.session_id == "s1");
    CHECK(usage.cost.ticks() == (42 * 3 + 7 * 6) * 1'000'000);
    CHECK(rig.sink.size() == 1);
    CHECK(auth == "Bearer sk-test");
    CHECK(seen["model"] == "gpt-test");
    CHECK(seen["stream"] == true);
    CHECK(seen["temperature"] == 0.4);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["content"] == "Hello.");
}

TEST_CASE("chat without reported usage falls back to the estimate") {
    FakeApi api;
    api.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        res.set_chunked_content_provider("text/event-stream", [](std::size_t, httplib::DataSink& sink) {
            for (auto piece : {chat_event("abcdefgh"), std::string("data: [DO"), std::string("NE]\n\n")}) {
                sink.write(piece.data(), piece.size());
            }
            sink.done();
            return true;
        });
    });
    Rig rig;
    RemoteChatProvider chat({api.url("/c"), "m", "", 5}, rig.meter);
    auto done = chat.chat_complete(messages(), {});
    CHECK(done.text == "abcdefgh");
    CHECK(done.usage.estimated);
    CHECK(done.usage.output_tokens == 2);
    CHECK(done.usage.input_tokens == estimate_tokens("You are a patient.Hello."));
}

TEST_CASE("chat HTTP errors carry status, message and retry hint") {
    FakeApi api;
    int status = 429;
    api.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content(R"({"error":{"message":"slow down"}})", "application/json");
    });
    Rig rig;
    RemoteChatProvider chat({api.url("/c"), "m", "", 5}, rig.meter);
    auto e = chat_error(chat);
    CHECK(e.failure() == ProviderFailure::http_status);
    CHECK(e.http_status() == 429);
    CHECK(e.retryable());
    CHECK(std::string(e.what()).find("slow down") != std::string::npos);
    status = 401;
    CHECK_FALSE(chat_error(chat).retryable());
    REQUIRE(rig.sink.size() == 2);
    CHECK(rig.sink.records()[0].failed);
}

TEST_CASE("chat stream problems are malformed responses") {
    FakeApi api;
    api.server().Post("/nodone", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(chat_event("partial"), "text/event-stream");
    });
    api.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("data: {not json\n\n", "text/event-stream");
    });
    Rig rig;
    std::string got;
    RemoteChatProvider nodone({api.url("/nodone"), "m", "", 5}, rig.meter);
    try {
        nodone.chat_stream(messages(), {}, [&](std::string_view c) { got += c; });
        FAIL("expected failure");
    } catch (const ProviderError& e) {
        CHECK(e.failure() == ProviderFailure::malformed_response);
    }
    CHECK(got == "partial");
    RemoteChatProvider garbage({api.url("/garbage"), "m", "", 5}, rig.meter);
    CHECK(chat_error(garbage).failure() == ProviderFailure::malformed_response);
    CHECK(rig.sink.size() == 2);
}

TEST_CASE("chat timeout and refused connection") {
    FakeApi api;
    api.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1500));
        res.set_content("data: [DONE]\n\n", "text/event-stream");
    });
    Rig rig;
    RemoteChatProvider slow({api.url("/slow"), "m", "", 0.3}, rig.meter);
    auto e = chat_error(slow);
    CHECK(e.failure() == ProviderFailure::timeout);
    CHECK(e.retryable());

    // A port that was just bound and released, so nothing listens on it.
    int closed_port = 0;
    {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        socklen_t len = sizeof addr;
        REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), len) == 0);
        REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
        closed_port = ntohs(addr.sin_port);
        ::close(fd);
    }
    RemoteChatProvider refused({"http://127.0.0.1:" + std::to_string(closed_port) + "/c", "m", "", 2},
                               rig.meter);
    CHECK(chat_error(refused).failure() == ProviderFailure::transport);
    CHECK(rig.sink.size() == 2);
}

TEST_CASE("sink exceptions abort the stream and propagate") {
    FakeApi api;
    api.server().Post("/c", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(chat_event("a") + chat_event("b") + "data: [DONE]\n\n", "text/event-stream");
    });
    Rig rig;
    RemoteChatProvider chat({api.url("/c"), "m", "", 5}, rig.meter);
    CHECK_THROWS_AS(chat.chat_stream(messages(), {}, [](std::string_view) { throw std::logic_error("x"); }),
                    std::logic_error);
    REQUIRE(rig.sink.size() == 1);
    CHECK(rig.sink.records()[0].failed);
}

TEST_CASE("transcription posts multipart and validates first") {
    FakeApi api;
    int hits = 0;
    std::string model;
    std::string format;
    std::string file;
    std::string file_type;
    api.server().Post("/stt", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        model = req.get_file_value("model").content;
        format = req.get_file_value("response_format").content;
        file = req.get_file_value("file").content;
        file_type = req.get_file_value("file").content_type;
        res.set_content(R"({"text":"I have your results."})", "application/json");
    });
    Rig rig;
    RemoteSpeechToText stt({api.url("/stt"), "whisper-test", "", 5}, rig.meter);
    std::string wav = pal::test::wav_of_duration(2500);
    auto t = stt.transcribe(wav, "audio/wav", {"s2"});
    CHECK(t.text == "I have your results.");
    CHECK(t.usage.audio_ms == 2500);
    CHECK(model == "whisper-test");
    CHECK(format == "json");
    CHECK(file == wav);
    CHECK(file_type == "audio/wav");
    CHECK_THROWS_AS(stt.transcribe("RIFF", "audio/wav", {}), Error);
    CHECK_THROWS_AS(stt.transcribe(wav, "audio/mpeg", {}), Error);
    CHECK(hits == 1);
    CHECK(rig.sink.size() == 1);
}

TEST_CASE("transcription errors") {
    FakeApi api;
    api.server().Post("/bad", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"words":[]})", "application/json");
    });
    api.server().Post("/down", [](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
    });
    Rig rig;
    std::string wav = pal::test::wav_of_duration(100);
    for (auto [path, failure] : {std::pair{"/bad", ProviderFailure::malformed_response},
                                 std::pair{"/down", ProviderFailure::http_status}}) {
        RemoteSpeechToText stt({api.url(path), "w", "", 5}, rig.meter);
        try {
            stt.transcribe(wav, "audio/wav", {});
            FAIL("expected failure");
        } catch (const ProviderError& e) {
            CHECK(e.failure() == failure);
        }
    }
    CHECK(rig.sink.size() == 2);
}

TEST_CASE("speech streams the body") {
    FakeApi api;
    json seen;
    std::string audio(50'000, '\0');
    for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = static_cast<char>(i * 7);
    api.server().Post("/tts", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(audio, "audio/wav");
    });
    api.server().Post("/empty", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("", "audio/wav");
    });
    Rig rig;
    RemoteTextToSpeech tts({api.url("/tts"), "tts-test", "", 5}, rig.meter, "alloy");
    std::string got;
    auto usage = tts.synthesize_stream("Hello \xC3\xA9.", "", [&](std::string_view c) { got += c; }, {});
    CHECK(got == audio);
    CHECK(usage.synthesized_chars == 8);
    CHECK(seen["voice"] == "alloy");
    CHECK(seen["input"] == "Hello \xC3\xA9.");
    CHECK(seen["response_format"] == "wav");
    tts.synthesize_stream("x", "nova", [](std::string_view) {}, {});
    CHECK(seen["voice"] == "nova");

    RemoteTextToSpeech empty({api.url("/empty"), "t", "", 5}, rig.meter, "alloy");
    try {
        empty.synthesize_stream("x", "", [](std::string_view) {}, {});
        FAIL("expected failure");
    } catch (const ProviderError& e) {
        CHECK(e.failure() == ProviderFailure::malformed_response);
    }
    CHECK(rig.sink.size() == 3);
    CHECK(rig.sink.records()[2].failed);
}

TEST_CASE("speech output formats") {
    Rig rig;
    RemoteEndpoint e{"http://127.0.0.1:9/tts", "t", "", 1};
    CHECK(RemoteTextToSpeech(e, rig.meter, "v", "wav").output_media_type() == "audio/wav");
    CHECK(RemoteTextToSpeech(e, rig.meter, "v", "mp3").output_media_type() == "audio/mpeg");
    CHECK(RemoteTextToSpeech(e, rig.meter, "v", "opus").output_media_type() == "audio/ogg");
    CHECK(RemoteTextToSpeech(e, rig.meter, "v", "pcm").output_media_type() == "audio/pcm");
    CHECK_THROWS_AS(RemoteTextToSpeech(e, rig.meter, "v", "flac"), Error);
}

TEST_CASE("the test network guard blocks outbound calls") {
    Rig rig;
    pal::test::network_guard::reset_counters();
    pal::test::network_guard::enable();
    RemoteChatProvider by_address({"http://192.0.2.1/v1/chat/completions", "m", "", 2}, rig.meter);
    RemoteChatProvider by_name({"http://api.example.invalid/v1/chat/completions", "m", "", 2}, rig.meter);
    auto started = std::chrono::steady_clock::now();
    CHECK(chat_error(by_address).failure() == ProviderFailure::transport);
    CHECK(chat_error(by_name).failure() == ProviderFailure::transport);
    CHECK(std::chrono::steady_clock::now() - started < std::chrono::seconds(1));
    CHECK(pal::test::network_guard::blocked_attempts() >= 2);
    pal::test::network_guard::disable();
}

}
