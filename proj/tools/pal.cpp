#include "pal/api.hpp"
#include "pal/config.hpp"
#include "pal/conversation.hpp"
#include "pal/feedback.hpp"
#include "pal/serialization.hpp"
#include "pal/store.hpp"
#include "pal/transcript.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum Exit {
    kOk = 0,
    kFailed = 1,   // invalid personas, server could not start
    kUsage = 2,    // bad command line
    kInput = 3,    // unreadable or malformed input file / config
    kProvider = 4, // provider call failed
    kUnparseable = 5,
};

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::optional<fs::path> config_path(const std::string& flag) {
    std::string v = flag.empty() ? env_or("PAL_CONFIG", "") : flag;
    if (v.empty()) {
        return std::nullopt;
    }
    return fs::path(v);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw pal::Error(pal::Errc::io_error, "cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// --- validate ----------------------------------------------------------------

json report_json(const pal::PersonaFileReport& r) {
    json issues = json::array();
    if (r.parse_error) {
        issues.push_back({{"severity", "error"}, {"field", ""}, {"message", *r.parse_error}});
    }
    for (const auto& i : r.validation.issues) {
        issues.push_back({{"severity", i.severity == pal::Severity::error ? "error" : "warning"},
                          {"field", i.field_path},
                          {"message", i.message}});
    }
    return json{{"file", r.path.string()},
                {"persona_id", r.validation.persona_id},
                {"valid", r.ok()},
                {"issues", issues}};
}

void print_reports(std::ostream& out, const std::vector<pal::PersonaFileReport>& reports) {
    for (const auto& r : reports) {
        out << (r.ok() ? "OK    " : "FAIL  ") << r.validation.persona_id << "  ("
            << r.path.filename().string() << ")\n";
        if (r.parse_error) {
            out << "  error: " << *r.parse_error << "\n";
        }
        for (const auto& i : r.validation.issues) {
            out << "  " << (i.severity == pal::Severity::error ? "error" : "warning") << ": "
                << i.field_path << ": " << i.message << "\n";
        }
    }
}

int run_validate(const std::string& dir, const std::string& format) {
    std::vector<pal::PersonaFileReport> reports;
    try {
        reports = pal::scan_persona_library(dir);
    } catch (const pal::Error& e) {
        std::cerr << "pal validate: " << e.what() << "\n";
        return kInput;
    }
    bool all_ok = true;
    for (const auto& r : reports) {
        all_ok = all_ok && r.ok();
    }
    if (reports.empty()) {
        std::cerr << "pal validate: warning: no *" << pal::persona_file_suffix << " files in " << dir
                  << "\n";
    }
    if (format == "json") {
        json out = {{"directory", dir}, {"valid", all_ok}, {"personas", json::array()}};
        for (const auto& r : reports) {
            out["personas"].push_back(report_json(r));
        }
        std::cout << out.dump(2) << "\n";
    } else {
        print_reports(std::cout, reports);
        std::size_t failed = 0;
        for (const auto& r : reports) {
            failed += r.ok() ? 0 : 1;
        }
        std::cout << reports.size() << " persona(s), " << failed << " invalid\n";
    }
    return all_ok ? kOk : kFailed;
}

// --- feedback ----------------------------------------------------------------

void print_feedback(std::ostream& out, const pal::FeedbackReport& report) {
    out << "Feedback (" << report.items.size() << " item(s), model " << report.model_id << ")\n\n";
    for (std::size_t i = 0; i < report.items.size(); ++i) {
        const auto& item = report.items[i];
        const auto& v = report.grounding.verdicts[i];
        out << item.ordinal << ". Scenario: " << item.scenario << "\n";
        out << "   Current approach: \"" << item.current_approach << "\"";
        if (v.verdict == pal::Grounding::grounded) {
            out << "  [grounded: turn " << *v.turn_index << "]\n";
        } else {
            out << "  [" << to_string(v.verdict) << "]\n";
        }
        out << "   Suggestion: " << item.improvement_suggestion << "\n";
        out << "   NURSE: " << (item.nurse_category ? to_string(*item.nurse_category) : "none")
            << "\n\n";
    }
    for (const auto& issue : report.parse_issues) {
        out << "note: " << issue.message << "\n";
    }
}

int run_feedback(const std::string& file, const std::string& format, const std::string& config_flag,
                 const std::string& raw_out_flag, const std::string& data_dir) {
    std::vector<pal::Turn> transcript;
    pal::AppConfig config;
    try {
        transcript = pal::parse_transcript(read_text(file), file);
        config = pal::load_app_config(config_path(config_flag));
    } catch (const pal::Error& e) {
        std::cerr << "pal feedback: " << e.what() << "\n";
        return kInput;
    }

    pal::UsageCollector collector;
    std::unique_ptr<pal::FileStore> store;
    if (!data_dir.empty()) {
        store = std::make_unique<pal::FileStore>(data_dir);
    }
    pal::Meter meter(config.providers.rates,
                     store ? static_cast<pal::UsageSink&>(*store) : collector);
    pal::ProviderSet providers;
    try {
        providers = pal::make_providers(config.providers, meter);
    } catch (const pal::Error& e) {
        std::cerr << "pal feedback: " << e.what() << "\n";
        return kInput;
    }

    pal::FeedbackOptions options;
    options.max_parse_retries = config.feedback_parse_retries;
    pal::FeedbackGenerator generator(*providers.chat, options);
    try {
        pal::FeedbackReport report = generator.generate(transcript, "");
        if (format == "json") {
            std::cout << pal::feedback_json(report).dump(2) << "\n";
        } else {
            print_feedback(std::cout, report);
        }
        return kOk;
    } catch (const pal::FeedbackParseError& e) {
        fs::path raw_path = raw_out_flag.empty() ? fs::path(file + ".raw-response.txt")
                                                 : fs::path(raw_out_flag);
        std::ofstream(raw_path, std::ios::binary) << e.raw_response();
        std::cerr << "pal feedback: " << e.what() << "; raw model output saved to "
                  << raw_path.string() << "\n";
        return kUnparseable;
    } catch (const pal::ProviderError& e) {
        std::cerr << "pal feedback: provider error (" << to_string(e.failure()) << "): " << e.what()
                  << "\n";
        return kProvider;
    } catch (const pal::Error& e) {
        std::cerr << "pal feedback: " << e.what() << "\n";
        return kInput;
    }
}

// --- costs -------------------------------------------------------------------

int run_costs(const std::string& data_dir, const std::string& month, const std::string& format) {
    if (!month.empty()) {
        bool shape = month.size() == 7 && month[4] == '-';
        for (std::size_t i = 0; shape && i < month.size(); ++i) {
            shape = i == 4 || std::isdigit(static_cast<unsigned char>(month[i]));
        }
        if (!shape) {
            std::cerr << "pal costs: --month must look like YYYY-MM\n";
            return kUsage;
        }
    }
    std::vector<pal::UsageRecord> records;
    try {
        pal::FileStore store(data_dir);
        records = store.usage_records(month.empty() ? std::nullopt
                                                    : std::optional<std::string_view>(month));
    } catch (const pal::Error& e) {
        std::cerr << "pal costs: " << e.what() << "\n";
        return kInput;
    }
    pal::CostSummary summary = pal::cost_summary(records);
    const pal::CallKind kinds[] = {pal::CallKind::chat, pal::CallKind::stt, pal::CallKind::tts};
    if (format == "json") {
        json out = {{"month", month.empty() ? json(nullptr) : json(month)},
                    {"records", records.size()},
                    {"total", summary.total.to_string()},
                    {"total_ticks", summary.total.ticks()},
                    {"per_kind", json::object()}};
        for (auto k : kinds) {
            const auto& l = summary.line(k);
            out["per_kind"][std::string(to_string(k))] = {
                {"calls", l.calls},
                {"input_tokens", l.input_tokens},
                {"output_tokens", l.output_tokens},
                {"audio_ms", l.audio_ms},
                {"synthesized_chars", l.synthesized_chars},
                {"cost", l.cost.to_string()},
                {"cost_ticks", l.cost.ticks()}};
        }
        std::cout << out.dump(2) << "\n";
        return kOk;
    }
    std::cout << "Usage " << (month.empty() ? std::string("(all months)") : month) << ", "
              << records.size() << " record(s)\n";
    const auto& chat = summary.line(pal::CallKind::chat);
    const auto& stt = summary.line(pal::CallKind::stt);
    const auto& tts = summary.line(pal::CallKind::tts);
    std::cout << "  chat  " << chat.calls << " calls, " << chat.input_tokens << " in / "
              << chat.output_tokens << " out tokens, " << chat.cost.to_string() << "\n";
    std::cout << "  stt   " << stt.calls << " calls, " << stt.audio_ms << " ms audio, "
              << stt.cost.to_string() << "\n";
    std::cout << "  tts   " << tts.calls << " calls, " << tts.synthesized_chars << " chars, "
              << tts.cost.to_string() << "\n";
    std::cout << "  total " << summary.total.to_string() << "\n";
    return kOk;
}

// --- serve -------------------------------------------------------------------

int run_serve(const std::string& host, int port, const std::string& personas_dir,
              const std::string& data_dir, const std::string& config_flag) {
    pal::AppConfig config;
    try {
        config = pal::load_app_config(config_path(config_flag));
    } catch (const pal::Error& e) {
        std::cerr << "pal serve: " << e.what() << "\n";
        return kInput;
    }

    pal::PersonaLibrary personas;
    try {
        personas = pal::PersonaLibrary::load(personas_dir);
    } catch (const pal::Error& e) {
        std::cerr << "pal serve: cannot load personas from " << personas_dir << "\n";
        try {
            print_reports(std::cerr, pal::scan_persona_library(personas_dir));
        } catch (const pal::Error& inner) {
            std::cerr << "  " << inner.what() << "\n";
        }
        return kFailed;
    }

    // Signals are taken by a dedicated thread so that shutdown runs outside
    // a signal handler.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::unique_ptr<pal::FileStore> store;
    try {
        store = std::make_unique<pal::FileStore>(data_dir);
    } catch (const pal::Error& e) {
        std::cerr << "pal serve: " << e.what() << "\n";
        return kInput;
    }
    pal::Meter meter(config.providers.rates, *store);
    pal::ProviderSet providers;
    try {
        providers = pal::make_providers(config.providers, meter);
    } catch (const pal::Error& e) {
        std::cerr << "pal serve: " << e.what() << "\n";
        return kInput;
    }
    pal::EngineOptions engine_options;
    engine_options.silence_placeholder = config.silence_placeholder;
    engine_options.tts_voice = config.providers.tts_voice;
    engine_options.feedback.max_parse_retries = config.feedback_parse_retries;
    if (config.providers.temperature) {
        engine_options.feedback.params.temperature = config.providers.temperature;
    }
    pal::ConversationEngine engine(personas, *store, providers, engine_options);
    pal::ApiServer server(engine, pal::ApiOptions{config.cors_origin});

    // Port 0 picks a free port; the one chosen is reported in the log line.
    int bound = port == 0 ? server.bind_any_port(host) : (server.bind(host, port) ? port : -1);
    if (bound <= 0) {
        std::cerr << "pal serve: cannot listen on " << host << ":" << port
                  << " (address in use or not permitted)\n";
        return kFailed;
    }
    spdlog::info("serving {} persona(s) on http://{}:{} (provider: {}, data: {})", personas.size(),
                 host, bound,
                 config.providers.mode == pal::ProviderConfig::Mode::mock ? "mock" : "remote",
                 data_dir);
    spdlog::debug("config: {}", pal::redacted_json(config).dump());

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("signal {} received, draining open streams", sig);
        server.stop();
    });
    bool ok = server.listen_after_bind();
    if (!ok && server.is_running()) {
        server.stop();
    }
    // Wake the waiter if the server ended on its own.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return ok ? kOk : kFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PAL patient simulator: service and operator tools"};
    app.require_subcommand(1);
    std::string log_level = env_or("PAL_LOG_LEVEL", "info");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->capture_default_str();

    std::string config_flag;
    app.add_option("--config", config_flag, "JSON config file (env PAL_CONFIG)");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::string host = env_or("PAL_HOST", "127.0.0.1");
    int port = std::atoi(env_or("PAL_PORT", "8080").c_str());
    std::string personas_dir = env_or("PAL_PERSONAS_DIR", "personas");
    std::string data_dir = env_or("PAL_DATA_DIR", "pal-data");
    serve->add_option("--host", host, "Listen address (env PAL_HOST)")->capture_default_str();
    serve->add_option("--port", port, "Listen port, 0 for any free port (env PAL_PORT)")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve->add_option("--personas", personas_dir, "Persona library directory (env PAL_PERSONAS_DIR)")
        ->capture_default_str();
    serve->add_option("--data", data_dir, "Data directory (env PAL_DATA_DIR)")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Check a persona library");
    std::string validate_dir = personas_dir;
    std::string format = "text";
    validate->add_option("--personas", validate_dir, "Persona library directory")
        ->capture_default_str();
    validate->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

    auto* feedback = app.add_subcommand("feedback", "Generate feedback for a transcript file");
    std::string transcript_file;
    std::string raw_out;
    std::string feedback_data;
    feedback->add_option("transcript", transcript_file, "Doctor:/Patient: transcript")->required();
    feedback->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
    feedback->add_option("--raw-out", raw_out,
                         "Where to save unparseable model output (default <transcript>.raw-response.txt)");
    feedback->add_option("--data", feedback_data, "Record usage in this data directory");

    auto* costs = app.add_subcommand("costs", "Summarize recorded provider usage");
    std::string costs_data = data_dir;
    std::string month;
    costs->add_option("--data", costs_data, "Data directory (env PAL_DATA_DIR)")->capture_default_str();
    costs->add_option("--month", month, "Restrict to one month, YYYY-MM");
    costs->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    auto logger = spdlog::stderr_color_mt("pal");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (*serve) return run_serve(host, port, personas_dir, data_dir, config_flag);
    if (*validate) return run_validate(validate_dir, format);
    if (*feedback) return run_feedback(transcript_file, format, config_flag, raw_out, feedback_data);
    if (*costs) return run_costs(costs_data, month, format);
    return kUsage;
}
