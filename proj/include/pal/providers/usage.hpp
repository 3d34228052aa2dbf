#pragma once

#include "pal/clock.hpp"

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pal {

enum class CallKind { chat, stt, tts };

std::string_view to_string(CallKind kind);
std::optional<CallKind> call_kind_from_string(std::string_view s);

// Exact monetary amount. One currency unit is 3e12 ticks, which makes every
// per-token, per-millisecond-of-audio and per-character price an integer
// number of ticks when rates have at most six decimal places.
class Cost {
public:
    static constexpr std::int64_t ticks_per_unit = 3'000'000'000'000;
    static constexpr std::int64_t ticks_per_cent = ticks_per_unit / 100;

    constexpr Cost() = default;
    static constexpr Cost from_ticks(std::int64_t t) { return Cost(t); }

    constexpr std::int64_t ticks() const { return ticks_; }

    // Half-up rounding to the smallest currency unit.
    std::int64_t cents() const;
    // "12.34"
    std::string to_string() const;

    Cost& operator+=(Cost other);
    friend Cost operator+(Cost a, Cost b) { return a += b; }
    constexpr bool operator==(const Cost&) const = default;

private:
    constexpr explicit Cost(std::int64_t t) : ticks_(t) {}
    std::int64_t ticks_ = 0;
};

// Unit prices in millionths of a currency unit.
struct Rates {
    std::int64_t input_per_million_tokens = 0;
    std::int64_t output_per_million_tokens = 0;
    std::int64_t per_audio_minute = 0;
    std::int64_t per_thousand_chars = 0;

    bool operator==(const Rates&) const = default;
};

// "2.50" -> 2'500'000. Throws Error(parse_error) for negative values, more
// than six decimals or anything that is not a plain decimal.
std::int64_t parse_rate(std::string_view decimal);
std::string format_rate(std::int64_t micros);

struct UsageRecord {
    CallKind kind = CallKind::chat;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t audio_ms = 0;
    std::int64_t synthesized_chars = 0;
    // Token counts came from the chars/4 fallback, not the provider.
    bool estimated = false;
    // The call ended in an error; quantities cover what was consumed.
    bool failed = false;
    std::string model;
    Cost cost;
    Timestamp timestamp{};
    std::string session_id;

    bool operator==(const UsageRecord&) const = default;
};

// Dot product of the record's quantities with the rates.
Cost price(const UsageRecord& record, const Rates& rates);

// Number of Unicode scalar values in UTF-8 text (invalid bytes count as one).
std::int64_t count_characters(std::string_view utf8);

// Fallback when a provider does not report usage: ceil(characters / 4).
std::int64_t estimate_tokens(std::string_view text);

struct CostSummary {
    struct Line {
        std::int64_t calls = 0;
        std::int64_t input_tokens = 0;
        std::int64_t output_tokens = 0;
        std::int64_t audio_ms = 0;
        std::int64_t synthesized_chars = 0;
        Cost cost;
    };
    std::array<Line, 3> per_kind{};  // indexed by CallKind
    Cost total;

    const Line& line(CallKind kind) const { return per_kind[static_cast<std::size_t>(kind)]; }
};

// Sums are exact; rounding happens only when a Cost is displayed.
// `month` ("YYYY-MM") restricts the records considered.
CostSummary cost_summary(std::span<const UsageRecord> records,
                         std::optional<std::string_view> month = std::nullopt);

class UsageSink {
public:
    virtual ~UsageSink() = default;
    virtual void record(const UsageRecord& record) = 0;
};

// Thread-safe in-memory sink.
class UsageCollector : public UsageSink {
public:
    void record(const UsageRecord& record) override;
    std::vector<UsageRecord> records() const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<UsageRecord> records_;
};

// Prices, timestamps and forwards records. Every provider adapter hands each
// call's record to the meter exactly once, whether the call succeeded or not.
class Meter {
public:
    Meter(Rates rates, UsageSink& sink, Clock clock = now_utc)
        : rates_(rates), sink_(&sink), clock_(std::move(clock)) {}

    UsageRecord record(UsageRecord record) const;

    const Rates& rates() const { return rates_; }

private:
    Rates rates_;
    UsageSink* sink_;
    Clock clock_;
};

} // namespace pal
