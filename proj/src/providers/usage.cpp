#include "pal/providers/usage.hpp"

#include "pal/error.hpp"

#include <cstdio>

namespace pal {
namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw Error(Errc::internal, "cost overflow");
    }
    return out;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) {
        throw Error(Errc::internal, "cost overflow");
    }
    return out;
}

} // namespace

std::string_view to_string(CallKind kind) {
    switch (kind) {
    case CallKind::chat: return "chat";
    case CallKind::stt: return "stt";
    case CallKind::tts: return "tts";
    }
    return "chat";
}

std::optional<CallKind> call_kind_from_string(std::string_view s) {
    if (s == "chat") return CallKind::chat;
    if (s == "stt") return CallKind::stt;
    if (s == "tts") return CallKind::tts;
    return std::nullopt;
}

std::int64_t Cost::cents() const {
    if (ticks_ >= 0) {
        return (ticks_ + ticks_per_cent / 2) / ticks_per_cent;
    }
    return -((-ticks_ + ticks_per_cent / 2) / ticks_per_cent);
}

std::string Cost::to_string() const {
    std::int64_t c = cents();
    const char* sign = c < 0 ? "-" : "";
    if (c < 0) {
        c = -c;
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%02lld", sign, static_cast<long long>(c / 100),
                  static_cast<long long>(c % 100));
    return buf;
}

Cost& Cost::operator+=(Cost other) {
    ticks_ = checked_add(ticks_, other.ticks_);
    return *this;
}

std::int64_t parse_rate(std::string_view s) {
    auto bad = [&]() { return Error(Errc::parse_error, "invalid rate '" + std::string(s) + "'"); };
    if (s.empty()) {
        throw bad();
    }
    std::int64_t whole = 0;
    std::size_t i = 0;
    bool any_digit = false;
    for (; i < s.size() && s[i] != '.'; ++i) {
        if (s[i] < '0' || s[i] > '9') {
            throw bad();
        }
        whole = checked_add(checked_mul(whole, 10), s[i] - '0');
        any_digit = true;
    }
    std::int64_t frac = 0;
    int places = 0;
    if (i < s.size()) {
        ++i;
        for (; i < s.size(); ++i) {
            if (s[i] < '0' || s[i] > '9' || places == 6) {
                throw bad();
            }
            frac = frac * 10 + (s[i] - '0');
            ++places;
            any_digit = true;
        }
    }
    if (!any_digit) {
        throw bad();
    }
    for (; places < 6; ++places) {
        frac *= 10;
    }
    return checked_add(checked_mul(whole, 1'000'000), frac);
}

std::string format_rate(std::int64_t micros) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%lld.%06lld", static_cast<long long>(micros / 1'000'000),
                  static_cast<long long>(micros % 1'000'000));
    std::string out = buf;
    while (out.back() == '0' && out[out.size() - 2] != '.') {
        out.pop_back();
    }
    return out;
}

Cost price(const UsageRecord& r, const Rates& rates) {
    // Ticks per unit quantity, from rates in micro-units:
    //   token:         rate / 1e6 / 1e6 currency   = 3 * rate ticks
    //   audio ms:      rate / 1e6 / 60000 currency = 50 * rate ticks
    //   character:     rate / 1e6 / 1000 currency  = 3000 * rate ticks
    std::int64_t t = 0;
    t = checked_add(t, checked_mul(checked_mul(rates.input_per_million_tokens, 3), r.input_tokens));
    t = checked_add(t, checked_mul(checked_mul(rates.output_per_million_tokens, 3), r.output_tokens));
    t = checked_add(t, checked_mul(checked_mul(rates.per_audio_minute, 50), r.audio_ms));
    t = checked_add(t, checked_mul(checked_mul(rates.per_thousand_chars, 3000), r.synthesized_chars));
    return Cost::from_ticks(t);
}

std::int64_t count_characters(std::string_view utf8) {
    std::int64_t n = 0;
    for (char c : utf8) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
            ++n;
        }
    }
    return n;
}

std::int64_t estimate_tokens(std::string_view text) {
    return (count_characters(text) + 3) / 4;
}

CostSummary cost_summary(std::span<const UsageRecord> records,
                         std::optional<std::string_view> month) {
    CostSummary out;
    for (const auto& r : records) {
        if (month && month_key(r.timestamp) != *month) {
            continue;
        }
        auto& line = out.per_kind[static_cast<std::size_t>(r.kind)];
        ++line.calls;
        line.input_tokens += r.input_tokens;
        line.output_tokens += r.output_tokens;
        line.audio_ms += r.audio_ms;
        line.synthesized_chars += r.synthesized_chars;
        line.cost += r.cost;
        out.total += r.cost;
    }
    return out;
}

void UsageCollector::record(const UsageRecord& record) {
    std::lock_guard lock(mutex_);
    records_.push_back(record);
}

std::vector<UsageRecord> UsageCollector::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t UsageCollector::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

UsageRecord Meter::record(UsageRecord r) const {
    r.cost = price(r, rates_);
    r.timestamp = clock_();
    sink_->record(r);
    return r;
}

} // namespace pal
