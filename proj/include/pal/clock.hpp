#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace pal {

// UTC wall-clock instant at millisecond precision.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

using Clock = std::function<Timestamp()>;

Timestamp now_utc();

// "2026-10-16T11:15:00.123Z"
std::string format_iso8601(Timestamp t);

// Accepts the exact format produced by format_iso8601. Throws
// Error(parse_error) on anything else.
Timestamp parse_iso8601(std::string_view text);

// "2026-10" for the usage log partition.
std::string month_key(Timestamp t);

} // namespace pal
