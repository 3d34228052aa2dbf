#include "pal/clock.hpp"

#include "pal/error.hpp"

#include <cstdio>
#include <ctime>

namespace pal {

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now());
}

std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    auto secs = floor<seconds>(t);
    auto ms = (t - secs).count();
    std::time_t tt = system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                  tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

Timestamp parse_iso8601(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SS.mmmZ
    if (text.size() != 24 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
        text[13] != ':' || text[16] != ':' || text[19] != '.' || text[23] != 'Z') {
        throw Error(Errc::parse_error, "bad timestamp: " + std::string(text));
    }
    auto num = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            char c = text[i];
            if (c < '0' || c > '9') {
                throw Error(Errc::parse_error, "bad timestamp: " + std::string(text));
            }
            v = v * 10 + (c - '0');
        }
        return v;
    };
    std::tm tm{};
    tm.tm_year = num(0, 4) - 1900;
    tm.tm_mon = num(5, 2) - 1;
    tm.tm_mday = num(8, 2);
    tm.tm_hour = num(11, 2);
    tm.tm_min = num(14, 2);
    tm.tm_sec = num(17, 2);
    int ms = num(20, 3);
    std::chrono::year_month_day ymd{std::chrono::year(tm.tm_year + 1900),
                                    std::chrono::month(static_cast<unsigned>(tm.tm_mon + 1)),
                                    std::chrono::day(static_cast<unsigned>(tm.tm_mday))};
    if (!ymd.ok() || tm.tm_hour > 23 || tm.tm_min > 59 || tm.tm_sec > 59) {
        throw Error(Errc::parse_error, "bad timestamp: " + std::string(text));
    }
    std::time_t tt = timegm(&tm);
    return std::chrono::time_point_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::from_time_t(tt)) +
           std::chrono::milliseconds(ms);
}

std::string month_key(Timestamp t) {
    return format_iso8601(t).substr(0, 7);
}

} // namespace pal
