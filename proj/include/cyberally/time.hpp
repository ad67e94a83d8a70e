#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace cyberally {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Duration = std::chrono::milliseconds;

// Accepts `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|+HHMM]`; a space may replace
// the `T`. Returns nullopt for anything else, including impossible dates.
std::optional<Timestamp> parse_iso8601(std::string_view text);

// Always renders UTC with millisecond precision: 2024-05-01T10:00:00.000Z
std::string format_iso8601(Timestamp t);

Timestamp now_utc();

inline Duration minutes(long long m) { return std::chrono::minutes(m); }
inline Duration seconds(long long s) { return std::chrono::seconds(s); }

} // namespace cyberally
