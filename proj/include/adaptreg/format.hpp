#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <system_error>

namespace adaptreg {

/// Marker written wherever a statistic is not available (e.g. a standard
/// error from a single replication).
inline constexpr const char* kNotAvailable = "NA";

/// Shortest round-trip decimal form, independent of the global locale.
inline std::string format_number(double x) {
    if (std::isnan(x)) return kNotAvailable;
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) return "NA";
    return std::string(buf, end);
}

/// Parses a full token as a double; false on any trailing garbage.
inline bool parse_number(const std::string& token, double& out) {
    if (token == "inf" || token == "+inf") {
        out = INFINITY;
        return true;
    }
    if (token.empty()) return false;
    const char* first = token.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), out);
    return ec == std::errc() && ptr == token.data() + token.size();
}

}  // namespace adaptreg
