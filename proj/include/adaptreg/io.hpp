#pragma once

// Flat `[section] key = value` configuration files, numeric CSV tables and
// run manifests.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adaptreg/errors.hpp"
#include "adaptreg/format.hpp"

namespace adaptreg {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

}  // namespace detail

/// Keys are addressed as "section.key"; keys before any section header have
/// no prefix. Values remember their line so later type errors can point at it.
class Config {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static Config parse(std::istream& in) {
        Config cfg;
        std::string raw, section;
        std::size_t line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const auto hash = raw.find('#');
            const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (text.empty()) continue;
            if (text.front() == '[') {
                if (text.back() != ']') throw ConfigError("unterminated section header", line);
                section = detail::trim(text.substr(1, text.size() - 2));
                if (section.empty() || section.find_first_of(" \t=.") != std::string::npos)
                    throw ConfigError("invalid section name '" + section + "'", line);
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + text + "'", line);
            const std::string key = detail::trim(text.substr(0, eq));
            if (key.empty() || key.find_first_of(" \t.") != std::string::npos)
                throw ConfigError("invalid key '" + key + "'", line);
            const std::string full = section.empty() ? key : section + "." + key;
            if (cfg.entries_.count(full)) throw ConfigError("duplicate key '" + full + "'", line);
            cfg.entries_[full] = {detail::trim(text.substr(eq + 1)), line};
            cfg.order_.push_back(full);
        }
        return cfg;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in);
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    /// Rejects keys outside `allowed`, citing the offending line.
    void restrict_to(const std::set<std::string>& allowed) const {
        for (const auto& k : order_)
            if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "'", entries_.at(k).line);
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    std::string require_string(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'");
        return it->second.value;
    }

    std::optional<double> find_double(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return to_double(it->second);
    }

    double get_double(const std::string& key, double fallback) const { return find_double(key).value_or(fallback); }

    double require_double(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing required key '" + key + "'");
        return *find_double(key);
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_uint(it->second, it->second.value);
    }

    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        std::vector<double> out;
        for (const auto& tok : detail::split(it->second.value, ',')) out.push_back(to_double({tok, it->second.line}));
        return out;
    }

    std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        std::vector<std::size_t> out;
        for (const auto& tok : detail::split(it->second.value, ','))
            out.push_back(std::size_t(to_uint(it->second, tok)));
        return out;
    }

    std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        auto out = detail::split(it->second.value, ',');
        for (const auto& s : out)
            if (s.empty()) throw ConfigError("empty list item in '" + key + "'", it->second.line);
        return out;
    }

    std::size_t line_of(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    void set(const std::string& key, const std::string& value) {
        if (!entries_.count(key)) order_.push_back(key);
        entries_[key].value = value;
    }

    /// Canonical text form, sections in first-seen order; parses back to the same entries.
    std::string echo() const {
        std::map<std::string, std::vector<std::string>> by_section;
        std::vector<std::string> sections;
        for (const auto& k : order_) {
            const auto dot = k.find('.');
            const std::string s = dot == std::string::npos ? "" : k.substr(0, dot);
            if (!by_section.count(s)) sections.push_back(s);
            by_section[s].push_back(k);
        }
        std::stable_partition(sections.begin(), sections.end(), [](const std::string& s) { return s.empty(); });
        std::ostringstream os;
        for (const auto& s : sections) {
            if (!s.empty()) os << '[' << s << "]\n";
            for (const auto& k : by_section[s])
                os << (s.empty() ? k : k.substr(s.size() + 1)) << " = " << entries_.at(k).value << '\n';
        }
        return os.str();
    }

private:
    static double to_double(const Entry& e) {
        double v = 0;
        if (!parse_number(e.value, v)) throw ConfigError("expected a number, got '" + e.value + "'", e.line);
        return v;
    }

    static std::uint64_t to_uint(const Entry& e, const std::string& tok) {
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("expected a non-negative integer, got '" + tok + "'", e.line);
        try {
            return std::stoull(tok);
        } catch (const std::exception&) {
            throw ConfigError("integer out of range: '" + tok + "'", e.line);
        }
    }

    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

/// A numeric table with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("missing column '" + name + "'");
        return std::size_t(it - header.begin());
    }
    bool has_column(const std::string& name) const {
        return std::find(header.begin(), header.end(), name) != header.end();
    }
    std::vector<double> values(std::size_t col) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[col]);
        return out;
    }
};

/// Comma-separated numbers under a header line; '#' lines are skipped.
/// Errors cite the 1-based line number of the file.
inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string raw;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, raw)) {
        ++line;
        const std::string text = detail::trim(raw);
        if (text.empty() || text.front() == '#') continue;
        auto cells = detail::split(text, ',');
        if (!have_header) {
            for (const auto& c : cells)
                if (c.empty()) throw DataError("empty column name in header", line);
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw DataError("expected " + std::to_string(t.header.size()) + " fields, found " +
                                std::to_string(cells.size()),
                            line);
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            double v = 0;
            if (!parse_number(c, v)) throw DataError("not a number: '" + c + "'", line);
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw DataError("no header row");
    if (t.rows.empty()) throw DataError("no data rows");
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    return read_csv(in);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
    std::string command;
    std::string config_echo;
    std::uint64_t seed = 0;
    std::string version = kVersion;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    void write(std::ostream& os) const {
        os << "command: " << command << '\n'
           << "version: " << version << '\n'
           << "seed: " << seed << '\n'
           << "started: " << started << '\n'
           << "finished: " << finished << '\n'
           << "outputs:\n";
        for (const auto& o : outputs) os << "  " << o << '\n';
        os << "config:\n" << config_echo;
    }
};

}  // namespace adaptreg
