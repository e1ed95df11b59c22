#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "causim/numcore/tensor.hpp"

namespace causim::data {

using num::ContractViolation;
using num::require;
using Timestamp = std::chrono::sys_seconds;

enum class Source { Observed, Simulated };

inline const char* to_string(Source s) { return s == Source::Observed ? "observed" : "simulated"; }

/// Error raised for malformed input files.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Timestamped table with float-or-missing cells, stored column-major.
struct RawTable {
    std::vector<std::string> names;
    std::vector<Timestamp> times;
    std::vector<std::vector<double>> columns;
    Source source = Source::Observed;

    [[nodiscard]] std::size_t rows() const { return times.size(); }
    [[nodiscard]] std::size_t cols() const { return names.size(); }

    void validate() const {
        require(columns.size() == names.size(), "RawTable: column count mismatch");
        std::unordered_set<std::string> seen;
        for (const auto& n : names) require(seen.insert(n).second, "RawTable: duplicate column " + n);
        for (const auto& c : columns) require(c.size() == times.size(), "RawTable: ragged column");
        for (std::size_t i = 1; i < times.size(); ++i)
            require(times[i - 1] <= times[i], "RawTable: timestamps must be non-decreasing");
    }

    [[nodiscard]] std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ContractViolation("RawTable: no column named " + name);
    }
};

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

/// Accepts YYYY-MM-DD with an optional [T ]HH:MM[:SS] suffix.
inline Timestamp parse_timestamp(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
    if (n < 3 || (n > 3 && sep != 'T' && sep != ' ') || (n == 4) || (n == 5))
        throw InputError("bad ISO-8601 date: '" + text + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw InputError("invalid calendar date: '" + text + "'");
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) throw InputError("invalid time: '" + text + "'");
    return std::chrono::sys_days(ymd) + std::chrono::hours(h) + std::chrono::minutes(mi) + std::chrono::seconds(s);
}

inline std::string format_date(std::chrono::sys_days day) {
    const std::chrono::year_month_day ymd(day);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

inline std::string format_timestamp(Timestamp t) {
    const auto day = std::chrono::floor<std::chrono::days>(t);
    std::string out = format_date(day);
    const auto secs = (t - day).count();
    if (secs != 0) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "T%02lld:%02lld:%02lld", static_cast<long long>(secs / 3600),
                      static_cast<long long>(secs / 60 % 60), static_cast<long long>(secs % 60));
        out += buf;
    }
    return out;
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_cell(const std::string& text, const std::string& where) {
    if (text.empty() || text == "NA" || text == "NaN" || text == "nan") return kMissing;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
        throw InputError("non-numeric cell '" + text + "' at " + where);
    return v;
}

inline RawTable read_table_stream(std::istream& in, Source source, const std::string& label = "<stream>") {
    RawTable t;
    t.source = source;
    std::string line;
    if (!std::getline(in, line)) throw InputError(label + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2) throw InputError(label + ": need a date column and at least one variable");
    t.names.assign(header.begin() + 1, header.end());
    t.columns.resize(t.names.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw InputError(label + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        t.times.push_back(parse_timestamp(cells[0]));
        for (std::size_t j = 0; j < t.names.size(); ++j)
            t.columns[j].push_back(parse_cell(cells[j + 1], label + ":" + std::to_string(lineno)));
    }
    try {
        t.validate();
    } catch (const ContractViolation& e) {
        throw InputError(label + ": " + e.what());
    }
    return t;
}

inline RawTable read_table(const std::string& path, Source source) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read_table_stream(in, source, path);
}

inline void write_table_stream(std::ostream& out, const RawTable& t) {
    out << "date";
    for (const auto& n : t.names) out << ',' << n;
    out << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        out << format_timestamp(t.times[r]);
        for (const auto& c : t.columns) {
            out << ',';
            if (!is_missing(c[r])) out << format_number(c[r]);
        }
        out << '\n';
    }
}

inline void write_table(const std::string& path, const RawTable& t) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    write_table_stream(out, t);
}

}  // namespace causim::data
