#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crossprop/errors.hpp"

namespace crossprop {

// Flat `key = value` text: one pair per line, `#` starts a comment, blank
// lines ignored. Lists are comma-separated. Duplicate keys are rejected.
using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto notspace = [](char c) { return c != ' ' && c != '\t' && c != '\r'; };
    while (!s.empty() && !notspace(s.front())) s.remove_prefix(1);
    while (!s.empty() && !notspace(s.back())) s.remove_suffix(1);
    return s;
}

}  // namespace detail

inline KeyValues parse_config_text(std::istream& in) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s(line);
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + std::string(s) + "'");
        const std::string key(detail::trim(s.substr(0, eq)));
        const std::string value(detail::trim(s.substr(eq + 1)));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, value).second)
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
    }
    return kv;
}

inline KeyValues load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    return parse_config_text(in);
}

inline std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const auto piece = detail::trim(
            value.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double to_double(std::string_view value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const std::string s(value);
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + std::string(value) +
                          "'");
    }
}

inline std::uint64_t to_u64(std::string_view value, const std::string& key) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" +
                          std::string(value) + "'");
    return v;
}

inline long to_long(std::string_view value, const std::string& key) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError("key '" + key + "': expected an integer, got '" + std::string(value) +
                          "'");
    return v;
}

inline bool to_bool(std::string_view value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + std::string(value) +
                      "'");
}

}  // namespace crossprop
