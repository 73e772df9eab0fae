#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmap::text {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Trims and collapses every whitespace run into a single space.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending = true;
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

/// Splits on '\n', dropping a trailing '\r' from each line.
inline std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find('\n', start);
        if (end == std::string_view::npos) end = s.size();
        auto line = s.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        auto start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

inline std::optional<int> parse_positive_int(std::string_view s) {
    s = trim(s);
    if (s.empty() || s.size() > 9) return std::nullopt;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    if (v <= 0) return std::nullopt;
    return v;
}

/// Converts a roman numeral (any case) to its value. Rejects non-canonical
/// forms such as "iiii" or "vx".
inline std::optional<int> roman_to_int(std::string_view s) {
    auto value = [](char c) -> int {
        switch (std::tolower(static_cast<unsigned char>(c))) {
            case 'i': return 1;
            case 'v': return 5;
            case 'x': return 10;
            case 'l': return 50;
            case 'c': return 100;
            case 'd': return 500;
            case 'm': return 1000;
            default: return 0;
        }
    };
    if (s.empty() || s.size() > 15) return std::nullopt;
    int total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        int v = value(s[i]);
        if (v == 0) return std::nullopt;
        int next = i + 1 < s.size() ? value(s[i + 1]) : 0;
        if (i + 1 < s.size() && next == 0) return std::nullopt;
        total += v < next ? -v : v;
    }
    if (total <= 0) return std::nullopt;
    // Round-trip through the canonical form to reject malformed numerals.
    static constexpr std::pair<int, const char*> table[] = {
        {1000, "m"}, {900, "cm"}, {500, "d"}, {400, "cd"}, {100, "c"}, {90, "xc"}, {50, "l"},
        {40, "xl"},  {10, "x"},   {9, "ix"},  {5, "v"},    {4, "iv"},  {1, "i"}};
    std::string canonical;
    int rest = total;
    for (auto [n, sym] : table) {
        while (rest >= n) {
            canonical += sym;
            rest -= n;
        }
    }
    if (canonical != to_lower(s)) return std::nullopt;
    return total;
}

/// Lowercases, trims, and strips trailing punctuation, then maps to yes/no.
inline std::optional<bool> parse_yes_no(std::string_view raw) {
    auto s = to_lower(trim(raw));
    while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) || is_space(s.back())))
        s.pop_back();
    auto t = std::string(trim(s));
    if (t == "yes") return true;
    if (t == "no") return false;
    return std::nullopt;
}

inline constexpr std::string_view kNotAnswerable = "not answerable";

inline bool is_not_answerable(std::string_view s) {
    return to_lower(trim(s)) == kNotAnswerable;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace dmap::text
