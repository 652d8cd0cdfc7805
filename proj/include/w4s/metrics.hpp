#pragma once

#include "w4s/extract.hpp"
#include "w4s/util.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace w4s {

namespace detail {

inline bool is_strip_char(char c) {
    return c == '"' || c == '\'' || c == '.' || c == ',' || c == '`' || c == ' ' || c == '\t' ||
           c == '\n' || c == '\r';
}

inline std::string strip_surrounding(std::string s) {
    for (;;) {
        const std::size_t before = s.size();
        while (!s.empty() && is_strip_char(s.front())) {
            if (s.front() == '.' && s.size() > 1 && std::isdigit(static_cast<unsigned char>(s[1]))) break;
            s.erase(0, 1);
        }
        while (!s.empty() && is_strip_char(s.back())) s.pop_back();
        if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = s.substr(1, s.size() - 2);
        if (s.size() == before) return s;
    }
}

// "1,234.50" -> 1234.5; nullopt unless the whole string is a number.
inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string digits;
    std::size_t group = 0;
    bool seen_comma = false;
    bool seen_dot = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == ',') {
            if (seen_dot || i == 0 || (seen_comma && group != 3)) return std::nullopt;
            seen_comma = true;
            group = 0;
            continue;
        }
        if (c == '.') seen_dot = true;
        if (std::isdigit(static_cast<unsigned char>(c)) && !seen_dot) ++group;
        digits.push_back(c);
    }
    if (seen_comma && group != 3) return std::nullopt;
    const char first = digits.front();
    if (!(std::isdigit(static_cast<unsigned char>(first)) || first == '-' || first == '+' || first == '.'))
        return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(digits.c_str(), &end);
    if (end != digits.c_str() + digits.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string canonical_number(double v) {
    if (v == 0.0) return "0";
    if (std::trunc(v) == v && std::fabs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
        return buf;
    }
    return shortest_double(v);
}

inline bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace detail

// Canonical form used for exact-match accuracy.
inline std::string normalize_answer(std::string_view text) {
    std::string s = trim(text);
    if (contains(s, "\\boxed{")) {
        if (auto boxed = detail::last_boxed(s)) s = trim(*boxed);
    }
    s = ascii_lower(s);
    s = detail::strip_surrounding(std::move(s));
    const bool math = contains(s, "\\") || contains(s, "^") || contains(s, "{");
    for (std::string_view cmd : {"\\left", "\\right", "\\!"}) s = replace_all(std::move(s), cmd, "");

    if (math) {
        std::string packed;
        for (char c : s) {
            if (!std::isspace(static_cast<unsigned char>(c))) packed.push_back(c);
        }
        s = std::move(packed);
    } else {
        std::string joined;
        for (const auto& w : split_whitespace(s)) {
            if (detail::is_article(w)) continue;
            if (!joined.empty()) joined.push_back(' ');
            joined += w;
        }
        s = detail::strip_surrounding(std::move(joined));
    }
    if (auto num = detail::parse_number(s)) return detail::canonical_number(*num);
    return s;
}

// First standalone option letter (a-j) in an already normalized string.
inline std::optional<char> first_choice_letter(std::string_view normalized) {
    std::size_t i = 0;
    while (i < normalized.size()) {
        if (!std::isalnum(static_cast<unsigned char>(normalized[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < normalized.size() && std::isalnum(static_cast<unsigned char>(normalized[j]))) ++j;
        if (j - i == 1 && normalized[i] >= 'a' && normalized[i] <= 'j') return normalized[i];
        i = j;
    }
    return std::nullopt;
}

inline bool is_choice_letter(std::string_view normalized) {
    return normalized.size() == 1 && normalized[0] >= 'a' && normalized[0] <= 'j';
}

// 1 iff the normalized forms agree. A single-letter gold (A-J) switches to
// multiple-choice comparison against the first option letter in the prediction.
inline double accuracy_score(std::string_view prediction, std::string_view gold) {
    const std::string g = normalize_answer(gold);
    const std::string p = normalize_answer(prediction);
    if (is_choice_letter(g)) {
        const auto letter = first_choice_letter(p);
        return letter && *letter == g[0] ? 1.0 : 0.0;
    }
    return p == g ? 1.0 : 0.0;
}

// Tokens for F1: casefolded, punctuation split out (decimal points kept),
// numbers canonicalized. Articles are kept.
inline std::vector<std::string> f1_tokens(std::string_view text) {
    std::string lowered = ascii_lower(text);
    std::string spaced;
    for (std::size_t i = 0; i < lowered.size(); ++i) {
        const char c = lowered[i];
        const bool decimal_point = (c == '.' || c == ',') && i > 0 && i + 1 < lowered.size() &&
                                   std::isdigit(static_cast<unsigned char>(lowered[i - 1])) &&
                                   std::isdigit(static_cast<unsigned char>(lowered[i + 1]));
        if (std::ispunct(static_cast<unsigned char>(c)) && !decimal_point && c != '-') {
            spaced.push_back(' ');
        } else {
            spaced.push_back(c);
        }
    }
    std::vector<std::string> tokens;
    for (auto& w : split_whitespace(spaced)) {
        if (auto num = detail::parse_number(w)) tokens.push_back(detail::canonical_number(*num));
        else if (w != "-") tokens.push_back(std::move(w));
    }
    return tokens;
}

inline double token_f1(std::string_view prediction, std::string_view gold) {
    const auto p = f1_tokens(prediction);
    const auto g = f1_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : g) ++counts[t];
    int common = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(p.size());
    const double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace w4s
