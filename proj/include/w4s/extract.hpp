#pragma once

#include "w4s/error.hpp"
#include "w4s/util.hpp"

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace w4s {

struct FencedBlock {
    std::size_t fence_offset = 0;  // byte offset of the opening fence line
    std::string language;
    std::string content;
    bool terminated = true;
};

// Line-oriented Markdown fence scanner. An unterminated final fence runs to
// the end of the text, which is how truncated model replies usually look.
inline std::vector<FencedBlock> fenced_blocks(std::string_view text) {
    std::vector<FencedBlock> blocks;
    std::optional<FencedBlock> open;
    std::string body;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        const bool last = eol == std::string_view::npos;
        if (last) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::size_t indent = 0;
        while (indent < line.size() && (line[indent] == ' ' || line[indent] == '\t')) ++indent;
        const bool is_fence = line.substr(indent, 3) == "```";
        if (!open) {
            if (is_fence) {
                open = FencedBlock{pos, trim(line.substr(indent + 3)), {}, true};
                body.clear();
            }
        } else if (is_fence && trim(line.substr(indent)).find_first_not_of('`') == std::string::npos) {
            if (!body.empty() && body.back() == '\n') body.pop_back();
            open->content = std::move(body);
            blocks.push_back(std::move(*open));
            open.reset();
            body.clear();
        } else {
            body.append(line);
            body.push_back('\n');
        }
        if (last) break;
        pos = eol + 1;
    }
    if (open) {
        while (!body.empty() && body.back() == '\n') body.pop_back();
        open->content = std::move(body);
        open->terminated = false;
        blocks.push_back(std::move(*open));
    }
    return blocks;
}

// True when `code` defines `name` at any indentation: "def name(" or "def name (".
inline bool defines_function(std::string_view code, std::string_view name) {
    const std::string needle = "def " + std::string(name);
    std::size_t pos = 0;
    while ((pos = code.find(needle, pos)) != std::string_view::npos) {
        std::size_t p = pos + needle.size();
        const bool word_start = pos == 0 || !(std::isalnum(static_cast<unsigned char>(code[pos - 1])) ||
                                              code[pos - 1] == '_');
        while (p < code.size() && (code[p] == ' ' || code[p] == '\t')) ++p;
        if (word_start && p < code.size() && code[p] == '(') return true;
        pos += needle.size();
    }
    return false;
}

// The last fenced block that defines `entry_point`.
inline std::string extract_code_block(std::string_view response, std::string_view entry_point) {
    if (entry_point.empty()) throw Error(ErrorKind::InvalidValue, "entry_point is empty");
    const auto blocks = fenced_blocks(response);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        if (defines_function(it->content, entry_point)) return it->content;
    }
    throw Error(ErrorKind::NoMatchingBlock,
                "no fenced code block defines `" + std::string(entry_point) + "`");
}

namespace detail {

inline std::optional<std::string> last_boxed(std::string_view text) {
    constexpr std::string_view tag = "\\boxed{";
    const std::size_t start = text.rfind(tag);
    if (start == std::string_view::npos) return std::nullopt;
    int depth = 1;
    const std::size_t body = start + tag.size();
    for (std::size_t i = body; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        else if (text[i] == '}' && --depth == 0) return std::string(text.substr(body, i - body));
    }
    return std::nullopt;
}

inline std::string strip_answer_punctuation(std::string s) {
    s = trim(s);
    while (!s.empty() && (s.front() == ':' || s.front() == '*' || s.front() == ' ')) s.erase(0, 1);
    while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' || s.back() == '!' ||
                          s.back() == '*' || s.back() == ' ' || s.back() == '\n'))
        s.pop_back();
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(s.substr(1, s.size() - 2));
    return trim(s);
}

inline std::optional<std::string> last_number(std::string_view text) {
    std::optional<std::string> found;
    std::size_t i = 0;
    while (i < text.size()) {
        const bool sign = text[i] == '-' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
        if (std::isdigit(static_cast<unsigned char>(text[i])) || sign) {
            const std::size_t start = i;
            if (sign) ++i;
            while (i < text.size()) {
                const char c = text[i];
                const bool digit_follows = i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
                if (std::isdigit(static_cast<unsigned char>(c))) ++i;
                else if ((c == '.' || c == ',') && digit_follows) ++i;
                else break;
            }
            found = std::string(text.substr(start, i - start));
        } else {
            ++i;
        }
    }
    return found;
}

}  // namespace detail

// Precedence: last \boxed{...}; text after the last "answer is"; last
// numeric literal; the whole trimmed response.
inline std::string extract_answer_str(std::string_view response) {
    if (auto boxed = detail::last_boxed(response)) return trim(*boxed);
    const std::string lower = ascii_lower(response);
    constexpr std::string_view marker = "answer is";
    if (const auto at = lower.rfind(marker); at != std::string::npos) {
        std::string_view rest = response.substr(at + marker.size());
        rest = rest.substr(0, rest.find('\n'));
        std::string tail = detail::strip_answer_punctuation(std::string(rest));
        if (!tail.empty()) return tail;
    }
    if (auto num = detail::last_number(response)) return *num;
    return trim(response);
}

}  // namespace w4s
