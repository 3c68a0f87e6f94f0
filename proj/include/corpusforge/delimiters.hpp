#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace corpusforge {

struct UnbalancedDelimiters {
    std::size_t offset = 0; // byte offset of the opener without a closer
    std::string message;
};

struct DelimiterResult {
    std::string text;
    std::optional<UnbalancedDelimiters> issue;
};

namespace detail {

// Next occurrence of `needle` at or after `from` that is not inside a
// backslash escape pair. Needles that start with a backslash match at the
// start of a pair.
inline std::size_t find_unescaped(std::string_view s, std::size_t from, std::string_view needle) {
    std::size_t i = from;
    while (i < s.size()) {
        if (s.compare(i, needle.size(), needle) == 0) return i;
        i += s[i] == '\\' ? 2 : 1;
    }
    return std::string_view::npos;
}

} // namespace detail

// Escapes every `$` that is not already part of an escape pair.
inline std::string escape_bare_dollars(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\') {
            out.append(s.substr(i, 2));
            ++i;
        } else if (s[i] == '$') {
            out += "\\$";
        } else {
            out += s[i];
        }
    }
    return out;
}

/// Rewrites `\( … \)` to `$ … $` and `\[ … \]` to `$$ … $$`.
///
/// Rules, applied left to right:
///  - a backslash and the character after it are an escape pair (`\$`, `\\`);
///  - existing `$…$` / `$$…$$` spans are kept as they are;
///  - a `$` with no closing partner becomes `\$`;
///  - a bare `$` inside a math span is malformed and becomes `\$`, so every
///    span reads back as the same span;
///  - an empty `\(\)` is copied verbatim;
///  - a `\(` or `\[` with no closer returns the input untouched plus an issue.
///
/// The result is a fixed point: applying the function again changes nothing.
inline DelimiterResult normalize_equation_delimiters_checked(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 8);
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        const char c = s[i];
        if (c == '\\') {
            if (i + 1 < n && (s[i + 1] == '(' || s[i + 1] == '[')) {
                const bool display = s[i + 1] == '[';
                const std::size_t j = detail::find_unescaped(s, i + 2, display ? "\\]" : "\\)");
                if (j == std::string_view::npos) {
                    return {std::string(s),
                            UnbalancedDelimiters{i, display ? "unbalanced \\[ without \\]" : "unbalanced \\( without \\)"}};
                }
                const std::string_view body = s.substr(i + 2, j - i - 2);
                if (!display && body.empty()) {
                    out.append(s.substr(i, j + 2 - i));
                } else {
                    const std::string_view delim = display ? "$$" : "$";
                    out.append(delim).append(escape_bare_dollars(body)).append(delim);
                }
                i = j + 2;
                continue;
            }
            out.append(s.substr(i, 2));
            i += 2;
            continue;
        }
        if (c == '$') {
            const bool display = i + 1 < n && s[i + 1] == '$';
            const std::size_t j = display ? detail::find_unescaped(s, i + 2, "$$")
                                          : detail::find_unescaped(s, i + 1, "$");
            if (j != std::string_view::npos) {
                const std::size_t open = display ? 2 : 1;
                out.append(s.substr(i, open)).append(escape_bare_dollars(s.substr(i + open, j - i - open)));
                out.append(s.substr(j, open));
                i = j + open;
            } else {
                out.append("\\$");
                ++i;
            }
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return {std::move(out), std::nullopt};
}

inline std::string normalize_equation_delimiters(std::string_view s) {
    return normalize_equation_delimiters_checked(s).text;
}

// Number of `$` characters not preceded by an escaping backslash.
inline std::size_t count_unescaped_dollars(std::string_view s) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\') {
            ++i;
        } else if (s[i] == '$') {
            ++count;
        }
    }
    return count;
}

} // namespace corpusforge
