#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "corpusforge/delimiters.hpp"
#include "corpusforge/document.hpp"
#include "corpusforge/tables.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

namespace latex_detail {

inline constexpr std::size_t npos = std::string_view::npos;
// Stand-in for stripped comment bytes; keeps offsets stable and keeps a
// comment-only line from reading as a paragraph break.
inline constexpr char kCommentFill = '\x01';

inline std::string strip_comments(std::string_view src) {
    std::string out(src);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == '\\') {
            ++i;
        } else if (out[i] == '%') {
            while (i < out.size() && out[i] != '\n') out[i++] = kCommentFill;
        }
    }
    return out;
}

inline bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

// Matching '}' for the '{' at `open`, or npos before `limit`.
inline std::size_t group_end(std::string_view s, std::size_t open, std::size_t limit) {
    int depth = 0;
    for (std::size_t i = open; i < limit; ++i) {
        if (s[i] == '\\') {
            ++i;
        } else if (s[i] == '{') {
            ++depth;
        } else if (s[i] == '}') {
            if (--depth == 0) return i;
        }
    }
    return npos;
}

inline std::size_t bracket_end(std::string_view s, std::size_t open, std::size_t limit) {
    int depth = 0;
    for (std::size_t i = open; i < limit; ++i) {
        if (s[i] == '\\') {
            ++i;
        } else if (s[i] == '{') {
            ++depth;
        } else if (s[i] == '}') {
            --depth;
        } else if (s[i] == ']' && depth == 0) {
            return i;
        }
    }
    return npos;
}

// Position of the \end{name} closing the environment whose body starts at
// `from`, honouring nested environments of the same name.
inline std::size_t env_end(std::string_view s, std::string_view name, std::size_t from, std::size_t limit) {
    const std::string open = "\\begin{" + std::string(name) + "}";
    const std::string close = "\\end{" + std::string(name) + "}";
    int depth = 1;
    std::size_t i = from;
    while (i < limit) {
        const std::size_t b = s.find(open, i);
        const std::size_t e = s.find(close, i);
        if (e == npos || e >= limit) return npos;
        if (b != npos && b < e) {
            ++depth;
            i = b + open.size();
            continue;
        }
        if (--depth == 0) return e;
        i = e + close.size();
    }
    return npos;
}

inline std::string remove_macro_with_arg(std::string s, std::string_view macro) {
    std::size_t pos = 0;
    while ((pos = s.find(macro, pos)) != std::string::npos) {
        const std::size_t after = pos + macro.size();
        if (after < s.size() && is_letter(s[after])) {
            pos = after;
            continue;
        }
        std::size_t end = after;
        if (end < s.size() && s[end] == '{') {
            const std::size_t close = group_end(s, end, s.size());
            if (close == npos) break;
            end = close + 1;
        }
        s.erase(pos, end - pos);
    }
    return s;
}

inline std::string clean_math(std::string_view body) {
    std::string s(body);
    std::replace(s.begin(), s.end(), kCommentFill, ' ');
    s = remove_macro_with_arg(std::move(s), "\\label");
    s = remove_macro_with_arg(std::move(s), "\\nonumber");
    s = remove_macro_with_arg(std::move(s), "\\notag");
    // Trailing spaces and blank lines go; line structure of aligned math stays.
    std::vector<std::string> lines;
    for (auto line : text::split_lines(s)) {
        if (!text::trim(line).empty()) lines.emplace_back(text::rtrim(line));
    }
    return std::string(text::trim(text::join(lines, "\n")));
}

inline const std::map<std::string_view, int>& section_levels() {
    static const std::map<std::string_view, int> m{
        {"chapter", 1}, {"section", 1}, {"subsection", 2}, {"subsubsection", 3}};
    return m;
}

// Math environments and the aligned-style wrapper used inside $$ … $$.
inline const std::map<std::string_view, std::string_view>& math_envs() {
    static const std::map<std::string_view, std::string_view> m{
        {"equation", ""},        {"equation*", ""},        {"displaymath", ""}, {"math", ""},
        {"align", "aligned"},    {"align*", "aligned"},    {"flalign", "aligned"},
        {"flalign*", "aligned"}, {"eqnarray", "aligned"},  {"eqnarray*", "aligned"},
        {"gather", "gathered"},  {"gather*", "gathered"},  {"multline", ""},     {"multline*", ""},
    };
    return m;
}

// Macros dropped together with their arguments.
inline const std::set<std::string_view>& dropped_macros() {
    static const std::set<std::string_view> m{
        "label",      "index",        "vspace",     "vspace*",    "hspace",        "hspace*",
        "includegraphics", "bibliographystyle", "bibliography", "maketitle", "tableofcontents",
        "author",     "date",         "thanks",     "affiliation", "address",      "email",
        "keywords",   "usepackage",   "documentclass", "newcommand", "renewcommand", "providecommand",
        "DeclareMathOperator", "setlength", "addtolength", "setcounter", "addtocounter", "pagestyle",
        "thispagestyle", "centering", "raggedright", "raggedleft", "noindent", "newpage", "clearpage",
        "nocite",     "linewidth",    "textwidth",  "columnwidth", "small",       "footnotesize",
        "large",      "Large",        "normalsize", "bf",          "it",           "rm",
        "sf",         "tt",           "em",         "par",         "medskip",      "bigskip",
        "smallskip",  "hline",        "toprule",    "midrule",     "bottomrule",   "cline",
        "cmidrule",   "protect",      "appendix",   "acknowledgments", "newline", "linebreak",
    };
    return m;
}

inline const std::set<std::string_view>& skipped_envs() {
    static const std::set<std::string_view> m{"thebibliography", "comment", "tikzpicture", "picture"};
    return m;
}

inline std::optional<std::string_view> accented(char accent, char base) {
    struct Entry {
        char accent, base;
        std::string_view out;
    };
    static constexpr std::array<Entry, 34> table{{
        {'\'', 'a', "á"}, {'\'', 'e', "é"}, {'\'', 'i', "í"}, {'\'', 'o', "ó"}, {'\'', 'u', "ú"},
        {'\'', 'E', "É"}, {'`', 'a', "à"},  {'`', 'e', "è"},  {'`', 'i', "ì"},  {'`', 'o', "ò"},
        {'`', 'u', "ù"},  {'"', 'a', "ä"},  {'"', 'e', "ë"},  {'"', 'i', "ï"},  {'"', 'o', "ö"},
        {'"', 'u', "ü"},  {'"', 'A', "Ä"},  {'"', 'O', "Ö"},  {'"', 'U', "Ü"},  {'^', 'a', "â"},
        {'^', 'e', "ê"},  {'^', 'i', "î"},  {'^', 'o', "ô"},  {'^', 'u', "û"},  {'~', 'n', "ñ"},
        {'~', 'a', "ã"},  {'~', 'o', "õ"},  {'c', 'c', "ç"},  {'c', 'C', "Ç"},  {'v', 's', "š"},
        {'v', 'c', "č"},  {'v', 'z', "ž"},  {'v', 'S', "Š"},  {'v', 'r', "ř"},
    }};
    for (const auto& e : table) {
        if (e.accent == accent && e.base == base) return e.out;
    }
    return std::nullopt;
}

enum class Float { none, figure, table };

// Walks a region of the comment-stripped source. In block mode it emits
// canonical blocks; in inline mode everything renders into one string.
class Converter {
public:
    Converter(std::string_view src, bool inline_mode, std::string source_id, Diagnostics* diag)
        : src_(src), inline_(inline_mode), source_id_(std::move(source_id)), diag_(diag) {}

    void run(std::size_t begin, std::size_t end, Float ctx = Float::none);

    std::vector<Block> take_blocks() {
        flush();
        return std::move(blocks_);
    }

    std::string take_inline() { return text::collapse_whitespace(buf_); }

    std::optional<std::string> title;

private:
    void warn(std::size_t offset, std::string message) {
        if (diag_) diag_->push_back({source_id_, offset, std::move(message)});
    }

    std::string render_inline(std::size_t begin, std::size_t end) {
        Converter sub(src_, true, source_id_, diag_);
        sub.run(begin, end);
        return sub.take_inline();
    }

    void flush() {
        if (inline_) return;
        std::string t = text::collapse_whitespace(buf_);
        buf_.clear();
        if (t.empty()) return;
        // Keep a paragraph from reading back as a heading, table or fence.
        if (t.front() == '#' || t.front() == '|' || t.rfind("```", 0) == 0 || t.rfind("+-", 0) == 0) {
            t.insert(t.begin(), '\\');
        }
        auto res = normalize_equation_delimiters_checked(t);
        if (res.issue) warn(res.issue->offset, res.issue->message);
        blocks_.push_back(classify_paragraph(std::move(res.text)));
    }

    void emit(Block b) {
        if (inline_) {
            buf_ += ' ';
            buf_ += b.kind == BlockKind::equation_display ? "$$" + b.text + "$$" : b.text;
            buf_ += ' ';
            return;
        }
        flush();
        blocks_.push_back(std::move(b));
    }

    void emit_display(std::string body, std::size_t offset) {
        std::string cleaned = clean_math(body);
        if (detail::find_unescaped(cleaned, 0, "$") != npos) {
            warn(offset, "bare '$' inside display math escaped");
            cleaned = escape_bare_dollars(cleaned);
        }
        if (!cleaned.empty()) emit(Block::equation(std::move(cleaned)));
    }

    // Raw source from `from` to the next blank line, emitted as a paragraph.
    std::size_t degrade(std::size_t from, std::size_t end, std::string_view why) {
        warn(from, std::string(why));
        std::size_t stop = src_.find("\n\n", from);
        if (stop == npos || stop > end) stop = end;
        std::string raw(src_.substr(from, stop - from));
        raw.erase(std::remove(raw.begin(), raw.end(), kCommentFill), raw.end());
        if (inline_) {
            buf_ += raw;
        } else {
            flush();
            buf_ = raw;
            flush();
        }
        return stop;
    }

    std::size_t skip_spaces(std::size_t i, std::size_t end) const {
        while (i < end && (src_[i] == ' ' || src_[i] == '\t' || src_[i] == kCommentFill)) ++i;
        return i;
    }

    std::size_t skip_optional(std::size_t i, std::size_t end) const {
        while (i < end && src_[i] == '[') {
            const std::size_t close = bracket_end(src_, i + 1, end);
            if (close == npos) return i;
            i = close + 1;
        }
        return i;
    }

    struct Args {
        std::vector<std::pair<std::size_t, std::size_t>> groups; // [begin, end) of group bodies
        std::size_t next = 0;
        bool broken = false;
    };

    // Optional [..] arguments, then up to `max` adjacent {..} groups.
    Args read_args(std::size_t i, std::size_t end, std::size_t max) const {
        Args a;
        i = skip_optional(i, end);
        while (a.groups.size() < max && i < end && src_[i] == '{') {
            const std::size_t close = group_end(src_, i, end);
            if (close == npos) {
                a.broken = true;
                break;
            }
            a.groups.emplace_back(i + 1, close);
            i = close + 1;
        }
        a.next = i;
        return a;
    }

    std::size_t handle_environment(std::size_t macro_start, std::size_t i, std::size_t end, Float ctx);
    std::size_t handle_macro(std::size_t i, std::size_t end, Float ctx);
    std::size_t handle_list(std::string_view env, std::size_t body, std::size_t body_end);

    std::string_view src_;
    bool inline_;
    std::string source_id_;
    Diagnostics* diag_;
    std::string buf_;
    std::vector<Block> blocks_;
};

inline void Converter::run(std::size_t begin, std::size_t end, Float ctx) {
    std::size_t i = begin;
    while (i < end) {
        const char c = src_[i];
        switch (c) {
        case kCommentFill:
        case '{':
        case '}':
            ++i;
            break;
        case '\n': {
            std::size_t j = i + 1;
            while (j < end && (src_[j] == ' ' || src_[j] == '\t')) ++j;
            if (j < end && src_[j] == '\n') {
                flush();
                i = j;
            } else {
                buf_ += ' ';
                ++i;
            }
            break;
        }
        case '~':
            buf_ += ' ';
            ++i;
            break;
        case '$': {
            const bool display = i + 1 < end && src_[i + 1] == '$';
            const std::size_t close =
                display ? detail::find_unescaped(src_.substr(0, end), i + 2, "$$") : detail::find_unescaped(src_.substr(0, end), i + 1, "$");
            if (close == npos) {
                warn(i, "unterminated math shift");
                buf_ += "\\$";
                ++i;
                break;
            }
            if (display) {
                emit_display(std::string(src_.substr(i + 2, close - i - 2)), i);
                i = close + 2;
            } else {
                std::string span(src_.substr(i, close + 1 - i));
                std::replace(span.begin(), span.end(), kCommentFill, ' ');
                buf_ += span;
                i = close + 1;
            }
            break;
        }
        case '`':
        case '\'':
            if (i + 1 < end && src_[i + 1] == c) {
                buf_ += '"';
                i += 2;
            } else {
                buf_ += c;
                ++i;
            }
            break;
        case '\\':
            i = handle_macro(i, end, ctx);
            break;
        default:
            buf_ += c;
            ++i;
        }
    }
}

inline std::size_t Converter::handle_macro(std::size_t i, std::size_t end, Float ctx) {
    const std::size_t start = i;
    if (i + 1 >= end) return end;
    const char next = src_[i + 1];

    if (!is_letter(next)) {
        switch (next) {
        case '[':
        case '(': {
            const bool display = next == '[';
            const std::size_t close = detail::find_unescaped(src_.substr(0, end), i + 2, display ? "\\]" : "\\)");
            if (close == npos) return degrade(i, end, display ? "unbalanced \\[" : "unbalanced \\(");
            std::string body(src_.substr(i + 2, close - i - 2));
            if (display) {
                emit_display(std::move(body), i);
            } else {
                std::replace(body.begin(), body.end(), kCommentFill, ' ');
                buf_ += normalize_equation_delimiters("\\(" + body + "\\)");
            }
            return close + 2;
        }
        case '\\':
            buf_ += ' ';
            return skip_optional(i + 2, end);
        case '$':
            buf_ += "\\$";
            return i + 2;
        case '#':
            buf_ += "\\#";
            return i + 2;
        case '%':
        case '&':
        case '_':
        case '{':
        case '}':
            buf_ += next;
            return i + 2;
        case ',':
        case ';':
        case ':':
        case ' ':
        case '\n':
            buf_ += ' ';
            return i + 2;
        case '\'':
        case '`':
        case '"':
        case '^':
        case '~': {
            // Accent: \'e or \'{e}
            std::size_t j = i + 2;
            std::string base;
            if (j < end && src_[j] == '{') {
                const std::size_t close = group_end(src_, j, end);
                if (close != npos) {
                    base = std::string(src_.substr(j + 1, close - j - 1));
                    j = close + 1;
                }
            } else if (j < end) {
                base = std::string(1, src_[j]);
                ++j;
            }
            if (base.size() == 1) {
                if (auto a = accented(next, base[0])) {
                    buf_ += *a;
                    return j;
                }
            }
            buf_ += base;
            return j;
        }
        default:
            // \- \@ \/ and friends carry no text
            return i + 2;
        }
    }

    std::size_t j = i + 1;
    while (j < end && is_letter(src_[j])) ++j;
    if (j < end && src_[j] == '*') ++j;
    const std::string name(src_.substr(i + 1, j - i - 1));
    const std::string base_name = name.back() == '*' ? name.substr(0, name.size() - 1) : name;

    if (name == "begin") return handle_environment(start, j, end, ctx);
    if (name == "end") {
        const Args a = read_args(j, end, 1);
        warn(start, "stray \\end");
        return a.next;
    }

    if (auto it = section_levels().find(base_name); it != section_levels().end()) {
        const Args a = read_args(j, end, 1);
        if (a.broken || a.groups.empty()) return degrade(start, end, "unbalanced braces in \\" + name);
        std::string heading = render_inline(a.groups[0].first, a.groups[0].second);
        if (inline_) {
            buf_ += " " + heading + " ";
        } else {
            emit(Block::heading(it->second, std::move(heading)));
        }
        return a.next;
    }

    if (name == "title") {
        const Args a = read_args(j, end, 1);
        if (a.broken || a.groups.empty()) return degrade(start, end, "unbalanced braces in \\title");
        title = render_inline(a.groups[0].first, a.groups[0].second);
        return a.next;
    }

    if (name == "caption") {
        const Args a = read_args(j, end, 1);
        if (a.broken || a.groups.empty()) return degrade(start, end, "unbalanced braces in \\caption");
        const std::string body = render_inline(a.groups[0].first, a.groups[0].second);
        const std::string prefix = ctx == Float::figure ? "Figure: " : ctx == Float::table ? "Table: " : "";
        if (inline_) {
            buf_ += " " + prefix + body + " ";
        } else {
            flush();
            buf_ = prefix + body;
            flush();
        }
        return a.next;
    }

    if (name == "item") {
        buf_ += ' ';
        return j;
    }

    if (dropped_macros().count(name) || dropped_macros().count(base_name)) {
        std::size_t max_args = (base_name == "newcommand" || base_name == "renewcommand" ||
                                base_name == "providecommand" || base_name == "DeclareMathOperator" ||
                                base_name == "setlength" || base_name == "addtolength" ||
                                base_name == "setcounter" || base_name == "addtocounter")
                                   ? 2
                                   : 1;
        // Commands like \newcommand{\x}[1]{...} carry an optional arity between groups.
        Args a = read_args(j, end, max_args);
        if (a.groups.size() < max_args && !a.broken) a = read_args(skip_optional(a.next, end), end, max_args - a.groups.size());
        if (a.broken) return degrade(start, end, "unbalanced braces in \\" + name);
        return a.next;
    }

    const Args a = read_args(j, end, 8);
    if (a.broken) return degrade(start, end, "unbalanced braces in \\" + name);
    auto arg = [&](std::size_t k) { return render_inline(a.groups[k].first, a.groups[k].second); };

    if (name == "cite" || name == "citep" || name == "citet" || name == "citealp" || name == "citeauthor") {
        if (!a.groups.empty()) {
            buf_ += "[" + text::collapse_whitespace(std::string(src_.substr(a.groups[0].first,
                                                                               a.groups[0].second - a.groups[0].first))) +
                    "]";
        }
        return a.next;
    }
    if (name == "emph" || name == "textit") {
        if (!a.groups.empty()) buf_ += "*" + arg(0) + "*";
        return a.next;
    }
    if (name == "textbf") {
        if (!a.groups.empty()) buf_ += "**" + arg(0) + "**";
        return a.next;
    }
    if (name == "texttt") {
        if (!a.groups.empty()) buf_ += "`" + arg(0) + "`";
        return a.next;
    }
    if (name == "footnote") {
        if (!a.groups.empty()) buf_ += " (" + arg(0) + ")";
        return a.next;
    }
    if (name == "href") {
        if (a.groups.size() >= 2) buf_ += arg(1);
        return a.next;
    }

    // Generic fallback: arguments render as their text, argumentless macros vanish.
    for (std::size_t k = 0; k < a.groups.size(); ++k) {
        if (k) buf_ += ' ';
        buf_ += arg(k);
    }
    return a.next;
}

inline std::size_t Converter::handle_list(std::string_view env, std::size_t body, std::size_t body_end) {
    // Split at \item tokens that are not inside a nested group or list.
    std::vector<std::pair<std::size_t, std::size_t>> items;
    std::size_t i = body;
    std::size_t current = npos;
    int depth = 0;
    while (i < body_end) {
        const char c = src_[i];
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
        } else if (c == '\\') {
            if (src_.compare(i, 7, "\\begin{") == 0) {
                const std::size_t close = src_.find('}', i);
                const std::string_view inner = src_.substr(i + 7, close - i - 7);
                const std::size_t e = env_end(src_, inner, close + 1, body_end);
                if (e != npos) {
                    i = e + 5 + inner.size() + 1;
                    continue;
                }
            }
            if (depth == 0 && src_.compare(i, 5, "\\item") == 0 && (i + 5 >= body_end || !is_letter(src_[i + 5]))) {
                if (current != npos) items.emplace_back(current, i);
                current = i + 5;
                i += 5;
                continue;
            }
            ++i;
        }
        ++i;
    }
    if (current != npos) items.emplace_back(current, body_end);

    std::vector<std::string> lines;
    int n = 0;
    for (auto [b, e] : items) {
        ++n;
        std::string label;
        std::size_t content = skip_spaces(b, e);
        if (content < e && src_[content] == '[') {
            const std::size_t close = bracket_end(src_, content + 1, e);
            if (close != npos) {
                label = render_inline(content + 1, close);
                content = close + 1;
            }
        }
        std::string item = render_inline(content, e);
        if (!label.empty()) item = label + ": " + item;
        const std::string marker = env == "enumerate" ? std::to_string(n) + ". " : "- ";
        lines.push_back(marker + item);
    }
    if (inline_) {
        buf_ += " " + text::join(lines, " ") + " ";
    } else {
        flush();
        std::string joined = text::join(lines, "\n");
        if (!joined.empty()) {
            auto res = normalize_equation_delimiters_checked(joined);
            blocks_.push_back(Block::paragraph(std::move(res.text)));
        }
    }
    return body_end;
}

inline std::size_t Converter::handle_environment(std::size_t macro_start, std::size_t i, std::size_t end, Float ctx) {
    if (i >= end || src_[i] != '{') return i;
    const std::size_t close = group_end(src_, i, end);
    if (close == npos) return degrade(macro_start, end, "unbalanced braces in \\begin");
    const std::string env(src_.substr(i + 1, close - i - 1));
    std::size_t body = close + 1;
    const std::size_t body_end = env_end(src_, env, body, end);
    const std::size_t after = body_end == npos ? end : body_end + 6 + env.size();
    if (body_end == npos) {
        warn(macro_start, "unterminated environment " + env);
        run(body, end, ctx);
        return end;
    }

    if (auto it = math_envs().find(env); it != math_envs().end()) {
        std::string math(src_.substr(body, body_end - body));
        std::string cleaned = clean_math(math);
        if (!it->second.empty() && !cleaned.empty()) {
            cleaned = "\\begin{" + std::string(it->second) + "}\n" + cleaned + "\n\\end{" + std::string(it->second) + "}";
        }
        emit_display(std::move(cleaned), macro_start);
        return after;
    }
    if (skipped_envs().count(env)) {
        if (!inline_) flush();
        return after;
    }
    if (env == "figure" || env == "figure*" || env == "wrapfigure") {
        if (!inline_) flush();
        run(skip_optional(body, body_end), body_end, Float::figure);
        if (!inline_) flush();
        return after;
    }
    if (env == "table" || env == "table*") {
        if (!inline_) flush();
        run(skip_optional(body, body_end), body_end, Float::table);
        if (!inline_) flush();
        return after;
    }
    if (env == "tabular" || env == "tabular*" || env == "tabularx" || env == "longtable") {
        // Width argument for the starred/x forms, then the column spec.
        const std::size_t n_args = (env == "tabular" || env == "longtable") ? 1 : 2;
        const Args a = read_args(body, body_end, n_args);
        auto cell = [this](std::string_view c) {
            const std::string owned(c);
            Converter sub(owned, true, source_id_, diag_);
            sub.run(0, owned.size());
            return sub.take_inline();
        };
        std::string flat = flatten_tabular(src_.substr(a.next, body_end - a.next), cell);
        if (!flat.empty()) emit(Block::table(std::move(flat)));
        return after;
    }
    if (env == "itemize" || env == "enumerate" || env == "description") {
        handle_list(env, body, body_end);
        return after;
    }
    if (env == "abstract") {
        emit(Block::heading(1, "Abstract"));
        run(body, body_end, ctx);
        if (!inline_) flush();
        return after;
    }
    if (env == "verbatim" || env == "lstlisting") {
        std::string code(src_.substr(skip_optional(body, body_end), body_end - skip_optional(body, body_end)));
        code.erase(std::remove(code.begin(), code.end(), kCommentFill), code.end());
        emit(Block::other("```\n" + std::string(text::trim(code)) + "\n```"));
        return after;
    }
    // Unknown environment: transparent.
    run(skip_optional(body, body_end), body_end, ctx);
    return after;
}

} // namespace latex_detail

/// LaTeX source to canonical blocks. Sectioning becomes headings, math
/// environments and `\[ \]` become display equations, captions become
/// "Figure: …"/"Table: …" paragraphs, tabulars become flat tables. Unknown
/// macros keep the text of their braced arguments. Problems never abort the
/// document; they land in `diag`.
inline CanonicalDoc convert_latex_source(std::string_view raw, std::string source_id = {},
                                         Diagnostics* diag = nullptr) {
    text::require_utf8(raw);
    const std::string src = latex_detail::strip_comments(text::normalize_newlines(raw));
    std::size_t begin = 0;
    std::size_t end = src.size();
    latex_detail::Converter conv(src, false, source_id, diag);

    if (const auto doc = src.find("\\begin{document}"); doc != std::string::npos) {
        // Only \title matters in the preamble.
        if (const auto t = src.find("\\title"); t != std::string::npos && t < doc) {
            latex_detail::Converter pre(src, false, source_id, diag);
            pre.run(t, doc);
            conv.title = pre.title;
        }
        begin = doc + std::string_view("\\begin{document}").size();
        if (const auto fin = src.find("\\end{document}", begin); fin != std::string::npos) end = fin;
    }
    conv.run(begin, end);
    CanonicalDoc out;
    out.source_id = std::move(source_id);
    out.title = conv.title;
    out.blocks = conv.take_blocks();
    return out;
}

} // namespace corpusforge
