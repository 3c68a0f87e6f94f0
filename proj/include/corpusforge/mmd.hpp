#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "corpusforge/delimiters.hpp"
#include "corpusforge/document.hpp"
#include "corpusforge/latex.hpp"
#include "corpusforge/tables.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

namespace mmd_detail {

struct Line {
    std::string_view text; // trailing whitespace removed
    std::size_t offset;
};

inline std::optional<Block> match_heading(std::string_view line) {
    static const std::regex atx(R"(^(#{1,6})(?:[ \t]+(.*))?$)");
    std::cmatch m;
    if (!std::regex_match(line.data(), line.data() + line.size(), m, atx)) return std::nullopt;
    std::string body = m[2].matched ? m[2].str() : std::string();
    // Optional closing sequence: " ##" at the end, or a body made only of '#'.
    std::size_t e = body.size();
    while (e > 0 && body[e - 1] == '#') --e;
    if (e == 0) {
        body.clear();
    } else if (e < body.size() && (body[e - 1] == ' ' || body[e - 1] == '\t')) {
        body.resize(e);
    }
    return Block::heading(static_cast<int>(m[1].length()), std::string(text::trim(body)));
}

class Parser {
public:
    Parser(std::vector<Line> lines, std::string source_id, Diagnostics* diag)
        : lines_(std::move(lines)), source_id_(std::move(source_id)), diag_(diag) {}

    std::vector<Block> run() {
        std::size_t k = 0;
        while (k < lines_.size()) k = step(k);
        flush();
        return std::move(blocks_);
    }

private:
    void warn(std::size_t offset, std::string msg) {
        if (diag_) diag_->push_back({source_id_, offset, std::move(msg)});
    }

    std::string normalized(std::string_view s, std::size_t offset) {
        auto res = normalize_equation_delimiters_checked(s);
        if (res.issue) warn(offset + res.issue->offset, res.issue->message);
        return std::move(res.text);
    }

    void flush() {
        if (para_.empty()) return;
        std::string joined;
        for (std::size_t i = 0; i < para_.size(); ++i) {
            if (i) joined += '\n';
            joined += para_[i];
        }
        para_.clear();
        blocks_.push_back(classify_paragraph(normalized(joined, para_offset_)));
    }

    void push_block(Block b) {
        flush();
        blocks_.push_back(std::move(b));
    }

    // Display math opening on line k; returns the line after it, or nullopt
    // when the span does not close cleanly on its own lines.
    std::optional<std::size_t> try_display(std::size_t k) {
        const std::string_view first = text::trim(lines_[k].text);
        const bool dollars = first.rfind("$$", 0) == 0;
        const std::string_view closer = dollars ? "$$" : "\\]";
        std::string joined(first.substr(2));
        std::size_t m = k;
        std::size_t at = detail::find_unescaped(joined, 0, closer);
        while (at == std::string::npos) {
            if (++m >= lines_.size() || text::trim(lines_[m].text).empty()) return std::nullopt;
            joined += '\n';
            joined += lines_[m].text;
            at = detail::find_unescaped(joined, 0, closer);
        }
        if (!text::trim(std::string_view(joined).substr(at + 2)).empty()) return std::nullopt;
        const std::string body = escape_bare_dollars(latex_detail::clean_math(std::string_view(joined).substr(0, at)));
        if (!body.empty()) push_block(Block::equation(body));
        flush();
        return m + 1;
    }

    std::size_t step(std::size_t k) {
        const std::string_view line = lines_[k].text;
        const std::string_view t = text::trim(line);
        if (t.empty()) {
            flush();
            return k + 1;
        }
        if (t.rfind("```", 0) == 0) {
            std::string code(line);
            std::size_t m = k + 1;
            for (; m < lines_.size(); ++m) {
                code += '\n';
                code += lines_[m].text;
                if (text::trim(lines_[m].text).rfind("```", 0) == 0) break;
            }
            push_block(Block::other(std::move(code)));
            return m + 1;
        }
        if (auto h = match_heading(line)) {
            h->text = normalized(h->text, lines_[k].offset);
            push_block(std::move(*h));
            return k + 1;
        }
        if (para_.empty() && line.rfind(kTableIndent, 0) == 0) {
            std::vector<std::string> rows;
            std::size_t m = k;
            for (; m < lines_.size() && lines_[m].text.rfind(kTableIndent, 0) == 0; ++m) {
                rows.emplace_back(lines_[m].text.substr(kTableIndent.size()));
            }
            push_block(Block::table(normalized(text::join(rows, "\n"), lines_[k].offset)));
            return m;
        }
        if (t.rfind("$$", 0) == 0 || t.rfind("\\[", 0) == 0) {
            if (auto next = try_display(k)) return *next;
        }
        if (para_.empty() && looks_like_table_line(line)) {
            std::string markup;
            std::size_t m = k;
            for (; m < lines_.size() && looks_like_table_line(lines_[m].text); ++m) {
                markup += lines_[m].text;
                markup += '\n';
            }
            std::string flat = flatten_table(markup);
            if (!text::trim(flat).empty()) push_block(Block::table(normalized(flat, lines_[k].offset)));
            return m;
        }
        if (para_.empty() && (t.rfind("\\begin{table", 0) == 0 || t.rfind("\\begin{tabular", 0) == 0)) {
            const std::string_view end_marker = t.rfind("\\begin{table}", 0) == 0 || t.rfind("\\begin{table*}", 0) == 0
                                                    ? "\\end{table"
                                                    : "\\end{tabular";
            std::string chunk;
            for (std::size_t m = k; m < lines_.size(); ++m) {
                chunk += lines_[m].text;
                chunk += '\n';
                if (lines_[m].text.find(end_marker) != std::string_view::npos) {
                    Diagnostics local;
                    auto doc = convert_latex_source(chunk, source_id_, &local);
                    for (auto& w : local) warn(lines_[k].offset + w.offset, w.message);
                    flush();
                    for (auto& b : doc.blocks) blocks_.push_back(std::move(b));
                    return m + 1;
                }
            }
            warn(lines_[k].offset, "table environment without end; kept as text");
        }
        if (t.rfind("[MISSING_PAGE", 0) == 0 && t.back() == ']') {
            push_block(Block::other(std::string(t)));
            return k + 1;
        }
        if (para_.empty()) para_offset_ = lines_[k].offset;
        para_.emplace_back(line);
        return k + 1;
    }

    std::vector<Line> lines_;
    std::string source_id_;
    Diagnostics* diag_;
    std::vector<Block> blocks_;
    std::vector<std::string> para_;
    std::size_t para_offset_ = 0;
};

} // namespace mmd_detail

/// MultiMarkdown (Nougat output, or our own rendered canonical text) to a
/// canonical block list. Malformed markup degrades to paragraphs; the only
/// hard failure is invalid UTF-8. Warning offsets refer to the input after
/// newline normalization.
inline CanonicalDoc parse_mmd(std::string_view raw, std::string source_id = {}, Diagnostics* diag = nullptr) {
    text::require_utf8(raw);
    const std::string src = text::normalize_newlines(raw);
    std::vector<mmd_detail::Line> lines;
    std::size_t offset = 0;
    for (std::string_view line : text::split_lines(src)) {
        lines.push_back({text::rtrim(line), offset});
        offset += line.size() + 1;
    }
    CanonicalDoc doc;
    doc.blocks = mmd_detail::Parser(std::move(lines), source_id, diag).run();
    doc.source_id = std::move(source_id);
    for (const auto& b : doc.blocks) {
        if (b.kind == BlockKind::heading && b.level == 1) {
            doc.title = b.text;
            break;
        }
    }
    return doc;
}

} // namespace corpusforge
