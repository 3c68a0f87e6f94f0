#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corpusforge/delimiters.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

enum class BlockKind { heading, paragraph, equation_inline_span, equation_display, table, other };

inline std::string_view to_string(BlockKind k) {
    switch (k) {
    case BlockKind::heading: return "heading";
    case BlockKind::paragraph: return "paragraph";
    case BlockKind::equation_inline_span: return "equation_inline_span";
    case BlockKind::equation_display: return "equation_display";
    case BlockKind::table: return "table";
    case BlockKind::other: return "other";
    }
    return "other";
}

inline std::optional<BlockKind> parse_block_kind(std::string_view s) {
    for (BlockKind k : {BlockKind::heading, BlockKind::paragraph, BlockKind::equation_inline_span,
                        BlockKind::equation_display, BlockKind::table, BlockKind::other}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

// `level` is meaningful for headings only (1..6) and zero elsewhere.
// Equation text carries no `$` delimiters; table text is already flat.
struct Block {
    BlockKind kind = BlockKind::paragraph;
    int level = 0;
    std::string text;

    static Block heading(int level, std::string text) { return {BlockKind::heading, level, std::move(text)}; }
    static Block paragraph(std::string text) { return {BlockKind::paragraph, 0, std::move(text)}; }
    static Block equation(std::string text) { return {BlockKind::equation_display, 0, std::move(text)}; }
    static Block inline_equation(std::string text) { return {BlockKind::equation_inline_span, 0, std::move(text)}; }
    static Block table(std::string text) { return {BlockKind::table, 0, std::move(text)}; }
    static Block other(std::string text) { return {BlockKind::other, 0, std::move(text)}; }

    friend bool operator==(const Block&, const Block&) = default;
};

struct CanonicalDoc {
    std::string source_id;
    std::optional<std::string> title;
    std::vector<Block> blocks;
};

inline bool block_equal(const CanonicalDoc& a, const CanonicalDoc& b) { return a.blocks == b.blocks; }

struct Warning {
    std::string source_id;
    std::size_t offset = 0;
    std::string message;

    friend bool operator==(const Warning&, const Warning&) = default;
};

using Diagnostics = std::vector<Warning>;

// True when `text` is exactly one `$…$` span and nothing else.
inline bool is_single_inline_span(std::string_view text) {
    if (text.size() < 3 || text.front() != '$' || text[1] == '$') return false;
    return detail::find_unescaped(text, 1, "$") == text.size() - 1;
}

// Paragraph text after delimiter normalization; a lone inline span becomes
// its own equation block so parsing and conversion agree on the kind.
inline Block classify_paragraph(std::string text) {
    if (is_single_inline_span(text)) return Block::inline_equation(text.substr(1, text.size() - 2));
    return Block::paragraph(std::move(text));
}

inline constexpr std::string_view kTableIndent = "    ";

inline std::string render_block(const Block& b) {
    switch (b.kind) {
    case BlockKind::heading:
        return std::string(static_cast<std::size_t>(b.level), '#') + (b.text.empty() ? "" : " " + b.text);
    case BlockKind::equation_display:
        return "$$\n" + b.text + "\n$$";
    case BlockKind::equation_inline_span:
        return "$" + b.text + "$";
    case BlockKind::table: {
        // Indented so the plain-text rows read back as one table block.
        std::string out;
        for (auto line : text::split_lines(b.text)) {
            if (!out.empty()) out += '\n';
            out += kTableIndent;
            out += line;
        }
        return out;
    }
    case BlockKind::paragraph:
    case BlockKind::other:
        return b.text;
    }
    return b.text;
}

inline std::string render_blocks(const std::vector<Block>& blocks) {
    std::string out;
    for (const auto& b : blocks) {
        if (!out.empty()) out += "\n\n";
        out += render_block(b);
    }
    return out;
}

// Canonical Markdown text: blocks separated by one blank line, no trailing newline.
inline std::string render_canonical(const CanonicalDoc& doc) { return render_blocks(doc.blocks); }

} // namespace corpusforge
