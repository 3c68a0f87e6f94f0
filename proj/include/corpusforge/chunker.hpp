#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "corpusforge/document.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

inline constexpr std::size_t kDefaultMaxTokens = 12000;

// ceil(code points / 4)
inline std::size_t estimate_tokens(std::string_view text) { return (text::codepoint_count(text) + 3) / 4; }

struct Chunk {
    std::string chunk_id; // "<source_id>-<ordinal>"
    std::string source_id;
    std::size_t ordinal = 0;
    std::vector<std::string> heading_path;
    std::string text;
    std::size_t est_tokens = 0;
    bool oversized = false; // a single block larger than the budget

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

inline std::string make_chunk_id(std::string_view source_id, std::size_t ordinal) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "-%04zu", ordinal);
    return std::string(source_id) + buf;
}

namespace chunk_detail {

struct Section {
    int level = 0;
    Block heading;
    std::vector<Block> body; // blocks before the first child heading
    std::vector<Section> children;
};

inline Section build_tree(const std::vector<Block>& blocks) {
    Section root;
    std::vector<Section*> stack{&root};
    for (const auto& b : blocks) {
        if (b.kind != BlockKind::heading) {
            stack.back()->body.push_back(b);
            continue;
        }
        while (stack.size() > 1 && stack.back()->level >= b.level) stack.pop_back();
        auto& kids = stack.back()->children;
        kids.push_back({b.level, b, {}, {}});
        stack.push_back(&kids.back());
    }
    return root;
}

inline void flatten(const Section& s, std::vector<Block>& out) {
    out.insert(out.end(), s.body.begin(), s.body.end());
    for (const auto& child : s.children) {
        out.push_back(child.heading);
        flatten(child, out);
    }
}

class Splitter {
public:
    Splitter(std::string source_id, std::size_t max_tokens) : source_id_(std::move(source_id)), max_(max_tokens) {}

    void section(const Section& s, const std::vector<std::string>& path) {
        std::vector<Block> content;
        flatten(s, content);
        if (content.empty()) return;
        std::string text = render_blocks(content);
        if (estimate_tokens(text) <= max_) {
            push(path, std::move(text), false);
            return;
        }
        blocks(s.body, path);
        for (const auto& child : s.children) {
            auto sub = path;
            sub.push_back(child.heading.text);
            section(child, sub);
        }
    }

    // Greedy packing at block boundaries.
    void blocks(const std::vector<Block>& bs, const std::vector<std::string>& path) {
        std::vector<Block> group;
        for (const auto& b : bs) {
            group.push_back(b);
            if (estimate_tokens(render_blocks(group)) <= max_) continue;
            group.pop_back();
            if (!group.empty()) push(path, render_blocks(group), false);
            group.clear();
            std::string alone = render_block(b);
            if (estimate_tokens(alone) > max_) {
                push(path, std::move(alone), true);
            } else {
                group.push_back(b);
            }
        }
        if (!group.empty()) push(path, render_blocks(group), false);
    }

    std::vector<Chunk> take() { return std::move(chunks_); }

    void push(const std::vector<std::string>& path, std::string text, bool oversized) {
        Chunk c;
        c.ordinal = chunks_.size();
        c.chunk_id = make_chunk_id(source_id_, c.ordinal);
        c.source_id = source_id_;
        c.heading_path = path;
        c.est_tokens = estimate_tokens(text);
        c.text = std::move(text);
        c.oversized = oversized;
        chunks_.push_back(std::move(c));
    }

private:
    std::string source_id_;
    std::size_t max_;
    std::vector<Chunk> chunks_;
};

} // namespace chunk_detail

/// Splits a document into chunks: one per top-level section that fits the
/// budget; oversized sections descend into their subsections, and sections
/// without subsections are packed at block boundaries. Heading texts move
/// into `heading_path`; chunk text holds everything below the heading.
inline std::vector<Chunk> split_sections(const CanonicalDoc& doc, std::size_t max_tokens = kDefaultMaxTokens) {
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    if (doc.blocks.empty()) throw EmptyDocument("document '" + doc.source_id + "' has no blocks");
    const auto root = chunk_detail::build_tree(doc.blocks);
    chunk_detail::Splitter splitter(doc.source_id, max_tokens);
    if (!root.body.empty()) {
        const std::string pre = render_blocks(root.body);
        if (estimate_tokens(pre) <= max_tokens) {
            splitter.push({}, pre, false);
        } else {
            splitter.blocks(root.body, {});
        }
    }
    for (const auto& s : root.children) splitter.section(s, {s.heading.text});
    return splitter.take();
}

// Whole document as one chunk when it fits, otherwise split_sections.
inline std::vector<Chunk> chunk_whole_or_split(const CanonicalDoc& doc, std::size_t max_tokens = kDefaultMaxTokens) {
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    if (doc.blocks.empty()) throw EmptyDocument("document '" + doc.source_id + "' has no blocks");
    std::string all = render_canonical(doc);
    if (estimate_tokens(all) > max_tokens) return split_sections(doc, max_tokens);
    chunk_detail::Splitter splitter(doc.source_id, max_tokens);
    splitter.push({}, std::move(all), false);
    return splitter.take();
}

} // namespace corpusforge
