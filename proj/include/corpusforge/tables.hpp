#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "corpusforge/text.hpp"

namespace corpusforge {

namespace detail {

inline bool is_table_rule(std::string_view line) {
    bool has_dash = false;
    for (char c : line) {
        if (c == '-' || c == '=') {
            has_dash = true;
        } else if (c != '|' && c != '+' && c != ':' && c != ' ' && c != '\t') {
            return false;
        }
    }
    return has_dash;
}

// Splits on `sep` outside escape pairs, `$…$` math and `{…}` groups.
inline std::vector<std::string> split_cells(std::string_view row, char sep) {
    std::vector<std::string> cells;
    std::string cur;
    bool in_math = false;
    int depth = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const char c = row[i];
        if (c == '\\' && i + 1 < row.size()) {
            cur.push_back(c);
            cur.push_back(row[++i]);
            continue;
        }
        if (c == '$') in_math = !in_math;
        if (!in_math) {
            if (c == '{') ++depth;
            if (c == '}' && depth > 0) --depth;
        }
        if (c == sep && !in_math && depth == 0) {
            cells.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        cur.push_back(c);
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::vector<std::string> pipe_row_cells(std::string_view line) {
    line = text::trim(line);
    if (!line.empty() && line.front() == '|') line.remove_prefix(1);
    if (!line.empty() && line.back() == '|' && !(line.size() >= 2 && line[line.size() - 2] == '\\')) {
        line.remove_suffix(1);
    }
    auto cells = split_cells(line, '|');
    for (auto& c : cells) c = std::string(text::trim(c));
    return cells;
}

inline std::string join_row(const std::vector<std::string>& cells) {
    return std::string(text::rtrim(text::join(cells, "  ")));
}

} // namespace detail

inline bool looks_like_table_line(std::string_view line) {
    line = text::trim(line);
    return !line.empty() && (line.front() == '|' || line.substr(0, 2) == "+-" || line.substr(0, 2) == "+=");
}

/// Pipe or grid table markup to plain text: one row per line, cells joined
/// by two spaces, rule rows dropped. Grid rows that span several physical
/// lines are merged cell by cell. Input that is not a table comes back as is.
inline std::string flatten_table(std::string_view markup) {
    const std::string src = text::normalize_newlines(markup);
    const auto lines = text::split_lines(src);
    bool any = false;
    bool grid = false;
    for (auto raw : lines) {
        const auto line = text::trim(raw);
        if (line.empty()) continue;
        if (line.front() != '|' && line.front() != '+') return std::string(markup);
        if (line.front() == '+' && detail::is_table_rule(line)) grid = true;
        any = true;
    }
    if (!any) return std::string(markup);

    std::vector<std::string> rows;
    std::vector<std::string> pending; // grid row under construction
    auto flush_grid_row = [&] {
        if (!pending.empty()) {
            if (auto row = detail::join_row(pending); !row.empty()) rows.push_back(std::move(row));
        }
        pending.clear();
    };
    for (auto raw : lines) {
        const auto line = text::trim(raw);
        if (line.empty()) continue;
        if (detail::is_table_rule(line)) {
            if (grid) flush_grid_row();
            continue;
        }
        auto cells = detail::pipe_row_cells(line);
        if (!grid) {
            if (auto row = detail::join_row(cells); !row.empty()) rows.push_back(std::move(row));
            continue;
        }
        if (pending.size() < cells.size()) pending.resize(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (cells[k].empty()) continue;
            if (!pending[k].empty()) pending[k] += ' ';
            pending[k] += cells[k];
        }
    }
    flush_grid_row();
    return text::join(rows, "\n");
}

/// Body of a LaTeX tabular (between the column spec and \end{tabular}) to
/// the same plain-text layout. `render_cell` turns cell LaTeX into text.
inline std::string flatten_tabular(std::string_view body, const std::function<std::string(std::string_view)>& render_cell) {
    std::vector<std::string> rows;
    // Rows end at an unescaped "\\"; detail::split_cells treats "\\" as an escape pair, so scan here.
    std::vector<std::string> raw_rows;
    {
        std::string cur;
        bool in_math = false;
        for (std::size_t i = 0; i < body.size(); ++i) {
            const char c = body[i];
            if (c == '\\' && i + 1 < body.size()) {
                if (body[i + 1] == '\\' && !in_math) {
                    raw_rows.push_back(std::move(cur));
                    cur.clear();
                    ++i;
                    // optional spacing argument: \\[2pt]
                    if (i + 1 < body.size() && body[i + 1] == '[') {
                        const auto close = body.find(']', i + 1);
                        if (close != std::string_view::npos) i = close;
                    }
                    continue;
                }
                cur.push_back(c);
                cur.push_back(body[++i]);
                continue;
            }
            if (c == '$') in_math = !in_math;
            cur.push_back(c);
        }
        raw_rows.push_back(std::move(cur));
    }
    for (const auto& raw : raw_rows) {
        std::vector<std::string> cells;
        for (const auto& cell : detail::split_cells(raw, '&')) cells.push_back(text::collapse_whitespace(render_cell(cell)));
        if (auto row = detail::join_row(cells); !text::trim(row).empty()) rows.push_back(std::string(text::trim(row)));
    }
    return text::join(rows, "\n");
}

} // namespace corpusforge
