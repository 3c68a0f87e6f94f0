#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/errors.hpp"
#include "corpusforge/fsutil.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge::jsonl {

// Compact, sorted-key objects, one per line; the same records always
// serialize to the same bytes.
inline std::string serialize(const std::vector<nlohmann::json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<nlohmann::json> parse(std::string_view content, std::string_view what = "jsonl") {
    std::vector<nlohmann::json> rows;
    std::size_t lineno = 0;
    for (auto line : text::split_lines(content)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

inline void write(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    fsutil::write_file_atomic(path, serialize(rows));
}

inline std::vector<nlohmann::json> read(const std::filesystem::path& path) {
    return parse(fsutil::read_file(path), path.string());
}

// Missing file reads as empty; used for append-only logs.
inline std::vector<nlohmann::json> read_if_exists(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    return read(path);
}

template <class T, class ToJson>
std::vector<nlohmann::json> to_rows(const std::vector<T>& items, ToJson to_json) {
    std::vector<nlohmann::json> rows;
    rows.reserve(items.size());
    for (const auto& item : items) rows.push_back(to_json(item));
    return rows;
}

} // namespace corpusforge::jsonl
