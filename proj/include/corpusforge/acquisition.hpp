#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/digest.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/fsutil.hpp"
#include "corpusforge/http.hpp"
#include "corpusforge/log.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

enum class Family { arxiv, jacow, books };
enum class SourceFormat { latex_archive, pdf, mmd };
enum class FetchState { pending, fetched, failed };

inline std::string to_string(Family f) {
    switch (f) {
    case Family::arxiv: return "arxiv";
    case Family::jacow: return "jacow";
    case Family::books: return "books";
    }
    return "";
}

inline std::string to_string(SourceFormat f) {
    switch (f) {
    case SourceFormat::latex_archive: return "latex_archive";
    case SourceFormat::pdf: return "pdf";
    case SourceFormat::mmd: return "mmd";
    }
    return "";
}

inline std::string to_string(FetchState s) {
    switch (s) {
    case FetchState::pending: return "pending";
    case FetchState::fetched: return "fetched";
    case FetchState::failed: return "failed";
    }
    return "";
}

inline std::optional<Family> parse_family(std::string_view s) {
    if (s == "arxiv") return Family::arxiv;
    if (s == "jacow") return Family::jacow;
    if (s == "books") return Family::books;
    return std::nullopt;
}

inline std::optional<SourceFormat> parse_format(std::string_view s) {
    if (s == "latex_archive") return SourceFormat::latex_archive;
    if (s == "pdf") return SourceFormat::pdf;
    if (s == "mmd") return SourceFormat::mmd;
    return std::nullopt;
}

inline std::optional<FetchState> parse_fetch_state(std::string_view s) {
    if (s == "pending") return FetchState::pending;
    if (s == "fetched") return FetchState::fetched;
    if (s == "failed") return FetchState::failed;
    return std::nullopt;
}

inline bool format_allowed(Family family, SourceFormat format) {
    switch (family) {
    case Family::arxiv: return format == SourceFormat::latex_archive || format == SourceFormat::pdf;
    case Family::jacow:
    case Family::books: return format == SourceFormat::pdf || format == SourceFormat::mmd;
    }
    return false;
}

inline SourceFormat default_format(Family family) {
    return family == Family::arxiv ? SourceFormat::latex_archive : SourceFormat::mmd;
}

inline std::string_view store_extension(SourceFormat format) {
    switch (format) {
    case SourceFormat::latex_archive: return "src";
    case SourceFormat::pdf: return "pdf";
    case SourceFormat::mmd: return "mmd";
    }
    return "bin";
}

struct SourceSpec {
    std::string id;
    Family family = Family::arxiv;
    std::string locator;
    SourceFormat expected_format = SourceFormat::latex_archive;

    friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

// Ids double as store file names.
inline bool valid_source_id(std::string_view id) {
    if (id.empty() || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    });
}

inline void validate(const SourceSpec& spec) {
    if (!valid_source_id(spec.id)) throw ParseError("invalid source id '" + spec.id + "'");
    if (spec.locator.empty()) throw ParseError("source '" + spec.id + "' has an empty locator");
    if (!format_allowed(spec.family, spec.expected_format)) {
        throw ParseError("source '" + spec.id + "': format " + to_string(spec.expected_format) +
                         " is not allowed for family " + to_string(spec.family));
    }
    if (spec.family == Family::books && http::is_remote(spec.locator)) {
        throw ParseError("source '" + spec.id + "': books are registered from local paths only");
    }
}

/// Parses the line-oriented source list:
///
///     # comment
///     <id> <family> <locator> [<expected_format>]
///
/// Fields are whitespace separated; the format defaults to latex_archive for
/// arxiv and mmd otherwise.
inline std::vector<SourceSpec> parse_source_list(std::string_view content) {
    text::require_utf8(content);
    std::vector<SourceSpec> specs;
    std::set<std::string> seen;
    const std::string normalized = text::normalize_newlines(content);
    std::size_t line_no = 0;
    for (std::string_view raw : text::split_lines(normalized)) {
        ++line_no;
        const std::string_view line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        std::istringstream fields{std::string(line)};
        std::vector<std::string> f;
        for (std::string tok; fields >> tok;) f.push_back(tok);
        const std::string where = "source list line " + std::to_string(line_no);
        if (f.size() < 3 || f.size() > 4) throw ParseError(where + ": expected 3 or 4 fields");
        const auto family = parse_family(f[1]);
        if (!family) throw ParseError(where + ": unknown family '" + f[1] + "'");
        SourceSpec spec{f[0], *family, f[2], default_format(*family)};
        if (f.size() == 4) {
            const auto format = parse_format(f[3]);
            if (!format) throw ParseError(where + ": unknown format '" + f[3] + "'");
            spec.expected_format = *format;
        }
        validate(spec);
        if (!seen.insert(spec.id).second) throw DuplicateId("duplicate source id '" + spec.id + "' at " + where);
        specs.push_back(std::move(spec));
    }
    return specs;
}

inline std::vector<SourceSpec> load_source_list(const std::filesystem::path& path) {
    std::string content;
    try {
        content = fsutil::read_file(path);
    } catch (const IoError& e) {
        throw ParseError(e.what());
    }
    return parse_source_list(content);
}

struct ManifestEntry {
    SourceSpec spec;
    FetchState state = FetchState::pending;
    std::optional<std::string> content_hash;
    std::optional<std::string> fetched_at;
    std::optional<std::string> error;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class SourceManifest {
public:
    static constexpr int kVersion = 1;

    const std::vector<ManifestEntry>& entries() const { return entries_; }

    const ManifestEntry* find(std::string_view id) const {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.spec.id == id; });
        return it == entries_.end() ? nullptr : &*it;
    }

    ManifestEntry* find(std::string_view id) {
        return const_cast<ManifestEntry*>(std::as_const(*this).find(id));
    }

    // Adds a pending entry unless the id is already known. Returns true if added.
    bool register_source(const SourceSpec& spec) {
        validate(spec);
        if (find(spec.id)) return false;
        entries_.push_back({spec, FetchState::pending, std::nullopt, std::nullopt, std::nullopt});
        return true;
    }

    void put(ManifestEntry entry) {
        check_entry(entry);
        if (auto* existing = find(entry.spec.id)) {
            *existing = std::move(entry);
        } else {
            entries_.push_back(std::move(entry));
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : entries_) {
            nlohmann::json j{{"id", e.spec.id},
                             {"family", to_string(e.spec.family)},
                             {"locator", e.spec.locator},
                             {"expected_format", to_string(e.spec.expected_format)},
                             {"fetch_state", to_string(e.state)}};
            if (e.content_hash) j["content_hash"] = *e.content_hash;
            if (e.fetched_at) j["fetched_at"] = *e.fetched_at;
            if (e.error) j["error"] = *e.error;
            arr.push_back(std::move(j));
        }
        return {{"version", kVersion}, {"entries", std::move(arr)}};
    }

    std::string serialize() const { return to_json().dump(2) + "\n"; }

    static SourceManifest from_json(const nlohmann::json& j) {
        try {
            if (j.at("version").get<int>() != kVersion) {
                throw ParseError("unsupported manifest version " + j.at("version").dump());
            }
            SourceManifest m;
            for (const auto& item : j.at("entries")) {
                ManifestEntry e;
                const auto family = parse_family(item.at("family").get<std::string>());
                const auto format = parse_format(item.at("expected_format").get<std::string>());
                const auto state = parse_fetch_state(item.at("fetch_state").get<std::string>());
                if (!family || !format || !state) throw ParseError("manifest entry has an unknown enum value");
                e.spec = {item.at("id").get<std::string>(), *family, item.at("locator").get<std::string>(), *format};
                e.state = *state;
                if (item.contains("content_hash")) e.content_hash = item["content_hash"].get<std::string>();
                if (item.contains("fetched_at")) e.fetched_at = item["fetched_at"].get<std::string>();
                if (item.contains("error")) e.error = item["error"].get<std::string>();
                validate(e.spec);
                if (m.find(e.spec.id)) throw DuplicateId("duplicate manifest id '" + e.spec.id + "'");
                m.put(std::move(e));
            }
            return m;
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(std::string("malformed manifest: ") + ex.what());
        }
    }

    static SourceManifest load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) return {};
        try {
            return from_json(nlohmann::json::parse(fsutil::read_file(path)));
        } catch (const nlohmann::json::parse_error& ex) {
            throw ParseError(path.string() + ": " + ex.what());
        }
    }

    void save(const std::filesystem::path& path) const { fsutil::write_file_atomic(path, serialize()); }

    friend bool operator==(const SourceManifest&, const SourceManifest&) = default;

private:
    static void check_entry(const ManifestEntry& e) {
        if (e.content_hash.has_value() != (e.state == FetchState::fetched)) {
            throw ParseError("entry '" + e.spec.id + "': content_hash must be present iff fetched");
        }
    }

    std::vector<ManifestEntry> entries_;
};

// ---------------------------------------------------------------------------
// arXiv listing

struct ArxivListingOptions {
    std::string api_url = "http://export.arxiv.org/api/query";
    std::string eprint_base = "https://arxiv.org/e-print/";
    int page_size = 100;
    int max_results = 0; // 0 = no cap
};

struct ArxivEntry {
    std::string id;
    int year = 0;
};

namespace detail {

inline std::string xml_element(std::string_view block, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto b = block.find(open);
    if (b == std::string_view::npos) return {};
    const auto e = block.find(close, b + open.size());
    if (e == std::string_view::npos) return {};
    return std::string(text::trim(block.substr(b + open.size(), e - b - open.size())));
}

} // namespace detail

// Extracts (id, year) pairs from an Atom feed as served by the arXiv API.
inline std::vector<ArxivEntry> parse_arxiv_atom(std::string_view feed) {
    static const std::regex version_suffix("v[0-9]+$");
    std::vector<ArxivEntry> out;
    std::size_t pos = 0;
    while ((pos = feed.find("<entry>", pos)) != std::string_view::npos) {
        const auto end = feed.find("</entry>", pos);
        if (end == std::string_view::npos) break;
        const std::string_view block = feed.substr(pos, end - pos);
        pos = end;
        std::string id = detail::xml_element(block, "id");
        const std::string published = detail::xml_element(block, "published");
        if (const auto abs = id.find("/abs/"); abs != std::string::npos) id = id.substr(abs + 5);
        id = std::regex_replace(id, version_suffix, "");
        std::replace(id.begin(), id.end(), '/', '_');
        if (id.empty() || published.size() < 4) continue;
        int year = 0;
        try {
            year = std::stoi(published.substr(0, 4));
        } catch (const std::exception&) {
            continue;
        }
        out.push_back({id, year});
    }
    return out;
}

inline std::vector<SourceSpec> list_arxiv_category(const std::string& category, int from_year, http::Client& client,
                                                   const ArxivListingOptions& options = {}) {
    static const std::regex taxonomy(R"(^[a-z-]+(\.[A-Za-z-]+)?$)");
    if (!std::regex_match(category, taxonomy)) throw ConfigError("invalid arXiv category '" + category + "'");
    if (from_year < 1991) throw ConfigError("from_year must be >= 1991");
    if (options.page_size <= 0) throw ConfigError("page_size must be positive");

    std::vector<SourceSpec> specs;
    std::set<std::string> seen;
    for (int start = 0;; start += options.page_size) {
        const std::string url = options.api_url + "?search_query=cat:" + category + "&start=" +
                                std::to_string(start) + "&max_results=" + std::to_string(options.page_size) +
                                "&sortBy=submittedDate&sortOrder=descending";
        const http::Response res = client.get(url);
        if (!res.ok()) throw NetworkError(url + ": HTTP " + std::to_string(res.status));
        const auto page = parse_arxiv_atom(res.body);
        for (const auto& e : page) {
            if (e.year < from_year || !seen.insert(e.id).second) continue;
            specs.push_back({e.id, Family::arxiv, options.eprint_base + e.id, SourceFormat::latex_archive});
            if (options.max_results > 0 && static_cast<int>(specs.size()) >= options.max_results) return specs;
        }
        // Results come newest first; once a page reaches before from_year we are done.
        if (static_cast<int>(page.size()) < options.page_size || page.empty() || page.back().year < from_year) break;
    }
    return specs;
}

// ---------------------------------------------------------------------------
// Fetching

struct FetchContext {
    std::filesystem::path store_root = "store";
    http::Client* client = nullptr; // required only for remote locators
    std::function<std::string()> now = [] { return log::utc_timestamp(); };
};

inline std::filesystem::path store_path(const std::filesystem::path& root, const SourceSpec& spec) {
    return root / to_string(spec.family) / (spec.id + "." + std::string(store_extension(spec.expected_format)));
}

// Verifies a fetched entry's payload against its recorded digest.
inline void verify_payload(const ManifestEntry& entry, const std::filesystem::path& store_root) {
    const auto path = store_path(store_root, entry.spec);
    if (!std::filesystem::exists(path)) throw ChecksumMismatch("stored payload missing: " + path.string());
    const std::string actual = sha256_file(path);
    if (!entry.content_hash || actual != *entry.content_hash) {
        throw ChecksumMismatch(entry.spec.id + ": stored payload hash " + actual + " differs from manifest");
    }
}

// Downloads (or copies) one payload into the store and returns the entry's
// next state. Touches only the entry's own store path.
inline ManifestEntry fetch_entry(const ManifestEntry& entry, const FetchContext& ctx) {
    if (entry.state == FetchState::fetched) {
        verify_payload(entry, ctx.store_root);
        return entry;
    }
    std::string payload;
    const auto& spec = entry.spec;
    if (http::is_remote(spec.locator)) {
        if (spec.family == Family::books) throw ConfigError("books are never fetched over the network");
        if (!ctx.client) throw ConfigError("no HTTP client configured for remote locator " + spec.locator);
        const http::Response res = ctx.client->get(spec.locator);
        if (!res.ok()) throw NetworkError(spec.locator + ": HTTP " + std::to_string(res.status));
        payload = res.body;
    } else {
        std::string local = spec.locator;
        if (local.rfind("file://", 0) == 0) local = local.substr(7);
        payload = fsutil::read_file(local);
    }
    fsutil::write_file_atomic(store_path(ctx.store_root, spec), payload);
    ManifestEntry next = entry;
    next.state = FetchState::fetched;
    next.content_hash = sha256_hex(payload);
    next.fetched_at = ctx.now();
    next.error.reset();
    return next;
}

inline SourceManifest fetch_document(const SourceSpec& spec, const SourceManifest& manifest, const FetchContext& ctx) {
    const ManifestEntry* entry = manifest.find(spec.id);
    if (!entry) throw ConfigError("source '" + spec.id + "' is not registered in the manifest");
    SourceManifest next = manifest;
    next.put(fetch_entry(*entry, ctx));
    return next;
}

struct FetchSummary {
    std::size_t fetched = 0;   // newly stored this run
    std::size_t unchanged = 0; // already fetched, digest verified
    std::size_t failed = 0;
    std::vector<std::string> errors;
};

/// Fetches every entry of the manifest with up to `concurrency` workers.
/// Workers write disjoint store paths; manifest mutation and the
/// `on_transition` callback (used to persist) run under a single lock.
/// A fetched entry whose payload fails verification is demoted to failed so
/// the next run fetches it again.
inline FetchSummary fetch_all(SourceManifest& manifest, const FetchContext& ctx, std::size_t concurrency = 4,
                              const std::function<void(const SourceManifest&)>& on_transition = {}) {
    const std::vector<ManifestEntry> snapshot = manifest.entries();
    FetchSummary summary;
    std::mutex writer;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < snapshot.size(); i = next++) {
            const ManifestEntry& entry = snapshot[i];
            ManifestEntry result = entry;
            std::string failure;
            try {
                result = fetch_entry(entry, ctx);
            } catch (const Error& e) {
                failure = e.code() + ": " + e.what();
            } catch (const std::exception& e) {
                failure = e.what();
            }
            std::lock_guard lock(writer);
            if (!failure.empty()) {
                result.state = FetchState::failed;
                result.content_hash.reset();
                result.fetched_at.reset();
                result.error = failure;
                ++summary.failed;
                summary.errors.push_back(entry.spec.id + ": " + failure);
                log::warn("acquire", entry.spec.id + " failed: " + failure);
            } else if (entry.state == FetchState::fetched) {
                ++summary.unchanged;
                continue; // nothing changed, nothing to persist
            } else {
                ++summary.fetched;
            }
            manifest.put(std::move(result));
            if (on_transition) on_transition(manifest);
        }
    };

    const std::size_t n = std::max<std::size_t>(1, std::min(concurrency, snapshot.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    std::sort(summary.errors.begin(), summary.errors.end());
    return summary;
}

} // namespace corpusforge
