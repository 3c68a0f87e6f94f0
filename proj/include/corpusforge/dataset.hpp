#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/acquisition.hpp"
#include "corpusforge/chunker.hpp"
#include "corpusforge/document.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/qagen.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

struct UnsupervisedRecord {
    std::string text;
    std::string source_id;
    Family corpus = Family::arxiv;

    friend bool operator==(const UnsupervisedRecord&, const UnsupervisedRecord&) = default;
};

struct SupervisedRecord {
    std::string question;
    std::string answer;
    std::string source_id;
    std::string chunk_id;
    Family corpus = Family::arxiv;

    friend bool operator==(const SupervisedRecord&, const SupervisedRecord&) = default;
};

// A normalized document together with the family it came from.
struct CorpusDoc {
    CanonicalDoc doc;
    Family family = Family::arxiv;
};

inline nlohmann::json to_json(const UnsupervisedRecord& r) {
    return {{"text", r.text}, {"source_id", r.source_id}, {"corpus", to_string(r.corpus)}};
}

inline nlohmann::json to_json(const SupervisedRecord& r) {
    return {{"question", r.question},   {"answer", r.answer},  {"source_id", r.source_id},
            {"chunk_id", r.chunk_id},   {"corpus", to_string(r.corpus)}};
}

namespace dataset_detail {

inline Family corpus_field(const nlohmann::json& j) {
    auto f = parse_family(j.at("corpus").get<std::string>());
    if (!f) throw SchemaError("unknown corpus " + j.at("corpus").dump());
    return *f;
}

} // namespace dataset_detail

inline UnsupervisedRecord unsupervised_from_json(const nlohmann::json& j) {
    try {
        UnsupervisedRecord r{j.at("text").get<std::string>(), j.at("source_id").get<std::string>(),
                             dataset_detail::corpus_field(j)};
        if (text::trim(r.text).empty()) throw SchemaError("empty text in record for " + r.source_id);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad tp record: ") + e.what());
    }
}

inline SupervisedRecord supervised_from_json(const nlohmann::json& j) {
    try {
        SupervisedRecord r{j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
                           j.at("source_id").get<std::string>(), j.at("chunk_id").get<std::string>(),
                           dataset_detail::corpus_field(j)};
        if (!satisfies_invariants(QAPair{r.question, r.answer, r.chunk_id, r.source_id})) {
            throw SchemaError("tqa record violates QA pair invariants (chunk " + r.chunk_id + ")");
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad tqa record: ") + e.what());
    }
}

// Book chunks carry their heading path as Markdown headings so each record
// stands on its own.
inline std::string book_chunk_text(const Chunk& c) {
    std::vector<Block> heads;
    for (std::size_t i = 0; i < c.heading_path.size(); ++i) {
        heads.push_back(Block::heading(static_cast<int>(std::min<std::size_t>(i + 1, 6)), c.heading_path[i]));
    }
    std::string out = render_blocks(heads);
    if (!out.empty() && !c.text.empty()) out += "\n\n";
    return out + c.text;
}

/// Text-prediction records: the rendered canonical text, one record per
/// document for arxiv and jacow, one per section chunk for books. Empty
/// documents are skipped with a warning.
inline std::vector<UnsupervisedRecord> emit_tp(const std::vector<CorpusDoc>& docs,
                                               std::size_t max_tokens = kDefaultMaxTokens,
                                               Diagnostics* diag = nullptr) {
    std::vector<UnsupervisedRecord> out;
    for (const auto& [doc, family] : docs) {
        const std::string all = render_canonical(doc);
        if (text::trim(all).empty()) {
            if (diag) diag->push_back({doc.source_id, 0, "empty document skipped"});
            continue;
        }
        if (family != Family::books) {
            out.push_back({all, doc.source_id, family});
            continue;
        }
        for (const auto& c : split_sections(doc, max_tokens)) {
            std::string t = book_chunk_text(c);
            if (text::trim(t).empty()) continue;
            out.push_back({std::move(t), doc.source_id, family});
        }
    }
    return out;
}

inline SupervisedRecord to_supervised(const QAPair& p, Family corpus) {
    return {p.question, p.answer, p.source_id, p.chunk_id, corpus};
}

// Exact dedup on (question, answer); the first occurrence wins.
inline std::vector<SupervisedRecord> emit_tqa(const std::vector<SupervisedRecord>& records) {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<SupervisedRecord> out;
    for (const auto& r : records) {
        if (seen.emplace(r.question, r.answer).second) out.push_back(r);
    }
    return out;
}

/// Keeps, in order, the records whose `text_of(record)` contains `keyword`
/// as a case-sensitive substring.
template <class Record, class TextOf>
std::vector<Record> filter_by_keyword(const std::vector<Record>& records, std::string_view keyword, TextOf text_of) {
    if (keyword.empty()) throw ConfigError("filter keyword must be non-empty");
    std::vector<Record> out;
    for (const auto& r : records) {
        if (std::string_view(text_of(r)).find(keyword) != std::string_view::npos) out.push_back(r);
    }
    return out;
}

inline std::vector<UnsupervisedRecord> filter_by_keyword(const std::vector<UnsupervisedRecord>& records,
                                                         std::string_view keyword) {
    return filter_by_keyword(records, keyword, [](const UnsupervisedRecord& r) -> const std::string& { return r.text; });
}

// Supervised records match on question, answer and the text of the chunk
// they were generated from. Fields are joined by newlines so a match never
// spans two of them.
inline std::vector<SupervisedRecord> filter_by_keyword(const std::vector<SupervisedRecord>& records,
                                                       std::string_view keyword,
                                                       const std::map<std::string, std::string>& chunk_text = {}) {
    return filter_by_keyword(records, keyword, [&](const SupervisedRecord& r) {
        std::string s = r.question + '\n' + r.answer;
        if (auto it = chunk_text.find(r.chunk_id); it != chunk_text.end()) s += '\n' + it->second;
        return s;
    });
}

using CountMap = std::map<std::string, std::uint64_t>;

struct DatasetStats {
    std::uint64_t total = 0;
    CountMap per_corpus_unsupervised;
    CountMap per_corpus_supervised;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

inline DatasetStats compute_stats(const CountMap& tp_counts, const CountMap& tqa_counts) {
    DatasetStats s{0, tp_counts, tqa_counts};
    for (const auto& [_, n] : tp_counts) s.total += n;
    for (const auto& [_, n] : tqa_counts) s.total += n;
    return s;
}

template <class Record>
CountMap count_by_corpus(const std::vector<Record>& records) {
    CountMap m;
    for (const auto& r : records) ++m[to_string(r.corpus)];
    return m;
}

inline nlohmann::json to_json(const DatasetStats& s) {
    return {{"total", s.total},
            {"per_corpus_unsupervised", s.per_corpus_unsupervised},
            {"per_corpus_supervised", s.per_corpus_supervised}};
}

inline DatasetStats stats_from_json(const nlohmann::json& j) {
    try {
        DatasetStats s{j.at("total").get<std::uint64_t>(), j.at("per_corpus_unsupervised").get<CountMap>(),
                       j.at("per_corpus_supervised").get<CountMap>()};
        if (compute_stats(s.per_corpus_unsupervised, s.per_corpus_supervised).total != s.total) {
            throw SchemaError("stats total does not equal the sum of per-corpus counts");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad stats: ") + e.what());
    }
}

} // namespace corpusforge
