#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/acquisition.hpp"
#include "corpusforge/archive.hpp"
#include "corpusforge/chunker.hpp"
#include "corpusforge/dataset.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/fsutil.hpp"
#include "corpusforge/http.hpp"
#include "corpusforge/jsonl.hpp"
#include "corpusforge/latex.hpp"
#include "corpusforge/log.hpp"
#include "corpusforge/mmd.hpp"
#include "corpusforge/qagen.hpp"
#include "corpusforge/train_manifest.hpp"

namespace corpusforge {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitConfig = 2 };

struct PipelineConfig {
    fs::path store_root = "store";
    fs::path source_list = "sources.txt";
    fs::path output_dir = "out";
    std::size_t max_tokens = kDefaultMaxTokens;
    std::optional<std::string> filter_keyword;
    bool dry_run = false;
    bool dump_chunks = false;

    std::size_t fetch_concurrency = 4;
    long fetch_min_interval_ms = 3000; // politeness delay per host

    EndpointConfig endpoint;
    std::string prompt_template{kDefaultPrompt};
    GenerationMode qa_mode = GenerationMode::single_pass;
    std::size_t qa_concurrency = 2;
    bool retry_discarded = false;

    TrainConfig train = default_paper_config();
};

inline void validate(const PipelineConfig& c) {
    if (c.max_tokens == 0) throw ConfigError("max_tokens must be positive");
    if (c.fetch_concurrency == 0 || c.qa_concurrency == 0) throw ConfigError("concurrency must be positive");
    if (c.filter_keyword) {
        if (c.filter_keyword->empty()) throw ConfigError("filter keyword must be non-empty");
        if (c.filter_keyword->find_first_of("/\\") != std::string::npos) {
            throw ConfigError("filter keyword cannot contain path separators");
        }
    }
    PromptTemplate check(c.prompt_template);
}

namespace pipeline_detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

} // namespace pipeline_detail

// Applies a JSON config object on top of `c`. Unknown keys are rejected so
// typos do not pass silently.
inline void apply_config_json(PipelineConfig& c, const nlohmann::json& j) {
    using pipeline_detail::take;
    static const std::set<std::string> top{"store_root", "source_list", "output_dir", "max_tokens",
                                           "filter_keyword", "fetch_concurrency", "fetch_min_interval_ms",
                                           "qa", "train"};
    static const std::set<std::string> qa_keys{"url", "model", "temperature", "max_output_tokens",
                                               "context_tokens", "concurrency", "mode", "prompt_template",
                                               "retry_discarded"};
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        for (const auto& [k, _] : j.items()) {
            if (!top.count(k)) throw ConfigError("unknown config key '" + k + "'");
        }
        if (j.contains("store_root")) c.store_root = j["store_root"].get<std::string>();
        if (j.contains("source_list")) c.source_list = j["source_list"].get<std::string>();
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        take(j, "max_tokens", c.max_tokens);
        if (j.contains("filter_keyword")) c.filter_keyword = j["filter_keyword"].get<std::string>();
        take(j, "fetch_concurrency", c.fetch_concurrency);
        take(j, "fetch_min_interval_ms", c.fetch_min_interval_ms);
        if (j.contains("qa")) {
            const auto& q = j["qa"];
            for (const auto& [k, _] : q.items()) {
                if (!qa_keys.count(k)) throw ConfigError("unknown config key 'qa." + k + "'");
            }
            take(q, "url", c.endpoint.base_url);
            take(q, "model", c.endpoint.model);
            take(q, "temperature", c.endpoint.temperature);
            take(q, "max_output_tokens", c.endpoint.max_output_tokens);
            take(q, "context_tokens", c.endpoint.context_tokens);
            take(q, "concurrency", c.qa_concurrency);
            take(q, "prompt_template", c.prompt_template);
            take(q, "retry_discarded", c.retry_discarded);
            if (q.contains("mode")) {
                const auto m = q["mode"].get<std::string>();
                if (m == "single_pass") c.qa_mode = GenerationMode::single_pass;
                else if (m == "two_pass") c.qa_mode = GenerationMode::two_pass;
                else throw ConfigError("unknown qa.mode '" + m + "'");
            }
        }
        if (j.contains("train")) {
            nlohmann::json merged = to_json(c.train);
            for (const auto& [k, v] : j["train"].items()) {
                if (!merged.contains(k) || k == "version") throw ConfigError("unknown config key 'train." + k + "'");
                merged[k] = v;
            }
            c.train = train_config_from_json(merged);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const SchemaError& e) {
        throw ConfigError(e.what());
    }
}

inline void load_config_file(PipelineConfig& c, const fs::path& path) {
    std::string content;
    try {
        content = fsutil::read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    try {
        apply_config_json(c, nlohmann::json::parse(content));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void apply_environment(PipelineConfig& c) {
    if (const char* v = std::getenv("CORPUSFORGE_STORE"); v && *v) c.store_root = v;
    if (const char* v = std::getenv("CORPUSFORGE_LLM_URL"); v && *v) c.endpoint.base_url = v;
    if (const char* v = std::getenv("CORPUSFORGE_LLM_KEY"); v && *v) c.endpoint.api_key = v;
}

// ---------------------------------------------------------------------------
// Layout

inline fs::path manifest_path(const PipelineConfig& c) { return c.store_root / "manifest.json"; }
inline fs::path canonical_dir(const PipelineConfig& c) { return c.output_dir / "canonical"; }
inline fs::path canonical_path(const PipelineConfig& c, const std::string& id) { return canonical_dir(c) / (id + ".md"); }
inline fs::path qa_raw_path(const PipelineConfig& c) { return c.output_dir / "qa_raw.jsonl"; }
inline fs::path qa_pairs_path(const PipelineConfig& c) { return c.output_dir / "qa_pairs.jsonl"; }

inline std::string ordinal_name(std::size_t ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu.md", ordinal);
    return buf;
}

// ---------------------------------------------------------------------------
// Stages. Each returns an exit code; configuration problems throw.

inline int cmd_acquire(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    const auto specs = load_source_list(cfg.source_list);
    SourceManifest manifest = SourceManifest::load(manifest_path(cfg));
    std::size_t added = 0;
    for (const auto& s : specs) added += manifest.register_source(s) ? 1 : 0;

    if (cfg.dry_run) {
        out << "plan: register " << added << " new source(s)\n";
        for (const auto& e : manifest.entries()) {
            out << "plan: " << (e.state == FetchState::fetched ? "verify " : "fetch ") << e.spec.id << " <- "
                << e.spec.locator << "\n";
        }
        return kExitOk;
    }

    http::ClientOptions opts;
    opts.limiter = std::make_shared<http::HostRateLimiter>(http::Millis(cfg.fetch_min_interval_ms));
    http::Client client(opts);
    FetchContext ctx;
    ctx.store_root = cfg.store_root;
    ctx.client = &client;
    const auto path = manifest_path(cfg);
    if (added > 0 || !fs::exists(path)) manifest.save(path);
    const auto summary = fetch_all(manifest, ctx, cfg.fetch_concurrency, [&](const SourceManifest& m) { m.save(path); });
    out << summary.fetched << " fetched, " << summary.unchanged << " unchanged, " << summary.failed << " failed\n";
    log::info("acquire", std::to_string(client.attempts()) + " network request(s)");
    return summary.failed > 0 ? kExitPartial : kExitOk;
}

// Reads one fetched payload into a canonical document. Returns nullopt
// (with a warning) when there is nothing this build can convert.
inline std::optional<CanonicalDoc> normalize_entry(const PipelineConfig& cfg, const ManifestEntry& e, Diagnostics& diag) {
    const auto path = store_path(cfg.store_root, e.spec);
    switch (e.spec.expected_format) {
    case SourceFormat::latex_archive:
        return convert_latex_source(archive::extract_latex_source(fsutil::read_file(path)), e.spec.id, &diag);
    case SourceFormat::mmd:
        return parse_mmd(fsutil::read_file(path), e.spec.id, &diag);
    case SourceFormat::pdf: {
        // PDFs are OCR'd outside this tool; use a transcript next to the
        // stored payload or next to a local original.
        std::vector<fs::path> candidates{fs::path(path).replace_extension(".mmd")};
        if (!http::is_remote(e.spec.locator)) {
            std::string local = e.spec.locator;
            if (local.rfind("file://", 0) == 0) local = local.substr(7);
            candidates.push_back(fs::path(local).replace_extension(".mmd"));
        }
        for (const auto& transcript : candidates) {
            if (fs::exists(transcript)) return parse_mmd(fsutil::read_file(transcript), e.spec.id, &diag);
        }
        diag.push_back({e.spec.id, 0, "pdf payload without an .mmd transcript; skipped"});
        return std::nullopt;
    }
    }
    return std::nullopt;
}

inline int cmd_normalize(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    const SourceManifest manifest = SourceManifest::load(manifest_path(cfg));
    std::vector<const ManifestEntry*> todo;
    for (const auto& e : manifest.entries()) {
        if (e.state == FetchState::fetched) todo.push_back(&e);
    }
    if (cfg.dry_run) {
        for (const auto* e : todo) out << "plan: normalize " << e->spec.id << " -> " << canonical_path(cfg, e->spec.id).string() << "\n";
        return kExitOk;
    }
    Diagnostics diag;
    std::size_t written = 0;
    std::size_t failed = 0;
    for (const auto* e : todo) {
        try {
            auto doc = normalize_entry(cfg, *e, diag);
            if (!doc) continue;
            fsutil::write_file_atomic(canonical_path(cfg, e->spec.id), render_canonical(*doc) + "\n");
            ++written;
        } catch (const Error& ex) {
            ++failed;
            diag.push_back({e->spec.id, 0, ex.code() + ": " + ex.what()});
            log::warn("normalize", e->spec.id + ": " + ex.what());
        }
    }
    std::vector<nlohmann::json> rows;
    for (const auto& w : diag) rows.push_back({{"source_id", w.source_id}, {"offset", w.offset}, {"message", w.message}});
    jsonl::write(canonical_dir(cfg) / "warnings.jsonl", rows);
    out << written << " normalized, " << failed << " failed, " << diag.size() << " warning(s)\n";
    return failed > 0 && written == 0 ? kExitPartial : kExitOk;
}

// Canonical documents in manifest order, each with its family.
inline std::vector<CorpusDoc> load_canonical_docs(const PipelineConfig& cfg) {
    const SourceManifest manifest = SourceManifest::load(manifest_path(cfg));
    std::vector<CorpusDoc> docs;
    for (const auto& e : manifest.entries()) {
        const auto path = canonical_path(cfg, e.spec.id);
        if (e.state != FetchState::fetched || !fs::exists(path)) continue;
        docs.push_back({parse_mmd(fsutil::read_file(path), e.spec.id), e.spec.family});
    }
    return docs;
}

// QA chunks: books by section, jacow papers whole when they fit. arXiv
// sources feed only the text-prediction set.
inline std::vector<Chunk> qa_chunks(const std::vector<CorpusDoc>& docs, std::size_t max_tokens) {
    std::vector<Chunk> all;
    for (const auto& [doc, family] : docs) {
        if (doc.blocks.empty() || family == Family::arxiv) continue;
        auto cs = family == Family::books ? split_sections(doc, max_tokens) : chunk_whole_or_split(doc, max_tokens);
        all.insert(all.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
    }
    return all;
}

inline std::vector<GenerationRecord> load_generation_log(const fs::path& path) {
    std::vector<GenerationRecord> recs;
    for (const auto& row : jsonl::read_if_exists(path)) recs.push_back(generation_record_from_json(row));
    return recs;
}

inline int cmd_generate(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    const auto chunks = qa_chunks(load_canonical_docs(cfg), cfg.max_tokens);
    const auto existing = load_generation_log(qa_raw_path(cfg));

    GenerationOptions opt;
    opt.prompt = PromptTemplate(cfg.prompt_template);
    opt.mode = cfg.qa_mode;
    opt.endpoint_model = cfg.endpoint.model;
    opt.concurrency = cfg.qa_concurrency;
    opt.retry_discarded = cfg.retry_discarded;

    std::map<std::string, const GenerationRecord*> latest;
    for (const auto& r : existing) latest[r.chunk_id] = &r;
    std::size_t pending = 0;
    for (const auto& c : chunks) {
        auto it = latest.find(c.chunk_id);
        if (it == latest.end() || !is_final(*it->second, cfg.retry_discarded)) ++pending;
    }

    if (cfg.dry_run) {
        out << "plan: " << chunks.size() << " chunk(s), " << pending << " to generate, "
            << chunks.size() - pending << " already done\n";
        return kExitOk;
    }
    if (cfg.dump_chunks) {
        for (const auto& c : chunks) {
            fsutil::write_file_atomic(cfg.output_dir / "chunks" / c.source_id / ordinal_name(c.ordinal), c.text + "\n");
        }
    }
    if (pending > 0 && cfg.endpoint.base_url.empty()) {
        throw ConfigError("no endpoint: set CORPUSFORGE_LLM_URL, --llm-url or qa.url");
    }

    http::Client client;
    const auto raw_path = qa_raw_path(cfg);
    fs::create_directories(cfg.output_dir);
    const auto result = generate_for_chunks(chunks, make_http_completer(cfg.endpoint, client), opt, existing,
                                            [&](const GenerationRecord& r) { fsutil::append_line(raw_path, to_json(r).dump()); });
    jsonl::write(qa_pairs_path(cfg), jsonl::to_rows(result.pairs, [](const QAPair& p) { return to_json(p); }));

    std::size_t accepted = 0;
    std::size_t retryable = 0;
    for (const auto& r : result.records) {
        if (r.accepted) ++accepted;
        else if (!is_final(r, false)) ++retryable;
    }
    out << result.new_records.size() << " generated, " << accepted << " accepted, "
        << result.records.size() - accepted << " discarded, " << result.pairs.size() << " pairs\n";
    log::info("generate", std::to_string(client.attempts()) + " network request(s)");
    return retryable > 0 ? kExitPartial : kExitOk;
}

inline int cmd_assemble(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    const auto docs = load_canonical_docs(cfg);
    std::map<std::string, Family> family_of;
    for (const auto& d : docs) family_of[d.doc.source_id] = d.family;

    std::vector<SupervisedRecord> supervised;
    for (const auto& row : jsonl::read_if_exists(qa_pairs_path(cfg))) {
        const auto p = qa_pair_from_json(row);
        auto it = family_of.find(p.source_id);
        if (it == family_of.end()) {
            log::warn("assemble", "QA pair for unknown source " + p.source_id + " dropped");
            continue;
        }
        supervised.push_back(to_supervised(p, it->second));
    }

    if (cfg.dry_run) {
        out << "plan: assemble " << docs.size() << " document(s) and " << supervised.size() << " QA pair(s) into "
            << cfg.output_dir.string() << "\n";
        return kExitOk;
    }

    Diagnostics diag;
    const auto tp = emit_tp(docs, cfg.max_tokens, &diag);
    for (const auto& w : diag) log::warn("assemble", w.source_id + ": " + w.message);
    const auto tqa = emit_tqa(supervised);
    const auto stats = compute_stats(count_by_corpus(tp), count_by_corpus(tqa));

    auto tp_rows = [](const std::vector<UnsupervisedRecord>& v) {
        return jsonl::to_rows(v, [](const UnsupervisedRecord& r) { return to_json(r); });
    };
    auto tqa_rows = [](const std::vector<SupervisedRecord>& v) {
        return jsonl::to_rows(v, [](const SupervisedRecord& r) { return to_json(r); });
    };
    jsonl::write(cfg.output_dir / "tp.jsonl", tp_rows(tp));
    jsonl::write(cfg.output_dir / "tqa.jsonl", tqa_rows(tqa));
    fsutil::write_file_atomic(cfg.output_dir / "stats.json", to_json(stats).dump(2) + "\n");

    if (cfg.filter_keyword) {
        const std::string& kw = *cfg.filter_keyword;
        std::map<std::string, std::string> chunk_text;
        for (const auto& c : qa_chunks(docs, cfg.max_tokens)) chunk_text[c.chunk_id] = c.text;
        const auto tp_kw = filter_by_keyword(tp, kw);
        const auto tqa_kw = filter_by_keyword(tqa, kw, chunk_text);
        jsonl::write(cfg.output_dir / ("tp." + kw + ".jsonl"), tp_rows(tp_kw));
        jsonl::write(cfg.output_dir / ("tqa." + kw + ".jsonl"), tqa_rows(tqa_kw));
        out << "filter '" << kw << "': " << tp_kw.size() << " tp, " << tqa_kw.size() << " tqa\n";
    }
    out << tp.size() << " tp, " << tqa.size() << " tqa, " << stats.total << " total\n";
    return kExitOk;
}

inline int cmd_manifest(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    TrainConfig t = cfg.train;
    if (t.dataset_paths.empty()) t.dataset_paths = {"tp.jsonl", "tqa.jsonl"};
    validate(t);
    const auto path = cfg.output_dir / "train_manifest.json";
    if (cfg.dry_run) {
        out << "plan: write " << path.string() << "\n" << serialize_manifest(t);
        return kExitOk;
    }
    write_manifest(t, path);
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

inline int cmd_stats(const PipelineConfig& cfg, std::ostream& out) {
    validate(cfg);
    std::vector<UnsupervisedRecord> tp;
    std::vector<SupervisedRecord> tqa;
    for (const auto& row : jsonl::read_if_exists(cfg.output_dir / "tp.jsonl")) tp.push_back(unsupervised_from_json(row));
    for (const auto& row : jsonl::read_if_exists(cfg.output_dir / "tqa.jsonl")) tqa.push_back(supervised_from_json(row));
    out << to_json(compute_stats(count_by_corpus(tp), count_by_corpus(tqa))).dump(2) << "\n";
    return kExitOk;
}

/// All stages in order. Completed work is never redone: fetched payloads
/// are only verified and chunks with a final generation record are skipped,
/// so a re-run over finished state makes no network request.
inline int cmd_pipeline(const PipelineConfig& cfg, std::ostream& out) {
    int worst = kExitOk;
    for (auto stage : {cmd_acquire, cmd_normalize, cmd_generate, cmd_assemble, cmd_manifest}) {
        worst = std::max(worst, stage(cfg, out));
    }
    return worst;
}

} // namespace corpusforge
