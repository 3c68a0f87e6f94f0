#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corpusforge/pipeline.hpp"

namespace corpusforge::cli {

inline std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

// Errors that mean "fix your input", as opposed to a run that went wrong.
inline bool is_config_error(const Error& e) {
    static const std::set<std::string> codes{"ConfigError", "ParseError", "DuplicateId", "SchemaError", "EncodingError"};
    return codes.count(e.code()) > 0;
}

inline void error_line(std::ostream& err, std::string_view stage, std::string_view code, std::string_view msg) {
    err << "error stage=" << stage << " code=" << code << " message=" << quote(msg) << "\n";
}

/// Entry point of the `corpusforge` tool. Settings resolve as
/// flag > environment > --config file > built-in default.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Builds text-prediction and QA fine-tuning datasets from scientific publications."};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::optional<std::string> config_file, store, output_dir, sources, llm_url, model, prompt_file, keyword, log_level;
    std::optional<std::string> base_model, learning_rate, targets;
    std::optional<std::size_t> max_tokens, fetch_conc, qa_conc, context_tokens;
    std::optional<int> rank, alpha, batch, accum, epochs;
    bool dry_run = false, two_pass = false, dump_chunks = false, retry_discarded = false;

    app.add_option("--config", config_file, "JSON config file");
    app.add_option("--store", store, "store root (env CORPUSFORGE_STORE)");
    app.add_option("--output-dir", output_dir, "directory for canonical text, QA logs and datasets");
    app.add_flag("--dry-run", dry_run, "print planned actions without side effects");
    app.add_option("--log-level", log_level, "debug|info|warn|error")->check(CLI::IsMember({"debug", "info", "warn", "error"}));
    app.add_option("--sources", sources, "source list file");
    app.add_option("--fetch-concurrency", fetch_conc, "parallel downloads");
    app.add_option("--max-tokens", max_tokens, "chunk budget in estimated tokens");
    app.add_option("--llm-url", llm_url, "chat-completion base URL (env CORPUSFORGE_LLM_URL)");
    app.add_option("--model", model, "model name sent to the endpoint");
    app.add_option("--prompt-file", prompt_file, "prompt template file with one $TEXT placeholder");
    app.add_option("--qa-concurrency", qa_conc, "parallel endpoint calls");
    app.add_flag("--two-pass", two_pass, "ask for questions first, then for answers");
    app.add_flag("--retry-discarded", retry_discarded, "regenerate chunks whose response was discarded");
    app.add_flag("--dump-chunks", dump_chunks, "write chunks/<source>/<ordinal>.md");
    app.add_option("--filter-keyword", keyword, "also write tp.<kw>.jsonl and tqa.<kw>.jsonl");
    app.add_option("--base-model", base_model);
    app.add_option("--context-tokens", context_tokens);
    app.add_option("--lora-rank", rank);
    app.add_option("--lora-alpha", alpha);
    app.add_option("--batch", batch, "per-device batch size");
    app.add_option("--grad-accum", accum);
    app.add_option("--epochs", epochs);
    app.add_option("--learning-rate", learning_rate);
    app.add_option("--targets", targets, "comma-separated subset of query,key,value,projection");

    const std::map<std::string, std::function<int(const PipelineConfig&, std::ostream&)>> commands{
        {"acquire", cmd_acquire},   {"normalize", cmd_normalize}, {"generate", cmd_generate},
        {"assemble", cmd_assemble}, {"manifest", cmd_manifest},   {"pipeline", cmd_pipeline},
        {"stats", cmd_stats},
    };
    const std::map<std::string, std::string> help{
        {"acquire", "register and fetch sources into the store"},
        {"normalize", "convert fetched payloads to canonical Markdown"},
        {"generate", "chunk documents and generate QA pairs"},
        {"assemble", "write tp.jsonl, tqa.jsonl and stats.json"},
        {"manifest", "write train_manifest.json"},
        {"pipeline", "run every stage in order"},
        {"stats", "print dataset statistics"},
    };
    for (const auto& [name, _] : commands) app.add_subcommand(name, help.at(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        error_line(err, "cli", "UsageError", e.what());
        return kExitConfig;
    }
    const std::string stage = app.get_subcommands().front()->get_name();

    if (log_level) {
        static const std::map<std::string, log::Level> levels{
            {"debug", log::Level::debug}, {"info", log::Level::info}, {"warn", log::Level::warn}, {"error", log::Level::error}};
        log::settings().min_level = levels.at(*log_level);
    }

    try {
        PipelineConfig cfg;
        if (config_file) load_config_file(cfg, *config_file);
        apply_environment(cfg);
        if (store) cfg.store_root = *store;
        if (output_dir) cfg.output_dir = *output_dir;
        if (sources) cfg.source_list = *sources;
        if (fetch_conc) cfg.fetch_concurrency = *fetch_conc;
        if (max_tokens) cfg.max_tokens = *max_tokens;
        if (llm_url) cfg.endpoint.base_url = *llm_url;
        if (model) cfg.endpoint.model = *model;
        if (prompt_file) cfg.prompt_template = fsutil::read_file(*prompt_file);
        if (qa_conc) cfg.qa_concurrency = *qa_conc;
        if (two_pass) cfg.qa_mode = GenerationMode::two_pass;
        if (retry_discarded) cfg.retry_discarded = true;
        if (dump_chunks) cfg.dump_chunks = true;
        if (keyword) cfg.filter_keyword = *keyword;
        cfg.dry_run = dry_run;

        if (base_model) cfg.train.base_model = *base_model;
        if (context_tokens) cfg.train.context_tokens = *context_tokens;
        if (rank) cfg.train.lora_rank = *rank;
        if (alpha) cfg.train.lora_alpha = *alpha;
        if (batch) cfg.train.per_device_batch = *batch;
        if (accum) cfg.train.grad_accum = *accum;
        if (epochs) cfg.train.epochs = *epochs;
        if (learning_rate) {
            try {
                cfg.train.learning_rate = parse_learning_rate(*learning_rate);
            } catch (const SchemaError& e) {
                throw ConfigError(e.what());
            }
        }
        if (targets) {
            cfg.train.target_weights.clear();
            std::stringstream ss(*targets);
            for (std::string t; std::getline(ss, t, ',');) {
                auto w = parse_target_weight(text::trim(t));
                if (!w) throw ConfigError("unknown target weight '" + t + "'");
                cfg.train.target_weights.push_back(*w);
            }
        }
        validate(cfg.train);

        return commands.at(stage)(cfg, out);
    } catch (const Error& e) {
        error_line(err, stage, e.code(), e.what());
        return is_config_error(e) ? kExitConfig : kExitPartial;
    } catch (const std::exception& e) {
        error_line(err, stage, "InternalError", e.what());
        return kExitPartial;
    }
}

} // namespace corpusforge::cli
