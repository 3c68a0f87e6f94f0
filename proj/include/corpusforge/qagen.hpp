#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/chunker.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/http.hpp"
#include "corpusforge/text.hpp"

namespace corpusforge {

inline constexpr std::string_view kTextPlaceholder = "$TEXT";
inline constexpr std::string_view kDefaultPrompt = "Generate ten questions for a paper:\"$TEXT\"";
inline constexpr int kQaGrammarVersion = 1;

class PromptTemplate {
public:
    PromptTemplate() : PromptTemplate(std::string(kDefaultPrompt)) {}

    explicit PromptTemplate(std::string tpl) : template_(std::move(tpl)) {
        const auto n = text::count_occurrences(template_, kTextPlaceholder);
        if (n != 1) {
            throw ConfigError("prompt template must contain exactly one $TEXT placeholder (found " +
                              std::to_string(n) + ")");
        }
    }

    const std::string& str() const { return template_; }

private:
    std::string template_;
};

// The placeholder receives the heading path (joined by " > ") and the chunk
// text, separated by a blank line; empty parts are left out.
inline std::string build_prompt(const PromptTemplate& tpl, const Chunk& chunk) {
    std::vector<std::string> parts;
    if (!chunk.heading_path.empty()) parts.push_back(text::join(chunk.heading_path, " > "));
    if (!chunk.text.empty()) parts.push_back(chunk.text);
    const std::string& t = tpl.str();
    const auto at = t.find(kTextPlaceholder);
    return t.substr(0, at) + text::join(parts, "\n\n") + t.substr(at + kTextPlaceholder.size());
}

struct QAPair {
    std::string question;
    std::string answer;
    std::string chunk_id;
    std::string source_id;

    friend bool operator==(const QAPair&, const QAPair&) = default;
};

inline bool satisfies_invariants(const QAPair& p) {
    const auto q = text::trim(p.question);
    return !q.empty() && q.back() == '?' && !text::trim(p.answer).empty() && text::is_valid_utf8(p.question) &&
           text::is_valid_utf8(p.answer);
}

struct ParsedResponse {
    std::vector<QAPair> pairs;
    std::optional<std::string> discard_reason; // set iff pairs is empty
    std::vector<std::string> violations;       // per-item problems, salvaged or not

    bool accepted() const { return !pairs.empty(); }
};

namespace qa_detail {

// "12. rest" or "12) rest" → (number, rest)
inline std::optional<std::string_view> item_head(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t digits = i;
    while (i < line.size() && i - digits < 4 && line[i] >= '0' && line[i] <= '9') ++i;
    if (i == digits || i - digits > 3 || i >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
    ++i;
    if (i >= line.size() || (line[i] != ' ' && line[i] != '\t')) return std::nullopt;
    return text::trim(line.substr(i));
}

inline std::optional<std::string_view> strip_marker(std::string_view s, std::initializer_list<std::string_view> markers) {
    s = text::trim(s);
    for (auto m : markers) {
        if (s.substr(0, m.size()) == m) return text::trim(s.substr(m.size()));
    }
    return std::nullopt;
}

// Position of an answer marker ("A:" / "Answer:") preceded by whitespace.
inline std::size_t inline_answer_marker(std::string_view s, std::size_t& marker_len) {
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i - 1] != ' ' && s[i - 1] != '\t') continue;
        for (std::string_view m : {std::string_view("A:"), std::string_view("Answer:")}) {
            if (s.substr(i, m.size()) == m) {
                marker_len = m.size();
                return i;
            }
        }
    }
    return std::string_view::npos;
}

struct Item {
    std::size_t number = 0; // 1-based position among items
    std::string_view head;
    std::vector<std::string_view> rest;
};

inline std::vector<Item> split_items(const std::vector<std::string_view>& lines) {
    std::vector<Item> items;
    for (auto line : lines) {
        if (auto head = item_head(line)) {
            items.push_back({items.size() + 1, *head, {}});
        } else if (!items.empty()) {
            items.back().rest.push_back(line);
        }
    }
    return items;
}

// Answer text continues over unprefixed lines up to a blank line.
inline std::string gather_answer(std::string_view first, const std::vector<std::string_view>& rest, std::size_t from) {
    std::string answer(text::trim(first));
    for (std::size_t k = from; k < rest.size(); ++k) {
        const auto t = text::trim(rest[k]);
        if (t.empty()) break;
        if (!answer.empty()) answer += ' ';
        answer += t;
    }
    return answer;
}

} // namespace qa_detail

/// Reads a completion against the QA format grammar (docs/qa-format.md):
///
///     N. Q: <question>? A: <answer>          (answer inline or on the next line)
///     N. <question ending in ?>
///     Answer: <answer>
///
/// Well-formed items are kept even when siblings are malformed; a response
/// with no well-formed item is discarded with the first violation as reason.
inline ParsedResponse parse_qa_response(std::string_view raw) {
    ParsedResponse out;
    const std::string src = text::normalize_newlines(raw);
    const auto items = qa_detail::split_items(text::split_lines(src));
    if (items.empty()) {
        out.discard_reason = "no_pairs_found";
        return out;
    }
    for (const auto& item : items) {
        std::string question;
        std::string answer;
        bool has_answer = false;
        if (auto q = qa_detail::strip_marker(item.head, {"Q:", "Question:"})) {
            std::size_t marker_len = 0;
            const auto at = qa_detail::inline_answer_marker(*q, marker_len);
            if (at != std::string_view::npos) {
                question = std::string(text::trim(q->substr(0, at)));
                answer = qa_detail::gather_answer(q->substr(at + marker_len), item.rest, 0);
                has_answer = true;
            } else {
                question = std::string(*q);
            }
        } else {
            question = std::string(item.head);
        }
        if (!has_answer && !item.rest.empty()) {
            if (auto a = qa_detail::strip_marker(item.rest.front(), {"A:", "Answer:"})) {
                answer = qa_detail::gather_answer(*a, item.rest, 1);
                has_answer = true;
            }
        }
        const std::string where = " (item " + std::to_string(item.number) + ")";
        QAPair pair{question, answer, {}, {}};
        if (!has_answer) {
            out.violations.push_back("missing_answer" + where);
        } else if (question.empty()) {
            out.violations.push_back("empty_question" + where);
        } else if (question.back() != '?') {
            out.violations.push_back("question_not_terminated" + where);
        } else if (text::trim(answer).empty()) {
            out.violations.push_back("empty_answer" + where);
        } else if (!satisfies_invariants(pair)) {
            out.violations.push_back("invalid_utf8" + where);
        } else {
            out.pairs.push_back(std::move(pair));
        }
    }
    if (out.pairs.empty()) out.discard_reason = out.violations.front();
    return out;
}

// Numbered lines ending in '?', for the first call of two-pass generation.
inline std::vector<std::string> parse_question_list(std::string_view raw) {
    std::vector<std::string> qs;
    const std::string src = text::normalize_newlines(raw);
    for (auto line : text::split_lines(src)) {
        auto head = qa_detail::item_head(line);
        if (!head) continue;
        std::string_view q = *head;
        if (auto stripped = qa_detail::strip_marker(q, {"Q:", "Question:"})) q = *stripped;
        if (!q.empty() && q.back() == '?' && text::is_valid_utf8(q)) qs.emplace_back(q);
    }
    return qs;
}

inline std::string build_answer_prompt(const Chunk& chunk, const std::vector<std::string>& questions) {
    std::string p = "Answer each question using the text below. Reply with one item per question in the form "
                    "\"N. Q: <question> A: <answer>\".\n\nText:\"";
    p += build_prompt(PromptTemplate("$TEXT"), chunk);
    p += "\"\n\nQuestions:\n";
    for (std::size_t i = 0; i < questions.size(); ++i) p += std::to_string(i + 1) + ". " + questions[i] + "\n";
    return p;
}

// ---------------------------------------------------------------------------
// Endpoint

struct EndpointConfig {
    std::string base_url; // OpenAI-compatible root, e.g. http://host:8000/v1
    std::string api_key;
    std::string model = "vicuna-7b-16k-v1.5";
    double temperature = 0.7;
    std::size_t max_output_tokens = 2048;
    std::size_t context_tokens = 16384;
};

inline std::string chat_completions_url(std::string base) {
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + "/chat/completions";
}

inline std::string request_generation(const std::string& prompt, const EndpointConfig& cfg, http::Client& client) {
    const std::size_t est = estimate_tokens(prompt);
    if (est + cfg.max_output_tokens > cfg.context_tokens) {
        throw ContextOverflow("prompt of " + std::to_string(est) + " est. tokens plus " +
                              std::to_string(cfg.max_output_tokens) + " output tokens exceeds context of " +
                              std::to_string(cfg.context_tokens));
    }
    if (cfg.base_url.empty()) throw ConfigError("no chat-completion endpoint configured");
    const nlohmann::json body{
        {"model", cfg.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", cfg.temperature},
        {"max_tokens", cfg.max_output_tokens},
    };
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    const auto res = client.post(chat_completions_url(cfg.base_url), body.dump(), "application/json", headers);
    if (!res.ok()) throw EndpointError(res.status, res.body);
    try {
        const auto j = nlohmann::json::parse(res.body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed completion response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Generation driver

struct GenerationRecord {
    std::string chunk_id;
    std::string raw_response;
    bool accepted = false;
    std::size_t n_pairs = 0;    // accepted only
    std::string discard_reason; // discarded only
    std::string endpoint_model;
    std::int64_t latency_ms = 0;

    friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

inline constexpr std::string_view kErrorReasonPrefix = "error: ";

// Transport and endpoint failures are retried on the next run; format
// discards and context overflows are final unless `retry_discarded`.
inline bool is_final(const GenerationRecord& r, bool retry_discarded) {
    if (r.accepted) return true;
    if (retry_discarded) return false;
    return r.discard_reason.rfind(kErrorReasonPrefix, 0) != 0;
}

inline nlohmann::json to_json(const GenerationRecord& r) {
    nlohmann::json outcome = r.accepted ? nlohmann::json{{"status", "accepted"}, {"n_pairs", r.n_pairs}}
                                        : nlohmann::json{{"status", "discarded"}, {"reason", r.discard_reason}};
    return {{"chunk_id", r.chunk_id},       {"raw_response", r.raw_response}, {"outcome", outcome},
            {"endpoint_model", r.endpoint_model}, {"latency_ms", r.latency_ms}, {"grammar_version", kQaGrammarVersion}};
}

inline GenerationRecord generation_record_from_json(const nlohmann::json& j) {
    try {
        GenerationRecord r;
        r.chunk_id = j.at("chunk_id").get<std::string>();
        r.raw_response = j.at("raw_response").get<std::string>();
        r.endpoint_model = j.at("endpoint_model").get<std::string>();
        r.latency_ms = j.at("latency_ms").get<std::int64_t>();
        const auto& o = j.at("outcome");
        r.accepted = o.at("status").get<std::string>() == "accepted";
        if (r.accepted) {
            r.n_pairs = o.at("n_pairs").get<std::size_t>();
            if (r.n_pairs == 0) throw SchemaError("accepted record with zero pairs");
        } else {
            r.discard_reason = o.at("reason").get<std::string>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad generation record: ") + e.what());
    }
}

inline nlohmann::json to_json(const QAPair& p) {
    return {{"question", p.question}, {"answer", p.answer}, {"chunk_id", p.chunk_id}, {"source_id", p.source_id}};
}

inline QAPair qa_pair_from_json(const nlohmann::json& j) {
    try {
        QAPair p{j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
                 j.at("chunk_id").get<std::string>(), j.at("source_id").get<std::string>()};
        if (!satisfies_invariants(p)) throw SchemaError("QA pair violates invariants");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad QA pair: ") + e.what());
    }
}

enum class GenerationMode { single_pass, two_pass };

using Completer = std::function<std::string(const std::string& prompt)>;

inline Completer make_http_completer(EndpointConfig cfg, http::Client& client) {
    return [cfg = std::move(cfg), &client](const std::string& prompt) { return request_generation(prompt, cfg, client); };
}

struct GenerationOptions {
    PromptTemplate prompt;
    GenerationMode mode = GenerationMode::single_pass;
    std::string endpoint_model;
    std::size_t concurrency = 2;
    bool retry_discarded = false;
    std::function<std::int64_t()> now_ms = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    };
};

struct GenerationResult {
    std::vector<QAPair> pairs;               // from every accepted record, chunk order
    std::vector<GenerationRecord> records;   // exactly one per input chunk
    std::vector<GenerationRecord> new_records;
};

inline GenerationRecord generate_one(const Chunk& chunk, const Completer& complete, const GenerationOptions& opt) {
    GenerationRecord rec;
    rec.chunk_id = chunk.chunk_id;
    rec.endpoint_model = opt.endpoint_model;
    const auto t0 = opt.now_ms();
    try {
        std::string raw;
        if (opt.mode == GenerationMode::single_pass) {
            raw = complete(build_prompt(opt.prompt, chunk));
        } else {
            const std::string questions_raw = complete(build_prompt(opt.prompt, chunk));
            const auto questions = parse_question_list(questions_raw);
            if (questions.empty()) {
                rec.raw_response = questions_raw;
                rec.discard_reason = "no_questions_found";
                rec.latency_ms = opt.now_ms() - t0;
                return rec;
            }
            raw = complete(build_answer_prompt(chunk, questions));
        }
        rec.raw_response = raw;
        const auto parsed = parse_qa_response(raw);
        rec.accepted = parsed.accepted();
        rec.n_pairs = parsed.pairs.size();
        if (!rec.accepted) rec.discard_reason = *parsed.discard_reason;
    } catch (const ContextOverflow&) {
        rec.discard_reason = "context_overflow";
    } catch (const ConfigError&) {
        throw; // nothing else will work either
    } catch (const Error& e) {
        rec.discard_reason = std::string(kErrorReasonPrefix) + e.code() + ": " + e.what();
    } catch (const std::exception& e) {
        rec.discard_reason = std::string(kErrorReasonPrefix) + e.what();
    }
    rec.latency_ms = opt.now_ms() - t0;
    return rec;
}

/// One completion per chunk that lacks a final record in `existing`.
/// Calls run `concurrency` at a time; `on_record` sees new records in chunk
/// order after each batch, which is where callers persist them.
inline GenerationResult generate_for_chunks(const std::vector<Chunk>& chunks, const Completer& complete,
                                            const GenerationOptions& opt,
                                            const std::vector<GenerationRecord>& existing = {},
                                            const std::function<void(const GenerationRecord&)>& on_record = {}) {
    if (opt.concurrency == 0) throw ConfigError("concurrency must be positive");
    std::map<std::string, GenerationRecord> latest;
    for (const auto& r : existing) latest[r.chunk_id] = r;

    std::vector<const Chunk*> todo;
    for (const auto& c : chunks) {
        auto it = latest.find(c.chunk_id);
        if (it == latest.end() || !is_final(it->second, opt.retry_discarded)) todo.push_back(&c);
    }

    GenerationResult result;
    for (std::size_t start = 0; start < todo.size(); start += opt.concurrency) {
        const std::size_t stop = std::min(todo.size(), start + opt.concurrency);
        std::vector<std::future<GenerationRecord>> batch;
        for (std::size_t i = start; i < stop; ++i) {
            batch.push_back(std::async(std::launch::async, [&, c = todo[i]] { return generate_one(*c, complete, opt); }));
        }
        for (auto& f : batch) {
            GenerationRecord rec = f.get();
            if (on_record) on_record(rec);
            latest[rec.chunk_id] = rec;
            result.new_records.push_back(std::move(rec));
        }
    }

    for (const auto& c : chunks) {
        auto it = latest.find(c.chunk_id);
        if (it == latest.end()) continue;
        result.records.push_back(it->second);
        if (!it->second.accepted) continue;
        for (auto& p : parse_qa_response(it->second.raw_response).pairs) {
            p.chunk_id = c.chunk_id;
            p.source_id = c.source_id;
            result.pairs.push_back(std::move(p));
        }
    }
    return result;
}

} // namespace corpusforge
