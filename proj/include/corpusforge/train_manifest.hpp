#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/errors.hpp"
#include "corpusforge/fsutil.hpp"

namespace corpusforge {

inline constexpr int kTrainManifestVersion = 1;

enum class TargetWeight { query, key, value, projection };

inline std::string to_string(TargetWeight t) {
    switch (t) {
    case TargetWeight::query: return "query";
    case TargetWeight::key: return "key";
    case TargetWeight::value: return "value";
    case TargetWeight::projection: return "projection";
    }
    return "query";
}

inline std::optional<TargetWeight> parse_target_weight(std::string_view s) {
    for (auto t : {TargetWeight::query, TargetWeight::key, TargetWeight::value, TargetWeight::projection}) {
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

struct TrainConfig {
    std::string base_model;
    std::uint64_t context_tokens = 0;
    int lora_rank = 0;
    int lora_alpha = 0;
    std::vector<TargetWeight> target_weights;
    int per_device_batch = 0;
    int grad_accum = 0;
    int epochs = 0;
    double learning_rate = 0;
    std::vector<std::string> dataset_paths;

    int effective_batch() const { return per_device_batch * grad_accum; }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Fine-tune settings of the reference DESY assistant models.
inline TrainConfig default_paper_config() {
    TrainConfig c;
    c.base_model = "vicuna-7b-16k-v1.5";
    c.context_tokens = 16384;
    c.lora_rank = 64;
    c.lora_alpha = 128;
    c.target_weights = {TargetWeight::query, TargetWeight::key, TargetWeight::value, TargetWeight::projection};
    c.per_device_batch = 2;
    c.grad_accum = 16;
    c.epochs = 4;
    c.learning_rate = 5e-5;
    return c;
}

inline void validate(const TrainConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError("invalid train config: " + m); };
    if (c.base_model.empty()) fail("base_model is empty");
    if (c.context_tokens == 0) fail("context_tokens must be positive");
    if (c.lora_rank <= 0) fail("lora_rank must be positive");
    if (c.lora_alpha <= 0) fail("lora_alpha must be positive");
    if (c.per_device_batch < 1) fail("per_device_batch must be at least 1");
    if (c.grad_accum < 1) fail("grad_accum must be at least 1");
    if (c.epochs < 1) fail("epochs must be at least 1");
    if (!(c.learning_rate > 0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be positive and finite");
    if (c.target_weights.empty()) fail("target_weights is empty");
    std::set<TargetWeight> seen(c.target_weights.begin(), c.target_weights.end());
    if (seen.size() != c.target_weights.size()) fail("target_weights has duplicates");
}

// Shortest round-tripping scientific form without exponent padding:
// 5e-05 → "5e-5", 1.5e+00 → "1.5e0".
inline std::string format_learning_rate(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
    if (ec != std::errc{}) throw ConfigError("cannot format learning rate");
    std::string s(buf, end);
    const auto e = s.find('e');
    std::string mant = s.substr(0, e);
    std::string exp = s.substr(e + 1);
    bool neg = false;
    if (!exp.empty() && (exp[0] == '+' || exp[0] == '-')) {
        neg = exp[0] == '-';
        exp.erase(0, 1);
    }
    const auto nz = exp.find_first_not_of('0');
    exp = nz == std::string::npos ? "0" : exp.substr(nz);
    return mant + "e" + (neg ? "-" : "") + exp;
}

inline double parse_learning_rate(std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw SchemaError("learning_rate is not a number: " + std::string(s));
    }
    return v;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json targets = nlohmann::json::array();
    for (auto t : c.target_weights) targets.push_back(to_string(t));
    return {{"version", kTrainManifestVersion},
            {"base_model", c.base_model},
            {"context_tokens", c.context_tokens},
            {"lora_rank", c.lora_rank},
            {"lora_alpha", c.lora_alpha},
            {"target_weights", targets},
            {"per_device_batch", c.per_device_batch},
            {"grad_accum", c.grad_accum},
            {"epochs", c.epochs},
            {"learning_rate", format_learning_rate(c.learning_rate)},
            {"dataset_paths", c.dataset_paths}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.at("version").get<int>() != kTrainManifestVersion) {
            throw SchemaError("unsupported train manifest version " + j.at("version").dump());
        }
        c.base_model = j.at("base_model").get<std::string>();
        c.context_tokens = j.at("context_tokens").get<std::uint64_t>();
        c.lora_rank = j.at("lora_rank").get<int>();
        c.lora_alpha = j.at("lora_alpha").get<int>();
        for (const auto& t : j.at("target_weights")) {
            auto w = parse_target_weight(t.get<std::string>());
            if (!w) throw SchemaError("unknown target weight " + t.dump());
            c.target_weights.push_back(*w);
        }
        c.per_device_batch = j.at("per_device_batch").get<int>();
        c.grad_accum = j.at("grad_accum").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.learning_rate = parse_learning_rate(j.at("learning_rate").get<std::string>());
        c.dataset_paths = j.value("dataset_paths", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad train manifest: ") + e.what());
    }
    validate(c);
    return c;
}

inline std::string serialize_manifest(const TrainConfig& c) {
    validate(c);
    return to_json(c).dump(2) + "\n";
}

inline void write_manifest(const TrainConfig& c, const std::filesystem::path& path) {
    fsutil::write_file_atomic(path, serialize_manifest(c));
}

inline TrainConfig read_manifest(const std::filesystem::path& path) {
    const std::string content = fsutil::read_file(path);
    try {
        return train_config_from_json(nlohmann::json::parse(content));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

} // namespace corpusforge
