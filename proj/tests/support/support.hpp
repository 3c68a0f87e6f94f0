#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpusforge/document.hpp"
#include "corpusforge/fsutil.hpp"

namespace cftest {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(CORPUSFORGE_FIXTURES) / rel; }
inline fs::path golden(const std::string& rel) { return fs::path(CORPUSFORGE_GOLDEN) / rel; }
inline std::string read_fixture(const std::string& rel) { return corpusforge::fsutil::read_file(fixture(rel)); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("corpusforge-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// Sorted so test order and output are stable.
inline std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<fs::path> mmd_fixtures() { return files_with_extension(fixture("mmd"), ".mmd"); }

inline std::vector<corpusforge::Block> blocks_from_json(const nlohmann::json& j) {
    std::vector<corpusforge::Block> blocks;
    for (const auto& b : j) {
        blocks.push_back({*corpusforge::parse_block_kind(b.at("kind").get<std::string>()), b.at("level").get<int>(),
                          b.at("text").get<std::string>()});
    }
    return blocks;
}

inline std::vector<corpusforge::Block> load_blocks(const fs::path& path) {
    return blocks_from_json(nlohmann::json::parse(corpusforge::fsutil::read_file(path)));
}

inline std::string describe(const std::vector<corpusforge::Block>& blocks) {
    std::string s;
    for (const auto& b : blocks) {
        s += std::string(corpusforge::to_string(b.kind)) + "(" + std::to_string(b.level) + ") " +
             nlohmann::json(b.text).dump() + "\n";
    }
    return s;
}

} // namespace cftest
