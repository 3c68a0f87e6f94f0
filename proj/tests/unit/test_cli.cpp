#include <regex>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "corpusforge/digest.hpp"
#include "corpusforge/jsonl.hpp"
#include "e2e.hpp"
#include "mock_server.hpp"

using corpusforge::fsutil::read_file;
using corpusforge::fsutil::write_file_atomic;
namespace fs = std::filesystem;

namespace {

const std::regex kErrorLine(R"(error stage=\w+ code=\w+ message="([^"\\]|\\.)*"\n)");

// Relative path -> digest for every file under `dir`.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    if (!fs::exists(dir)) return files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = corpusforge::sha256_file(e.path());
    }
    return files;
}

struct LlmMock {
    cftest::MockServer server;
    LlmMock() {
        cftest::install_chat_endpoint(server, [](const std::string& p) { return cftest::deterministic_completion(p); });
        server.start();
    }
    std::map<std::string, std::string> env() const { return {{"CORPUSFORGE_LLM_URL", server.url("/v1")}}; }
};

cftest::CliResult run_pipeline(const cftest::TempDir& dir, const std::map<std::string, std::string>& env) {
    return cftest::run_cli(dir.path(), {"pipeline", "--sources", "sources.txt", "--max-tokens", "140"}, env);
}

} // namespace

TEST(Cli, HelpListsSubcommands) {
    cftest::TempDir dir;
    const auto r = cftest::run_cli(dir.path(), {"--help"});
    EXPECT_EQ(r.exit_code, 0);
    for (const char* cmd : {"acquire", "normalize", "generate", "assemble", "manifest", "pipeline", "stats"}) {
        EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
    }
}

TEST(Cli, UsageErrorsExitTwo) {
    cftest::TempDir dir;
    auto r = cftest::run_cli(dir.path(), {});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
    r = cftest::run_cli(dir.path(), {"stats", "--max-tokens", "lots"});
    EXPECT_EQ(r.exit_code, 2);
    r = cftest::run_cli(dir.path(), {"manifest", "--lora-rank", "0"});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("code=ConfigError"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "out/train_manifest.json"));
}

TEST(Cli, AcquireEmptySourceList) {
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", "");
    const auto r = cftest::run_cli(dir.path(), {"acquire"});
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("0 fetched"), std::string::npos);
}

TEST(Cli, AcquireBadPath) {
    cftest::TempDir dir;
    const auto r = cftest::run_cli(dir.path(), {"acquire", "--sources", "nope.txt"});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
    EXPECT_NE(r.err.find("stage=acquire code=ParseError"), std::string::npos);
}

// Remote locators against a mock file server; origin and timestamps are
// masked before comparing with the reviewed golden.
TEST(Cli, AcquireFromMockServerMatchesGolden) {
    cftest::MockServer files;
    files.server().Get(R"(/files/(.+))", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content(read_file(cftest::fixture(req.matches[1].str())), "application/octet-stream");
    });
    files.start();
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt",
                      "1901.00001 arxiv " + files.url("/files/latex/eprint.tar.gz") + "\n"
                      "ipac-mopo001 jacow " + files.url("/files/mmd/03_nougat_paper.mmd") + " mmd\n"
                      "ipac-tupo042 jacow " + files.url("/files/e2e/tupo042.pdf") + " pdf\n"
                      "optics-ch3 books " + cftest::fixture("chunker/beam_optics_chapter.mmd").string() + "\n");
    write_file_atomic(dir / "config.json", R"({"fetch_min_interval_ms": 0})");
    const auto r = cftest::run_cli(dir.path(), {"acquire", "--config", "config.json"});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("4 fetched, 0 unchanged, 0 failed"), std::string::npos);
    EXPECT_EQ(files.requests(), 3u);

    auto manifest = nlohmann::json::parse(read_file(dir / "store/manifest.json"));
    for (auto& e : manifest["entries"]) {
        std::string loc = e["locator"];
        if (loc.rfind(files.url(), 0) == 0) e["locator"] = "{origin}" + loc.substr(files.url().size());
        if (e["family"] == "books") e["locator"] = "{fixtures}/chunker/beam_optics_chapter.mmd";
        e["fetched_at"] = "{time}";
    }
    const auto golden = nlohmann::json::parse(read_file(cftest::golden("acquire_manifest.json")));
    EXPECT_EQ(manifest, golden) << manifest.dump(2);
}

TEST(Cli, NormalizeEmptyStore) {
    cftest::TempDir dir;
    const auto r = cftest::run_cli(dir.path(), {"normalize"});
    EXPECT_EQ(r.exit_code, 0) << r.err;
}

TEST(Cli, NormalizeKeepsGoingPastBadFile) {
    cftest::TempDir dir;
    write_file_atomic(dir / "good.mmd", "# Good\n\nFine text.\n");
    write_file_atomic(dir / "bad.mmd", "# Bad\n\n\xC3\x28 broken\n");
    write_file_atomic(dir / "sources.txt", "good jacow good.mmd\nbad jacow bad.mmd\n");
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire"}).exit_code, 0);
    const auto r = cftest::run_cli(dir.path(), {"normalize"});
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "out/canonical/good.md"));
    EXPECT_FALSE(fs::exists(dir / "out/canonical/bad.md"));
    const auto warnings = corpusforge::jsonl::read(dir / "out/canonical/warnings.jsonl");
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_EQ(warnings[0].at("source_id"), "bad");

    // All files failing is a partial result.
    write_file_atomic(dir / "sources.txt", "bad jacow bad.mmd\n");
    fs::remove(dir / "store/manifest.json");
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire"}).exit_code, 0);
    EXPECT_EQ(cftest::run_cli(dir.path(), {"normalize"}).exit_code, 1);
}

TEST(Cli, GenerateNeedsEndpointOnlyForPendingWork) {
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", "b books " + cftest::fixture("mmd/02_three_sections.mmd").string() + "\n");
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire"}).exit_code, 0);
    ASSERT_EQ(cftest::run_cli(dir.path(), {"normalize"}).exit_code, 0);
    const auto r = cftest::run_cli(dir.path(), {"generate"});
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("code=ConfigError"), std::string::npos);
}

TEST(Cli, EndpointFailuresArePartialThenResume) {
    cftest::MockServer broken;
    broken.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("no", "text/plain");
    });
    broken.start();
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", "b books " + cftest::fixture("mmd/02_three_sections.mmd").string() + "\n");
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire"}).exit_code, 0);
    ASSERT_EQ(cftest::run_cli(dir.path(), {"normalize"}).exit_code, 0);
    auto r = cftest::run_cli(dir.path(), {"generate", "--llm-url", broken.url("/v1")});
    EXPECT_EQ(r.exit_code, 1) << r.err;

    LlmMock good;
    r = cftest::run_cli(dir.path(), {"generate"}, good.env());
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_GT(good.server.requests(), 0u);
    const auto pairs = corpusforge::jsonl::read(dir / "out/qa_pairs.jsonl");
    EXPECT_EQ(pairs.size(), 10 * good.server.requests());
}

TEST(Cli, EnvironmentAndFlagPrecedence) {
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", "a jacow " + cftest::fixture("mmd/01_minimal.mmd").string() + "\n");
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire"}, {{"CORPUSFORGE_STORE", "envstore"}}).exit_code, 0);
    EXPECT_TRUE(fs::exists(dir / "envstore/manifest.json"));
    ASSERT_EQ(cftest::run_cli(dir.path(), {"acquire", "--store", "flagstore"}, {{"CORPUSFORGE_STORE", "envstore"}}).exit_code, 0);
    EXPECT_TRUE(fs::exists(dir / "flagstore/manifest.json"));
    write_file_atomic(dir / "config.json", R"({"store_root": "cfgstore", "bogus": 1})");
    EXPECT_EQ(cftest::run_cli(dir.path(), {"acquire", "--config", "config.json"}).exit_code, 2);
}

TEST(Cli, ManifestCommand) {
    cftest::TempDir dir;
    auto r = cftest::run_cli(dir.path(), {"manifest"});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const auto j = nlohmann::json::parse(read_file(dir / "out/train_manifest.json"));
    EXPECT_EQ(j.at("dataset_paths"), (nlohmann::json{"tp.jsonl", "tqa.jsonl"}));
    EXPECT_EQ(j.at("lora_rank"), 64);
    r = cftest::run_cli(dir.path(), {"manifest", "--lora-rank", "8", "--targets", "query,value", "--learning-rate", "2e-4"});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const auto k = nlohmann::json::parse(read_file(dir / "out/train_manifest.json"));
    EXPECT_EQ(k.at("lora_rank"), 8);
    EXPECT_EQ(k.at("target_weights"), (nlohmann::json{"query", "value"}));
    EXPECT_EQ(k.at("learning_rate"), "2e-4");
}

TEST(Cli, DryRunHasNoSideEffects) {
    LlmMock llm;
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", cftest::e2e_source_list());
    for (bool populated : {false, true}) {
        if (populated) {
            ASSERT_EQ(run_pipeline(dir, llm.env()).exit_code, 0);
        }
        const auto before = snapshot(dir.path());
        const auto calls = llm.server.requests();
        for (const char* cmd : {"acquire", "normalize", "generate", "assemble", "manifest", "pipeline", "stats"}) {
            const auto r = cftest::run_cli(dir.path(), {cmd, "--dry-run", "--filter-keyword", "DESY"}, llm.env());
            EXPECT_EQ(r.exit_code, 0) << cmd << ": " << r.err;
            EXPECT_EQ(snapshot(dir.path()), before) << cmd;
        }
        EXPECT_EQ(llm.server.requests(), calls);
    }
}

TEST(Cli, PipelineEndToEnd) {
    LlmMock llm;
    cftest::TempDir dir;
    write_file_atomic(dir / "sources.txt", cftest::e2e_source_list());
    auto r = cftest::run_cli(dir.path(), {"pipeline", "--sources", "sources.txt", "--max-tokens", "140",
                                          "--filter-keyword", "DESY", "--dump-chunks"},
                             llm.env());
    ASSERT_EQ(r.exit_code, 0) << r.err;
    for (const auto& f : cftest::e2e_outputs()) EXPECT_TRUE(fs::exists(dir / f)) << f;

    // 2 arXiv papers, 2 JACoW papers, 9 book sections. Neither JACoW paper fits
    // in 140 tokens, so both are split: 8 JACoW chunks plus 9 book chunks, 10 pairs each.
    const auto stats = nlohmann::json::parse(read_file(dir / "out/stats.json"));
    EXPECT_EQ(stats.at("per_corpus_unsupervised"), (nlohmann::json{{"arxiv", 2}, {"books", 9}, {"jacow", 2}}));
    EXPECT_EQ(stats.at("per_corpus_supervised"), (nlohmann::json{{"books", 90}, {"jacow", 80}}));
    EXPECT_EQ(stats.at("total"), 183);
    EXPECT_EQ(llm.server.requests(), 17u);
    EXPECT_TRUE(fs::exists(dir / "out/chunks/optics-ch3/0008.md"));

    const auto tp_desy = corpusforge::jsonl::read(dir / "out/tp.DESY.jsonl");
    for (const auto& row : tp_desy) EXPECT_NE(row.at("text").get<std::string>().find("DESY"), std::string::npos);
    EXPECT_FALSE(tp_desy.empty());
    // Recount the supervised subset from the dumped chunk files.
    std::vector<nlohmann::json> want;
    for (const auto& row : corpusforge::jsonl::read(dir / "out/tqa.jsonl")) {
        const std::string id = row.at("chunk_id");
        const auto chunk = dir / "out/chunks" / row.at("source_id").get<std::string>() / (id.substr(id.size() - 4) + ".md");
        ASSERT_TRUE(fs::exists(chunk)) << chunk;
        const std::string hay = row.at("question").get<std::string>() + '\n' + row.at("answer").get<std::string>() +
                                '\n' + read_file(chunk);
        if (hay.find("DESY") != std::string::npos) want.push_back(row);
    }
    EXPECT_FALSE(want.empty());
    EXPECT_EQ(corpusforge::jsonl::read(dir / "out/tqa.DESY.jsonl"), want);

    const auto s = cftest::run_cli(dir.path(), {"stats"});
    EXPECT_EQ(nlohmann::json::parse(s.out), stats);

    // Canonical text of every source against reviewed goldens.
    for (const char* id : {"1901.00001", "1901.00002", "ipac-mopo001", "ipac-tupo042", "optics-ch3"}) {
        EXPECT_EQ(read_file(dir / "out/canonical" / (std::string(id) + ".md")),
                  read_file(cftest::golden(std::string("canonical/") + id + ".md")))
            << id;
    }
}

TEST(Cli, PipelineRerunAndFreshRunAreIdentical) {
    LlmMock llm;
    cftest::TempDir a, b;
    for (const auto* d : {&a, &b}) write_file_atomic(*d / "sources.txt", cftest::e2e_source_list());
    ASSERT_EQ(run_pipeline(a, llm.env()).exit_code, 0);
    const auto first = snapshot(a / "out");
    const auto calls = llm.server.requests();

    const auto again = run_pipeline(a, llm.env());
    EXPECT_EQ(again.exit_code, 0) << again.err;
    EXPECT_EQ(llm.server.requests(), calls);
    EXPECT_EQ(snapshot(a / "out"), first);

    ASSERT_EQ(run_pipeline(b, llm.env()).exit_code, 0);
    for (const char* f : {"out/tp.jsonl", "out/tqa.jsonl", "out/stats.json", "out/train_manifest.json"}) {
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    }
}
