#include "corpusforge/acquisition.hpp"

#include <random>

#include <gtest/gtest.h>

#include "mock_server.hpp"
#include "support.hpp"

using namespace corpusforge;

namespace {

// Records requested sleeps instead of sleeping.
struct FakeSleep {
    std::shared_ptr<std::vector<http::Millis>> calls = std::make_shared<std::vector<http::Millis>>();
    http::Sleeper sleeper() const {
        return [c = calls](http::Millis d) { c->push_back(d); };
    }
};

http::Client client_with(const FakeSleep& s, int attempts = 5) {
    http::ClientOptions o;
    o.retry.max_attempts = attempts;
    o.sleep = s.sleeper();
    return http::Client(o);
}

FetchContext context(const std::filesystem::path& root, http::Client* client) {
    FetchContext ctx;
    ctx.store_root = root;
    ctx.client = client;
    ctx.now = [] { return std::string("2024-01-01T00:00:00Z"); };
    return ctx;
}

std::string atom_entry(const std::string& id, int year) {
    return "<entry>\n  <id>http://arxiv.org/abs/" + id + "v2</id>\n  <published>" + std::to_string(year) +
           "-03-04T10:00:00Z</published>\n  <title>Paper " + id + "</title>\n</entry>\n";
}

std::string atom_feed(const std::vector<std::pair<std::string, int>>& items) {
    std::string feed = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<feed xmlns=\"http://www.w3.org/2005/Atom\">\n";
    for (const auto& [id, year] : items) feed += atom_entry(id, year);
    return feed + "</feed>\n";
}

} // namespace

TEST(SourceList, EmptyFile) {
    EXPECT_TRUE(parse_source_list("").empty());
    EXPECT_TRUE(parse_source_list("# only a comment\n\n").empty());
}

TEST(SourceList, SingleArxivEntry) {
    const auto specs = parse_source_list("2301.00001 arxiv https://arxiv.org/e-print/2301.00001\n");
    ASSERT_EQ(specs.size(), 1u);
    EXPECT_EQ(specs[0].family, Family::arxiv);
    EXPECT_EQ(specs[0].expected_format, SourceFormat::latex_archive);
    EXPECT_EQ(specs[0].locator, "https://arxiv.org/e-print/2301.00001");
}

TEST(SourceList, DuplicateIdRejected) {
    EXPECT_THROW(parse_source_list("a1 jacow /x.mmd\na1 jacow /y.mmd\n"), DuplicateId);
}

TEST(SourceList, FormatsAndFamilies) {
    const auto specs = parse_source_list("p1 jacow /p1.pdf pdf\r\nb1 books ./b1.mmd\n  # indented comment\nx arxiv /x.pdf pdf\n");
    ASSERT_EQ(specs.size(), 3u);
    EXPECT_EQ(specs[0].expected_format, SourceFormat::pdf);
    EXPECT_EQ(specs[1].expected_format, SourceFormat::mmd);
    EXPECT_EQ(specs[2].expected_format, SourceFormat::pdf);
}

TEST(SourceList, MalformedLinesAreParseErrors) {
    EXPECT_THROW(parse_source_list("onlyid arxiv\n"), ParseError);
    EXPECT_THROW(parse_source_list("a wiki /x\n"), ParseError);
    EXPECT_THROW(parse_source_list("a arxiv /x.mmd mmd\n"), ParseError);            // family/format mismatch
    EXPECT_THROW(parse_source_list("a books https://example.org/b.pdf pdf\n"), ParseError); // books stay local
    EXPECT_THROW(parse_source_list("../up jacow /x.mmd\n"), ParseError);
    EXPECT_THROW(parse_source_list("a jacow /x.mmd mmd extra\n"), ParseError);
    EXPECT_THROW(load_source_list("/definitely/not/here.txt"), ParseError);
}

TEST(Manifest, JsonRoundTripAndInvariant) {
    SourceManifest m;
    EXPECT_TRUE(m.register_source({"a", Family::jacow, "/a.mmd", SourceFormat::mmd}));
    EXPECT_FALSE(m.register_source({"a", Family::jacow, "/other.mmd", SourceFormat::mmd}));
    m.put({{"b", Family::arxiv, "https://x/b", SourceFormat::latex_archive}, FetchState::fetched, "ab12", "t", {}});
    EXPECT_EQ(SourceManifest::from_json(nlohmann::json::parse(m.serialize())), m);
    EXPECT_EQ(m.to_json().at("version"), 1);
    EXPECT_THROW(m.put({{"c", Family::jacow, "/c", SourceFormat::mmd}, FetchState::fetched, {}, {}, {}}), ParseError);
    EXPECT_THROW(m.put({{"c", Family::jacow, "/c", SourceFormat::mmd}, FetchState::pending, "ff", {}, {}}), ParseError);
}

TEST(Manifest, LoadMissingFileIsEmpty) {
    cftest::TempDir dir;
    EXPECT_TRUE(SourceManifest::load(dir / "none.json").entries().empty());
    fsutil::write_file_atomic(dir / "bad.json", "{\"version\": 9, \"entries\": []}");
    EXPECT_THROW(SourceManifest::load(dir / "bad.json"), ParseError);
}

TEST(FetchDocument, MockServerBodyHashMatchesOracle) {
    cftest::MockServer server;
    server.server().Get("/paper.pdf", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("0123456789", "application/pdf");
    });
    server.start();
    cftest::TempDir dir;
    FakeSleep s;
    auto client = client_with(s);
    const SourceSpec spec{"p1", Family::jacow, server.url("/paper.pdf"), SourceFormat::pdf};
    SourceManifest m;
    m.register_source(spec);
    const auto next = fetch_document(spec, m, context(dir.path(), &client));
    const auto* e = next.find("p1");
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->state, FetchState::fetched);
    EXPECT_EQ(*e->content_hash, "84d89877f0d4041efb6bf91a16f0248f2fd573e6af05c19f96bedb9f882f7882");
    EXPECT_EQ(fsutil::read_file(dir / "jacow/p1.pdf"), "0123456789");
    EXPECT_EQ(sha256_file(dir / "jacow/p1.pdf"), *e->content_hash);
}

TEST(FetchDocument, AlreadyFetchedMakesNoCall) {
    cftest::MockServer server;
    server.server().Get("/a", [](const httplib::Request&, httplib::Response& res) { res.set_content("payload", "text/plain"); });
    server.start();
    cftest::TempDir dir;
    FakeSleep s;
    auto client = client_with(s);
    const SourceSpec spec{"a", Family::jacow, server.url("/a"), SourceFormat::mmd};
    SourceManifest m;
    m.register_source(spec);
    const auto once = fetch_document(spec, m, context(dir.path(), &client));
    const auto before = server.requests();
    const auto twice = fetch_document(spec, once, context(dir.path(), &client));
    EXPECT_EQ(server.requests(), before);
    EXPECT_EQ(twice.serialize(), once.serialize());
}

TEST(FetchDocument, TamperedPayloadIsChecksumMismatch) {
    cftest::TempDir dir;
    fsutil::write_file_atomic(dir / "src.mmd", "# Local\n\nbody\n");
    const SourceSpec spec{"loc", Family::books, (dir / "src.mmd").string(), SourceFormat::mmd};
    SourceManifest m;
    m.register_source(spec);
    const auto ctx = context(dir / "store", nullptr);
    const auto fetched = fetch_document(spec, m, ctx);
    auto bytes = fsutil::read_file(dir / "store/books/loc.mmd");
    bytes[0] ^= 1;
    fsutil::write_file_atomic(dir / "store/books/loc.mmd", bytes);
    EXPECT_THROW(fetch_document(spec, fetched, ctx), ChecksumMismatch);
}

TEST(FetchAll, RerunIsIdempotentAndQuiet) {
    cftest::MockServer server;
    server.server().Get(R"(/doc/(\w+))", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content("body of " + req.matches[1].str(), "text/plain");
    });
    server.start();
    cftest::TempDir dir;
    FakeSleep s;
    auto client = client_with(s);
    SourceManifest m;
    for (const char* id : {"a", "b", "c", "d", "e"}) {
        m.register_source({id, Family::jacow, server.url(std::string("/doc/") + id), SourceFormat::mmd});
    }
    const auto ctx = context(dir.path(), &client);
    const auto first = fetch_all(m, ctx, 3);
    EXPECT_EQ(first.fetched, 5u);
    const std::string saved = m.serialize();
    const auto calls = server.requests();
    const auto second = fetch_all(m, ctx, 3);
    EXPECT_EQ(second.unchanged, 5u);
    EXPECT_EQ(second.fetched, 0u);
    EXPECT_EQ(server.requests(), calls);
    EXPECT_EQ(m.serialize(), saved);
    for (const auto& e : m.entries()) EXPECT_EQ(sha256_file(store_path(dir.path(), e.spec)), *e.content_hash);
}

TEST(FetchAll, FailuresAreRecordedAndRetried) {
    cftest::TempDir dir;
    SourceManifest m;
    m.register_source({"gone", Family::jacow, (dir / "missing.mmd").string(), SourceFormat::mmd});
    std::size_t persisted = 0;
    const auto summary = fetch_all(m, context(dir / "store", nullptr), 2, [&](const SourceManifest&) { ++persisted; });
    EXPECT_EQ(summary.failed, 1u);
    EXPECT_EQ(persisted, 1u);
    EXPECT_EQ(m.find("gone")->state, FetchState::failed);
    EXPECT_TRUE(m.find("gone")->error.has_value());

    fsutil::write_file_atomic(dir / "missing.mmd", "now here");
    EXPECT_EQ(fetch_all(m, context(dir / "store", nullptr)).fetched, 1u);
    EXPECT_FALSE(m.find("gone")->error.has_value());
}

TEST(HttpClient, Backoff503ExhaustsIntoRateLimited) {
    cftest::MockServer server;
    server.server().Get("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    server.start();
    FakeSleep s;
    auto client = client_with(s, 5);
    EXPECT_THROW(client.get(server.url("/busy")), RateLimited);
    EXPECT_EQ(client.attempts(), 5u);
    EXPECT_EQ(server.requests(), 5u);
    EXPECT_EQ(*s.calls, (std::vector<http::Millis>{http::Millis(1000), http::Millis(2000), http::Millis(4000),
                                                    http::Millis(8000)}));
}

TEST(HttpClient, RetryAfterHintAndRecovery) {
    cftest::MockServer server;
    std::atomic<int> hits = 0;
    server.server().Get("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 429;
            res.set_header("Retry-After", "7");
        } else {
            res.set_content("ok", "text/plain");
        }
    });
    server.start();
    FakeSleep s;
    auto client = client_with(s);
    EXPECT_EQ(client.get(server.url("/flaky")).body, "ok");
    EXPECT_EQ(*s.calls, (std::vector<http::Millis>{http::Millis(7000), http::Millis(7000)}));
}

TEST(HttpClient, UnreachableHostIsNetworkError) {
    FakeSleep s;
    auto client = client_with(s, 2);
    EXPECT_THROW(client.get("http://127.0.0.1:1/x"), NetworkError);
    EXPECT_EQ(client.attempts(), 2u);
}

TEST(HttpClient, PerHostSpacing) {
    http::HostRateLimiter limiter(http::Millis(3000));
    EXPECT_EQ(limiter.reserve("http://a").count(), 0);
    EXPECT_GE(limiter.reserve("http://a").count(), 2900);
    EXPECT_GE(limiter.reserve("http://a").count(), 5900);
    EXPECT_EQ(limiter.reserve("http://b").count(), 0);
}

TEST(ArxivListing, YearFilter) {
    cftest::MockServer server;
    server.server().Get("/api/query", [](const httplib::Request& req, httplib::Response& res) {
        EXPECT_NE(req.get_param_value("search_query").find("physics.acc-ph"), std::string::npos);
        res.set_content(atom_feed({{"2001.00003", 2020}, {"1505.00002", 2015}, {"1403.00001", 2014}}), "application/atom+xml");
    });
    server.start();
    FakeSleep s;
    auto client = client_with(s);
    ArxivListingOptions opt;
    opt.api_url = server.url("/api/query");
    const auto specs = list_arxiv_category("physics.acc-ph", 2015, client, opt);
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0].id, "2001.00003");
    EXPECT_EQ(specs[1].id, "1505.00002");
    EXPECT_EQ(specs[1].family, Family::arxiv);
    EXPECT_EQ(specs[1].locator, "https://arxiv.org/e-print/1505.00002");
}

TEST(ArxivListing, EmptyListing) {
    cftest::MockServer server;
    server.server().Get("/api/query", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(atom_feed({}), "application/atom+xml");
    });
    server.start();
    FakeSleep s;
    auto client = client_with(s);
    ArxivListingOptions opt;
    opt.api_url = server.url("/api/query");
    EXPECT_TRUE(list_arxiv_category("physics.acc-ph", 2015, client, opt).empty());
}

TEST(ArxivListing, FiveTimes503IsRateLimited) {
    cftest::MockServer server;
    server.server().Get("/api/query", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    server.start();
    FakeSleep s;
    auto client = client_with(s, 5);
    ArxivListingOptions opt;
    opt.api_url = server.url("/api/query");
    EXPECT_THROW(list_arxiv_category("physics.acc-ph", 2015, client, opt), RateLimited);
    EXPECT_EQ(server.requests(), 5u);
}

TEST(ArxivListing, BadArguments) {
    FakeSleep s;
    auto client = client_with(s);
    EXPECT_THROW(list_arxiv_category("not a category", 2015, client), ConfigError);
    EXPECT_THROW(list_arxiv_category("physics.acc-ph", 1980, client), ConfigError);
    EXPECT_EQ(client.attempts(), 0u);
}

TEST(ArxivListing, RandomListingsNeverIncludeOldYears) {
    std::mt19937_64 rng(2015);
    for (int n = 0; n < 20; ++n) {
        // Pages newest first, as the real API sorts them.
        std::vector<std::pair<std::string, int>> items;
        const int count = std::uniform_int_distribution<int>(0, 25)(rng);
        for (int k = 0; k < count; ++k) items.push_back({"id" + std::to_string(k), std::uniform_int_distribution<int>(1995, 2024)(rng)});
        std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        const int from = std::uniform_int_distribution<int>(1995, 2025)(rng);

        cftest::MockServer server;
        server.server().Get("/api/query", [&](const httplib::Request& req, httplib::Response& res) {
            const auto start = static_cast<std::size_t>(std::stoi(req.get_param_value("start")));
            const auto size = static_cast<std::size_t>(std::stoi(req.get_param_value("max_results")));
            std::vector<std::pair<std::string, int>> page;
            for (std::size_t i = start; i < std::min(items.size(), start + size); ++i) page.push_back(items[i]);
            res.set_content(atom_feed(page), "application/atom+xml");
        });
        server.start();
        FakeSleep s;
        auto client = client_with(s);
        ArxivListingOptions opt;
        opt.api_url = server.url("/api/query");
        opt.page_size = 4;
        const auto specs = list_arxiv_category("physics.acc-ph", from, client, opt);
        const auto expected = std::count_if(items.begin(), items.end(), [&](const auto& i) { return i.second >= from; });
        ASSERT_EQ(static_cast<long>(specs.size()), expected) << "from " << from;
        for (const auto& spec : specs) {
            const auto it = std::find_if(items.begin(), items.end(), [&](const auto& i) { return i.first == spec.id; });
            ASSERT_NE(it, items.end());
            ASSERT_GE(it->second, from);
        }
    }
}
