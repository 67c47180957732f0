#include <catch_amalgamated.hpp>

#include <atomic>
#include <mutex>

#include "csrag/common/error.hpp"
#include "csrag/common/hash.hpp"
#include "csrag/common/io.hpp"
#include "csrag/corpus/crawler.hpp"
#include "../support/fake_server.hpp"
#include "../support/temp_dir.hpp"

using namespace csrag;
using namespace csrag::corpus;
using nlohmann::json;

namespace {

struct Portal {
    testing::FakeServer fake;
    std::atomic<int> flaky_failures{0};
    std::atomic<int> doc_hits{0};

    Portal() {
        // Page 1 lists two documents for every query, page 2 is empty.
        fake.server.Get("/search", [](const httplib::Request& req, httplib::Response& res) {
            const auto page = req.get_param_value("page");
            const auto q = req.get_param_value("q");
            if (page != "1") {
                res.set_content("<html>no results</html>", "text/html");
                return;
            }
            res.set_content("<a href=\"/docs/" + q + "-a.pdf\">a</a> <a href=\"/docs/" + q +
                                "-b.pdf\">b</a> <a href=\"/docs/" + q + "-a.pdf\">dup</a>",
                            "text/html");
        });
        fake.server.Get(R"(/docs/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
            ++doc_hits;
            res.set_content("PDF " + req.matches[1].str(), "application/pdf");
        });
        fake.server.Get("/flaky", [this](const httplib::Request&, httplib::Response& res) {
            if (flaky_failures > 0) {
                --flaky_failures;
                res.status = 503;
                return;
            }
            res.set_content("<a href=\"/docs/flaky.pdf\">x</a>", "text/html");
        });
        fake.server.Get("/gone", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("<a href=\"/missing/x.pdf\">x</a>", "text/html");
        });
        fake.start();
    }
};

CrawlSpec spec_for(const std::string& listing) {
    CrawlSpec spec;
    CrawlSource src;
    src.source = Source::Un;
    src.listing_url = listing;
    src.max_pages = 3;
    spec.sources.push_back(src);
    spec.keywords = {{TargetGroup::Jews, {"antisemitism"}}, {TargetGroup::Women, {"sexism"}}};
    spec.doc_types = {"report"};
    spec.years = {2020, 2020};
    spec.delay = std::chrono::milliseconds(0);
    spec.backoff = std::chrono::milliseconds(5);
    spec.max_retries = 2;
    return spec;
}

}  // namespace

TEST_CASE("crawler downloads listed documents and a rerun is a no-op", "[crawler]") {
    Portal portal;
    testing::TempDir dir;
    auto getter = http::make_getter(std::chrono::milliseconds(5000));
    const auto spec = spec_for(portal.fake.url() + "/search?q={keyword}&page={page}&y={year}&t={type}");

    std::vector<std::chrono::milliseconds> sleeps;
    std::mutex mu;
    auto recorder = [&](std::chrono::milliseconds d) {
        std::lock_guard lock(mu);
        sleeps.push_back(d);
    };

    const auto first = fetch_documents(spec, dir.path(), *getter, recorder);
    CHECK(first.errors.empty());
    CHECK(first.new_documents == 4);
    CHECK(first.manifest.size() == 4);
    CHECK(portal.doc_hits == 4);
    for (const auto& m : first.manifest) {
        CHECK(std::filesystem::exists(dir.path() / m.fname));
        CHECK(m.year == 2020);
        CHECK(m.doc_type == "report");
        CHECK(m.source == Source::Un);
    }
    const auto manifest_hash = sha256_hex(io::read_file(dir / "manifest.csv"));

    const auto second = fetch_documents(spec, dir.path(), *getter, recorder);
    CHECK(second.new_documents == 0);
    CHECK(second.document_requests == 0);
    CHECK(portal.doc_hits == 4);
    CHECK(sha256_hex(io::read_file(dir / "manifest.csv")) == manifest_hash);

    // The fetched files load as a corpus through the manifest.
    const auto loaded = load_corpus(dir.path());
    CHECK(loaded.documents.size() == 4);
    CHECK(loaded.rejects.empty());
}

TEST_CASE("crawler retries transient failures with exponential backoff", "[crawler]") {
    Portal portal;
    portal.flaky_failures = 2;
    testing::TempDir dir;
    auto getter = http::make_getter(std::chrono::milliseconds(5000));
    auto spec = spec_for(portal.fake.url() + "/flaky");
    spec.keywords = {{TargetGroup::Other, {"x"}}};
    spec.sources[0].max_pages = 1;

    std::vector<std::chrono::milliseconds> sleeps;
    const auto report = fetch_documents(spec, dir.path(), *getter, [&](auto d) { sleeps.push_back(d); });
    CHECK(report.errors.empty());
    CHECK(report.new_documents == 1);
    CHECK(report.listing_requests == 3);
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(5), std::chrono::milliseconds(10)});
}

TEST_CASE("crawler records permanent failures and keeps going", "[crawler]") {
    Portal portal;
    testing::TempDir dir;
    auto getter = http::make_getter(std::chrono::milliseconds(5000));
    auto spec = spec_for(portal.fake.url() + "/gone");
    spec.keywords = {{TargetGroup::Other, {"x"}}};
    spec.sources[0].max_pages = 1;

    const auto report = fetch_documents(spec, dir.path(), *getter, [](auto) {});
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].reason == "HTTP 404");
    CHECK(report.errors[0].attempts == 1);
    CHECK(report.manifest.empty());
    CHECK(io::read_jsonl(dir / "fetch_errors.jsonl").size() == 1);
    // An incomplete listing is not marked done, so a rerun retries it.
    CHECK_FALSE(std::filesystem::exists(dir / "listings_done.txt"));
}

TEST_CASE("crawler reports unreachable hosts as transport errors", "[crawler]") {
    testing::TempDir dir;
    auto getter = http::make_getter(std::chrono::milliseconds(500));
    auto spec = spec_for("http://127.0.0.1:1/search");
    spec.keywords = {{TargetGroup::Other, {"x"}}};
    spec.max_retries = 1;
    const auto report = fetch_documents(spec, dir.path(), *getter, [](auto) {});
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].attempts == 2);
    CHECK(report.errors[0].reason.rfind("transport error", 0) == 0);
}

TEST_CASE("empty keyword lists produce an empty manifest", "[crawler]") {
    testing::TempDir dir;
    auto getter = http::make_getter(std::chrono::milliseconds(500));
    auto spec = spec_for("http://127.0.0.1:1/search");
    spec.keywords.clear();
    const auto report = fetch_documents(spec, dir.path(), *getter, [](auto) {});
    CHECK(report.manifest.empty());
    CHECK(report.listing_requests == 0);
    CHECK(io::read_file(dir / "manifest.csv") == manifest_header());
}

TEST_CASE("crawl spec parsing", "[crawler]") {
    const json ok = {{"sources", {{{"source", "UN"}, {"listing_url", "https://example.org/s?q={keyword}"}}}},
                     {"keywords", {{"LGBT+", {"pride"}}}},
                     {"delay_ms", 10}};
    const auto spec = parse_crawl_spec(ok);
    REQUIRE(spec.sources.size() == 1);
    CHECK(spec.keywords.at(TargetGroup::Lgbt) == std::vector<std::string>{"pride"});
    CHECK(spec.delay == std::chrono::milliseconds(10));

    json defaults = ok;
    defaults.erase("keywords");
    CHECK(parse_crawl_spec(defaults).keywords.size() == kAllTargets.size());

    json bad = ok;
    bad["keywords"] = {{"martians", {"x"}}};
    CHECK_THROWS_AS(parse_crawl_spec(bad), ValidationError);
    bad = ok;
    bad["sources"][0]["link_pattern"] = "no-group";
    CHECK_THROWS_AS(parse_crawl_spec(bad), ValidationError);
    bad = ok;
    bad["sources"][0]["listing_url"] = "ftp://x";
    CHECK_THROWS_AS(parse_crawl_spec(bad), ValidationError);
    bad = ok;
    bad["max_retries"] = "three";
    CHECK_THROWS_AS(parse_crawl_spec(bad), ValidationError);
}
