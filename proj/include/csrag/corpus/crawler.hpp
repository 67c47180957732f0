#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/common/http.hpp"
#include "csrag/corpus/corpus.hpp"
#include "csrag/corpus/types.hpp"

namespace csrag::corpus {

/// One portal to query. `listing_url` may contain the placeholders
/// `{keyword}`, `{type}`, `{year}` and `{page}`; `link_pattern` is an
/// ECMAScript regex whose first capture group is a document link.
struct CrawlSource {
    Source source = Source::Custom;
    std::string listing_url;
    std::string link_pattern = R"re(href="([^"]+\.pdf)")re";
    int first_page = 1;
    int page_step = 1;
    int max_pages = 1;
};

struct CrawlSpec {
    std::vector<CrawlSource> sources;
    std::map<TargetGroup, std::vector<std::string>> keywords;
    std::vector<std::string> doc_types;
    YearRange years;
    std::chrono::milliseconds delay{1000};
    int max_retries = 3;
    std::chrono::milliseconds backoff{500};
    std::size_t max_in_flight_per_host = 4;
    std::chrono::milliseconds timeout{30000};
};

/// Keyword lists per target group shipped as the default query vocabulary.
std::map<TargetGroup, std::vector<std::string>> default_keywords();

/// Throws ValidationError naming the offending field.
CrawlSpec parse_crawl_spec(const nlohmann::json& j);

struct FetchError {
    std::string url;
    int attempts = 0;
    std::string reason;
};

struct FetchReport {
    std::vector<DocumentMeta> manifest;  ///< every row of the manifest after the run
    std::size_t new_documents = 0;
    std::size_t listing_requests = 0;
    std::size_t document_requests = 0;
    std::vector<FetchError> errors;
};

/// Sleep hook; tests substitute a recorder so backoff never blocks.
using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Crawls every (source, target, keyword, type, year, page) listing and
/// downloads linked documents into `out_dir/<TARGET>/`. `out_dir/manifest.csv`
/// gains one row per saved document; URLs already present are skipped, so a
/// rerun over a completed crawl fetches nothing. Listings whose documents all
/// succeeded are remembered in `out_dir/listings_done.txt`. Failures after
/// retries are collected (and appended to `out_dir/fetch_errors.jsonl`)
/// without stopping the run.
FetchReport fetch_documents(const CrawlSpec& spec, const std::filesystem::path& out_dir, http::Getter& getter,
                            const Sleeper& sleep = {});

/// Manifest CSV: `id,fname,target,type,year,url,source`.
std::vector<DocumentMeta> read_manifest(const std::filesystem::path& path);
std::string manifest_header();
std::string manifest_row(const DocumentMeta& m);

}  // namespace csrag::corpus
