#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/corpus/corpus.hpp"
#include "csrag/index/index.hpp"
#include "csrag/metrics/metrics.hpp"
#include "csrag/pipeline/pipeline.hpp"
#include "csrag/providers/providers.hpp"
#include "csrag/stats/stats.hpp"

namespace csrag::cli {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitInvalid = 2, kExitIncompatible = 3 };

inline constexpr int kConfigVersion = 1;

/// Every setting a command may read. The defaults below are the documented
/// defaults; a config file overrides them and flags override the file.
struct Config {
    int config_version = kConfigVersion;
    std::uint64_t seed = 0;
    std::string work_dir = "csrag-work";

    struct Corpus {
        std::string input;       ///< KB file or directory
        std::string crawl_spec;  ///< crawl spec JSON; crawled into <work>/raw
        int year_min = 2000;
        int year_max = 2025;
        std::size_t min_tokens = 30;
        std::size_t max_tokens = 300;
    } corpus;

    struct Index {
        std::vector<std::string> retrievers = {"bm25", "dense_a", "dense_b"};
        double k1 = 1.2;
        double b = 0.75;
        std::string dense_a_model = "sentence-transformers/all-MiniLM-L6-v2";
        std::string dense_b_model = "BAAI/bge-m3";
    } index;

    struct Provider {
        bool stub = false;
        std::string mode = "live";  ///< live | replay
        std::string base_url;
        std::string api_key_env = "OPENAI_API_KEY";
        long long timeout_ms = 60000;
        int max_retries = 3;
        long long initial_backoff_ms = 1000;
        double requests_per_minute = 60.0;
        std::size_t max_in_flight = 4;
        std::size_t embed_batch_size = 64;
        std::string replay_log;
        std::string moderation_model = "omni-moderation-latest";
    } provider;

    struct Run {
        std::string hs;  ///< hate-speech dataset
        std::vector<std::string> retrievers = {"none", "bm25", "dense_a", "dense_b"};
        std::vector<std::string> models = {"meta-llama/Llama-3.1-8B-Instruct", "CohereForAI/c4ai-command-r7b-12-2024",
                                           "mistralai/Mistral-7B-Instruct-v0.3", "gpt-4o-mini-2024-07-18"};
        std::size_t k = 3;
        std::vector<std::string> hs_ids;
        int max_new_tokens = 150;
        double temperature = 0.5;
        std::string on_summary_failure = "abort";
        std::size_t max_parallel = 4;
        bool keep_going = false;
    } run;

    struct Metrics {
        std::string bertscore_model = "text-embedding-3-small";
        double bleu_epsilon = metrics::kBleuEpsilon;
        double rouge_beta = 1.2;
        double meteor_alpha = 0.9;
        double meteor_beta = 3.0;
        double meteor_gamma = 0.5;
        bool safety = true;
    } metrics;

    struct Judge {
        std::string system_a;  ///< "<retriever>:<model>"
        std::string system_b;
        std::string run_b;  ///< run directory for system_b; defaults to <work>/run
        std::string model = "BAAI/JudgeLM-7B-v1.0";
        std::string template_id = "rag_vs_norag";
        std::string swap = "both";
        std::string name;  ///< output subdirectory; derived from the systems when empty
        int max_new_tokens = 256;
        double temperature = 0.0;
        std::size_t max_parallel = 4;
        bool keep_going = false;
    } judge;

    struct Stats {
        std::string annotations;  ///< human-study CSV, optional
    } stats;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> getenv_lookup(const std::string& name);

/// Replaces `${NAME}` with the variable's value and `$$` with `$`. Throws
/// ValidationError on an unset variable or an unterminated reference.
std::string interpolate_env(std::string_view s, const EnvLookup& env);

/// Overlays `j` on `base`. Every string is interpolated first. Throws
/// ValidationError on an unknown key, a wrong type, or a config_version
/// other than the supported one.
Config config_from_json(const nlohmann::json& j, const EnvLookup& env, Config base = {});

/// Reads a JSON config file (see config_from_json).
Config load_config(const std::filesystem::path& path, const EnvLookup& env);

nlohmann::json to_json(const Config& c);

/// Throws ValidationError for values no command can use.
void validate(const Config& c);

// Artifact layout under the work directory.
std::filesystem::path kb_dir(const Config& c);
std::filesystem::path index_dir(const Config& c);
std::filesystem::path run_dir(const Config& c);
std::filesystem::path eval_dir(const Config& c);
std::filesystem::path judge_dir(const Config& c);
std::filesystem::path stats_dir(const Config& c);
std::filesystem::path report_dir(const Config& c);

/// Splits "<retriever>:<model>"; throws ValidationError on a malformed label.
std::pair<index::RetrieverId, std::string> parse_system(std::string_view label);

/// Wide significance table: one row per (model, metric), the Friedman p and
/// one Bonferroni-adjusted column per retriever pair.
std::string significance_csv(const std::vector<stats::MetricTest>& tests);

/// p rendered as "%.3e", falling back to log10 when p underflows to 0.
std::string format_p(double p, double log10_p);

/// Entry point of the `csrag` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = getenv_lookup);

int run_cli(int argc, char** argv);

}  // namespace csrag::cli
