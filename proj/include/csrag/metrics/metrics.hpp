#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/index/index.hpp"
#include "csrag/pipeline/pipeline.hpp"
#include "csrag/providers/providers.hpp"

namespace csrag::metrics {

inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU-4 over shared-tokenizer tokens. Clipped n-gram precisions
/// (max count over references), closest reference length for the brevity
/// penalty (shorter on ties). Orders for which the candidate has no n-grams
/// are left out of the geometric mean; an order with n-grams but no match
/// uses `epsilon` instead of 0. No unigram match, an empty candidate or no
/// usable reference scores 0.
double bleu4(std::string_view candidate, const std::vector<std::string>& references,
             double epsilon = kBleuEpsilon);

/// Length of the longest common subsequence of two token lists.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// ROUGE-L F-measure (1+b^2)PR/(R+b^2 P) with P = LCS/|cand|, R = LCS/|ref|.
double rouge_l(std::string_view candidate, std::string_view reference, double beta = 1.2);
/// Best score over the references.
double rouge_l(std::string_view candidate, const std::vector<std::string>& references, double beta = 1.2);

/// Porter (1980) stemmer for lower-case words; words of two letters or less
/// are returned unchanged.
std::string porter_stem(std::string_view word);

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};

/// One aligned (candidate position, reference position) pair.
struct Alignment {
    std::size_t cand = 0;
    std::size_t ref = 0;
};

/// Exact stage then Porter-stem stage. Within a stage candidate tokens are
/// visited left to right; each takes the reference position right after the
/// previous candidate token's match when that fits, else the leftmost free one.
std::vector<Alignment> meteor_align(const std::vector<std::string>& cand, const std::vector<std::string>& ref);

/// Number of runs of alignments contiguous on both sides.
std::size_t count_chunks(std::vector<Alignment> alignment);

/// METEOR with exact and stemmed matching (no synonym stage).
double meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params = {});
double meteor(std::string_view candidate, const std::vector<std::string>& references, const MeteorParams& params = {});

/// Maps tokens to vectors, one per token, in order.
using TokenEmbedder = std::function<std::vector<index::Vector>(const std::vector<std::string>& tokens)>;

/// Caches per-token vectors from an embedding provider.
TokenEmbedder make_token_embedder(std::shared_ptr<providers::EmbedProvider> provider, std::string model_id);

struct BertScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy max-cosine matching without IDF weighting or baseline rescaling.
/// Either side empty scores 0.
BertScore bertscore(std::string_view candidate, std::string_view reference, const TokenEmbedder& embed);
double bertscore_f1(std::string_view candidate, std::string_view reference, const TokenEmbedder& embed);
double bertscore_f1(std::string_view candidate, const std::vector<std::string>& references,
                    const TokenEmbedder& embed);

/// Unique / total n-grams pooled over all outputs. Throws PreconditionError
/// when n < 1 or there are no n-grams at all.
double distinct_n(const std::vector<std::string>& outputs, std::size_t n);

/// Per output and order n, the fraction of n-gram positions whose n-gram
/// already occurred earlier in that output; averaged over the orders the
/// output is long enough for, then over outputs. An empty output counts 0.
double repetition_rate(const std::vector<std::string>& outputs, std::size_t n_min = 1, std::size_t n_max = 4);

/// 1 - max category score. Throws PreconditionError on empty text;
/// provider errors propagate.
double safety(const std::string& text, providers::ModerationProvider& moderation);

// ------------------------------------------------------------- reporting

struct MetricConfig {
    double bleu_epsilon = kBleuEpsilon;
    double rouge_beta = 1.2;
    MeteorParams meteor;
    std::string bertscore_model = "stub-token-embedder";
    std::size_t repetition_n_max = 4;
};

struct OutputScores {
    std::string hs_id;
    std::optional<double> bleu4;
    std::optional<double> rouge_l;
    std::optional<double> meteor;
    std::optional<double> bertscore_f1;
    std::optional<double> safety;
    std::string note;  ///< why a value is missing
};

struct CellReport {
    index::RetrieverId retriever = index::RetrieverId::None;
    std::string model_id;
    std::vector<OutputScores> per_output;
    std::optional<double> distinct1;
    std::optional<double> distinct2;
    std::optional<double> repetition_rate;
    std::size_t missing_reference = 0;
    std::size_t safety_failures = 0;

    /// Mean over outputs that have the value; nullopt when none do.
    [[nodiscard]] std::optional<double> mean(std::optional<double> OutputScores::*field) const;
};

struct MetricReport {
    MetricConfig config;
    std::vector<CellReport> cells;
};

/// Scores every output against the references of its HS. Cells appear in
/// order of first occurrence in `outputs`. A null `moderation` leaves safety
/// missing.
MetricReport evaluate(const std::vector<pipeline::CounterSpeech>& outputs,
                      const std::map<std::string, std::vector<std::string>>& references, const TokenEmbedder& embed,
                      providers::ModerationProvider* moderation, const MetricConfig& config = {});

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// One row per cell: retriever, model, n, then BLEU, METEOR, ROUGE-L,
/// BERTScore_F1, Distinct-1, Distinct-2, Repetition Rate, Safety (4 decimals).
std::string table2_csv(const MetricReport& r);

/// `retriever,model,hs_id,bleu4,rouge_l,meteor,bertscore_f1,safety` for the stats step.
std::string per_sample_csv(const MetricReport& r);

}  // namespace csrag::metrics
