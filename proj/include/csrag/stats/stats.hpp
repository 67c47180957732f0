#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csrag/metrics/metrics.hpp"

namespace csrag::stats {

/// Rows are samples, columns systems.
struct PairedSamples {
    std::vector<std::string> systems;
    std::vector<std::vector<double>> values;
};

/// Throws PreconditionError unless there are >= 2 systems, >= 2 rows, every
/// row has one finite value per system.
void validate(const PairedSamples& s);

/// Midranks (1-based) of `v`; tied values share the mean of their positions.
std::vector<double> midranks(const std::vector<double>& v);

/// log Q(a, x), the regularized upper incomplete gamma function, a > 0, x >= 0.
double log_gamma_q(double a, double x);

/// Upper tail of the chi-squared distribution, as p and as log10 p (the
/// latter stays finite when p underflows).
struct Tail {
    double p = 1.0;
    double log10_p = 0.0;
};
Tail chi2_upper_tail(double x, double df);

struct FriedmanResult {
    double statistic = 0.0;  ///< tie-corrected chi-squared
    double df = 0.0;
    double p_value = 1.0;  ///< exact when `exact`, else p_chi2
    double log10_p = 0.0;
    double p_chi2 = 1.0;  ///< asymptotic chi-squared p
    bool exact = false;
};

/// Exact permutation p-values (independent uniform within-row permutations)
/// are computed when the rank-sum state space stays under `exact_state_limit`.
FriedmanResult friedman_test(const PairedSamples& s, std::size_t exact_state_limit = 2'000'000);

struct WilcoxonResult {
    double statistic = 0.0;  ///< min(W+, W-)
    double w_plus = 0.0;
    std::size_t n = 0;       ///< non-zero differences used
    std::size_t zeros = 0;   ///< zero differences dropped
    double p_value = 1.0;
    double log10_p = 0.0;
    bool exact = false;
};

enum class WilcoxonMethod { Auto, Exact, Normal };

inline constexpr std::size_t kWilcoxonExactMaxN = 12;

/// Two-sided signed-rank test of a - b. Auto enumerates all 2^n sign
/// patterns for n <= 12, otherwise uses the normal approximation with tie
/// and continuity correction. Exact is limited to n <= 60.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

/// min(1, p * m) for each p. Throws PreconditionError if m < p.size() or a
/// p lies outside [0, 1].
std::vector<double> bonferroni(const std::vector<double>& p_values, std::size_t m);

// ---------------------------------------------------------- human study

struct AnnotationRecord {
    std::string annotator_id;
    std::string hs_id;
    std::string method;
    int relevance = 0;
    int factuality = 0;
    int cogency = 0;
    int correctness = 0;
    bool effective = false;
    bool is_best = false;
    std::size_t line = 0;  ///< 1-based CSV line, 0 when built in code
};

struct Rejection {
    std::size_t line = 0;
    std::string annotator_id;
    std::string hs_id;
    std::string method;
    std::string reason;
};

/// Parses the annotations CSV. Rows that cannot be read into a record
/// (missing columns, non-integer Likert fields, bad booleans) are returned
/// as rejections. Throws ValidationError if a required column is missing.
std::vector<AnnotationRecord> read_annotations(std::string_view csv_text, std::vector<Rejection>& rejected);

struct MethodSummary {
    std::string method;
    std::size_t evaluations = 0;
    long relevance_sum = 0;
    long factuality_sum = 0;
    long cogency_sum = 0;
    long correctness_sum = 0;
    std::size_t effective = 0;
    std::size_t best = 0;
};

struct AnnotationSummary {
    std::vector<MethodSummary> methods;  ///< sorted by method name
    std::size_t evaluations = 0;
    std::size_t effective = 0;
    std::vector<Rejection> rejected;

    [[nodiscard]] double effective_fraction() const;
};

/// Records with a Likert value outside 1..3 are rejected individually; a
/// duplicated (annotator, hs, method) rejects the later record; an
/// (annotator, hs) group without exactly one is_best is rejected whole.
AnnotationSummary aggregate_annotations(const std::vector<AnnotationRecord>& records);

/// sum / n to two decimals, rounded half up exactly; n > 0.
std::string format_mean2(long sum, std::size_t n);

/// 100 * num / den to whole percent, rounded half up exactly; den > 0.
std::string format_percent0(std::size_t num, std::size_t den);

nlohmann::json to_json(const AnnotationSummary& s);

/// Table 5 style CSV: method,evaluations,relevance,factuality,cogency,correctness,effective,best.
std::string annotation_table_csv(const AnnotationSummary& s);

// ------------------------------------------------------ significance

inline const std::vector<std::string> kTestedMetrics = {"bleu4", "rouge_l", "meteor", "bertscore_f1", "safety"};

struct PairwiseTest {
    std::string system_a;
    std::string system_b;
    WilcoxonResult wilcoxon;
    double p_adjusted = 1.0;
};

struct MetricTest {
    std::string model;
    std::string metric;
    std::vector<std::string> systems;  ///< retrievers, in report order
    std::size_t n_samples = 0;
    std::size_t dropped_incomplete = 0;  ///< hs ids lacking a value for some system
    std::optional<FriedmanResult> friedman;
    std::vector<PairwiseTest> pairwise;  ///< Bonferroni over the pairs of this (model, metric)
    std::string note;
};

/// For each model and per-sample metric: a Friedman test across the
/// retrievers and Bonferroni-corrected pairwise Wilcoxon tests, over the hs
/// ids that have a value under every retriever. Diversity metrics are
/// corpus-level and not tested.
std::vector<MetricTest> significance_tests(const metrics::MetricReport& report);

nlohmann::json to_json(const std::vector<MetricTest>& tests);

}  // namespace csrag::stats
