#include "csrag/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "csrag/common/csv.hpp"
#include "csrag/common/error.hpp"
#include "csrag/common/text.hpp"

namespace csrag::stats {
namespace {

using json = nlohmann::json;

constexpr double kLn10 = 2.302585092994046;

// Sum over tie groups of t^3 - t.
double tie_term(const std::vector<double>& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    double out = 0.0;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        const double t = static_cast<double>(j - i);
        out += t * t * t - t;
        i = j;
    }
    return out;
}

Tail tail_from_log(double log_p) {
    return {std::exp(log_p), log_p / kLn10};
}

// Exact permutation p of the Friedman statistic. Each row's doubled midrank
// vector is permuted uniformly and independently; with the tie structure
// fixed the statistic is increasing in the sum of squared rank sums, so the
// tail is P(sum R_j^2 >= observed).
std::optional<double> friedman_exact(const std::vector<std::vector<long>>& doubled, std::size_t k,
                                     std::size_t state_limit) {
    const std::size_t n = doubled.size();
    if (k > 7) return std::nullopt;
    const double width = 2.0 * static_cast<double>(n) * static_cast<double>(k - 1) + 1.0;
    if (std::pow(width, static_cast<double>(k - 1)) > static_cast<double>(state_limit)) return std::nullopt;

    // Key: the first k-1 doubled rank sums in base `base` (the last is implied).
    const auto base = static_cast<std::uint64_t>(2 * n * k + 1);
    auto encode = [&](const std::vector<long>& sums) {
        std::uint64_t key = 0;
        for (std::size_t j = 0; j + 1 < k; ++j) key = key * base + static_cast<std::uint64_t>(sums[j]);
        return key;
    };
    auto decode = [&](std::uint64_t key, long total) {
        std::vector<long> sums(k);
        long used = 0;
        for (std::size_t j = k - 1; j-- > 0;) {
            sums[j] = static_cast<long>(key % base);
            key /= base;
            used += sums[j];
        }
        sums[k - 1] = total - used;
        return sums;
    };

    double k_fact = 1.0;
    for (std::size_t i = 2; i <= k; ++i) k_fact *= static_cast<double>(i);

    std::unordered_map<std::uint64_t, double> dist{{0, 1.0}};
    long total = 0;
    for (const auto& row : doubled) {
        // distinct arrangements of this row with their probabilities
        std::map<std::vector<long>, double> moves;
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            std::vector<long> m(k);
            for (std::size_t j = 0; j < k; ++j) m[j] = row[perm[j]];
            moves[m] += 1.0 / k_fact;
        } while (std::next_permutation(perm.begin(), perm.end()));

        std::unordered_map<std::uint64_t, double> next;
        next.reserve(dist.size() * moves.size());
        for (const auto& [key, prob] : dist) {
            auto sums = decode(key, total);
            for (const auto& [m, w] : moves) {
                std::vector<long> s2 = sums;
                for (std::size_t j = 0; j < k; ++j) s2[j] += m[j];
                next[encode(s2)] += prob * w;
            }
        }
        total += std::accumulate(row.begin(), row.end(), 0L);
        dist = std::move(next);
        if (dist.size() > state_limit) return std::nullopt;
    }

    std::vector<long> obs(k, 0);
    for (const auto& row : doubled)
        for (std::size_t j = 0; j < k; ++j) obs[j] += row[j];
    long long ss_obs = 0;
    for (long v : obs) ss_obs += static_cast<long long>(v) * v;

    double p = 0.0;
    for (const auto& [key, prob] : dist) {
        long long ss = 0;
        for (long v : decode(key, total)) ss += static_cast<long long>(v) * v;
        if (ss >= ss_obs) p += prob;
    }
    return std::min(1.0, p);
}

// Number of sign patterns per doubled W+ value, by a subset-sum count over
// the doubled ranks.
std::vector<std::uint64_t> signed_rank_counts(const std::vector<long>& doubled_ranks) {
    const long max_sum = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0L);
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(max_sum) + 1, 0);
    counts[0] = 1;
    long reach = 0;
    for (long r : doubled_ranks) {
        reach += r;
        for (long s = reach; s >= r; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
    }
    return counts;
}

bool parse_bool(std::string_view s, bool& out) {
    const auto l = text::to_lower_ascii(text::trim(s));
    if (l == "true" || l == "1" || l == "yes" || l == "y") {
        out = true;
        return true;
    }
    if (l == "false" || l == "0" || l == "no" || l == "n") {
        out = false;
        return true;
    }
    return false;
}

bool parse_int(std::string_view s, int& out) {
    const auto t = text::trim(s);
    if (t.empty() || t.size() > 9) return false;
    int v = 0;
    for (char c : t) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

std::string fixed_from_units(unsigned long long units, int decimals) {
    if (decimals == 0) return std::to_string(units);
    unsigned long long scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    std::string frac = std::to_string(units % scale);
    frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
    return std::to_string(units / scale) + (decimals ? "." + frac : "");
}

}  // namespace

void validate(const PairedSamples& s) {
    if (s.systems.size() < 2) throw PreconditionError("paired samples need at least 2 systems");
    if (s.values.size() < 2) throw PreconditionError("paired samples need at least 2 rows");
    for (const auto& row : s.values) {
        if (row.size() != s.systems.size()) throw PreconditionError("paired samples: ragged row");
        for (double v : row)
            if (!std::isfinite(v)) throw PreconditionError("paired samples: non-finite value");
    }
}

std::vector<double> midranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) ranks[idx[t]] = r;
        i = j;
    }
    return ranks;
}

double log_gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw PreconditionError("log_gamma_q: need a > 0, x >= 0");
    if (x == 0.0) return 0.0;
    const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
    constexpr double kEps = 1e-16;
    constexpr int kMaxIter = 100000;
    if (x < a + 1.0) {
        // series for P, then Q = 1 - P
        double ap = a, del = 1.0 / a, sum = del;
        for (int i = 0; i < kMaxIter; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * kEps) break;
        }
        const double p = std::exp(log_prefix + std::log(sum));
        return std::log1p(-std::min(p, 1.0));
    }
    // continued fraction for Q (modified Lentz)
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return log_prefix + std::log(h);
}

Tail chi2_upper_tail(double x, double df) {
    if (!(df > 0.0)) throw PreconditionError("chi2 tail: df must be positive");
    if (x <= 0.0) return {1.0, 0.0};
    return tail_from_log(log_gamma_q(df / 2.0, x / 2.0));
}

FriedmanResult friedman_test(const PairedSamples& s, std::size_t exact_state_limit) {
    validate(s);
    const std::size_t n = s.values.size();
    const std::size_t k = s.systems.size();
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);

    std::vector<double> rank_sums(k, 0.0);
    std::vector<std::vector<long>> doubled;
    double ties = 0.0;
    for (const auto& row : s.values) {
        const auto r = midranks(row);
        std::vector<long> d(k);
        for (std::size_t j = 0; j < k; ++j) {
            rank_sums[j] += r[j];
            d[j] = std::lround(2.0 * r[j]);
        }
        doubled.push_back(std::move(d));
        ties += tie_term(row);
    }

    FriedmanResult out;
    out.df = kd - 1.0;
    const double denom = 1.0 - ties / (nd * (kd * kd * kd - kd));
    if (denom <= 1e-12) {
        out.exact = true;
        return out;  // every row constant
    }
    double ss = 0.0;
    for (double r : rank_sums) ss += r * r;
    out.statistic = std::max(0.0, (12.0 / (nd * kd * (kd + 1.0)) * ss - 3.0 * nd * (kd + 1.0)) / denom);
    const auto tail = chi2_upper_tail(out.statistic, out.df);
    out.p_chi2 = tail.p;
    out.p_value = tail.p;
    out.log10_p = tail.log10_p;
    if (const auto exact = friedman_exact(doubled, k, exact_state_limit)) {
        out.exact = true;
        out.p_value = *exact;
        out.log10_p = *exact > 0.0 ? std::log10(*exact) : -std::numeric_limits<double>::infinity();
    }
    return out;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method) {
    if (a.size() != b.size()) throw PreconditionError("wilcoxon: samples differ in length");
    std::vector<double> d;
    WilcoxonResult out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw PreconditionError("wilcoxon: non-finite value");
        const double diff = a[i] - b[i];
        if (diff == 0.0)
            ++out.zeros;
        else
            d.push_back(diff);
    }
    out.n = d.size();
    if (d.empty()) {
        out.exact = true;
        return out;
    }

    std::vector<double> mag(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::fabs(d[i]);
    const auto ranks = midranks(mag);
    const double nd = static_cast<double>(d.size());
    double w_plus = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] > 0) w_plus += ranks[i];
    const double total = nd * (nd + 1.0) / 2.0;
    out.w_plus = w_plus;
    out.statistic = std::min(w_plus, total - w_plus);

    const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && d.size() <= kWilcoxonExactMaxN);
    if (exact) {
        if (d.size() > 60) throw PreconditionError("wilcoxon: exact test limited to n <= 60");
        std::vector<long> doubled(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) doubled[i] = std::lround(2.0 * ranks[i]);
        const auto counts = signed_rank_counts(doubled);
        // deviation from the mean in units of 1/4: |2 * (2W) - n(n+1)|
        const long long centre = static_cast<long long>(d.size()) * static_cast<long long>(d.size() + 1);
        const long long obs = std::llabs(2LL * std::llround(2.0 * w_plus) - centre);
        long double hits = 0.0L;
        for (std::size_t s = 0; s < counts.size(); ++s)
            if (counts[s] && std::llabs(2LL * static_cast<long long>(s) - centre) >= obs) hits += counts[s];
        const long double all = std::ldexp(1.0L, static_cast<int>(d.size()));
        out.p_value = static_cast<double>(std::min(1.0L, hits / all));
        out.log10_p = std::log10(out.p_value);
        out.exact = true;
        return out;
    }

    const double mu = total / 2.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term(mag) / 48.0;
    const double z = std::max(0.0, std::fabs(w_plus - mu) - 0.5) / std::sqrt(var);
    const double u = z / std::sqrt(2.0);
    out.p_value = std::min(1.0, std::erfc(u));
    if (out.p_value > 0.0)
        out.log10_p = std::log10(out.p_value);
    else  // erfc(u) ~ exp(-u^2) / (u sqrt(pi)) for large u
        out.log10_p = (-u * u - std::log(u * std::sqrt(M_PI))) / kLn10;
    return out;
}

std::vector<double> bonferroni(const std::vector<double>& p_values, std::size_t m) {
    if (m < p_values.size()) throw PreconditionError("bonferroni: m is smaller than the number of p-values");
    std::vector<double> out;
    out.reserve(p_values.size());
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("bonferroni: p-value outside [0, 1]");
        out.push_back(std::min(1.0, p * static_cast<double>(m)));
    }
    return out;
}

// ---------------------------------------------------------- human study

std::vector<AnnotationRecord> read_annotations(std::string_view csv_text, std::vector<Rejection>& rejected) {
    const auto table = csv::Table::parse(csv_text);
    static const char* kCols[] = {"annotator_id", "hs_id", "method", "relevance", "factuality",
                                  "cogency", "correctness", "effective", "is_best"};
    for (const char* c : kCols)
        if (!table.has_column(c)) throw ValidationError(std::string("annotations: missing column ") + c);

    std::vector<AnnotationRecord> out;
    std::size_t line = 1;
    for (const auto& row : table.rows()) {
        ++line;
        AnnotationRecord r;
        r.line = line;
        r.annotator_id = text::trim(table.get(row, "annotator_id"));
        r.hs_id = text::trim(table.get(row, "hs_id"));
        r.method = text::trim(table.get(row, "method"));
        std::string reason;
        if (r.annotator_id.empty() || r.hs_id.empty() || r.method.empty()) reason = "empty identifier";
        const std::pair<const char*, int*> likert[] = {{"relevance", &r.relevance},
                                                       {"factuality", &r.factuality},
                                                       {"cogency", &r.cogency},
                                                       {"correctness", &r.correctness}};
        for (const auto& [name, field] : likert)
            if (reason.empty() && !parse_int(table.get(row, name), *field))
                reason = std::string(name) + " is not an integer";
        if (reason.empty() && !parse_bool(table.get(row, "effective"), r.effective)) reason = "effective is not a boolean";
        if (reason.empty() && !parse_bool(table.get(row, "is_best"), r.is_best)) reason = "is_best is not a boolean";
        if (!reason.empty()) {
            rejected.push_back({line, r.annotator_id, r.hs_id, r.method, reason});
            continue;
        }
        out.push_back(std::move(r));
    }
    return out;
}

double AnnotationSummary::effective_fraction() const {
    return evaluations ? static_cast<double>(effective) / static_cast<double>(evaluations) : 0.0;
}

AnnotationSummary aggregate_annotations(const std::vector<AnnotationRecord>& records) {
    AnnotationSummary out;
    std::vector<const AnnotationRecord*> ok;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& r : records) {
        std::string reason;
        for (const auto& [name, v] : {std::pair{"relevance", r.relevance}, std::pair{"factuality", r.factuality},
                                      std::pair{"cogency", r.cogency}, std::pair{"correctness", r.correctness}}) {
            if (reason.empty() && (v < 1 || v > 3))
                reason = std::string(name) + "=" + std::to_string(v) + " outside 1..3";
        }
        if (reason.empty() && !seen.emplace(r.annotator_id, r.hs_id, r.method).second)
            reason = "duplicate rating of this method by this annotator";
        if (!reason.empty()) {
            out.rejected.push_back({r.line, r.annotator_id, r.hs_id, r.method, reason});
            continue;
        }
        ok.push_back(&r);
    }

    std::map<std::pair<std::string, std::string>, std::size_t> best_per_group;
    for (const auto* r : ok) best_per_group[{r->annotator_id, r->hs_id}] += r->is_best ? 1 : 0;

    std::map<std::string, MethodSummary> by_method;
    for (const auto* r : ok) {
        const auto best = best_per_group.at({r->annotator_id, r->hs_id});
        if (best != 1) {
            out.rejected.push_back({r->line, r->annotator_id, r->hs_id, r->method,
                                    "group has " + std::to_string(best) + " is_best marks (need exactly 1)"});
            continue;
        }
        auto& m = by_method[r->method];
        m.method = r->method;
        ++m.evaluations;
        m.relevance_sum += r->relevance;
        m.factuality_sum += r->factuality;
        m.cogency_sum += r->cogency;
        m.correctness_sum += r->correctness;
        m.effective += r->effective ? 1 : 0;
        m.best += r->is_best ? 1 : 0;
        ++out.evaluations;
        out.effective += r->effective ? 1 : 0;
    }
    for (auto& [name, m] : by_method) out.methods.push_back(std::move(m));
    std::stable_sort(out.rejected.begin(), out.rejected.end(),
                     [](const Rejection& a, const Rejection& b) { return a.line < b.line; });
    return out;
}

std::string format_mean2(long sum, std::size_t n) {
    if (n == 0) throw PreconditionError("mean of zero values");
    if (sum < 0) throw PreconditionError("format_mean2 expects a non-negative sum");
    const auto s = static_cast<unsigned long long>(sum);
    return fixed_from_units((200ULL * s + n) / (2ULL * n), 2);
}

std::string format_percent0(std::size_t num, std::size_t den) {
    if (den == 0) throw PreconditionError("percent of zero");
    return fixed_from_units((200ULL * num + den) / (2ULL * den), 0);
}

json to_json(const AnnotationSummary& s) {
    json methods = json::array();
    for (const auto& m : s.methods) {
        methods.push_back({{"method", m.method},
                           {"evaluations", m.evaluations},
                           {"relevance", format_mean2(m.relevance_sum, m.evaluations)},
                           {"factuality", format_mean2(m.factuality_sum, m.evaluations)},
                           {"cogency", format_mean2(m.cogency_sum, m.evaluations)},
                           {"correctness", format_mean2(m.correctness_sum, m.evaluations)},
                           {"effective", m.effective},
                           {"best", m.best}});
    }
    json rejected = json::array();
    for (const auto& r : s.rejected)
        rejected.push_back({{"line", r.line},
                            {"annotator_id", r.annotator_id},
                            {"hs_id", r.hs_id},
                            {"method", r.method},
                            {"reason", r.reason}});
    return {{"methods", methods},
            {"evaluations", s.evaluations},
            {"effective", s.effective},
            {"effective_percent", s.evaluations ? format_percent0(s.effective, s.evaluations) : "0"},
            {"rejected", rejected}};
}

std::string annotation_table_csv(const AnnotationSummary& s) {
    std::string out = csv::format_row(
        {"method", "evaluations", "relevance", "factuality", "cogency", "correctness", "effective", "best"});
    for (const auto& m : s.methods)
        out += csv::format_row({m.method, std::to_string(m.evaluations), format_mean2(m.relevance_sum, m.evaluations),
                                format_mean2(m.factuality_sum, m.evaluations),
                                format_mean2(m.cogency_sum, m.evaluations),
                                format_mean2(m.correctness_sum, m.evaluations), std::to_string(m.effective),
                                std::to_string(m.best)});
    return out;
}

// ------------------------------------------------------ significance

std::vector<MetricTest> significance_tests(const metrics::MetricReport& report) {
    using Field = std::optional<double> metrics::OutputScores::*;
    const std::map<std::string, Field> fields = {{"bleu4", &metrics::OutputScores::bleu4},
                                                 {"rouge_l", &metrics::OutputScores::rouge_l},
                                                 {"meteor", &metrics::OutputScores::meteor},
                                                 {"bertscore_f1", &metrics::OutputScores::bertscore_f1},
                                                 {"safety", &metrics::OutputScores::safety}};
    std::vector<std::string> models;
    for (const auto& c : report.cells)
        if (std::find(models.begin(), models.end(), c.model_id) == models.end()) models.push_back(c.model_id);

    std::vector<MetricTest> out;
    for (const auto& model : models) {
        std::vector<const metrics::CellReport*> cells;
        for (const auto& c : report.cells)
            if (c.model_id == model) cells.push_back(&c);
        for (const auto& metric : kTestedMetrics) {
            const Field field = fields.at(metric);
            MetricTest t;
            t.model = model;
            t.metric = metric;
            std::vector<std::map<std::string, double>> by_system;
            for (const auto* c : cells) {
                t.systems.emplace_back(index::to_string(c->retriever));
                auto& m = by_system.emplace_back();
                for (const auto& o : c->per_output)
                    if (const auto& v = o.*field) m[o.hs_id] = *v;
            }
            PairedSamples samples;
            samples.systems = t.systems;
            std::set<std::string> considered;
            for (const auto* c : cells) {
                for (const auto& o : c->per_output) {
                    if (!considered.insert(o.hs_id).second) continue;
                    std::vector<double> row;
                    for (const auto& m : by_system) {
                        const auto it = m.find(o.hs_id);
                        if (it == m.end()) break;
                        row.push_back(it->second);
                    }
                    if (row.size() == by_system.size())
                        samples.values.push_back(std::move(row));
                    else
                        ++t.dropped_incomplete;
                }
            }
            t.n_samples = samples.values.size();
            if (t.systems.size() < 2 || t.n_samples < 2) {
                t.note = "needs at least 2 retrievers and 2 complete samples";
                out.push_back(std::move(t));
                continue;
            }
            t.friedman = friedman_test(samples);
            std::vector<double> raw;
            for (std::size_t i = 0; i < t.systems.size(); ++i) {
                for (std::size_t j = i + 1; j < t.systems.size(); ++j) {
                    std::vector<double> a, b;
                    for (const auto& row : samples.values) {
                        a.push_back(row[i]);
                        b.push_back(row[j]);
                    }
                    PairwiseTest p;
                    p.system_a = t.systems[i];
                    p.system_b = t.systems[j];
                    p.wilcoxon = wilcoxon_signed_rank(a, b);
                    raw.push_back(p.wilcoxon.p_value);
                    t.pairwise.push_back(std::move(p));
                }
            }
            const auto adjusted = bonferroni(raw, raw.size());
            for (std::size_t i = 0; i < adjusted.size(); ++i) t.pairwise[i].p_adjusted = adjusted[i];
            out.push_back(std::move(t));
        }
    }
    return out;
}

json to_json(const std::vector<MetricTest>& tests) {
    auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json arr = json::array();
    for (const auto& t : tests) {
        json j = {{"model", t.model},
                  {"metric", t.metric},
                  {"systems", t.systems},
                  {"n_samples", t.n_samples},
                  {"dropped_incomplete", t.dropped_incomplete}};
        if (t.friedman) {
            j["friedman"] = {{"statistic", t.friedman->statistic},   {"df", t.friedman->df},
                             {"p_value", t.friedman->p_value},       {"log10_p", finite(t.friedman->log10_p)},
                             {"p_chi2", t.friedman->p_chi2},         {"exact", t.friedman->exact}};
        }
        json pairs = json::array();
        for (const auto& p : t.pairwise)
            pairs.push_back({{"system_a", p.system_a},
                             {"system_b", p.system_b},
                             {"statistic", p.wilcoxon.statistic},
                             {"w_plus", p.wilcoxon.w_plus},
                             {"n", p.wilcoxon.n},
                             {"zeros", p.wilcoxon.zeros},
                             {"p_value", p.wilcoxon.p_value},
                             {"log10_p", finite(p.wilcoxon.log10_p)},
                             {"exact", p.wilcoxon.exact},
                             {"p_bonferroni", p.p_adjusted}});
        j["pairwise"] = std::move(pairs);
        if (!t.note.empty()) j["note"] = t.note;
        arr.push_back(std::move(j));
    }
    return {{"format_version", 1}, {"tests", std::move(arr)}};
}

}  // namespace csrag::stats
