#pragma once
// Brute-force references for the significance tests.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "csrag/stats/stats.hpp"

namespace oracle {

// Conover's form: (k-1) * sum_j (R_j - n(k+1)/2)^2 / (A - C), A = sum r^2, C = nk(k+1)^2/4.
inline double friedman_statistic(const std::vector<std::vector<double>>& rows) {
    const double n = static_cast<double>(rows.size());
    const std::size_t k = rows.front().size();
    std::vector<double> rsum(k, 0.0);
    double a = 0;
    for (const auto& row : rows) {
        const auto r = csrag::stats::midranks(row);
        for (std::size_t j = 0; j < k; ++j) {
            rsum[j] += r[j];
            a += r[j] * r[j];
        }
    }
    const double kd = static_cast<double>(k);
    const double c = n * kd * (kd + 1) * (kd + 1) / 4.0;
    if (a - c <= 1e-12) return 0.0;
    double num = 0;
    for (double r : rsum) num += (r - n * (kd + 1) / 2.0) * (r - n * (kd + 1) / 2.0);
    return (kd - 1) * num / (a - c);
}

// Every combination of within-row orderings, (k!)^n of them.
inline double friedman_full_permutation_p(const std::vector<std::vector<double>>& rows) {
    const double obs = friedman_statistic(rows);
    std::vector<std::vector<std::vector<double>>> row_perms;
    for (const auto& row : rows) {
        std::vector<std::size_t> idx(row.size());
        std::iota(idx.begin(), idx.end(), 0);
        auto& perms = row_perms.emplace_back();
        do {
            std::vector<double> p;
            for (auto i : idx) p.push_back(row[i]);
            perms.push_back(p);
        } while (std::next_permutation(idx.begin(), idx.end()));
    }
    std::vector<std::size_t> pick(rows.size(), 0);
    double hits = 0, total = 0;
    for (;;) {
        std::vector<std::vector<double>> cur;
        for (std::size_t i = 0; i < rows.size(); ++i) cur.push_back(row_perms[i][pick[i]]);
        total += 1;
        if (friedman_statistic(cur) >= obs - 1e-9) hits += 1;
        std::size_t i = 0;
        while (i < pick.size() && ++pick[i] == row_perms[i].size()) pick[i++] = 0;
        if (i == pick.size()) break;
    }
    return hits / total;
}

inline double friedman_monte_carlo_p(std::vector<std::vector<double>> rows, std::size_t draws, std::uint64_t seed) {
    const double obs = friedman_statistic(rows);
    std::mt19937_64 rng(seed);
    std::size_t hits = 0;
    for (std::size_t d = 0; d < draws; ++d) {
        for (auto& row : rows) std::shuffle(row.begin(), row.end(), rng);
        if (friedman_statistic(rows) >= obs - 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(draws);
}

// Two-sided exact p by walking all 2^n sign patterns of the non-zero differences.
inline double wilcoxon_enumeration_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    if (d.empty()) return 1.0;
    std::vector<double> mag;
    for (double x : d) mag.push_back(std::fabs(x));
    const auto r = csrag::stats::midranks(mag);
    const double n = static_cast<double>(d.size());
    const double mu = n * (n + 1) / 4.0;
    double obs = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] > 0) obs += r[i];
    const double dev = std::fabs(obs - mu);
    std::size_t hits = 0;
    const std::size_t patterns = std::size_t{1} << d.size();
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (mask >> i & 1u) w += r[i];
        if (std::fabs(w - mu) >= dev - 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(patterns);
}

}  // namespace oracle
