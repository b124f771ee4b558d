#pragma once

// Small statistics toolkit: descriptive stats, Pearson correlation, Welch's
// t-test, Mann-Whitney U (normal approximation), exact sign/McNemar test.
// Distribution tails come from Boost.Math.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "rsel/error.hpp"

namespace rsel::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double median(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Unbiased sample variance (n - 1 denominator).
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

// nullopt when either input is constant (correlation undefined).
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw Error(ErrorKind::InvalidRecord, "pearson: length mismatch");
    if (xs.size() < 2) throw Error(ErrorKind::TooFewRows, "pearson needs at least two points");
    const double mx = mean(xs), my = mean(ys);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double df = 0.0;  // Welch only
};

// Two-sided Welch t-test; statistic is positive when mean(a) > mean(b).
inline TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw Error(ErrorKind::DegenerateGroup, "each group needs at least two samples");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = mean(a), mb = mean(b);
    const double va = sample_variance(a) / na, vb = sample_variance(b) / nb;
    const double se2 = va + vb;
    TestResult r;
    if (se2 == 0.0) {
        if (ma == mb) return {0.0, 1.0, na + nb - 2.0};
        r.statistic = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        r.df = na + nb - 2.0;
        return r;
    }
    r.statistic = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    if (r.statistic == 0.0) {
        r.p_value = 1.0;
        return r;
    }
    boost::math::students_t dist(r.df);
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.statistic))));
    return r;
}

// Two-sided Mann-Whitney U with tie correction and continuity correction.
// statistic is U for the first sample.
inline TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::DegenerateGroup, "mann-whitney needs nonempty groups");
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<std::pair<double, int>> all;
    all.reserve(n);
    for (double x : a) all.emplace_back(x, 0);
    for (double x : b) all.emplace_back(x, 1);
    std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

    double rank_sum_a = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && all[j].first == all[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_sum_a += avg_rank;
        i = j;
    }
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
    const double u1 = rank_sum_a - dn1 * (dn1 + 1.0) / 2.0;
    const double u2 = dn1 * dn2 - u1;
    const double mu = dn1 * dn2 / 2.0;
    const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    TestResult r;
    r.statistic = u1;
    if (var <= 0.0) {
        r.p_value = 1.0;
        return r;
    }
    const double z = (std::max(u1, u2) - mu - 0.5) / std::sqrt(var);
    boost::math::normal_distribution<double> norm;
    r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(norm, z)), 0.0, 1.0);
    return r;
}

// Exact two-sided binomial test of k successes in n trials at p = 1/2.
inline double exact_sign_test(std::size_t k, std::size_t n) {
    if (n == 0) return 1.0;
    const std::size_t tail = std::min(k, n - k);
    const double log_half_n = -static_cast<double>(n) * std::log(2.0);
    double sum = 0.0;
    for (std::size_t i = 0; i <= tail; ++i) {
        const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                                  std::lgamma(static_cast<double>(i) + 1.0) -
                                  std::lgamma(static_cast<double>(n - i) + 1.0);
        sum += std::exp(log_choose + log_half_n);
    }
    // The two tails overlap at the centre when k == n/2.
    return std::min(1.0, 2.0 * sum);
}

}  // namespace rsel::stats
