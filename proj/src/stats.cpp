#include "kvi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kvi/errors.hpp"
#include "kvi/hashing.hpp"

namespace kvi {

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const size_t i = static_cast<size_t>(std::floor(pos));
    const size_t j = std::min(i + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(i);
    return v[i] + (v[j] - v[i]) * frac;
}

}  // namespace

Interval bootstrap_ci(std::span<const double> scores, int resamples, double level, std::uint64_t seed) {
    if (scores.empty()) throw ConfigError("bootstrap_ci needs at least one score");
    if (resamples < 1) throw ConfigError("bootstrap_ci needs at least one resample");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
    SplitMix64 rng{seed};
    const size_t n = scores.size();
    std::vector<double> means(static_cast<size_t>(resamples));
    for (auto& m : means) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += scores[rng.below(n)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - level) / 2.0;
    Interval ci{100.0 * quantile_sorted(means, alpha), 100.0 * quantile_sorted(means, 1.0 - alpha)};
    if (ci.hi < ci.lo) std::swap(ci.lo, ci.hi);
    return ci;
}

double permutation_test(std::span<const double> a, std::span<const double> b, int permutations,
                        std::uint64_t seed) {
    if (a.size() != b.size()) {
        throw ConfigError("paired test needs equal lengths (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw ConfigError("paired test needs at least one pair");
    if (permutations < 1) throw ConfigError("permutation count must be positive");
    const size_t n = a.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double observed = std::fabs(mean(d));
    SplitMix64 rng{seed};
    long extreme = 0;
    for (int p = 0; p < permutations; ++p) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += (rng.next() >> 63) ? -d[i] : d[i];
        if (std::fabs(s / static_cast<double>(n)) >= observed - 1e-12) ++extreme;
    }
    return (1.0 + static_cast<double>(extreme)) / (1.0 + static_cast<double>(permutations));
}

}  // namespace kvi
