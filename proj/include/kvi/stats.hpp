#pragma once

#include <cstdint>
#include <span>

namespace kvi {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

double mean(std::span<const double> xs);

/// Percentile bootstrap of the mean, reported in percent (scores are 0/1 or
/// fractions). Quantiles interpolate linearly between order statistics.
/// Throws ConfigError on empty input or a level outside (0, 1).
Interval bootstrap_ci(std::span<const double> scores, int resamples = 1000, double level = 0.95,
                      std::uint64_t seed = 7);

/// Two-sided paired sign-flip test on the mean difference:
/// p = (1 + #{|T*| >= |T|}) / (1 + permutations). Throws ConfigError when the
/// lengths differ or the input is empty.
double permutation_test(std::span<const double> a, std::span<const double> b, int permutations = 2000,
                        std::uint64_t seed = 7);

}  // namespace kvi
