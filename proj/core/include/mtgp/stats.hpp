#pragma once

#include <vector>

namespace mtgp::stats {

double mean(const std::vector<double>& v);
/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
double sample_stddev(const std::vector<double>& v);
double max_value(const std::vector<double>& v);

struct RanksumResult {
  double statistic = 0.0;  // z-score of sample A's rank sum (continuity-corrected)
  double p_value = 1.0;    // two-sided
};

/// Wilcoxon rank-sum (Mann-Whitney) test with midrank tie handling. For
/// max(|a|,|b|) <= 8 the p-value comes from exact enumeration of the rank-sum
/// distribution (the normal approximation is off by far more than 0.01
/// there); larger samples use the normal approximation with tie-corrected
/// variance and continuity correction. Throws if either sample has < 2 values.
RanksumResult wilcoxon_ranksum(const std::vector<double>& a,
                               const std::vector<double>& b);

/// '+' when a is significantly above b at level alpha, '-' when below,
/// '=' otherwise.
char ranksum_verdict(const std::vector<double>& a, const std::vector<double>& b,
                     double alpha = 0.05);

double normal_cdf(double z);

}  // namespace mtgp::stats
