#include "mtgp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace mtgp::stats {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double max_value(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("max_value: empty sample");
  return *std::max_element(v.begin(), v.end());
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Midranks stored doubled so ties stay exact integers: positions p..q
// (0-based) of a tied run share 1-based midrank (p+q+2)/2, i.e. doubled
// midrank p+q+2.
struct PooledRanks {
  std::vector<std::int64_t> doubled;  // per pooled element, pool order
  double tie_term = 0.0;              // sum of t^3 - t over tied groups
};

PooledRanks pooled_midranks(const std::vector<double>& pool) {
  const std::size_t n = pool.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pool[i] < pool[j]; });

  PooledRanks out;
  out.doubled.assign(n, 0);
  std::size_t p = 0;
  while (p < n) {
    std::size_t q = p;
    while (q + 1 < n && pool[order[q + 1]] == pool[order[p]]) ++q;
    const auto dr = static_cast<std::int64_t>(p + q + 2);
    for (std::size_t k = p; k <= q; ++k) out.doubled[order[k]] = dr;
    const double t = static_cast<double>(q - p + 1);
    out.tie_term += t * t * t - t;
    p = q + 1;
  }
  return out;
}

// Exact two-sided p-value: enumerate how many size-n subsets of the pooled
// doubled ranks reach each possible sum, then double the smaller tail.
double exact_two_sided_p(const std::vector<std::int64_t>& doubled, std::size_t n,
                         std::int64_t w2_observed) {
  std::int64_t total = 0;
  for (auto d : doubled) total += d;
  const auto max_sum = static_cast<std::size_t>(total);

  // dp[k][s] = number of subsets of size k with doubled-rank sum s.
  std::vector<std::vector<std::uint64_t>> dp(
      n + 1, std::vector<std::uint64_t>(max_sum + 1, 0));
  dp[0][0] = 1;
  for (auto d : doubled) {
    for (std::size_t k = std::min(n, dp.size() - 1); k >= 1; --k) {
      for (std::size_t s = max_sum; s >= static_cast<std::size_t>(d); --s) {
        dp[k][s] += dp[k - 1][s - static_cast<std::size_t>(d)];
      }
    }
  }

  std::uint64_t below_eq = 0, above_eq = 0, all = 0;
  for (std::size_t s = 0; s <= max_sum; ++s) {
    const std::uint64_t c = dp[n][s];
    all += c;
    if (static_cast<std::int64_t>(s) <= w2_observed) below_eq += c;
    if (static_cast<std::int64_t>(s) >= w2_observed) above_eq += c;
  }
  const double tail =
      static_cast<double>(std::min(below_eq, above_eq)) / static_cast<double>(all);
  return std::min(1.0, 2.0 * tail);
}

}  // namespace

RanksumResult wilcoxon_ranksum(const std::vector<double>& a,
                               const std::vector<double>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n < 2 || m < 2) {
    throw std::invalid_argument("wilcoxon_ranksum: both samples need >= 2 values");
  }

  std::vector<double> pool;
  pool.reserve(n + m);
  pool.insert(pool.end(), a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  const PooledRanks ranks = pooled_midranks(pool);

  std::int64_t w2 = 0;  // doubled rank sum of sample a
  for (std::size_t i = 0; i < n; ++i) w2 += ranks.doubled[i];

  const double big_n = static_cast<double>(n + m);
  const double w = static_cast<double>(w2) / 2.0;
  const double mu = static_cast<double>(n) * (big_n + 1.0) / 2.0;
  const double var =
      (static_cast<double>(n) * static_cast<double>(m) / 12.0) *
      ((big_n + 1.0) - ranks.tie_term / (big_n * (big_n - 1.0)));

  RanksumResult res;
  if (var > 0.0) {
    const double d = w - mu;
    if (std::abs(d) > 0.5) {
      res.statistic = (d - (d > 0 ? 0.5 : -0.5)) / std::sqrt(var);
    }
  }

  if (std::max(n, m) <= 8) {
    res.p_value = exact_two_sided_p(ranks.doubled, n, w2);
  } else if (var > 0.0 && res.statistic != 0.0) {
    res.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(res.statistic)));
  } else {
    res.p_value = 1.0;
  }
  return res;
}

char ranksum_verdict(const std::vector<double>& a, const std::vector<double>& b,
                     double alpha) {
  const RanksumResult r = wilcoxon_ranksum(a, b);
  if (r.p_value < alpha && r.statistic != 0.0) return r.statistic > 0 ? '+' : '-';
  return '=';
}

}  // namespace mtgp::stats
