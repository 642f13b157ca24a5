#include "zgen/stats.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "zgen/error.h"

namespace zgen {

namespace {

// Average 1-based ranks of `values`.
std::vector<double> AverageRanks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

double Auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auc: length mismatch");
  double positives = 0.0;
  double negatives = 0.0;
  for (int y : labels) {
    if (y == 1) {
      positives += 1.0;
    } else if (y == 0) {
      negatives += 1.0;
    } else {
      throw Error("auc: labels must be 0 or 1");
    }
  }
  if (positives == 0.0 || negatives == 0.0) {
    throw Error("auc: both classes must be present");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw Error("auc: NaN score");
  }
  const std::vector<double> ranks = AverageRanks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

WilcoxonResult Wilcoxon(std::span<const double> x, std::span<const double> y,
                        const WilcoxonOptions& options) {
  if (x.size() != y.size()) throw Error("wilcoxon: samples must be paired");
  std::vector<double> magnitude;
  std::vector<int> sign;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (std::isnan(d)) throw Error("wilcoxon: NaN difference");
    if (d == 0.0) continue;
    magnitude.push_back(std::abs(d));
    sign.push_back(d > 0 ? 1 : -1);
  }
  WilcoxonResult result;
  result.n = static_cast<int>(magnitude.size());
  if (magnitude.empty()) return result;

  const std::vector<double> ranks = AverageRanks(magnitude);
  double w_plus = 0.0;
  double w_minus = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    (sign[i] > 0 ? w_plus : w_minus) += ranks[i];
  }
  result.statistic = std::min(w_plus, w_minus);
  const double n = static_cast<double>(result.n);

  if (result.n <= options.exact_max_n) {
    // Null distribution of W+ over all 2^n sign patterns; doubled ranks are
    // integers even with ties.
    std::vector<int> doubled(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    int reach = 0;
    for (int r : doubled) {
      for (int s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) {
          ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
        }
      }
      reach += r;
    }
    const int limit = static_cast<int>(std::lround(2.0 * result.statistic));
    double tail = 0.0;
    for (int s = 0; s <= limit; ++s) tail += ways[static_cast<std::size_t>(s)];
    result.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, result.n));
    result.exact = true;
  } else {
    std::vector<double> sorted = magnitude;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i + 1;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    double deviation = result.statistic - mean;  // never positive
    if (options.continuity_correction) deviation = std::min(0.0, deviation + 0.5);
    const double z = variance > 0.0 ? deviation / std::sqrt(variance) : 0.0;
    result.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
    result.exact = false;
  }
  result.significant = result.p_value < 0.05;
  return result;
}

double SortedQuantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile: empty input");
  const double position = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = position - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Summary Summarize(std::span<const double> values) {
  if (values.empty()) throw Error("summarize: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Summary s;
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = SortedQuantile(sorted, 0.5);
  s.q1 = SortedQuantile(sorted, 0.25);
  s.q3 = SortedQuantile(sorted, 0.75);
  s.iqr = s.q3 - s.q1;
  return s;
}

}  // namespace zgen
