#ifndef ZGEN_STATS_H_
#define ZGEN_STATS_H_

#include <span>

namespace zgen {

// Area under the ROC curve in its Mann-Whitney form: the fraction of
// (positive, negative) pairs ranked correctly, ties counting one half.
// Labels are 0/1. Throws if either class is absent.
double Auc(std::span<const double> scores, std::span<const int> labels);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p_value = 1.0;    // two-sided
  bool significant = false;  // p < 0.05
  int n = 0;                 // non-zero differences used
  bool exact = true;
};

struct WilcoxonOptions {
  // Largest n handled by the exact null distribution.
  int exact_max_n = 25;
  // Half-unit continuity correction in the normal approximation.
  bool continuity_correction = true;
};

// Paired signed-rank test on d = x - y. Zero differences are dropped and
// tied magnitudes share average ranks.
WilcoxonResult Wilcoxon(std::span<const double> x, std::span<const double> y,
                        const WilcoxonOptions& options = {});

struct Summary {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

// Quartiles by linear interpolation between order statistics.
Summary Summarize(std::span<const double> values);

// Linear-interpolation quantile of already sorted values.
double SortedQuantile(std::span<const double> sorted, double q);

}  // namespace zgen

#endif  // ZGEN_STATS_H_
