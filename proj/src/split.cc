#include "zgen/split.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zgen/error.h"
#include "zgen/random.h"

namespace zgen {

TrainTest SplitOutOfSample(const Table& table, double test_fraction,
                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error("split: test fraction must lie in (0, 1)");
  }
  const BinaryTarget target = ExtractBinaryTarget(table);
  std::vector<std::size_t> by_class[2];
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    by_class[target.labels[r]].push_back(r);
  }
  for (const auto& rows : by_class) {
    if (rows.size() < 2) {
      throw Error("split: every class needs at least two rows");
    }
  }
  const auto n = static_cast<double>(table.num_rows());
  const auto n_test =
      static_cast<std::size_t>(std::ceil(n * test_fraction - 1e-9));

  // Largest-remainder allocation of the test rows across the two classes.
  std::size_t take[2];
  double remainder[2];
  std::size_t allocated = 0;
  for (int k = 0; k < 2; ++k) {
    const double exact =
        static_cast<double>(by_class[k].size()) * static_cast<double>(n_test) / n;
    take[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(take[k]);
    allocated += take[k];
  }
  while (allocated < n_test) {
    // Ties go to the larger class, then class 0.
    int k = remainder[0] > remainder[1] ||
                    (remainder[0] == remainder[1] &&
                     by_class[0].size() >= by_class[1].size())
                ? 0
                : 1;
    ++take[k];
    remainder[k] = -1.0;
    ++allocated;
  }

  Rng rng(seed);
  std::vector<std::uint8_t> is_test(table.num_rows(), 0);
  for (int k = 0; k < 2; ++k) {
    take[k] = std::min(take[k], by_class[k].size() - 1);
    for (std::size_t i :
         SampleWithoutReplacement(by_class[k].size(), take[k], rng)) {
      is_test[by_class[k][i]] = 1;
    }
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    (is_test[r] ? test_rows : train_rows).push_back(r);
  }
  return {table.SelectRows(train_rows), table.SelectRows(test_rows)};
}

namespace {

std::vector<std::size_t> TimeOrder(const Table& table) {
  const auto time = table.schema().time_index();
  if (!time) throw Error("split: table has no time index column");
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (table.is_missing(r, *time)) {
      throw Error("split: missing time index value at row " +
                  std::to_string(r));
    }
  }
  std::vector<std::size_t> order(table.num_rows());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<double>& t = table.column(*time).values;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  return order;
}

}  // namespace

TrainTest SplitOutOfTime(const Table& table, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("split: train fraction must lie in (0, 1)");
  }
  const std::vector<std::size_t> order = TimeOrder(table);
  const auto cut = static_cast<std::size_t>(
      std::floor(static_cast<double>(order.size()) * train_fraction + 1e-9));
  const std::span<const std::size_t> all(order);
  return {table.SelectRows(all.first(cut)), table.SelectRows(all.subspan(cut))};
}

TrainTest SplitAtTime(const Table& table, double cutoff) {
  const std::vector<std::size_t> order = TimeOrder(table);
  const std::vector<double>& t = table.column(*table.schema().time_index()).values;
  const auto it = std::partition_point(order.begin(), order.end(),
                                       [&](std::size_t r) { return t[r] < cutoff; });
  const auto cut = static_cast<std::size_t>(it - order.begin());
  const std::span<const std::size_t> all(order);
  return {table.SelectRows(all.first(cut)), table.SelectRows(all.subspan(cut))};
}

Table AugmentRandom(const Table& table, std::size_t target_rows,
                    std::uint64_t seed) {
  const std::size_t n = table.num_rows();
  if (target_rows < n) {
    throw Error("augment: target rows below the current row count");
  }
  if (n == 0 && target_rows > 0) throw Error("augment: empty table");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(seed);
  while (rows.size() < target_rows) rows.push_back(rng.Below(n));
  return table.SelectRows(rows);
}

Table Subsample(const Table& table, double fraction, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(
      std::llround(static_cast<double>(table.num_rows()) * fraction));
  Rng rng(seed);
  std::vector<std::size_t> rows =
      SampleWithoutReplacement(table.num_rows(), k, rng);
  std::sort(rows.begin(), rows.end());
  return table.SelectRows(rows);
}

}  // namespace zgen
