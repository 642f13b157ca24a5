#ifndef ZGEN_SPLIT_H_
#define ZGEN_SPLIT_H_

#include <cstddef>
#include <cstdint>

#include "zgen/table.h"

namespace zgen {

struct TrainTest {
  Table train;
  Table test;
};

// Stratified out-of-sample split. The test side gets ceil(n * test_fraction)
// rows, allocated across classes by largest remainder, so each class is
// within one row of its exact proportion. Rows keep their file order within
// each side.
TrainTest SplitOutOfSample(const Table& table, double test_fraction,
                           std::uint64_t seed);

// Chronological split on the TimeIndex column: rows are stably sorted by
// time and the first floor(n * train_fraction) go to train.
TrainTest SplitOutOfTime(const Table& table, double train_fraction);

// Chronological split at a cutoff: rows strictly before `cutoff` (same
// units as the TimeIndex column) train, the rest test.
TrainTest SplitAtTime(const Table& table, double cutoff);

// Keeps every original row and appends rows drawn uniformly with
// replacement until the table has `target_rows` rows.
Table AugmentRandom(const Table& table, std::size_t target_rows,
                    std::uint64_t seed);

// `fraction` of the rows (rounded) drawn without replacement, kept in file
// order.
Table Subsample(const Table& table, double fraction, std::uint64_t seed);

}  // namespace zgen

#endif  // ZGEN_SPLIT_H_
