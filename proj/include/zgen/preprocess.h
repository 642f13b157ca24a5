#ifndef ZGEN_PREPROCESS_H_
#define ZGEN_PREPROCESS_H_

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "zgen/table.h"

namespace zgen {

// Per-column encoding parameters.
//
// Numeric and datetime columns: missing cells are filled with `sentinel`
// (strictly below every observed value), then z-scored with `mean`/`std`.
// For datetime columns `mean` is the epoch offset in seconds. Constant
// columns keep std = 1 and set `constant`.
//
// Categorical columns: code 0 is reserved for the MISSING category; observed
// labels take codes 1..k in lexicographic order (`levels[code - 1]`).
struct ColumnPlan {
  ColumnKind kind = ColumnKind::kNumeric;
  double sentinel = 0.0;
  double mean = 0.0;
  double std = 1.0;
  bool constant = false;
  bool has_missing = false;
  double observed_min = 0.0;
  double observed_max = 0.0;
  std::vector<std::string> levels;

  // Number of categorical codes, MISSING included.
  std::size_t cardinality() const { return levels.size() + 1; }
  // Code of `label`, or nullopt when unseen at fit time.
  std::optional<std::size_t> CodeOf(const std::string& label) const;
};

struct PreprocessPlan {
  Schema schema;
  std::vector<ColumnPlan> columns;
};

PreprocessPlan FitPreprocess(const Table& table);

struct EncodedTable {
  // rows x columns, one column per schema column, no missing entries.
  Eigen::MatrixXd matrix;
  // Categorical cells whose label was not seen at fit time; each was encoded
  // as MISSING.
  std::size_t unseen_categories = 0;
};

EncodedTable Encode(const Table& table, const PreprocessPlan& plan);

// Inverse of Encode. Numeric values within 1e-9 (relative) of the sentinel
// become missing; categorical values are rounded to the nearest code and
// clamped into range.
Table Decode(const Eigen::MatrixXd& matrix, const PreprocessPlan& plan);

// Encoded value the sentinel maps to.
double EncodedSentinel(const ColumnPlan& column);

nlohmann::json PlanToJson(const PreprocessPlan& plan);
PreprocessPlan PlanFromJson(const nlohmann::json& json);

}  // namespace zgen

#endif  // ZGEN_PREPROCESS_H_
