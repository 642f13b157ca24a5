#include "zgen/preprocess.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "zgen/error.h"

namespace zgen {

std::optional<std::size_t> ColumnPlan::CodeOf(const std::string& label) const {
  auto it = std::lower_bound(levels.begin(), levels.end(), label);
  if (it == levels.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - levels.begin()) + 1;
}

namespace {

ColumnPlan FitNumeric(const Table& table, std::size_t c) {
  ColumnPlan plan;
  plan.kind = table.schema().column(c).kind;
  const Column& col = table.column(c);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (col.missing[r]) {
      plan.has_missing = true;
      continue;
    }
    const double v = col.values[r];
    if (!any) {
      lo = hi = v;
      any = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  plan.observed_min = lo;
  plan.observed_max = hi;
  plan.sentinel = any ? lo - 10.0 * (1.0 + hi - lo) : -1.0;
  if (any && !(plan.sentinel < lo)) {
    throw Error("preprocess: sentinel collides with observed values in '" +
                table.schema().column(c).name + "'");
  }

  const auto n = static_cast<double>(table.num_rows());
  double sum = 0.0;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    sum += col.missing[r] ? plan.sentinel : col.values[r];
  }
  plan.mean = sum / n;
  double ss = 0.0;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    const double d = (col.missing[r] ? plan.sentinel : col.values[r]) - plan.mean;
    ss += d * d;
  }
  const double std = std::sqrt(ss / n);
  // Relative test: a column of identical large values can leave rounding
  // residue in `ss`.
  if (!(std > 1e-12 * std::max(1.0, std::abs(plan.mean)))) {
    plan.constant = true;
    plan.std = 1.0;
  } else {
    plan.std = std;
  }
  return plan;
}

ColumnPlan FitCategorical(const Table& table, std::size_t c) {
  ColumnPlan plan;
  plan.kind = ColumnKind::kCategorical;
  const Column& col = table.column(c);
  std::set<std::string> levels;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (col.missing[r]) {
      plan.has_missing = true;
    } else {
      levels.insert(col.labels[r]);
    }
  }
  plan.levels.assign(levels.begin(), levels.end());
  plan.constant = plan.cardinality() - (plan.has_missing ? 0 : 1) <= 1;
  plan.observed_min = 0.0;
  plan.observed_max = static_cast<double>(plan.levels.size());
  return plan;
}

}  // namespace

PreprocessPlan FitPreprocess(const Table& table) {
  if (table.num_rows() == 0) throw Error("preprocess: empty table");
  PreprocessPlan plan;
  plan.schema = table.schema();
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    if (table.schema().column(c).kind == ColumnKind::kCategorical) {
      plan.columns.push_back(FitCategorical(table, c));
    } else {
      plan.columns.push_back(FitNumeric(table, c));
    }
  }
  return plan;
}

double EncodedSentinel(const ColumnPlan& column) {
  return (column.sentinel - column.mean) / column.std;
}

EncodedTable Encode(const Table& table, const PreprocessPlan& plan) {
  if (!(table.schema() == plan.schema)) {
    throw Error("encode: table schema differs from the fitted plan");
  }
  EncodedTable out;
  out.matrix.resize(static_cast<Eigen::Index>(table.num_rows()),
                    static_cast<Eigen::Index>(table.num_columns()));
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const ColumnPlan& cp = plan.columns[c];
    const Column& col = table.column(c);
    const auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      if (cp.kind == ColumnKind::kCategorical) {
        std::size_t code = 0;
        if (!col.missing[r]) {
          if (auto known = cp.CodeOf(col.labels[r])) {
            code = *known;
          } else {
            ++out.unseen_categories;
          }
        }
        out.matrix(ri, ci) = static_cast<double>(code);
      } else {
        const double v = col.missing[r] ? cp.sentinel : col.values[r];
        out.matrix(ri, ci) = (v - cp.mean) / cp.std;
      }
    }
  }
  return out;
}

Table Decode(const Eigen::MatrixXd& matrix, const PreprocessPlan& plan) {
  if (static_cast<std::size_t>(matrix.cols()) != plan.columns.size()) {
    throw Error("decode: matrix has " + std::to_string(matrix.cols()) +
                " columns, plan expects " +
                std::to_string(plan.columns.size()));
  }
  const auto rows = static_cast<std::size_t>(matrix.rows());
  std::vector<Column> columns(plan.columns.size());
  for (std::size_t c = 0; c < plan.columns.size(); ++c) {
    const ColumnPlan& cp = plan.columns[c];
    Column& col = columns[c];
    col.missing.assign(rows, 0);
    const auto ci = static_cast<Eigen::Index>(c);
    if (cp.kind == ColumnKind::kCategorical) {
      col.labels.resize(rows);
      const double top = static_cast<double>(cp.cardinality() - 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double v = matrix(static_cast<Eigen::Index>(r), ci);
        const double code = std::isfinite(v) ? std::clamp(std::round(v), 0.0, top)
                                             : 0.0;
        const auto k = static_cast<std::size_t>(code);
        if (k == 0) {
          col.missing[r] = 1;
        } else {
          col.labels[r] = cp.levels[k - 1];
        }
      }
      continue;
    }
    col.values.assign(rows, 0.0);
    const double tolerance = 1e-9 * std::max(1.0, std::abs(cp.sentinel));
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = matrix(static_cast<Eigen::Index>(r), ci) * cp.std + cp.mean;
      if (!std::isfinite(v)) throw Error("decode: non-finite value");
      if (std::abs(v - cp.sentinel) <= tolerance) {
        col.missing[r] = 1;
      } else {
        col.values[r] = v;
      }
    }
  }
  return Table(plan.schema, std::move(columns));
}

nlohmann::json PlanToJson(const PreprocessPlan& plan) {
  nlohmann::json columns = nlohmann::json::array();
  for (const ColumnPlan& cp : plan.columns) {
    columns.push_back({{"kind", ToString(cp.kind)},
                       {"sentinel", cp.sentinel},
                       {"mean", cp.mean},
                       {"std", cp.std},
                       {"constant", cp.constant},
                       {"has_missing", cp.has_missing},
                       {"observed_min", cp.observed_min},
                       {"observed_max", cp.observed_max},
                       {"levels", cp.levels}});
  }
  return {{"schema", SchemaToJson(plan.schema)}, {"columns", columns}};
}

PreprocessPlan PlanFromJson(const nlohmann::json& json) {
  PreprocessPlan plan;
  plan.schema = SchemaFromJson(json.at("schema"));
  for (const auto& entry : json.at("columns")) {
    ColumnPlan cp;
    cp.kind = ParseColumnKind(entry.at("kind").get<std::string>());
    cp.sentinel = entry.at("sentinel").get<double>();
    cp.mean = entry.at("mean").get<double>();
    cp.std = entry.at("std").get<double>();
    cp.constant = entry.at("constant").get<bool>();
    cp.has_missing = entry.at("has_missing").get<bool>();
    cp.observed_min = entry.at("observed_min").get<double>();
    cp.observed_max = entry.at("observed_max").get<double>();
    cp.levels = entry.at("levels").get<std::vector<std::string>>();
    plan.columns.push_back(std::move(cp));
  }
  if (plan.columns.size() != plan.schema.size()) {
    throw Error("plan: column count does not match schema");
  }
  return plan;
}

}  // namespace zgen
