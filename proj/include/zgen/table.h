#ifndef ZGEN_TABLE_H_
#define ZGEN_TABLE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace zgen {

enum class ColumnKind { kNumeric, kCategorical, kDatetime };
enum class ColumnRole { kFeature, kTarget, kTimeIndex, kMacro };

std::string_view ToString(ColumnKind kind);
std::string_view ToString(ColumnRole role);
ColumnKind ParseColumnKind(std::string_view text);
ColumnRole ParseColumnRole(std::string_view text);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  ColumnRole role = ColumnRole::kFeature;

  bool operator==(const ColumnSpec&) const = default;
};

// Ordered column list. Names are unique; at most one Target and at most one
// TimeIndex. Macro columns are features that outlier injection may target.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(std::size_t i) const { return columns_[i]; }
  std::size_t size() const { return columns_.size(); }

  std::optional<std::size_t> Find(std::string_view name) const;
  // Throws Error naming the column when absent.
  std::size_t IndexOf(std::string_view name) const;

  std::optional<std::size_t> target() const { return target_; }
  std::optional<std::size_t> time_index() const { return time_index_; }

  bool operator==(const Schema& other) const {
    return columns_ == other.columns_;
  }

 private:
  std::vector<ColumnSpec> columns_;
  std::optional<std::size_t> target_;
  std::optional<std::size_t> time_index_;
};

// Schema sidecar: {"columns": [{"name": .., "kind": .., "role": ..}, ...]}.
Schema SchemaFromJson(const nlohmann::json& json);
nlohmann::json SchemaToJson(const Schema& schema);
Schema LoadSchema(const std::filesystem::path& path);

// Column storage. Numeric and datetime cells live in `values` (datetime as
// epoch seconds, UTC); categorical cells live in `labels`. The unused vector
// stays empty. A true `missing` flag means the cell value is ignored.
struct Column {
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<std::uint8_t> missing;

  bool operator==(const Column&) const = default;
};

class Table {
 public:
  Table() = default;
  // Validates that every column has the storage its kind requires and that
  // all columns agree on the row count.
  Table(Schema schema, std::vector<Column> columns);

  const Schema& schema() const { return schema_; }
  std::size_t num_rows() const { return num_rows_; }
  std::size_t num_columns() const { return columns_.size(); }

  const Column& column(std::size_t c) const { return columns_[c]; }
  const Column& column(std::string_view name) const {
    return columns_[schema_.IndexOf(name)];
  }
  // For builders that copy a table and then rewrite some cells.
  Column& mutable_column(std::size_t c) { return columns_[c]; }

  bool is_missing(std::size_t row, std::size_t c) const {
    return columns_[c].missing[row] != 0;
  }
  double number(std::size_t row, std::size_t c) const {
    return columns_[c].values[row];
  }
  const std::string& label(std::size_t row, std::size_t c) const {
    return columns_[c].labels[row];
  }

  // New table holding the given rows, in the given order.
  Table SelectRows(std::span<const std::size_t> rows) const;
  // New table holding the named columns, in the given order.
  Table SelectColumns(std::span<const std::string> names) const;
  // Same data under a different schema of identical kinds (e.g. roles
  // changed).
  Table WithSchema(Schema schema) const;
  // Rewrites one column, possibly changing its kind.
  Table WithColumn(std::size_t c, ColumnSpec spec, Column column) const;

  // Rows of `a` followed by rows of `b`; schemas must be equal.
  static Table Concat(const Table& a, const Table& b);
  static Table Concat(std::span<const Table> parts);

  // Stable 64-bit hash of schema and content; used for manifests.
  std::uint64_t ContentHash() const;

  bool operator==(const Table& other) const {
    return schema_ == other.schema_ && columns_ == other.columns_;
  }

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t num_rows_ = 0;
};

// Parses ISO-8601 dates and date-times: "YYYY-MM-DD", optional
// "THH:MM[:SS[.fff]]" (or a space separator) and an optional "Z" or
// "+HH:MM" offset. Returns UTC epoch seconds.
std::optional<double> ParseIsoDatetime(std::string_view text);
// Formats as "YYYY-MM-DDTHH:MM:SSZ", with fractional seconds only if needed.
std::string FormatIsoDatetime(double epoch_seconds);

// Strict full-string parse of a decimal or scientific number.
std::optional<double> ParseNumber(std::string_view text);
// Shortest representation that round-trips.
std::string FormatNumber(double value);

// Loads a CSV file. Without a schema, kinds are inferred per column: all
// non-empty cells numeric -> Numeric, all ISO-8601 -> Datetime, otherwise
// Categorical; every inferred column is a Feature. With a schema, only the
// schema's columns are kept (in schema order) and each cell must parse under
// its declared kind. Empty cells become missing.
Table LoadCsv(const std::filesystem::path& path,
              const std::optional<Schema>& schema = std::nullopt);
Table ReadCsvTable(std::istream& in,
                   const std::optional<Schema>& schema = std::nullopt,
                   std::string_view source_name = "<stream>");

// Writes the table with a header row. Optional extra trailing columns (for
// example the `__outlier` mask) may be appended.
struct ExtraColumn {
  std::string name;
  std::vector<std::string> cells;
};
void WriteCsvTable(std::ostream& out, const Table& table,
                   std::span<const ExtraColumn> extra = {});
void SaveCsv(const std::filesystem::path& path, const Table& table,
             std::span<const ExtraColumn> extra = {});

// Cell rendered as text exactly as WriteCsvTable would emit it.
std::string CellText(const Table& table, std::size_t row, std::size_t c);

// Binary view of the Target column. Categorical targets must carry exactly
// two labels; the lexicographically larger one is the positive class ("1"
// over "0", "yes" over "no"). Numeric targets must be 0/1.
struct BinaryTarget {
  std::vector<int> labels;
  std::string negative_label;
  std::string positive_label;
};
BinaryTarget ExtractBinaryTarget(const Table& table);

// Ratio of minority to majority class counts of the binary target.
double ImbalanceRatio(const Table& table);

}  // namespace zgen

#endif  // ZGEN_TABLE_H_
