#include "zgen/table.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "zgen/csv.h"
#include "zgen/error.h"
#include "zgen/random.h"

namespace zgen {

std::string_view ToString(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kNumeric:
      return "numeric";
    case ColumnKind::kCategorical:
      return "categorical";
    case ColumnKind::kDatetime:
      return "datetime";
  }
  return "?";
}

std::string_view ToString(ColumnRole role) {
  switch (role) {
    case ColumnRole::kFeature:
      return "feature";
    case ColumnRole::kTarget:
      return "target";
    case ColumnRole::kTimeIndex:
      return "time_index";
    case ColumnRole::kMacro:
      return "macro";
  }
  return "?";
}

ColumnKind ParseColumnKind(std::string_view text) {
  if (text == "numeric") return ColumnKind::kNumeric;
  if (text == "categorical") return ColumnKind::kCategorical;
  if (text == "datetime") return ColumnKind::kDatetime;
  throw ConfigError("unknown column kind '" + std::string(text) + "'");
}

ColumnRole ParseColumnRole(std::string_view text) {
  if (text == "feature") return ColumnRole::kFeature;
  if (text == "target") return ColumnRole::kTarget;
  if (text == "time_index") return ColumnRole::kTimeIndex;
  if (text == "macro") return ColumnRole::kMacro;
  throw ConfigError("unknown column role '" + std::string(text) + "'");
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const ColumnSpec& spec = columns_[i];
    if (spec.name.empty()) throw Error("schema: empty column name");
    if (!seen.insert(spec.name).second) {
      throw Error("schema: duplicate column '" + spec.name + "'");
    }
    if (spec.role == ColumnRole::kTarget) {
      if (target_) throw Error("schema: more than one target column");
      target_ = i;
    }
    if (spec.role == ColumnRole::kTimeIndex) {
      if (time_index_) throw Error("schema: more than one time index column");
      if (spec.kind == ColumnKind::kCategorical) {
        throw Error("schema: time index '" + spec.name +
                    "' must be numeric or datetime");
      }
      time_index_ = i;
    }
  }
}

std::optional<std::size_t> Schema::Find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::IndexOf(std::string_view name) const {
  if (auto i = Find(name)) return *i;
  throw Error("no column named '" + std::string(name) + "'");
}

Schema SchemaFromJson(const nlohmann::json& json) {
  if (!json.contains("columns") || !json["columns"].is_array()) {
    throw ConfigError("schema: expected a 'columns' array");
  }
  std::vector<ColumnSpec> specs;
  for (const auto& entry : json["columns"]) {
    ColumnSpec spec;
    spec.name = entry.at("name").get<std::string>();
    spec.kind = ParseColumnKind(entry.value("kind", "numeric"));
    spec.role = ParseColumnRole(entry.value("role", "feature"));
    specs.push_back(std::move(spec));
  }
  try {
    return Schema(std::move(specs));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json SchemaToJson(const Schema& schema) {
  nlohmann::json columns = nlohmann::json::array();
  for (const ColumnSpec& spec : schema.columns()) {
    columns.push_back({{"name", spec.name},
                       {"kind", ToString(spec.kind)},
                       {"role", ToString(spec.role)}});
  }
  return {{"columns", columns}};
}

Schema LoadSchema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  nlohmann::json json;
  try {
    in >> json;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema file " + path.string() + ": " + e.what());
  }
  return SchemaFromJson(json);
}

Table::Table(Schema schema, std::vector<Column> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (columns_.size() != schema_.size()) {
    throw Error("table: " + std::to_string(columns_.size()) +
                " columns for a schema of " + std::to_string(schema_.size()));
  }
  num_rows_ = columns_.empty() ? 0 : columns_.front().missing.size();
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const Column& col = columns_[c];
    const bool categorical =
        schema_.column(c).kind == ColumnKind::kCategorical;
    const std::size_t stored =
        categorical ? col.labels.size() : col.values.size();
    const std::size_t unused =
        categorical ? col.values.size() : col.labels.size();
    if (col.missing.size() != num_rows_ || stored != num_rows_ || unused != 0) {
      throw Error("table: column '" + schema_.column(c).name +
                  "' storage does not match its kind or row count");
    }
  }
}

Table Table::SelectRows(std::span<const std::size_t> rows) const {
  std::vector<Column> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const Column& src = columns_[c];
    Column& dst = out[c];
    dst.missing.reserve(rows.size());
    const bool categorical =
        schema_.column(c).kind == ColumnKind::kCategorical;
    for (std::size_t r : rows) {
      if (r >= num_rows_) throw Error("table: row index out of range");
      dst.missing.push_back(src.missing[r]);
      if (categorical) {
        dst.labels.push_back(src.labels[r]);
      } else {
        dst.values.push_back(src.values[r]);
      }
    }
  }
  return Table(schema_, std::move(out));
}

Table Table::SelectColumns(std::span<const std::string> names) const {
  std::vector<ColumnSpec> specs;
  std::vector<Column> cols;
  for (const std::string& name : names) {
    const std::size_t c = schema_.IndexOf(name);
    specs.push_back(schema_.column(c));
    cols.push_back(columns_[c]);
  }
  return Table(Schema(std::move(specs)), std::move(cols));
}

Table Table::WithSchema(Schema schema) const {
  if (schema.size() != schema_.size()) throw Error("table: schema width");
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema.column(c).kind != schema_.column(c).kind) {
      throw Error("table: kind mismatch for column '" +
                  schema.column(c).name + "'");
    }
  }
  return Table(std::move(schema), columns_);
}

Table Table::WithColumn(std::size_t c, ColumnSpec spec, Column column) const {
  std::vector<ColumnSpec> specs = schema_.columns();
  specs.at(c) = std::move(spec);
  std::vector<Column> cols = columns_;
  cols[c] = std::move(column);
  return Table(Schema(std::move(specs)), std::move(cols));
}

Table Table::Concat(const Table& a, const Table& b) {
  const Table parts[] = {a, b};
  return Concat(parts);
}

Table Table::Concat(std::span<const Table> parts) {
  if (parts.empty()) return Table();
  const Schema& schema = parts.front().schema();
  std::vector<Column> out(schema.size());
  for (const Table& part : parts) {
    if (!(part.schema() == schema)) {
      throw Error("table: cannot concatenate tables with different schemas");
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const Column& src = part.column(c);
      Column& dst = out[c];
      dst.missing.insert(dst.missing.end(), src.missing.begin(),
                         src.missing.end());
      dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
      dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
    }
  }
  return Table(schema, std::move(out));
}

std::uint64_t Table::ContentHash() const {
  std::uint64_t h = Fnv1a64(SchemaToJson(schema_).dump());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    for (std::size_t r = 0; r < num_rows_; ++r) {
      h = Fnv1a64(CellText(*this, r, c), h);
      h = Fnv1a64(std::string_view("\x1f", 1), h);
    }
  }
  return h;
}

namespace {

bool ParseDigits(std::string_view text, std::size_t pos, std::size_t count,
                 int* out) {
  if (pos + count > text.size()) return false;
  int value = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const char c = text[pos + i];
    if (c < '0' || c > '9') return false;
    value = value * 10 + (c - '0');
  }
  *out = value;
  return true;
}

}  // namespace

std::optional<double> ParseIsoDatetime(std::string_view text) {
  int year, month, day;
  if (text.size() < 10 || !ParseDigits(text, 0, 4, &year) || text[4] != '-' ||
      !ParseDigits(text, 5, 2, &month) || text[7] != '-' ||
      !ParseDigits(text, 8, 2, &day)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year(year),
                                        std::chrono::month(month),
                                        std::chrono::day(day)};
  if (!ymd.ok()) return std::nullopt;
  double seconds =
      static_cast<double>(std::chrono::sys_days(ymd).time_since_epoch().count()) *
      86400.0;
  std::size_t pos = 10;
  if (pos == text.size()) return seconds;
  if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
  ++pos;
  int hour, minute, second = 0;
  if (!ParseDigits(text, pos, 2, &hour) || pos + 2 >= text.size() ||
      text[pos + 2] != ':' || !ParseDigits(text, pos + 3, 2, &minute)) {
    return std::nullopt;
  }
  pos += 5;
  double fraction = 0.0;
  if (pos < text.size() && text[pos] == ':') {
    if (!ParseDigits(text, pos + 1, 2, &second)) return std::nullopt;
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      std::size_t end = pos + 1;
      while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
      if (end == pos + 1) return std::nullopt;
      fraction = std::stod(std::string(text.substr(pos, end - pos)));
      pos = end;
    }
  }
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
  seconds += hour * 3600.0 + minute * 60.0 + second + fraction;
  if (pos == text.size()) return seconds;
  if (text[pos] == 'Z' && pos + 1 == text.size()) return seconds;
  if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size() &&
      text[pos + 3] == ':') {
    int off_h, off_m;
    if (!ParseDigits(text, pos + 1, 2, &off_h) ||
        !ParseDigits(text, pos + 4, 2, &off_m)) {
      return std::nullopt;
    }
    const double offset = off_h * 3600.0 + off_m * 60.0;
    return text[pos] == '+' ? seconds - offset : seconds + offset;
  }
  return std::nullopt;
}

std::string FormatIsoDatetime(double epoch_seconds) {
  const double whole = std::floor(epoch_seconds);
  const double fraction = epoch_seconds - whole;
  const auto total = static_cast<long long>(whole);
  long long days = total / 86400;
  long long rem = total % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const std::chrono::year_month_day ymd{
      std::chrono::sys_days(std::chrono::days(days))};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), rem / 3600, (rem / 60) % 60,
                rem % 60);
  std::string out = buf;
  if (fraction > 0.0) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.6f", fraction);
    std::string digits = frac + 1;  // drop the leading "0"
    while (!digits.empty() && digits.back() == '0') digits.pop_back();
    if (digits != ".") out += digits;
  }
  return out + "Z";
}

std::optional<double> ParseNumber(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::size_t start = text.front() == '+' ? 1 : 0;
  double value = 0.0;
  const char* first = text.data() + start;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string FormatNumber(double value) {
  if (value == 0.0) return "0";  // also folds -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string CellText(const Table& table, std::size_t row, std::size_t c) {
  if (table.is_missing(row, c)) return {};
  switch (table.schema().column(c).kind) {
    case ColumnKind::kNumeric:
      return FormatNumber(table.number(row, c));
    case ColumnKind::kDatetime:
      return FormatIsoDatetime(table.number(row, c));
    case ColumnKind::kCategorical:
      return table.label(row, c);
  }
  return {};
}

Table ReadCsvTable(std::istream& in, const std::optional<Schema>& schema,
                   std::string_view source_name) {
  const std::string source(source_name);
  std::vector<CsvRecord> records = ReadCsvRecords(in);
  if (records.empty()) throw Error(source + ": missing header row");
  const CsvRecord& header = records.front();
  const std::size_t width = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error(source + ": row " + std::to_string(r + 1) + " has " +
                  std::to_string(records[r].size()) + " fields, expected " +
                  std::to_string(width));
    }
  }
  const std::size_t rows = records.size() - 1;

  std::vector<ColumnSpec> specs;
  std::vector<std::size_t> source_index;
  if (schema) {
    for (const ColumnSpec& spec : schema->columns()) {
      auto it = std::find(header.begin(), header.end(), spec.name);
      if (it == header.end()) {
        throw Error(source + ": schema column '" + spec.name +
                    "' not present in header");
      }
      specs.push_back(spec);
      source_index.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    for (std::size_t c = 0; c < width; ++c) {
      bool all_numeric = true;
      bool all_datetime = true;
      bool any_value = false;
      for (std::size_t r = 1; r <= rows; ++r) {
        const std::string& cell = records[r][c];
        if (cell.empty()) continue;
        any_value = true;
        if (all_numeric && !ParseNumber(cell)) all_numeric = false;
        if (all_datetime && !ParseIsoDatetime(cell)) all_datetime = false;
        if (!all_numeric && !all_datetime) break;
      }
      ColumnSpec spec{header[c], ColumnKind::kCategorical,
                      ColumnRole::kFeature};
      if (any_value && all_numeric) {
        spec.kind = ColumnKind::kNumeric;
      } else if (any_value && all_datetime) {
        spec.kind = ColumnKind::kDatetime;
      }
      specs.push_back(std::move(spec));
      source_index.push_back(c);
    }
  }

  std::vector<Column> columns(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    Column& col = columns[c];
    const ColumnSpec& spec = specs[c];
    col.missing.assign(rows, 0);
    if (spec.kind == ColumnKind::kCategorical) {
      col.labels.resize(rows);
    } else {
      col.values.assign(rows, 0.0);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::string& cell = records[r + 1][source_index[c]];
      if (cell.empty()) {
        col.missing[r] = 1;
        continue;
      }
      if (spec.kind == ColumnKind::kCategorical) {
        col.labels[r] = std::move(cell);
        continue;
      }
      const std::optional<double> value = spec.kind == ColumnKind::kNumeric
                                              ? ParseNumber(cell)
                                              : ParseIsoDatetime(cell);
      if (!value) {
        throw Error(source + ": row " + std::to_string(r + 2) + ", column '" +
                    spec.name + "': cannot parse '" + cell + "' as " +
                    std::string(ToString(spec.kind)));
      }
      col.values[r] = *value;
    }
  }
  return Table(Schema(std::move(specs)), std::move(columns));
}

Table LoadCsv(const std::filesystem::path& path,
              const std::optional<Schema>& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return ReadCsvTable(in, schema, path.string());
}

void WriteCsvTable(std::ostream& out, const Table& table,
                   std::span<const ExtraColumn> extra) {
  CsvRecord record;
  for (const ColumnSpec& spec : table.schema().columns()) {
    record.push_back(spec.name);
  }
  for (const ExtraColumn& e : extra) {
    if (e.cells.size() != table.num_rows()) {
      throw Error("csv: extra column '" + e.name + "' has wrong length");
    }
    record.push_back(e.name);
  }
  WriteCsvRecord(out, record);
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    record.clear();
    for (std::size_t c = 0; c < table.num_columns(); ++c) {
      record.push_back(CellText(table, r, c));
    }
    for (const ExtraColumn& e : extra) record.push_back(e.cells[r]);
    WriteCsvRecord(out, record);
  }
}

void SaveCsv(const std::filesystem::path& path, const Table& table,
             std::span<const ExtraColumn> extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  WriteCsvTable(out, table, extra);
  if (!out) throw Error("write failed: " + path.string());
}

BinaryTarget ExtractBinaryTarget(const Table& table) {
  const auto target = table.schema().target();
  if (!target) throw Error("table has no target column");
  const std::size_t c = *target;
  const ColumnSpec& spec = table.schema().column(c);
  BinaryTarget out;
  out.labels.resize(table.num_rows());
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (table.is_missing(r, c)) {
      throw Error("target '" + spec.name + "' is missing at row " +
                  std::to_string(r));
    }
  }
  if (spec.kind != ColumnKind::kCategorical) {
    out.negative_label = "0";
    out.positive_label = "1";
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      const double v = table.number(r, c);
      if (v != 0.0 && v != 1.0) {
        throw Error("target '" + spec.name + "' is not binary (value " +
                    FormatNumber(v) + ")");
      }
      out.labels[r] = v == 1.0 ? 1 : 0;
    }
    return out;
  }
  std::set<std::string> distinct(table.column(c).labels.begin(),
                                 table.column(c).labels.end());
  if (distinct.size() > 2) {
    throw Error("target '" + spec.name + "' has more than two classes");
  }
  if (distinct.size() == 2) {
    out.negative_label = *distinct.begin();
    out.positive_label = *distinct.rbegin();
  } else if (distinct.size() == 1) {
    // A single class is only interpretable for 0/1-style labels.
    const std::string& only = *distinct.begin();
    const auto value = ParseNumber(only);
    if (value && *value == 1.0) {
      out.negative_label = "0";
      out.positive_label = only;
    } else if (value && *value == 0.0) {
      out.negative_label = only;
      out.positive_label = "1";
    } else {
      throw Error("target '" + spec.name + "' has a single class '" + only +
                  "'");
    }
  }
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    out.labels[r] = table.label(r, c) == out.positive_label ? 1 : 0;
  }
  return out;
}

double ImbalanceRatio(const Table& table) {
  const BinaryTarget target = ExtractBinaryTarget(table);
  const auto positives = static_cast<double>(
      std::count(target.labels.begin(), target.labels.end(), 1));
  const double negatives = static_cast<double>(target.labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw Error("imbalance ratio needs both classes");
  }
  return std::min(positives, negatives) / std::max(positives, negatives);
}

}  // namespace zgen
