#ifndef ZGEN_TESTS_HELPERS_H_
#define ZGEN_TESTS_HELPERS_H_

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zgen/random.h"
#include "zgen/table.h"

namespace zgen::testing {

inline std::filesystem::path SourceDir() { return ZGEN_SOURCE_DIR; }

inline Table Titanic() {
  const auto dir = SourceDir() / "data" / "titanic";
  return LoadCsv(dir / "train.csv", LoadSchema(dir / "schema.json"));
}

inline std::filesystem::path TempDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("zgen_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Table FromCsv(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return ReadCsvTable(in, schema);
}

// Two numeric features, binary categorical target; label depends on x1 + x2.
inline Table ToyClassification(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Schema schema({{"x1", ColumnKind::kNumeric, ColumnRole::kFeature},
                 {"x2", ColumnKind::kNumeric, ColumnRole::kFeature},
                 {"c", ColumnKind::kCategorical, ColumnRole::kFeature},
                 {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(4);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.Normal(), b = rng.Normal();
    const std::string c = rng.Uniform() < 0.5 ? "u" : "v";
    const double logit = 1.5 * a - b + (c == "u" ? 0.5 : -0.5) + 0.5 * rng.Normal();
    cols[0].values.push_back(a);
    cols[1].values.push_back(b);
    cols[2].labels.push_back(c);
    cols[3].labels.push_back(logit > 0 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(n, 0);
  return Table(schema, cols);
}

}  // namespace zgen::testing

#endif  // ZGEN_TESTS_HELPERS_H_
