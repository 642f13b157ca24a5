#include "zgen/corr.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "zgen/csv.h"
#include "zgen/error.h"

namespace zgen {

namespace {

constexpr Rgb kCold = {33, 102, 172};
constexpr Rgb kMid = {255, 255, 255};
constexpr Rgb kHot = {178, 24, 43};

std::uint8_t Mix(std::uint8_t a, std::uint8_t b, double t) {
  return static_cast<std::uint8_t>(std::lround(a + (b - a) * t));
}

}  // namespace

CorrMatrix PearsonMatrix(const Eigen::MatrixXd& encoded, std::vector<std::string> columns) {
  const Eigen::Index d = encoded.cols();
  if (static_cast<std::size_t>(d) != columns.size()) {
    throw Error("pearson: one name per column required");
  }
  if (encoded.rows() == 0) throw Error("pearson: empty table");
  CorrMatrix out;
  out.columns = std::move(columns);
  out.values = Eigen::MatrixXd::Zero(d, d);
  out.constant.assign(static_cast<std::size_t>(d), 0);
  Eigen::MatrixXd centered = encoded.rowwise() - encoded.colwise().mean();
  Eigen::VectorXd norms(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    norms(j) = centered.col(j).norm();
    const double scale = encoded.col(j).cwiseAbs().maxCoeff();
    // Relative test: float noise in a constant column is not variation.
    if (!(norms(j) > 1e-12 * std::max(1.0, scale) * std::sqrt(static_cast<double>(encoded.rows())))) {
      out.constant[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (out.constant[static_cast<std::size_t>(i)]) continue;
    out.values(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      if (out.constant[static_cast<std::size_t>(j)]) continue;
      const double r = std::clamp(centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j)),
                                  -1.0, 1.0);
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

CorrMatrix PearsonMatrix(const Table& table, const PreprocessPlan& plan) {
  std::vector<std::string> names;
  for (const ColumnSpec& c : table.schema().columns()) names.push_back(c.name);
  return PearsonMatrix(Encode(table, plan).matrix, std::move(names));
}

DiffMatrix Diff(const CorrMatrix& a, const CorrMatrix& b) {
  if (a.columns != b.columns) {
    for (std::size_t i = 0; i < std::min(a.columns.size(), b.columns.size()); ++i) {
      if (a.columns[i] != b.columns[i]) {
        throw Error("correlation diff: column " + std::to_string(i) + " is '" + a.columns[i] +
                    "' in one matrix and '" + b.columns[i] + "' in the other");
      }
    }
    throw Error("correlation diff: matrices have different dimensions");
  }
  DiffMatrix out;
  out.columns = a.columns;
  out.values = a.values - b.values;
  const Eigen::Index d = out.values.rows();
  if (d > 1) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i != j) sum += std::abs(out.values(i, j));
      }
    }
    out.mad = sum / static_cast<double>(d * (d - 1));
  }
  return out;
}

Rgb RampColor(double value, const HeatmapScale& scale) {
  if (!(scale.lo < scale.hi)) throw Error("heatmap: scale lo must be below hi");
  if (std::isnan(value)) throw Error("heatmap: non-finite entry");
  const double t = std::clamp((value - scale.lo) / (scale.hi - scale.lo), 0.0, 1.0);
  Rgb out;
  for (int k = 0; k < 3; ++k) {
    out[static_cast<std::size_t>(k)] =
        t < 0.5 ? Mix(kCold[static_cast<std::size_t>(k)], kMid[static_cast<std::size_t>(k)], t * 2.0)
                : Mix(kMid[static_cast<std::size_t>(k)], kHot[static_cast<std::size_t>(k)], (t - 0.5) * 2.0);
  }
  return out;
}

std::string RenderPpm(const Eigen::MatrixXd& values, const HeatmapScale& scale, int cell) {
  if (cell < 1) throw Error("heatmap: cell size must be positive");
  if (!(scale.lo < scale.hi)) throw Error("heatmap: scale lo must be below hi");
  const auto rows = static_cast<int>(values.rows());
  const auto cols = static_cast<int>(values.cols());
  const int width = cols * cell;
  const int height = rows * cell;
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (!std::isfinite(values(i, j))) throw Error("heatmap: non-finite entry");
      const Rgb c = RampColor(values(i, j), scale);
      for (int y = i * cell; y < (i + 1) * cell; ++y) {
        for (int x = j * cell; x < (j + 1) * cell; ++x) {
          const std::size_t p = header + (static_cast<std::size_t>(y) * width + x) * 3;
          out[p] = static_cast<char>(c[0]);
          out[p + 1] = static_cast<char>(c[1]);
          out[p + 2] = static_cast<char>(c[2]);
        }
      }
    }
  }
  return out;
}

void WriteMatrixCsv(std::ostream& out, const std::vector<std::string>& columns,
                    const Eigen::MatrixXd& values) {
  CsvRecord header = {""};
  header.insert(header.end(), columns.begin(), columns.end());
  WriteCsvRecord(out, header);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    CsvRecord row = {columns[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < values.cols(); ++j) row.push_back(FormatNumber(values(i, j)));
    WriteCsvRecord(out, row);
  }
}

Eigen::MatrixXd ReadMatrixCsv(std::istream& in, std::vector<std::string>* columns) {
  const std::vector<CsvRecord> records = ReadCsvRecords(in);
  if (records.empty()) throw Error("matrix csv: empty input");
  const std::size_t d = records[0].size() - 1;
  if (records.size() != d + 1) throw Error("matrix csv: matrix is not square");
  if (columns) columns->assign(records[0].begin() + 1, records[0].end());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    if (records[i + 1].size() != d + 1) throw Error("matrix csv: ragged row");
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = ParseNumber(records[i + 1][j + 1]);
      if (!v) throw Error("matrix csv: unparseable cell");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return m;
}

void RenderHeatmap(const std::filesystem::path& stem, const std::vector<std::string>& columns,
                   const Eigen::MatrixXd& values, const HeatmapScale& scale) {
  const std::string image = RenderPpm(values, scale);
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path ppm = stem;
  ppm += ".ppm";
  std::ofstream c(csv, std::ios::binary);
  if (!c) throw Error("cannot write " + csv.string());
  WriteMatrixCsv(c, columns, values);
  std::ofstream p(ppm, std::ios::binary);
  if (!p) throw Error("cannot write " + ppm.string());
  p.write(image.data(), static_cast<std::streamsize>(image.size()));
}

}  // namespace zgen
