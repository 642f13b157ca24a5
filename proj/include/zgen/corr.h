#ifndef ZGEN_CORR_H_
#define ZGEN_CORR_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zgen/preprocess.h"
#include "zgen/table.h"

namespace zgen {

struct CorrMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  // Constant columns: every correlation involving them, the diagonal
  // included, is 0.
  std::vector<std::uint8_t> constant;
};

// Pearson correlations of the encoded columns (sentinel-filled, label
// codes, epoch seconds, z-scored) under `plan`.
CorrMatrix PearsonMatrix(const Table& table, const PreprocessPlan& plan);
CorrMatrix PearsonMatrix(const Eigen::MatrixXd& encoded,
                         std::vector<std::string> columns);

struct DiffMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // a - b
  double mad = 0.0;        // mean |a - b| over off-diagonal entries
};

DiffMatrix Diff(const CorrMatrix& a, const CorrMatrix& b);

struct HeatmapScale {
  double lo = -0.5;
  double hi = 0.5;
};

using Rgb = std::array<std::uint8_t, 3>;

// Diverging blue - white - red ramp over [lo, hi]; values outside clamp.
Rgb RampColor(double value, const HeatmapScale& scale);

// Binary P6 image with one `cell` x `cell` square per matrix entry.
std::string RenderPpm(const Eigen::MatrixXd& values, const HeatmapScale& scale,
                      int cell = 16);

void WriteMatrixCsv(std::ostream& out, const std::vector<std::string>& columns,
                    const Eigen::MatrixXd& values);
// Reads back a matrix written by WriteMatrixCsv.
Eigen::MatrixXd ReadMatrixCsv(std::istream& in, std::vector<std::string>* columns);

// Writes <stem>.csv and <stem>.ppm.
void RenderHeatmap(const std::filesystem::path& stem,
                   const std::vector<std::string>& columns,
                   const Eigen::MatrixXd& values, const HeatmapScale& scale);

}  // namespace zgen

#endif  // ZGEN_CORR_H_
