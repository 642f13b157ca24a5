#ifndef ZGEN_CVAE_H_
#define ZGEN_CVAE_H_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "zgen/covgen.h"
#include "zgen/nnet.h"

namespace zgen {

struct CvaeConfig {
  int latent_dim = 8;
  int epochs = 300;
  int batch_size = 32;
  int hidden_width = 64;
  double beta = 1.0;
  double learning_rate = 1e-3;
  int matrices = 256;
  double sample_fraction = 0.5;
  std::uint64_t seed = 0;

  bool operator==(const CvaeConfig&) const = default;
};

void ValidateCvaeConfig(const CvaeConfig& config);
nlohmann::json CvaeConfigToJson(const CvaeConfig& config);
CvaeConfig CvaeConfigFromJson(const nlohmann::json& json, CvaeConfig base = {});

// config.matrices covariances, each estimated on a bootstrap subsample
// (round(fraction * rows) rows drawn with replacement) of the selected
// columns.
std::vector<CovMatrix> BuildTrainingSet(const Eigen::MatrixXd& matrix,
                                        std::span<const std::size_t> columns,
                                        const std::vector<std::string>& names,
                                        const CvaeConfig& config);

// Log-Cholesky vector: Cholesky factor with logged diagonal, lower triangle
// packed row by row; length d(d+1)/2.
Eigen::VectorXd CovToVec(const CovMatrix& cov);
CovMatrix VecToCov(const Eigen::VectorXd& vec, std::vector<std::string> columns);

// Conditioning vector: signed-log column means followed by signed-log
// column standard deviations.
Eigen::VectorXd ConditionVector(const Eigen::MatrixXd& matrix,
                                std::span<const std::size_t> columns);

struct CvaeModel {
  CvaeConfig config;
  std::vector<std::string> columns;
  Eigen::VectorXd condition;
  // Per-component normalization of the log-Cholesky targets.
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_scale;
  nnet::DenseNet encoder;  // [target, condition] -> [mu, logvar]
  nnet::DenseNet decoder;  // [z, condition] -> target
  std::vector<double> loss_trace;  // mean training loss per epoch
  // Set when the final epoch loss is above half the first epoch loss.
  bool weak_convergence = false;

  std::size_t dim() const { return columns.size(); }
};

CvaeModel FitCvae(std::span<const CovMatrix> matrices, const Eigen::VectorXd& condition,
                  const CvaeConfig& config);

CovMatrix SampleCov(const CvaeModel& model, std::uint64_t seed);

void SaveCvae(std::ostream& out, const CvaeModel& model);
CvaeModel LoadCvae(std::istream& in);
void SaveCvae(const std::filesystem::path& path, const CvaeModel& model);
CvaeModel LoadCvae(const std::filesystem::path& path);

}  // namespace zgen

#endif  // ZGEN_CVAE_H_
