#ifndef ZGEN_COVGEN_H_
#define ZGEN_COVGEN_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "zgen/table.h"

namespace zgen {

// Symmetric PSD matrix bound to column names.
struct CovMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  std::size_t dim() const { return columns.size(); }
};

// Throws Error unless `cov` is symmetric within 1e-12, has a non-negative
// diagonal and no eigenvalue below -1e-10.
void ValidateCov(const CovMatrix& cov);

enum class TailKind { kNormal, kLaplace, kWeibull, kGumbel, kLevy };

struct TailFamily {
  TailKind kind = TailKind::kNormal;
  double weibull_shape = 1.5;
};

std::string ToString(const TailFamily& family);
// Accepts "normal", "laplace", "weibull", "weibull:<k>", "gumbel", "levy".
TailFamily ParseTailFamily(std::string_view text);

enum class CovSource { kFromData, kProvided, kFromCvae };

std::string_view ToString(CovSource source);
CovSource ParseCovSource(std::string_view text);

struct OutlierSpec {
  std::vector<std::string> columns;
  double percent = 0.0;
  TailFamily family;
  double sigma_level = 3.0;
  double tail_limit = 6.0;
  CovSource cov_source = CovSource::kFromData;
  std::optional<CovMatrix> provided;
  std::uint64_t seed = 0;
};

void ValidateOutlierSpec(const OutlierSpec& spec);
nlohmann::json OutlierSpecToJson(const OutlierSpec& spec);
OutlierSpec OutlierSpecFromJson(const nlohmann::json& json);

// Unbiased sample covariance of the selected columns of `matrix`.
CovMatrix EstimateCov(const Eigen::MatrixXd& matrix,
                      std::span<const std::size_t> columns,
                      std::vector<std::string> names);

// Covariance of numeric table columns over rows where all are present.
CovMatrix EstimateCov(const Table& table, std::span<const std::string> columns);

// Lower-triangular L with L * L^T = cov. On failure the diagonal is
// jittered by 1e-9 once; a second failure throws naming the leading minor.
Eigen::MatrixXd Cholesky(const Eigen::MatrixXd& cov);

// Correlation matrix of `cov`; zero-variance columns become independent.
Eigen::MatrixXd CorrelationOf(const Eigen::MatrixXd& cov);

// Plain multivariate normal draws N(0, cov), rows x dim.
Eigen::MatrixXd SampleGaussian(const CovMatrix& cov, std::size_t n,
                               std::uint64_t seed);

// Inverse CDF of the standardized family (median 0, unit scale; Levy is
// scaled by its IQR). Takes both u and 1 - u to keep precision in the
// upper tail.
double StandardizedQuantile(const TailFamily& family, double u, double upper);

// Mahalanobis distance of `q` under the correlation with Cholesky factor L.
double Mahalanobis(const Eigen::MatrixXd& corr_cholesky,
                   const Eigen::VectorXd& q);

struct TailSample {
  Eigen::MatrixXd values;  // n x dim, data units
  bool rescaled = false;   // radial rescaling used instead of rejection
  double pilot_acceptance = 0.0;
};

// Tail-conditioned draws: every row has Mahalanobis distance (in
// standardized units, under corr(cov)) of at least sigma_level * sqrt(dim)
// and every |deviation| is at most tail_limit standard deviations.
TailSample SampleTail(const OutlierSpec& spec, const CovMatrix& cov,
                      std::span<const double> means,
                      std::span<const double> stds, std::size_t n);

struct InjectResult {
  Table table;
  std::vector<std::uint8_t> mask;  // 1 for replaced rows
  std::size_t count = 0;
};

// round-half-away-from-zero of percent / 100 * rows.
std::size_t OutlierCount(double percent, std::size_t rows);

// Replaces the spec's columns in a random subset of rows with tail samples.
// `cov_value` supplies the matrix for the Provided (overriding
// spec.provided) and FromCvae sources.
InjectResult Inject(const Table& table, const OutlierSpec& spec,
                    const std::optional<CovMatrix>& cov_value = std::nullopt);

nlohmann::json CovToJson(const CovMatrix& cov);
CovMatrix CovFromJson(const nlohmann::json& json);

}  // namespace zgen

#endif  // ZGEN_COVGEN_H_
