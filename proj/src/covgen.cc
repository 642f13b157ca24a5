#include "zgen/covgen.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "zgen/error.h"
#include "zgen/random.h"

namespace zgen {

namespace {

constexpr double kJitter = 1e-9;
constexpr std::size_t kPilotDraws = 4096;
constexpr double kRescaleBelow = 1e-3;
constexpr std::size_t kMaxRedraws = 100000;

bool TryCholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l,
                 Eigen::Index& failed_minor) {
  const Eigen::Index n = a.rows();
  l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      failed_minor = j + 1;
      return false;
    }
    const double diag = std::sqrt(pivot);
    l(j, j) = diag;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double sum = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      l(i, j) = sum / diag;
    }
  }
  return true;
}

// Standard normal CDF split into lower and upper parts.
void NormalTails(double z, double& lower, double& upper) {
  lower = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  upper = 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double LevyQuantileRaw(double u, double upper) {
  // F(x) = erfc(sqrt(1 / (2x))), so x = 1 / (2 erfc^-1(u)^2) and
  // erfc^-1(u) = erf^-1(1 - u).
  double e;
  if (upper <= 0.0) return std::numeric_limits<double>::infinity();
  if (u <= 0.0) return 0.0;
  if (upper < 0.5) {
    e = boost::math::erf_inv(upper);
  } else {
    e = boost::math::erfc_inv(u);
  }
  return 1.0 / (2.0 * e * e);
}

struct LevyScale {
  double median;
  double iqr;
};

const LevyScale& Levy() {
  static const LevyScale scale = [] {
    const double median = LevyQuantileRaw(0.5, 0.5);
    const double q1 = LevyQuantileRaw(0.25, 0.75);
    const double q3 = LevyQuantileRaw(0.75, 0.25);
    return LevyScale{median, q3 - q1};
  }();
  return scale;
}

double Clip(double v, double limit) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, -limit, limit);
}

double CheckedNumber(const nlohmann::json& json, const char* key, double fallback) {
  if (!json.contains(key)) return fallback;
  if (!json.at(key).is_number()) {
    throw ConfigError(std::string("outliers.") + key + " must be a number");
  }
  return json.at(key).get<double>();
}

}  // namespace

void ValidateCov(const CovMatrix& cov) {
  const Eigen::MatrixXd& a = cov.values;
  if (a.rows() != a.cols() || static_cast<std::size_t>(a.rows()) != cov.columns.size()) {
    throw Error("covariance: shape does not match its column binding");
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(a(i, i) >= 0.0)) throw Error("covariance: negative diagonal");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (!std::isfinite(a(i, j)) || std::abs(a(i, j) - a(j, i)) > 1e-12) {
        throw Error("covariance: matrix is not symmetric");
      }
    }
  }
  if (a.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.eigenvalues().minCoeff() < -1e-10) {
    throw Error("covariance: matrix is not positive semi-definite");
  }
}

std::string ToString(const TailFamily& family) {
  switch (family.kind) {
    case TailKind::kNormal:
      return "normal";
    case TailKind::kLaplace:
      return "laplace";
    case TailKind::kWeibull: {
      char buf[64];
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), family.weibull_shape);
      return "weibull:" + std::string(buf, end);
    }
    case TailKind::kGumbel:
      return "gumbel";
    case TailKind::kLevy:
      return "levy";
  }
  return "normal";
}

TailFamily ParseTailFamily(std::string_view text) {
  TailFamily family;
  if (text == "normal") {
    family.kind = TailKind::kNormal;
  } else if (text == "laplace") {
    family.kind = TailKind::kLaplace;
  } else if (text == "gumbel") {
    family.kind = TailKind::kGumbel;
  } else if (text == "levy") {
    family.kind = TailKind::kLevy;
  } else if (text == "weibull" || text.starts_with("weibull:")) {
    family.kind = TailKind::kWeibull;
    if (text.size() > 8) {
      const std::string_view shape = text.substr(8);
      double k = 0.0;
      auto [ptr, ec] = std::from_chars(shape.data(), shape.data() + shape.size(), k);
      if (ec != std::errc() || ptr != shape.data() + shape.size() || !(k > 0.0) ||
          !std::isfinite(k)) {
        throw ConfigError("weibull shape must be a positive number: " + std::string(text));
      }
      family.weibull_shape = k;
    }
  } else {
    throw ConfigError("unknown tail family: " + std::string(text));
  }
  return family;
}

std::string_view ToString(CovSource source) {
  switch (source) {
    case CovSource::kFromData:
      return "data";
    case CovSource::kProvided:
      return "provided";
    case CovSource::kFromCvae:
      return "cvae";
  }
  return "data";
}

CovSource ParseCovSource(std::string_view text) {
  if (text == "data") return CovSource::kFromData;
  if (text == "provided") return CovSource::kProvided;
  if (text == "cvae") return CovSource::kFromCvae;
  throw ConfigError("unknown covariance source: " + std::string(text));
}

void ValidateOutlierSpec(const OutlierSpec& spec) {
  if (!(spec.percent >= 0.0 && spec.percent <= 100.0)) {
    throw ConfigError("outlier percent must lie in [0, 100]");
  }
  if (!(spec.sigma_level > 0.0)) throw ConfigError("sigma level must be positive");
  if (!(spec.tail_limit > spec.sigma_level)) {
    throw ConfigError("tail limit must exceed the sigma level");
  }
  if (spec.family.kind == TailKind::kWeibull && !(spec.family.weibull_shape > 0.0)) {
    throw ConfigError("weibull shape must be positive");
  }
  if (spec.columns.empty() && spec.percent > 0.0) {
    throw ConfigError("outlier spec names no columns");
  }
}

nlohmann::json OutlierSpecToJson(const OutlierSpec& spec) {
  nlohmann::json json = {
      {"columns", spec.columns},
      {"percent", spec.percent},
      {"family", ToString(spec.family)},
      {"sigma_level", spec.sigma_level},
      {"tail_limit", spec.tail_limit},
      {"cov_source", std::string(ToString(spec.cov_source))},
      {"seed", spec.seed},
  };
  if (spec.provided) json["covariance"] = CovToJson(*spec.provided);
  return json;
}

OutlierSpec OutlierSpecFromJson(const nlohmann::json& json) {
  if (!json.is_object()) throw ConfigError("outliers must be an object");
  OutlierSpec spec;
  try {
    if (json.contains("columns")) {
      spec.columns = json.at("columns").get<std::vector<std::string>>();
    }
    spec.percent = CheckedNumber(json, "percent", 0.0);
    if (json.contains("family")) {
      spec.family = ParseTailFamily(json.at("family").get<std::string>());
    }
    spec.sigma_level = CheckedNumber(json, "sigma_level", 3.0);
    spec.tail_limit = CheckedNumber(json, "tail_limit", 6.0);
    if (json.contains("cov_source")) {
      spec.cov_source = ParseCovSource(json.at("cov_source").get<std::string>());
    }
    if (json.contains("covariance")) spec.provided = CovFromJson(json.at("covariance"));
    if (json.contains("seed")) spec.seed = json.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("outliers: ") + e.what());
  }
  if (spec.cov_source == CovSource::kProvided && !spec.provided) {
    throw ConfigError("outliers: provided covariance source needs a covariance");
  }
  ValidateOutlierSpec(spec);
  return spec;
}

CovMatrix EstimateCov(const Eigen::MatrixXd& matrix,
                      std::span<const std::size_t> columns,
                      std::vector<std::string> names) {
  if (matrix.rows() < 2) throw Error("covariance: at least 2 rows required");
  if (names.size() != columns.size()) {
    throw Error("covariance: one name per column required");
  }
  const Eigen::Index d = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd x(matrix.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto c = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(j)]);
    if (c >= matrix.cols()) throw Error("covariance: column index out of range");
    x.col(j) = matrix.col(c);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(matrix.rows() - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  return CovMatrix{std::move(names), std::move(cov)};
}

CovMatrix EstimateCov(const Table& table, std::span<const std::string> columns) {
  std::vector<std::size_t> index;
  for (const std::string& name : columns) {
    const std::size_t c = table.schema().IndexOf(name);
    if (table.schema().column(c).kind == ColumnKind::kCategorical) {
      throw Error("covariance: column " + name + " is not numeric");
    }
    index.push_back(c);
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    bool complete = true;
    for (std::size_t c : index) complete = complete && !table.is_missing(r, c);
    if (complete) rows.push_back(r);
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < index.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          table.number(rows[i], index[j]);
    }
  }
  std::vector<std::size_t> all(index.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return EstimateCov(x, all, {columns.begin(), columns.end()});
}

Eigen::MatrixXd Cholesky(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw Error("cholesky: matrix is not square");
  Eigen::MatrixXd l;
  Eigen::Index failed = 0;
  if (TryCholesky(cov, l, failed)) return l;
  Eigen::MatrixXd jittered = cov;
  jittered.diagonal().array() += kJitter;
  if (TryCholesky(jittered, l, failed)) return l;
  throw Error("cholesky: leading minor " + std::to_string(failed) +
              " is not positive definite");
}

Eigen::MatrixXd CorrelationOf(const Eigen::MatrixXd& cov) {
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) continue;
      const double denom = std::sqrt(cov(i, i) * cov(j, j));
      corr(i, j) = denom > 0.0 ? std::clamp(cov(i, j) / denom, -1.0, 1.0) : 0.0;
    }
  }
  return 0.5 * (corr + corr.transpose());
}

Eigen::MatrixXd SampleGaussian(const CovMatrix& cov, std::size_t n,
                               std::uint64_t seed) {
  const Eigen::MatrixXd l = Cholesky(cov.values);
  Rng rng(seed);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(n), l.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.Normal();
  }
  return w * l.transpose();
}

double StandardizedQuantile(const TailFamily& family, double u, double upper) {
  switch (family.kind) {
    case TailKind::kNormal:
      if (u <= 0.0) return -std::numeric_limits<double>::infinity();
      if (upper <= 0.0) return std::numeric_limits<double>::infinity();
      return u < 0.5 ? -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u)
                     : std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * upper);
    case TailKind::kLaplace:
      return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * upper);
    case TailKind::kWeibull: {
      const double k = family.weibull_shape;
      // -log(1 - u) taken from the upper tail directly.
      const double h = u < 0.5 ? -std::log1p(-u) : -std::log(upper);
      return std::pow(h, 1.0 / k) - std::pow(std::numbers::ln2, 1.0 / k);
    }
    case TailKind::kGumbel: {
      const double neg_log_u = u < 0.5 ? -std::log(u) : -std::log1p(-upper);
      return -std::log(neg_log_u) + std::log(std::numbers::ln2);
    }
    case TailKind::kLevy: {
      const LevyScale& scale = Levy();
      return (LevyQuantileRaw(u, upper) - scale.median) / scale.iqr;
    }
  }
  return 0.0;
}

double Mahalanobis(const Eigen::MatrixXd& corr_cholesky, const Eigen::VectorXd& q) {
  const Eigen::VectorXd w =
      corr_cholesky.triangularView<Eigen::Lower>().solve(q);
  return w.norm();
}

TailSample SampleTail(const OutlierSpec& spec, const CovMatrix& cov,
                      std::span<const double> means, std::span<const double> stds,
                      std::size_t n) {
  ValidateOutlierSpec(spec);
  const Eigen::Index m = cov.values.rows();
  if (m == 0 || static_cast<std::size_t>(m) != spec.columns.size()) {
    throw Error("tail sampling: covariance dimension " + std::to_string(m) +
                " does not match " + std::to_string(spec.columns.size()) +
                " target columns");
  }
  if (means.size() != static_cast<std::size_t>(m) ||
      stds.size() != static_cast<std::size_t>(m)) {
    throw Error("tail sampling: means/stds length mismatch");
  }
  const Eigen::MatrixXd corr = CorrelationOf(cov.values);
  const Eigen::MatrixXd l = Cholesky(corr);
  const double threshold = spec.sigma_level * std::sqrt(static_cast<double>(m));
  const double limit = spec.tail_limit;

  Eigen::VectorXd w(m);
  Eigen::VectorXd z(m);
  Eigen::VectorXd q(m);
  auto draw_w = [&](Rng& rng) {
    for (Eigen::Index j = 0; j < m; ++j) w(j) = rng.Normal();
  };
  auto to_q = [&]() {
    z = l * w;
    for (Eigen::Index j = 0; j < m; ++j) {
      double lower;
      double upper;
      NormalTails(z(j), lower, upper);
      q(j) = spec.family.kind == TailKind::kNormal
                 ? z(j)
                 : StandardizedQuantile(spec.family, lower, upper);
      q(j) = Clip(q(j), limit);
    }
  };
  auto accepted = [&]() { return Mahalanobis(l, q) >= threshold; };

  TailSample sample;
  {
    Rng pilot(DeriveSeed(spec.seed, "tail-pilot"));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < kPilotDraws; ++i) {
      draw_w(pilot);
      to_q();
      if (accepted()) ++hits;
    }
    sample.pilot_acceptance = static_cast<double>(hits) / kPilotDraws;
  }
  sample.rescaled = sample.pilot_acceptance < kRescaleBelow;

  Rng rng(DeriveSeed(spec.seed, "tail-draws"));
  sample.values.resize(static_cast<Eigen::Index>(n), m);
  for (std::size_t i = 0; i < n; ++i) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxRedraws && !done; ++attempt) {
      draw_w(rng);
      if (sample.rescaled) {
        const double radius = w.norm();
        if (radius > 0.0 && radius < threshold) w *= threshold / radius;
      }
      to_q();
      if (accepted()) {
        done = true;
      } else if (sample.rescaled) {
        // Clipping can pull a shell draw back inside; push it out again in
        // standardized space and clip once more.
        const double d = Mahalanobis(l, q);
        if (d > 0.0) {
          q *= threshold / d * (1.0 + 1e-12);
          for (Eigen::Index j = 0; j < m; ++j) q(j) = Clip(q(j), limit);
          done = accepted();
        }
      }
    }
    if (!done) {
      throw Error("tail sampling: no draw reached the requested sigma level after " +
                  std::to_string(kMaxRedraws) + " attempts");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto k = static_cast<std::size_t>(j);
      sample.values(static_cast<Eigen::Index>(i), j) = means[k] + q(j) * stds[k];
    }
  }
  return sample;
}

std::size_t OutlierCount(double percent, std::size_t rows) {
  const double exact = percent / 100.0 * static_cast<double>(rows);
  // Guards products like 7.7 / 100 * 500 landing a hair below x.5.
  const auto k = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
  return std::min(k, rows);
}

InjectResult Inject(const Table& table, const OutlierSpec& spec,
                    const std::optional<CovMatrix>& cov_value) {
  ValidateOutlierSpec(spec);
  InjectResult result{table, std::vector<std::uint8_t>(table.num_rows(), 0), 0};
  std::vector<std::size_t> index;
  for (const std::string& name : spec.columns) {
    const auto c = table.schema().Find(name);
    if (!c) throw Error("inject: unknown column " + name);
    if (table.schema().column(*c).kind != ColumnKind::kNumeric) {
      throw Error("inject: column " + name + " is not numeric");
    }
    index.push_back(*c);
  }
  const std::size_t k = OutlierCount(spec.percent, table.num_rows());
  if (k == 0) return result;

  std::vector<double> means;
  std::vector<double> stds;
  for (std::size_t j = 0; j < index.size(); ++j) {
    const Column& column = table.column(index[j]);
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      if (!column.missing[r]) {
        sum += column.values[r];
        count += 1.0;
      }
    }
    if (count < 2.0) {
      throw Error("inject: column " + spec.columns[j] + " has fewer than 2 values");
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      if (!column.missing[r]) ss += (column.values[r] - mean) * (column.values[r] - mean);
    }
    const double sd = std::sqrt(ss / (count - 1.0));
    if (!(sd > 0.0)) {
      throw Error("inject: column " + spec.columns[j] +
                  " is constant; a sigma level is undefined");
    }
    means.push_back(mean);
    stds.push_back(sd);
  }

  CovMatrix cov;
  switch (spec.cov_source) {
    case CovSource::kFromData:
      cov = EstimateCov(table, spec.columns);
      break;
    case CovSource::kProvided:
      if (cov_value) {
        cov = *cov_value;
      } else if (spec.provided) {
        cov = *spec.provided;
      } else {
        throw Error("inject: provided covariance source without a matrix");
      }
      break;
    case CovSource::kFromCvae:
      if (!cov_value) throw Error("inject: cvae covariance source without a sample");
      cov = *cov_value;
      break;
  }
  if (cov.columns != spec.columns) {
    throw Error("inject: covariance columns do not match the outlier columns");
  }
  ValidateCov(cov);

  Rng rows_rng(DeriveSeed(spec.seed, "inject-rows"));
  std::vector<std::size_t> rows = SampleWithoutReplacement(table.num_rows(), k, rows_rng);
  std::sort(rows.begin(), rows.end());
  OutlierSpec tail_spec = spec;
  tail_spec.seed = DeriveSeed(spec.seed, "inject-tail");
  const TailSample sample = SampleTail(tail_spec, cov, means, stds, k);
  for (std::size_t j = 0; j < index.size(); ++j) {
    Column& column = result.table.mutable_column(index[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      column.values[rows[i]] =
          sample.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      column.missing[rows[i]] = 0;
    }
  }
  for (std::size_t r : rows) result.mask[r] = 1;
  result.count = k;
  return result;
}

nlohmann::json CovToJson(const CovMatrix& cov) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cov.values.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < cov.values.cols(); ++j) row.push_back(cov.values(i, j));
    rows.push_back(std::move(row));
  }
  return {{"columns", cov.columns}, {"values", rows}};
}

CovMatrix CovFromJson(const nlohmann::json& json) {
  CovMatrix cov;
  try {
    cov.columns = json.at("columns").get<std::vector<std::string>>();
    const auto rows = json.at("values").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(cov.columns.size());
    if (static_cast<Eigen::Index>(rows.size()) != d) {
      throw ConfigError("covariance: row count does not match columns");
    }
    cov.values.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
        throw ConfigError("covariance: matrix is not square");
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        cov.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("covariance: ") + e.what());
  }
  return cov;
}

}  // namespace zgen
