#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.h"
#include "zgen/covgen.h"
#include "zgen/error.h"

using namespace zgen;
using namespace zgen::testing;

namespace {

Eigen::MatrixXd RandomPsd(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.Normal();
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

// Textbook Cholesky-Banachiewicz, no jitter.
Eigen::MatrixXd PlainCholesky(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = i == j ? std::sqrt(s) : s / l(j, j);
    }
  }
  return l;
}

Eigen::MatrixXd SampleCovariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

Table MacroTable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Schema s({{"id", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"m1", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"m2", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"m3", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(5);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.Normal(), b = rng.Normal(), c = rng.Normal();
    cols[0].values.push_back(static_cast<double>(i));
    cols[1].values.push_back(10 + 2 * a);
    cols[2].values.push_back(-3 + 0.5 * (0.8 * a + 0.6 * b));
    cols[3].values.push_back(100 + 20 * (0.3 * b + 0.95 * c));
    cols[4].labels.push_back(a > 0 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(n, 0);
  return Table(s, cols);
}

}  // namespace

TEST_SUITE("covgen") {

TEST_CASE("estimate_cov hand cases") {
  Eigen::MatrixXd m(2, 2);
  m << 0, 0, 2, 2;
  const std::vector<std::size_t> idx = {0, 1};
  const CovMatrix c = EstimateCov(m, idx, {"a", "b"});
  CHECK(c.values(0, 0) == 2.0);
  CHECK(c.values(0, 1) == 2.0);
  CHECK(c.values(1, 1) == 2.0);
  Eigen::MatrixXd one(3, 1);
  one << 1, 2, 6;
  const std::vector<std::size_t> i0 = {0};
  CHECK(EstimateCov(one, i0, {"x"}).values(0, 0) == doctest::Approx(7.0));
  CHECK_THROWS_AS(EstimateCov(Eigen::MatrixXd::Ones(1, 2), idx, {"a", "b"}), Error);
}

TEST_CASE("estimate_cov on a table uses complete rows") {
  Schema s({{"a", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"b", ColumnKind::kNumeric, ColumnRole::kFeature}});
  const Table t = FromCsv("a,b\n0,0\n2,2\n5,\n", s);
  const std::vector<std::string> cols = {"a", "b"};
  const CovMatrix c = EstimateCov(t, cols);
  CHECK(c.values(0, 1) == 2.0);
}

TEST_CASE("cholesky: hand case, identity, multiply-back, failure") {
  Eigen::MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  const Eigen::MatrixXd l = Cholesky(a);
  CHECK(l(0, 0) == doctest::Approx(2));
  CHECK(l(1, 0) == doctest::Approx(1));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(l(0, 1) == 0.0);
  CHECK(Cholesky(Eigen::MatrixXd::Identity(3, 3)) == Eigen::MatrixXd::Identity(3, 3));
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd p = RandomPsd(1 + static_cast<int>(rng.Below(6)), rng);
    const Eigen::MatrixXd lp = Cholesky(p);
    CHECK((lp * lp.transpose() - p).cwiseAbs().maxCoeff() < 1e-10);
  }
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  try {
    Cholesky(bad);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  // rank-deficient PSD passes through the jitter retry
  Eigen::MatrixXd rank1 = Eigen::MatrixXd::Ones(3, 3);
  CHECK_NOTHROW(Cholesky(rank1));
}

TEST_CASE("validate cov") {
  CovMatrix c{{"a", "b"}, Eigen::MatrixXd::Identity(2, 2)};
  CHECK_NOTHROW(ValidateCov(c));
  c.values(0, 1) = 0.5;
  CHECK_THROWS(ValidateCov(c));
  c.values(1, 0) = 0.5;
  CHECK_NOTHROW(ValidateCov(c));
  c.values(0, 1) = c.values(1, 0) = 3.0;
  CHECK_THROWS(ValidateCov(c));
}

TEST_CASE("gaussian sampling reproduces random 4-d covariances") {
  Rng rng(11);
  for (int t = 0; t < 3; ++t) {
    CovMatrix cov{{"a", "b", "c", "d"}, RandomPsd(4, rng)};
    const Eigen::MatrixXd l = PlainCholesky(cov.values);
    CHECK((l * l.transpose() - cov.values).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd x = SampleGaussian(cov, 100000, 7 + t);
    const double err = (SampleCovariance(x) - cov.values).cwiseAbs().maxCoeff();
    CHECK(err <= 0.05 * cov.values.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("standardized quantiles: median zero, monotone, unit scale") {
  for (const char* name : {"normal", "laplace", "weibull", "weibull:0.7", "gumbel", "levy"}) {
    const TailFamily f = ParseTailFamily(name);
    CAPTURE(name);
    CHECK(std::abs(StandardizedQuantile(f, 0.5, 0.5)) < 1e-12);
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < 1000; ++i) {
      const double u = i / 1000.0;
      const double q = StandardizedQuantile(f, u, 1.0 - u);
      CHECK(q > prev);
      prev = q;
    }
  }
  // normal: unit std quantiles
  const TailFamily n = ParseTailFamily("normal");
  CHECK(StandardizedQuantile(n, 0.975, 0.025) == doctest::Approx(1.959963984540054));
  // levy standardized by IQR
  const TailFamily l = ParseTailFamily("levy");
  CHECK(StandardizedQuantile(l, 0.75, 0.25) - StandardizedQuantile(l, 0.25, 0.75) ==
        doctest::Approx(1.0));
  // precise far tail from the complement
  CHECK(std::isfinite(StandardizedQuantile(n, 1.0, 1e-300)));
  CHECK(ToString(ParseTailFamily("weibull:2.5")) == "weibull:2.5");
  CHECK_THROWS_AS(ParseTailFamily("cauchy"), ConfigError);
  CHECK_THROWS_AS(ParseTailFamily("weibull:-1"), ConfigError);
}

TEST_CASE("tail guarantee for every family") {
  const Table t = MacroTable(2000, 1);
  const std::vector<std::string> cols = {"m1", "m2", "m3"};
  const CovMatrix cov = EstimateCov(t, cols);
  const Eigen::VectorXd sd = cov.values.diagonal().cwiseSqrt();
  const Eigen::MatrixXd corr = cov.values.cwiseQuotient(sd * sd.transpose());
  const Eigen::MatrixXd inv = corr.fullPivLu().inverse();
  for (const char* name : {"normal", "laplace", "weibull", "gumbel", "levy"}) {
    CAPTURE(name);
    OutlierSpec spec;
    spec.columns = cols;
    spec.percent = 100;
    spec.family = ParseTailFamily(name);
    spec.seed = 5;
    const std::vector<double> means = {10, -3, 100}, stds = {2, 0.5, 20};
    const TailSample s = SampleTail(spec, cov, means, stds, 2000);
    REQUIRE(s.values.rows() == 2000);
    for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
      Eigen::VectorXd q(3);
      for (int j = 0; j < 3; ++j) q(j) = (s.values(r, j) - means[j]) / stds[j];
      REQUIRE(std::sqrt(q.dot(inv * q)) >= 3 * std::sqrt(3.0) - 1e-9);
      REQUIRE(q.cwiseAbs().maxCoeff() <= 6 + 1e-9);
    }
  }
}

TEST_CASE("identity covariance keeps tail draws uncorrelated") {
  CovMatrix cov{{"a", "b"}, Eigen::MatrixXd::Identity(2, 2)};
  OutlierSpec spec;
  spec.columns = {"a", "b"};
  spec.percent = 100;
  spec.seed = 3;
  const std::vector<double> means = {0, 0}, stds = {1, 1};
  const TailSample s = SampleTail(spec, cov, means, stds, 10000);
  const Eigen::MatrixXd c = SampleCovariance(s.values);
  CHECK(std::abs(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1))) < 0.1);
}

TEST_CASE("unreachable shells fall back to radial rescaling") {
  // sigma level close to the clip forces a tiny acceptance rate
  CovMatrix cov{{"a", "b"}, Eigen::MatrixXd::Identity(2, 2)};
  OutlierSpec spec;
  spec.columns = {"a", "b"};
  spec.percent = 100;
  spec.sigma_level = 4;
  spec.tail_limit = 6;
  spec.seed = 3;
  const std::vector<double> means = {0, 0}, stds = {1, 1};
  const TailSample s = SampleTail(spec, cov, means, stds, 500);
  CHECK(s.rescaled);
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    CHECK(s.values.row(r).norm() >= 4 * std::sqrt(2.0) - 1e-9);
    CHECK(s.values.row(r).cwiseAbs().maxCoeff() <= 6 + 1e-9);
  }
}

TEST_CASE("inject: identity at p = 0, counts, locality, determinism") {
  const Table t = MacroTable(1000, 2);
  OutlierSpec spec;
  spec.columns = {"m1", "m2"};
  spec.seed = 9;
  spec.percent = 0;
  const InjectResult none = Inject(t, spec);
  CHECK(none.table == t);
  CHECK(none.count == 0);

  spec.percent = 5;
  const InjectResult five = Inject(t, spec);
  CHECK(five.count == 50);
  std::size_t marked = 0, changed = 0;
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    marked += five.mask[r];
    changed += five.table.number(r, 1) != t.number(r, 1);
    if (!five.mask[r]) CHECK(five.table.number(r, 1) == t.number(r, 1));
  }
  CHECK(marked == 50);
  CHECK(changed == 50);
  CHECK(Inject(t, spec).table == five.table);

  spec.percent = 100;
  const InjectResult all = Inject(t, spec);
  CHECK(all.count == 1000);
  for (std::size_t c : {0u, 3u, 4u}) CHECK(all.table.column(c) == t.column(c));
}

TEST_CASE("inject: injected rows satisfy the guarantee in data units") {
  const Table t = MacroTable(1500, 3);
  OutlierSpec spec;
  spec.columns = {"m1", "m2", "m3"};
  spec.percent = 40;
  spec.family = ParseTailFamily("gumbel");
  spec.seed = 1;
  const InjectResult res = Inject(t, spec);
  const CovMatrix cov = EstimateCov(t, spec.columns);
  const Eigen::VectorXd sd = cov.values.diagonal().cwiseSqrt();
  const Eigen::MatrixXd inv = cov.values.cwiseQuotient(sd * sd.transpose()).inverse();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (std::size_t r = 0; r < t.num_rows(); ++r)
    for (int j = 0; j < 3; ++j) mean(j) += t.number(r, j + 1) / t.num_rows();
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    if (!res.mask[r]) continue;
    Eigen::VectorXd q(3);
    for (int j = 0; j < 3; ++j) q(j) = (res.table.number(r, j + 1) - mean(j)) / sd(j);
    CHECK(std::sqrt(q.dot(inv * q)) >= 3 * std::sqrt(3.0) - 1e-8);
    CHECK(q.cwiseAbs().maxCoeff() <= 6 + 1e-8);
  }
}

TEST_CASE("inject: errors") {
  Schema s({{"k", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"c", ColumnKind::kCategorical, ColumnRole::kFeature}});
  const Table t = FromCsv("k,c\n1,a\n1,b\n1,a\n", s);
  OutlierSpec spec;
  spec.columns = {"k"};
  spec.percent = 50;
  CHECK_THROWS_AS(Inject(t, spec), Error);
  spec.columns = {"c"};
  CHECK_THROWS_AS(Inject(t, spec), Error);
  spec.columns = {"missing"};
  CHECK_THROWS_AS(Inject(t, spec), Error);
  spec.columns = {"k"};
  spec.percent = 120;
  CHECK_THROWS_AS(ValidateOutlierSpec(spec), ConfigError);
  spec.percent = 5;
  spec.tail_limit = 2;
  CHECK_THROWS_AS(ValidateOutlierSpec(spec), ConfigError);
}

TEST_CASE("outlier count rounds half away from zero") {
  CHECK(OutlierCount(5, 1000) == 50);
  CHECK(OutlierCount(7.7, 500) == 39);  // 38.5
  CHECK(OutlierCount(0.5, 100) == 1);
  CHECK(OutlierCount(100, 17) == 17);
  CHECK(OutlierCount(0, 17) == 0);
}

TEST_CASE("spec and covariance json round trips") {
  OutlierSpec spec;
  spec.columns = {"m1", "m2"};
  spec.percent = 7.4;
  spec.family = ParseTailFamily("weibull:2");
  spec.cov_source = CovSource::kProvided;
  spec.provided = CovMatrix{{"m1", "m2"}, Eigen::MatrixXd::Identity(2, 2)};
  spec.seed = 77;
  const OutlierSpec back = OutlierSpecFromJson(OutlierSpecToJson(spec));
  CHECK(back.columns == spec.columns);
  CHECK(back.percent == spec.percent);
  CHECK(ToString(back.family) == "weibull:2");
  CHECK(back.provided->values == spec.provided->values);
  CHECK(CovFromJson(CovToJson(*spec.provided)).values == spec.provided->values);
}

}  // TEST_SUITE
