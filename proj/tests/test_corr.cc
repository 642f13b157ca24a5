#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "zgen/corr.h"
#include "zgen/error.h"
#include "zgen/preprocess.h"

using namespace zgen;
using namespace zgen::testing;

namespace {

double NaivePearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean(), my = y.mean();
  double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("corr") {

TEST_CASE("perfect and anti correlation") {
  Eigen::MatrixXd m(5, 3);
  for (int i = 0; i < 5; ++i) {
    m(i, 0) = i * 1.5;
    m(i, 1) = 2 * m(i, 0);
    m(i, 2) = -m(i, 0);
  }
  const CorrMatrix c = PearsonMatrix(m, {"x", "y", "z"});
  CHECK(c.values(0, 1) == doctest::Approx(1.0));
  CHECK(c.values(0, 2) == doctest::Approx(-1.0));
  CHECK(c.values(1, 1) == 1.0);
}

TEST_CASE("independent columns are nearly uncorrelated") {
  Rng rng(1);
  Eigen::MatrixXd m(10000, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  const CorrMatrix c = PearsonMatrix(m, {"a", "b", "c", "d"});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(std::abs(c.values(i, j)) < 0.05);
}

TEST_CASE("titanic matrix: symmetric, bounded, matches naive Pearson on encoded columns") {
  const Table t = Titanic();
  const PreprocessPlan plan = FitPreprocess(t);
  const CorrMatrix c = PearsonMatrix(t, plan);
  const Eigen::MatrixXd enc = Encode(t, plan).matrix;
  REQUIRE(c.values.rows() == 9);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      CHECK(std::abs(c.values(i, j) - c.values(j, i)) <= 1e-12);
      CHECK(c.values(i, j) <= 1.0 + 1e-12);
      CHECK(c.values(i, j) >= -1.0 - 1e-12);
      if (i != j) CHECK(c.values(i, j) == doctest::Approx(NaivePearson(enc.col(i), enc.col(j))).epsilon(1e-9));
    }
  }
}

TEST_CASE("constant column is zeroed and flagged") {
  Eigen::MatrixXd m(4, 2);
  m << 1, 5, 2, 5, 3, 5, 4, 5;
  const CorrMatrix c = PearsonMatrix(m, {"a", "k"});
  CHECK(c.constant == std::vector<std::uint8_t>{0, 1});
  CHECK(c.values(1, 1) == 0.0);
  CHECK(c.values(0, 1) == 0.0);
  CHECK(c.values(0, 0) == 1.0);
}

TEST_CASE("diff: self, antisymmetry, hand MAD, binding mismatch") {
  CorrMatrix a{{"x", "y"}, Eigen::MatrixXd(2, 2), {0, 0}};
  a.values << 1, .5, .5, 1;
  CorrMatrix b{{"x", "y"}, Eigen::MatrixXd(2, 2), {0, 0}};
  b.values << 1, .1, .1, 1;
  CHECK(Diff(a, a).mad == 0.0);
  CHECK(Diff(a, a).values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(Diff(a, b).mad == doctest::Approx(0.4));
  CHECK(Diff(a, b).values == -Diff(b, a).values);
  CorrMatrix c = b;
  c.columns = {"x", "w"};
  try {
    Diff(a, c);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
}

TEST_CASE("MAD is invariant under row shuffles") {
  const Table t = Titanic();
  const PreprocessPlan plan = FitPreprocess(t);
  std::vector<std::size_t> idx(t.num_rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(3);
  rng.Shuffle(idx);
  const Table half = t.SelectRows(std::vector<std::size_t>(idx.begin(), idx.begin() + 400));
  std::vector<std::size_t> p(400);
  for (std::size_t i = 0; i < 400; ++i) p[i] = 399 - i;
  const double a = Diff(PearsonMatrix(t, plan), PearsonMatrix(half, plan)).mad;
  const double b = Diff(PearsonMatrix(t, plan), PearsonMatrix(half.SelectRows(p), plan)).mad;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("ramp colors, clamping, scale checks") {
  const HeatmapScale s;
  const Rgb mid = RampColor(0.0, s);
  CHECK(mid == Rgb{255, 255, 255});
  CHECK(RampColor(0.5, s) == Rgb{178, 24, 43});
  CHECK(RampColor(9.0, s) == Rgb{178, 24, 43});
  CHECK(RampColor(-0.5, s) == Rgb{33, 102, 172});
  CHECK(RampColor(-3.0, s) == Rgb{33, 102, 172});
  CHECK_THROWS(RampColor(0.0, HeatmapScale{1.0, 1.0}));
}

TEST_CASE("ppm: zero matrix is uniform white, layout and determinism") {
  const std::string img = RenderPpm(Eigen::MatrixXd::Zero(3, 3), HeatmapScale{}, 4);
  const std::string header = "P6\n12 12\n255\n";
  REQUIRE(img.substr(0, header.size()) == header);
  CHECK(img.size() == header.size() + 12 * 12 * 3);
  for (std::size_t i = header.size(); i < img.size(); ++i) CHECK(static_cast<unsigned char>(img[i]) == 255);
  Eigen::MatrixXd v(1, 2);
  v << 0.5, -0.5;
  const std::string two = RenderPpm(v, HeatmapScale{}, 1);
  const std::string h2 = "P6\n2 1\n255\n";
  CHECK(static_cast<unsigned char>(two[h2.size()]) == 178);
  CHECK(static_cast<unsigned char>(two[h2.size() + 3]) == 33);
  CHECK(RenderPpm(v, HeatmapScale{}, 1) == two);
  Eigen::MatrixXd nan = Eigen::MatrixXd::Zero(1, 1);
  nan(0, 0) = std::nan("");
  CHECK_THROWS(RenderPpm(nan, HeatmapScale{}));
}

TEST_CASE("matrix csv round trip and heatmap files") {
  Rng rng(4);
  Eigen::MatrixXd m(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) m.data()[i] = rng.Normal();
  std::stringstream buf;
  WriteMatrixCsv(buf, {"a", "b", "c"}, m);
  std::vector<std::string> cols;
  CHECK(ReadMatrixCsv(buf, &cols) == m);
  CHECK(cols == std::vector<std::string>{"a", "b", "c"});
  const auto dir = TempDir("heatmap");
  RenderHeatmap(dir / "x", {"a", "b", "c"}, m, HeatmapScale{});
  RenderHeatmap(dir / "y", {"a", "b", "c"}, m, HeatmapScale{});
  CHECK(Slurp(dir / "x.ppm") == Slurp(dir / "y.ppm"));
  CHECK(Slurp(dir / "x.csv") == Slurp(dir / "y.csv"));
  CHECK_THROWS(RenderHeatmap(dir / "z", {"a", "b", "c"}, m, HeatmapScale{0.5, -0.5}));
}

}  // TEST_SUITE
