#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "zgen/error.h"
#include "zgen/gbdt.h"
#include "zgen/stats.h"

using namespace zgen;
using namespace zgen::testing;

namespace {

Table Xor(int copies) {
  Schema s({{"a", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"b", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(3);
  for (int k = 0; k < copies; ++k) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        cols[0].values.push_back(a);
        cols[1].values.push_back(b);
        cols[2].labels.push_back((a ^ b) ? "1" : "0");
      }
    }
  }
  for (auto& c : cols) c.missing.assign(cols[0].values.size(), 0);
  return Table(s, cols);
}

double TrainAuc(const GbdtModel& m, const Table& t) {
  return Auc(PredictProba(m, t), ExtractBinaryTarget(t).labels);
}

}  // namespace

TEST_SUITE("gbdt") {

TEST_CASE("separable feature gives training AUC 1") {
  Schema s({{"x", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(2);
  for (int i = 0; i < 40; ++i) {
    cols[0].values.push_back(i);
    cols[1].labels.push_back(i >= 20 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(40, 0);
  const Table t(s, cols);
  GbdtConfig c;
  c.trees = 10;
  CHECK(TrainAuc(FitGbdt(t, c), t) == 1.0);
}

TEST_CASE("xor: no stump separates, depth 2 does") {
  const Table t = Xor(10);
  // every stump leaves both sides at the base rate
  for (int f = 0; f < 2; ++f) {
    for (double thr : {-0.5, 0.5, 1.5}) {
      int lp = 0, ln = 0, rp = 0, rn = 0;
      for (std::size_t r = 0; r < t.num_rows(); ++r) {
        const bool pos = t.label(r, 2) == "1";
        if (t.number(r, f) <= thr) (pos ? lp : ln)++;
        else (pos ? rp : rn)++;
      }
      if (lp + ln > 0) CHECK(lp * 2 == lp + ln);
      if (rp + rn > 0) CHECK(rp * 2 == rp + rn);
    }
  }
  GbdtConfig c;
  c.trees = 20;
  c.max_depth = 1;
  CHECK(TrainAuc(FitGbdt(t, c), t) <= 0.6);
  c.max_depth = 2;
  CHECK(TrainAuc(FitGbdt(t, c), t) == 1.0);
}

TEST_CASE("near-constant target gives prior predictions") {
  Schema s({{"x", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(2);
  for (int i = 0; i < 100; ++i) {
    cols[0].values.push_back(i % 7);
    cols[1].labels.push_back(i == 50 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(100, 0);
  const Table t(s, cols);
  GbdtConfig c;
  c.trees = 5;
  c.min_leaf = 30;
  const GbdtModel m = FitGbdt(t, c);
  CHECK(m.base_score == doctest::Approx(std::log(1.0 / 99.0)));
  for (double p : PredictProba(m, t)) CHECK(p == doctest::Approx(0.01).epsilon(0.5));

  cols[1].labels.assign(100, "0");
  CHECK_THROWS_AS(FitGbdt(Table(s, cols), c), Error);
}

TEST_CASE("zero trees predict the prior; probabilities in (0, 1)") {
  const Table t = ToyClassification(300, 1);
  const GbdtModel m = FitGbdt(t, GbdtConfig{});
  const auto prior = PredictProba(m, t, 0);
  for (double p : prior) CHECK(p == doctest::Approx(1 / (1 + std::exp(-m.base_score))));
  for (double p : PredictProba(m, t)) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("monotone feature gives monotone predictions") {
  Schema s({{"x", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(2);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    cols[0].values.push_back(i);
    cols[1].labels.push_back(rng.Uniform() < i / 200.0 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(200, 0);
  // Monotone target: sort labels so that y is non-decreasing in x.
  std::sort(cols[1].labels.begin(), cols[1].labels.end());
  const Table t(s, cols);
  GbdtConfig c;
  c.trees = 50;
  const auto p = PredictProba(FitGbdt(t, c), t);
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] >= p[i - 1]);
}

TEST_CASE("training loss never increases; depth bound holds") {
  const Table t = ToyClassification(400, 3);
  GbdtConfig c;
  c.trees = 60;
  c.max_depth = 3;
  const GbdtModel m = FitGbdt(t, c);
  REQUIRE(m.loss_trace.size() == 61);
  for (std::size_t i = 1; i < m.loss_trace.size(); ++i) {
    CHECK(m.loss_trace[i] <= m.loss_trace[i - 1] + 1e-12);
  }
  for (const auto& tree : m.trees) {
    // depth via parent walk
    std::vector<int> depth(tree.size(), 0);
    for (std::size_t n = 0; n < tree.size(); ++n) {
      if (tree[n].feature < 0) continue;
      depth[tree[n].left] = depth[n] + 1;
      depth[tree[n].right] = depth[n] + 1;
    }
    CHECK(*std::max_element(depth.begin(), depth.end()) <= 3);
  }
}

TEST_CASE("row order does not change predictions") {
  const Table t = ToyClassification(300, 4);
  std::vector<std::size_t> perm(t.num_rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
  Rng rng(1);
  rng.Shuffle(perm);
  GbdtConfig c;
  c.trees = 30;
  CHECK(PredictProba(FitGbdt(t, c), t) == PredictProba(FitGbdt(t.SelectRows(perm), c), t));
}

TEST_CASE("label flip symmetry of auc") {
  Rng rng(5);
  std::vector<double> s(50);
  std::vector<int> y(50), f(50);
  for (int i = 0; i < 50; ++i) {
    s[i] = rng.Normal();
    y[i] = i % 3 == 0;
    f[i] = 1 - y[i];
  }
  CHECK(Auc(s, f) == doctest::Approx(1 - Auc(s, y)).epsilon(1e-12));
  CHECK(Auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(Auc(std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<int>{1, 0, 1, 0}) == 0.25);
}

TEST_CASE("missing and unseen categories route deterministically") {
  const Table t = ToyClassification(300, 6);
  GbdtConfig c;
  c.trees = 20;
  const GbdtModel m = FitGbdt(t, c);
  Table odd = t.SelectRows(std::vector<std::size_t>{0, 1, 2});
  odd.mutable_column(2).labels[0] = "never-seen";
  odd.mutable_column(0).missing[1] = 1;
  odd.mutable_column(2).missing[2] = 1;
  const auto p = PredictProba(m, odd);
  for (double v : p) {
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("macro columns can be excluded") {
  Schema s({{"x", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"m", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(3);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    cols[0].values.push_back(rng.Normal());
    cols[1].values.push_back(i);
    cols[2].labels.push_back(i >= 100 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(200, 0);
  const Table t(s, cols);
  GbdtConfig c;
  c.trees = 10;
  CHECK(FitGbdt(t, c).features.size() == 2);
  c.use_macro = false;
  const GbdtModel m = FitGbdt(t, c);
  CHECK(m.features.size() == 1);
  CHECK(TrainAuc(m, t) < 0.8);
}

TEST_CASE("grid search: singleton, dominance, determinism") {
  const Table train = ToyClassification(300, 7);
  const Table valid = ToyClassification(200, 8);
  GbdtConfig one;
  one.trees = 20;
  const std::vector<GbdtConfig> single = {one};
  CHECK(GridSearch(train, valid, single).best == one);

  // a stump-free config (no trees) scores 0.5; anything with trees beats it
  GbdtConfig empty = one;
  empty.trees = 0;
  const std::vector<GbdtConfig> grid = {empty, one};
  const GridResult r = GridSearch(train, valid, grid);
  CHECK(r.best == one);
  CHECK(r.points[0].auc == 0.5);

  const auto full = DefaultGrid();
  CHECK(full.size() == 18);
  std::vector<GbdtConfig> small(full.begin(), full.begin() + 4);
  for (auto& g : small) g.trees /= 4;
  CHECK(GridSearch(train, valid, small).best == GridSearch(train, valid, small).best);
  // prefix reuse matches separate fits
  const GridResult gr = GridSearch(train, valid, small);
  for (const GridPoint& p : gr.points) {
    CHECK(p.auc == Auc(PredictProba(FitGbdt(train, p.config), valid), ExtractBinaryTarget(valid).labels));
  }
}

TEST_CASE("predict_target: threshold, proba, locality") {
  const Table t = ToyClassification(300, 9);
  GbdtConfig c;
  c.trees = 20;
  const GbdtModel m = FitGbdt(t, c);
  const auto p = PredictProba(m, t);
  const Table labeled = PredictTarget(m, t, TargetMode::kThreshold);
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    CHECK(labeled.label(r, 3) == (p[r] >= 0.5 ? m.positive_label : m.negative_label));
  }
  for (std::size_t col = 0; col < 3; ++col) CHECK(labeled.column(col) == t.column(col));
  const Table proba = PredictTarget(m, t, TargetMode::kProba);
  CHECK(proba.schema().column(3).kind == ColumnKind::kNumeric);
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    CHECK(proba.number(r, 3) > 0.0);
    CHECK(proba.number(r, 3) < 1.0);
  }
  Table wrong = t.SelectColumns(std::vector<std::string>{"x1", "y"});
  CHECK_THROWS_AS(PredictTarget(m, wrong, TargetMode::kThreshold), Error);
}

TEST_CASE("model json round trip and score file") {
  const Table t = ToyClassification(200, 10);
  GbdtConfig c;
  c.trees = 15;
  const GbdtModel m = FitGbdt(t, c);
  const GbdtModel back = GbdtFromJson(nlohmann::json::parse(GbdtToJson(m).dump()));
  CHECK(PredictProba(back, t) == PredictProba(m, t));
  std::ostringstream out;
  WriteScores(out, std::vector<double>{0.25, 0.5});
  CHECK(out.str() == "row,score\n0,0.25\n1,0.5\n");
  CHECK_THROWS(ValidateGbdtConfig(GbdtConfig{.max_depth = 13}));
}

}  // TEST_SUITE
