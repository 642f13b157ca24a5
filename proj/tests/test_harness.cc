#include <atomic>
#include <cmath>
#include <mutex>
#include <set>

#include "doctest.h"
#include "helpers.h"
#include "zgen/error.h"
#include "zgen/harness.h"
#include "zgen/split.h"

using namespace zgen;
using namespace zgen::testing;

namespace {

// Time-stamped table with one macro column held inside [-1, 1].
Table TimeTable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Schema s({{"t", ColumnKind::kNumeric, ColumnRole::kTimeIndex},
            {"x", ColumnKind::kNumeric, ColumnRole::kFeature},
            {"m", ColumnKind::kNumeric, ColumnRole::kMacro},
            {"y", ColumnKind::kCategorical, ColumnRole::kTarget}});
  std::vector<Column> cols(4);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.Normal();
    cols[0].values.push_back(static_cast<double>(i));
    cols[1].values.push_back(x);
    cols[2].values.push_back(2 * rng.Uniform() - 1);
    cols[3].labels.push_back(x + 0.7 * rng.Normal() > 0 ? "1" : "0");
  }
  for (auto& c : cols) c.missing.assign(n, 0);
  return Table(s, cols);
}

Evaluator Constant(double v) {
  return [v](const Table&, const Table&, std::uint64_t) { return v; };
}

ProtocolOptions Fast(std::uint64_t seed, int workers = 1) {
  ProtocolOptions o;
  o.seed = seed;
  o.workers = workers;
  return o;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("constant evaluator: median is the constant, IQR zero, 51 values") {
  const Table t = ToyClassification(300, 1);
  const TrainTest s = SplitOutOfSample(t, 0.33, 1);
  const ExperimentReport r = RunOos(s.train, s.test, std::nullopt, Constant(0.77), Fast(3));
  REQUIRE(r.conditions.size() == 1);
  CHECK(r.conditions[0].aucs.size() == 51);
  CHECK(r.conditions[0].summary.median == 0.77);
  CHECK(r.conditions[0].summary.iqr == 0.0);
}

TEST_CASE("subsample sizes, final full iteration, fresh draws") {
  const Table t = ToyClassification(300, 2);
  const TrainTest s = SplitOutOfSample(t, 0.33, 1);
  std::mutex mu;
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  std::set<std::uint64_t> hashes;
  Evaluator spy = [&](const Table& tr, const Table& te, std::uint64_t) {
    std::lock_guard<std::mutex> lock(mu);
    sizes.emplace_back(tr.num_rows(), te.num_rows());
    hashes.insert(tr.ContentHash());
    return 0.5;
  };
  RunOos(s.train, s.test, std::nullopt, spy, Fast(1));
  std::size_t full = 0;
  for (auto [a, b] : sizes) {
    if (a == s.train.num_rows() && b == s.test.num_rows()) ++full;
    else {
      CHECK(a == static_cast<std::size_t>(std::llround(0.8 * s.train.num_rows())));
      CHECK(b == static_cast<std::size_t>(std::llround(0.8 * s.test.num_rows())));
    }
  }
  CHECK(full == 1);
  CHECK(hashes.size() == 51);
}

TEST_CASE("reports are identical across reruns and worker counts") {
  const Table t = ToyClassification(400, 3);
  const TrainTest s = SplitOutOfSample(t, 0.33, 1);
  GbdtConfig g;
  g.trees = 20;
  const Evaluator eval = GbdtEvaluator(g);
  const auto a = ReportToJson(RunOos(s.train, s.test, std::nullopt, eval, Fast(9, 1))).dump();
  const auto b = ReportToJson(RunOos(s.train, s.test, std::nullopt, eval, Fast(9, 1))).dump();
  const auto c = ReportToJson(RunOos(s.train, s.test, std::nullopt, eval, Fast(9, 4))).dump();
  CHECK(a == b);
  CHECK(a == c);
  const auto d = ReportToJson(RunOos(s.train, s.test, std::nullopt, eval, Fast(10, 1))).dump();
  CHECK(a != d);
}

TEST_CASE("generator mode fits on synthetic rows") {
  const Table t = ToyClassification(300, 4);
  const TrainTest s = SplitOutOfSample(t, 0.33, 1);
  const Table synth = ToyClassification(500, 99);
  std::atomic<std::size_t> max_rows{0};
  Evaluator spy = [&](const Table& tr, const Table&, std::uint64_t) {
    std::size_t cur = max_rows;
    while (tr.num_rows() > cur && !max_rows.compare_exchange_weak(cur, tr.num_rows())) {
    }
    return 0.5;
  };
  const ExperimentReport r = RunOos(s.train, s.test, synth, spy, Fast(1));
  CHECK(max_rows == 500);
  CHECK(r.conditions[0].name == "synthetic");
}

TEST_CASE("a subsample that keeps losing a class is an error") {
  const Table t = ToyClassification(100, 5);
  ProtocolOptions o = Fast(1);
  o.subsample = 0.01;
  CHECK_THROWS_AS(RunOos(t, t, std::nullopt, Constant(0.5), o), Error);
}

TEST_CASE("oot: shape, mixing arithmetic, pure real uses no synthetic rows") {
  const Table t = TimeTable(2000, 6);
  std::mutex mu;
  std::vector<std::size_t> train_sizes;
  Evaluator spy = [&](const Table& tr, const Table&, std::uint64_t) {
    std::lock_guard<std::mutex> lock(mu);
    train_sizes.push_back(tr.num_rows());
    return 0.5;
  };
  OotOptions oot;
  oot.train_fractions = {0.5};
  ProtocolOptions o = Fast(2);
  o.iterations = 1;  // the single full-data iteration
  const ExperimentReport r = RunOot(t, BootstrapFactory(), spy, oot, o);
  REQUIRE(r.conditions.size() == 6);
  // 100% synthetic, 1:1, 0.1:1, 0.01:1, 0.001:1, 100% real on 1000 real rows
  const std::vector<std::size_t> want = {4000, 2000, 1100, 1010, 1001, 1000};
  CHECK(train_sizes == want);

  OotOptions both;
  ProtocolOptions few = Fast(2);
  few.iterations = 3;
  const ExperimentReport shape = RunOot(t, BootstrapFactory(), Constant(0.6), both, few);
  CHECK(shape.conditions.size() == 12);
  CHECK(shape.conditions[0].name == "50% / 100% synthetic");
  CHECK(shape.conditions[11].name == "80% / 100% real");
}

TEST_CASE("sweep: counts, identity level, oracle medians, Wilcoxon rows") {
  const Table t = TimeTable(1500, 7);
  OutlierSpec spec;
  spec.columns = {"m"};
  SweepOptions sw;
  sw.levels = {5, 0};
  sw.datasets = 80;
  sw.rows_per_dataset = 1000;
  // AUC as a fixed function of the injected share: count |m| > 1.
  Evaluator oracle = [](const Table& tr, const Table&, std::uint64_t) {
    double hits = 0;
    for (std::size_t r = 0; r < tr.num_rows(); ++r) hits += std::abs(tr.number(r, 2)) > 1.0;
    return 0.5 + 0.5 * hits / static_cast<double>(tr.num_rows());
  };
  const ExperimentReport r = RunOutlierSweep(t, BootstrapFactory(), spec, oracle, sw, Fast(4));
  REQUIRE(r.sweep.size() == 2);
  CHECK(r.sweep[0].result.aucs.size() == 81);
  CHECK(r.sweep[1].result.aucs.size() == 81);
  CHECK(r.sweep[0].result.summary.median == doctest::Approx(0.525).epsilon(1e-12));
  CHECK(r.sweep[0].result.summary.iqr == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.sweep[1].result.summary.median == 0.5);
  CHECK(r.sweep[0].delta == doctest::Approx(0.025));
  CHECK(r.sweep[0].wilcoxon.p_value < 0.05);
  CHECK(r.sweep[0].wilcoxon.significant);
  CHECK(r.sweep[1].wilcoxon.p_value == 1.0);

  // level 0 equals the plain synthetic pipeline
  SweepOptions zero = sw;
  zero.levels = {0};
  GbdtConfig g;
  g.trees = 5;
  const ExperimentReport a = RunOutlierSweep(t, BootstrapFactory(), spec, GbdtEvaluator(g), zero, Fast(4));
  OutlierSpec other = spec;
  other.family = ParseTailFamily("levy");
  const ExperimentReport b = RunOutlierSweep(t, BootstrapFactory(), other, GbdtEvaluator(g), zero, Fast(4, 2));
  CHECK(a.sweep[0].result.aucs == b.sweep[0].result.aucs);
}

TEST_CASE("rendered reports") {
  const Table t = TimeTable(800, 8);
  OutlierSpec spec;
  spec.columns = {"m"};
  SweepOptions sw;
  sw.levels = {5, 0};
  sw.datasets = 3;
  sw.rows_per_dataset = 200;
  const ExperimentReport r = RunOutlierSweep(t, BootstrapFactory(), spec, Constant(0.7), sw, Fast(1));
  const std::string text = RenderReport(r);
  CHECK(text.find("5%") != std::string::npos);
  CHECK(text.find("0.7000") != std::string::npos);
  CHECK(text.find("(0.7000:0.7000)") != std::string::npos);
  CHECK(text.find("significant") != std::string::npos);
  const nlohmann::json j = ReportToJson(r);
  CHECK(j["sweep"].size() == 2);
  CHECK(j["sweep"][0]["aucs"].size() == 4);
  CHECK(j["sweep"][0]["median"] >= j["sweep"][0]["min"]);
}

TEST_CASE("parallel for covers every index and rethrows the first failure") {
  std::vector<int> hit(1000, 0);
  ParallelFor(1000, 4, [&](std::size_t i) { hit[i]++; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_WITH(ParallelFor(50, 4, [](std::size_t i) {
                      if (i == 7 || i == 30) throw Error("fail " + std::to_string(i));
                    }),
                    "fail 7");
}

}  // TEST_SUITE
