#include "zgen/harness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "zgen/error.h"
#include "zgen/random.h"
#include "zgen/split.h"

namespace zgen {

namespace {

bool BothClasses(const Table& table) {
  const BinaryTarget t = ExtractBinaryTarget(table);
  const auto positives = std::count(t.labels.begin(), t.labels.end(), 1);
  return positives > 0 && positives < static_cast<std::ptrdiff_t>(t.labels.size());
}

// Subsample that keeps both target classes, redrawn with fresh seeds.
Table ClassSafeSubsample(const Table& table, double fraction, std::uint64_t seed,
                         int attempts, const std::string& what) {
  for (int a = 0; a < attempts; ++a) {
    Table sub = Subsample(table, fraction, DeriveSeed(seed, {static_cast<std::uint64_t>(a)}));
    if (BothClasses(sub)) return sub;
  }
  throw Error(what + ": every subsample lost a target class after " +
              std::to_string(attempts) + " attempts");
}

nlohmann::json ConditionToJson(const ConditionResult& c) {
  return {{"name", c.name},
          {"aucs", c.aucs},
          {"median", c.summary.median},
          {"min", c.summary.min},
          {"max", c.summary.max},
          {"q1", c.summary.q1},
          {"q3", c.summary.q3},
          {"iqr", c.summary.iqr}};
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string Signed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.*f", digits, v);
  return buf;
}

std::string RenderGrid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += row[i];
      if (i + 1 < row.size()) line += std::string(widths[i] - row[i].size() + 2, ' ');
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace

Evaluator GbdtEvaluator(GbdtConfig config) {
  return [config](const Table& train, const Table& test, std::uint64_t seed) {
    GbdtConfig c = config;
    c.seed = seed;
    const GbdtModel model = FitGbdt(train, c);
    return Auc(PredictProba(model, test), ExtractBinaryTarget(test).labels);
  };
}

SyntheticSource GanSource(std::shared_ptr<const GanModel> gan,
                          std::shared_ptr<const GbdtModel> target_model, bool filter) {
  return [gan, target_model, filter](std::size_t rows, std::uint64_t seed) {
    Table t = Generate(*gan, rows, seed, filter).table;
    if (target_model) t = PredictTarget(*target_model, t, TargetMode::kThreshold);
    return t;
  };
}

GeneratorFactory GanFactory(GanFactoryOptions options) {
  return [options](const Table& real_train, std::uint64_t seed) {
    GanConfig gc = options.gan;
    gc.seed = DeriveSeed(seed, "gan");
    Table fit_on = real_train;
    if (options.augment_rows > real_train.num_rows()) {
      fit_on = AugmentRandom(real_train, options.augment_rows, DeriveSeed(seed, "augment"));
    }
    auto gan = std::make_shared<const GanModel>(FitGan(fit_on, gc));
    std::shared_ptr<const GbdtModel> target;
    if (options.label_with_target_model) {
      GbdtConfig tc = options.target_model;
      tc.seed = DeriveSeed(seed, "target-model");
      target = std::make_shared<const GbdtModel>(FitGbdt(real_train, tc));
    }
    return GanSource(gan, target, options.filter);
  };
}

SyntheticSource TableSource(Table table) {
  auto shared = std::make_shared<const Table>(std::move(table));
  return [shared](std::size_t rows, std::uint64_t seed) {
    Rng rng(DeriveSeed(seed, "table-source"));
    const std::size_t n = shared->num_rows();
    if (n == 0) throw Error("synthetic source table is empty");
    std::vector<std::size_t> pick;
    if (rows <= n) {
      pick = SampleWithoutReplacement(n, rows, rng);
      std::sort(pick.begin(), pick.end());
    } else {
      for (std::size_t i = 0; i < rows; ++i) pick.push_back(rng.Below(n));
    }
    return shared->SelectRows(pick);
  };
}

GeneratorFactory BootstrapFactory() {
  return [](const Table& real_train, std::uint64_t) {
    auto shared = std::make_shared<const Table>(real_train);
    return SyntheticSource([shared](std::size_t rows, std::uint64_t seed) {
      Rng rng(DeriveSeed(seed, "bootstrap"));
      std::vector<std::size_t> pick(rows);
      for (auto& p : pick) p = rng.Below(shared->num_rows());
      return shared->SelectRows(pick);
    });
  };
}

void ParallelFor(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  // The lowest failing index wins, whatever the scheduling.
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ConditionResult AucDistribution(const std::string& name, const Table& train, const Table& test,
                                const Evaluator& evaluator, const ProtocolOptions& options,
                                std::string_view label) {
  if (options.iterations < 1) throw Error("protocol: at least one iteration required");
  if (!BothClasses(train)) throw Error(name + ": training rows hold a single target class");
  if (!BothClasses(test)) throw Error(name + ": test rows hold a single target class");
  ConditionResult result;
  result.name = name;
  const auto count = static_cast<std::size_t>(options.iterations);
  result.aucs.assign(count, 0.0);
  ParallelFor(count, options.workers, [&](std::size_t i) {
    const auto iu = static_cast<std::uint64_t>(i);
    if (i + 1 == count) {
      result.aucs[i] = evaluator(train, test, DeriveSeed(options.seed, label, {iu, 2}));
      return;
    }
    const Table tr = ClassSafeSubsample(train, options.subsample,
                                        DeriveSeed(options.seed, label, {iu, 0}),
                                        options.max_resamples, name);
    const Table te = ClassSafeSubsample(test, options.subsample,
                                        DeriveSeed(options.seed, label, {iu, 1}),
                                        options.max_resamples, name);
    result.aucs[i] = evaluator(tr, te, DeriveSeed(options.seed, label, {iu, 2}));
  });
  result.summary = Summarize(result.aucs);
  return result;
}

ExperimentReport RunOos(const Table& train, const Table& test,
                        const std::optional<Table>& synthetic, const Evaluator& evaluator,
                        const ProtocolOptions& options) {
  ExperimentReport report;
  report.protocol = "oos";
  report.seed = options.seed;
  if (synthetic) {
    report.conditions.push_back(
        AucDistribution("synthetic", *synthetic, test, evaluator, options, "oos"));
  } else {
    report.conditions.push_back(
        AucDistribution("baseline", train, test, evaluator, options, "oos"));
  }
  report.provenance["train_rows"] = train.num_rows();
  report.provenance["test_rows"] = test.num_rows();
  if (synthetic) report.provenance["synthetic_rows"] = synthetic->num_rows();
  return report;
}

std::vector<MixRatio> DefaultMixRatios() {
  return {{"100% synthetic", 0.0, true}, {"1:1", 1.0, false},     {"0.1:1", 0.1, false},
          {"0.01:1", 0.01, false},       {"0.001:1", 0.001, false}, {"100% real", 0.0, false}};
}

ExperimentReport RunOot(const Table& table, const GeneratorFactory& factory,
                        const Evaluator& evaluator, const OotOptions& oot,
                        const ProtocolOptions& options) {
  ExperimentReport report;
  report.protocol = "oot";
  report.seed = options.seed;
  nlohmann::json splits = nlohmann::json::array();
  for (std::size_t fi = 0; fi < oot.train_fractions.size(); ++fi) {
    const double fraction = oot.train_fractions[fi];
    const TrainTest split = SplitOutOfTime(table, fraction);
    const auto fu = static_cast<std::uint64_t>(fi);
    bool needs_pool = false;
    for (const MixRatio& r : oot.ratios) needs_pool = needs_pool || r.pure_synthetic || r.ratio > 0.0;
    std::optional<Table> pool;
    if (needs_pool) {
      const SyntheticSource source =
          factory(split.train, DeriveSeed(options.seed, "oot-generator", {fu}));
      pool = source(oot.pool_rows, DeriveSeed(options.seed, "oot-pool", {fu}));
    }
    const std::string prefix = FormatNumber(fraction * 100.0) + "% / ";
    for (std::size_t ri = 0; ri < oot.ratios.size(); ++ri) {
      const MixRatio& ratio = oot.ratios[ri];
      Table training;
      if (ratio.pure_synthetic) {
        training = *pool;
      } else if (ratio.ratio > 0.0) {
        const std::size_t want = std::min(
            pool->num_rows(),
            static_cast<std::size_t>(std::llround(ratio.ratio * static_cast<double>(split.train.num_rows()))));
        Rng rng(DeriveSeed(options.seed, "oot-mix", {fu, static_cast<std::uint64_t>(ri)}));
        std::vector<std::size_t> pick = SampleWithoutReplacement(pool->num_rows(), want, rng);
        std::sort(pick.begin(), pick.end());
        training = Table::Concat(split.train, pool->SelectRows(pick));
      } else {
        training = split.train;
      }
      report.conditions.push_back(AucDistribution(prefix + ratio.name, training, split.test,
                                                  evaluator, options,
                                                  "oot-" + std::to_string(fi)));
    }
    splits.push_back({{"train_fraction", fraction},
                      {"train_rows", split.train.num_rows()},
                      {"test_rows", split.test.num_rows()}});
  }
  report.provenance["splits"] = splits;
  return report;
}

ExperimentReport RunOutlierSweep(const Table& table, const GeneratorFactory& factory,
                                 const OutlierSpec& spec_template, const Evaluator& evaluator,
                                 const SweepOptions& sweep, const ProtocolOptions& options) {
  if (sweep.datasets < 1) throw Error("sweep: at least one dataset per level required");
  if (sweep.levels.empty()) throw Error("sweep: empty level grid");
  const TrainTest split = sweep.cutoff ? SplitAtTime(table, *sweep.cutoff)
                                       : SplitOutOfTime(table, sweep.train_fraction);
  if (split.train.num_rows() == 0 || split.test.num_rows() == 0) {
    throw Error("sweep: the time split leaves an empty side");
  }
  const SyntheticSource source = factory(split.train, DeriveSeed(options.seed, "sweep-generator"));
  const auto datasets = static_cast<std::size_t>(sweep.datasets);
  std::vector<Table> data(datasets);
  std::vector<Table> tests(datasets);
  ParallelFor(datasets, options.workers, [&](std::size_t i) {
    const auto iu = static_cast<std::uint64_t>(i);
    data[i] = source(sweep.rows_per_dataset, DeriveSeed(options.seed, "sweep-dataset", {iu}));
    tests[i] = ClassSafeSubsample(split.test, options.subsample,
                                  DeriveSeed(options.seed, "sweep-test", {iu}),
                                  options.max_resamples, "sweep");
  });

  ExperimentReport report;
  report.protocol = "sweep";
  report.seed = options.seed;
  for (std::size_t li = 0; li < sweep.levels.size(); ++li) {
    OutlierSpec spec = spec_template;
    spec.percent = sweep.levels[li];
    std::vector<Table> injected(datasets);
    std::vector<double> aucs(datasets + 1, 0.0);
    ParallelFor(datasets, options.workers, [&](std::size_t i) {
      const auto iu = static_cast<std::uint64_t>(i);
      OutlierSpec s = spec;
      s.seed = DeriveSeed(options.seed, "sweep-inject", {iu});
      injected[i] = Inject(data[i], s).table;
      if (!BothClasses(injected[i])) {
        throw Error("sweep: synthetic dataset " + std::to_string(i) + " holds a single class");
      }
      aucs[i] = evaluator(injected[i], tests[i], DeriveSeed(options.seed, "sweep-eval", {iu}));
    });
    aucs[datasets] = evaluator(Table::Concat(injected), split.test,
                               DeriveSeed(options.seed, "sweep-eval", {datasets}));
    SweepRow row;
    row.percent = spec.percent;
    row.result.name = FormatNumber(spec.percent) + "%";
    row.result.aucs = std::move(aucs);
    row.result.summary = Summarize(row.result.aucs);
    report.sweep.push_back(std::move(row));
  }
  const auto base = std::find_if(report.sweep.begin(), report.sweep.end(),
                                 [](const SweepRow& r) { return r.percent == 0.0; });
  if (base != report.sweep.end()) {
    for (SweepRow& row : report.sweep) {
      row.delta = row.result.summary.median - base->result.summary.median;
      row.wilcoxon = Wilcoxon(row.result.aucs, base->result.aucs);
    }
  }
  report.provenance["train_rows"] = split.train.num_rows();
  report.provenance["test_rows"] = split.test.num_rows();
  report.provenance["datasets"] = sweep.datasets;
  report.provenance["rows_per_dataset"] = sweep.rows_per_dataset;
  report.provenance["outliers"] = OutlierSpecToJson(spec_template);
  return report;
}

nlohmann::json ReportToJson(const ExperimentReport& report) {
  nlohmann::json conditions = nlohmann::json::array();
  for (const ConditionResult& c : report.conditions) conditions.push_back(ConditionToJson(c));
  nlohmann::json sweep = nlohmann::json::array();
  for (const SweepRow& r : report.sweep) {
    nlohmann::json row = ConditionToJson(r.result);
    row["percent"] = r.percent;
    row["delta"] = r.delta;
    row["statistic"] = r.wilcoxon.statistic;
    row["p_value"] = r.wilcoxon.p_value;
    row["significant"] = r.wilcoxon.significant;
    row["pairs"] = r.wilcoxon.n;
    sweep.push_back(std::move(row));
  }
  return {{"protocol", report.protocol},
          {"seed", report.seed},
          {"conditions", conditions},
          {"sweep", sweep},
          {"provenance", report.provenance}};
}

std::string RenderReport(const ExperimentReport& report) {
  std::ostringstream out;
  out << "protocol: " << report.protocol << "\n";
  out << "seed: " << report.seed << "\n\n";
  if (!report.conditions.empty()) {
    std::vector<std::vector<std::string>> rows = {
        {"condition", "median", "(min:max)", "IQR", "runs"}};
    for (const ConditionResult& c : report.conditions) {
      rows.push_back({c.name, Fixed(c.summary.median, 4),
                      "(" + Fixed(c.summary.min, 4) + ":" + Fixed(c.summary.max, 4) + ")",
                      Fixed(c.summary.iqr, 4), std::to_string(c.aucs.size())});
    }
    out << RenderGrid(rows);
  }
  if (!report.sweep.empty()) {
    std::vector<std::vector<std::string>> rows = {
        {"outliers", "median", "(min:max)", "IQR", "dAUC", "W", "p-value", "significant"}};
    for (const SweepRow& r : report.sweep) {
      const Summary& s = r.result.summary;
      rows.push_back({r.result.name, Fixed(s.median, 4),
                      "(" + Fixed(s.min, 4) + ":" + Fixed(s.max, 4) + ")", Fixed(s.iqr, 4),
                      Signed(r.delta, 4), Fixed(r.wilcoxon.statistic, 1),
                      Fixed(r.wilcoxon.p_value, 4), r.wilcoxon.significant ? "yes" : "no"});
    }
    out << RenderGrid(rows);
  }
  return out.str();
}

}  // namespace zgen
