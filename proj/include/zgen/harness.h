#ifndef ZGEN_HARNESS_H_
#define ZGEN_HARNESS_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zgen/covgen.h"
#include "zgen/gan.h"
#include "zgen/gbdt.h"
#include "zgen/stats.h"
#include "zgen/table.h"

namespace zgen {

// Fits a classifier on `train` and returns its AUC on `test`. Must be pure
// given its arguments; protocols may call it from several threads.
using Evaluator =
    std::function<double(const Table& train, const Table& test, std::uint64_t seed)>;

Evaluator GbdtEvaluator(GbdtConfig config);

// Produces `rows` labeled synthetic rows. Pure given (rows, seed).
using SyntheticSource = std::function<Table(std::size_t rows, std::uint64_t seed)>;

// Builds a source from real training rows.
using GeneratorFactory =
    std::function<SyntheticSource(const Table& real_train, std::uint64_t seed)>;

// GAN sampling followed by Target Model labeling (when a model is given).
SyntheticSource GanSource(std::shared_ptr<const GanModel> gan,
                          std::shared_ptr<const GbdtModel> target_model, bool filter);

struct GanFactoryOptions {
  GanConfig gan;
  GbdtConfig target_model;
  bool label_with_target_model = true;
  // Real rows are randomly augmented to this count before GAN training
  // (0 disables augmentation).
  std::size_t augment_rows = 0;
  bool filter = true;
};

GeneratorFactory GanFactory(GanFactoryOptions options);

// Rows drawn from a fixed table (an imported synthetic CSV): without
// replacement while possible, otherwise with replacement.
SyntheticSource TableSource(Table table);

// Uniform resampling of the real training rows; a stand-in generator.
GeneratorFactory BootstrapFactory();

// Runs fn(0) .. fn(count - 1) on up to `workers` threads.
void ParallelFor(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

struct ProtocolOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  int iterations = 51;  // the last one uses the full sets
  double subsample = 0.8;
  int max_resamples = 100;
};

struct ConditionResult {
  std::string name;
  std::vector<double> aucs;
  Summary summary;
};

struct SweepRow {
  double percent = 0.0;
  ConditionResult result;
  double delta = 0.0;  // median AUC change against the 0% level
  WilcoxonResult wilcoxon;
};

struct ExperimentReport {
  std::string protocol;
  std::uint64_t seed = 0;
  std::vector<ConditionResult> conditions;
  std::vector<SweepRow> sweep;
  nlohmann::json provenance = nlohmann::json::object();
};

// AUC distribution over `iterations` runs: fresh subsamples of `train` and
// `test` per run, the full sets on the last one. Subsamples that lose a
// class are redrawn up to max_resamples times.
ConditionResult AucDistribution(const std::string& name, const Table& train,
                                const Table& test, const Evaluator& evaluator,
                                const ProtocolOptions& options, std::string_view label);

// Baseline when `synthetic` is absent; otherwise the classifier trains on
// the synthetic rows and is scored on the real test rows.
ExperimentReport RunOos(const Table& train, const Table& test,
                        const std::optional<Table>& synthetic, const Evaluator& evaluator,
                        const ProtocolOptions& options);

struct MixRatio {
  std::string name;
  double ratio = 0.0;           // synthetic rows per real training row
  bool pure_synthetic = false;  // no real rows at all
};

std::vector<MixRatio> DefaultMixRatios();

struct OotOptions {
  std::vector<double> train_fractions = {0.5, 0.8};
  std::vector<MixRatio> ratios = DefaultMixRatios();
  std::size_t pool_rows = 4000;
};

ExperimentReport RunOot(const Table& table, const GeneratorFactory& factory,
                        const Evaluator& evaluator, const OotOptions& oot,
                        const ProtocolOptions& options);

struct SweepOptions {
  std::vector<double> levels = {100, 50, 10, 7.7, 7.4, 7.1, 7, 6.9, 6.6, 6.3, 6, 5, 3, 1, 0};
  int datasets = 80;
  std::size_t rows_per_dataset = 4000;
  // Chronological split: rows before `cutoff` train; when absent,
  // `train_fraction` of the time-sorted rows train.
  std::optional<double> cutoff;
  double train_fraction = 0.8;
};

// For each level: `datasets` synthetic datasets (shared across levels),
// outliers injected at the level, one AUC each on a fresh test subsample
// (shared across levels), plus one AUC of a model fitted on all datasets
// together and scored on the full test set. Levels are compared with the
// 0% level by a paired Wilcoxon test.
ExperimentReport RunOutlierSweep(const Table& table, const GeneratorFactory& factory,
                                 const OutlierSpec& spec_template, const Evaluator& evaluator,
                                 const SweepOptions& sweep, const ProtocolOptions& options);

nlohmann::json ReportToJson(const ExperimentReport& report);
// Aligned plain-text tables.
std::string RenderReport(const ExperimentReport& report);

}  // namespace zgen

#endif  // ZGEN_HARNESS_H_
