#ifndef ZGEN_CONFIG_H_
#define ZGEN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zgen/corr.h"
#include "zgen/covgen.h"
#include "zgen/cvae.h"
#include "zgen/gan.h"
#include "zgen/gbdt.h"
#include "zgen/harness.h"

namespace zgen {

enum class SplitMode { kNone, kOutOfSample, kOutOfTime, kCutoff };
enum class GeneratorKind { kNone, kGan, kBootstrap, kCsv };

struct SplitConfig {
  SplitMode mode = SplitMode::kNone;
  double test_fraction = 0.33;
  double train_fraction = 0.8;
  std::optional<double> cutoff;  // epoch seconds
};

struct RunConfig {
  std::filesystem::path config_path;  // where it was read from
  std::uint64_t seed = 42;

  std::filesystem::path schema;
  std::filesystem::path train;
  std::optional<std::filesystem::path> test;
  SplitConfig split;
  std::size_t augment_rows = 0;  // 0 keeps the real train rows as they are

  GanConfig gan;
  GbdtConfig gbdt;          // evaluation classifier
  GbdtConfig target_model;  // labels synthetic rows
  bool fit_target_model = true;
  bool fit_cvae = false;
  CvaeConfig cvae;
  std::optional<OutlierSpec> outliers;

  std::size_t generate_rows = 4000;
  bool filter = true;

  std::string protocol = "oos";  // oos | oot | sweep | correlate
  int iterations = 51;
  double subsample = 0.8;

  GeneratorKind oos_generator = GeneratorKind::kNone;
  std::optional<std::filesystem::path> synthetic_csv;
  GeneratorKind generator = GeneratorKind::kGan;  // oot and sweep
  OotOptions oot;
  SweepOptions sweep;

  std::vector<std::filesystem::path> correlate_synthetic;
  HeatmapScale heatmap_scale;

  std::filesystem::path out_dir = "out";
  nlohmann::json raw;  // canonical echo for manifests
};

// Reads and validates a config file. Relative paths resolve against the
// file's directory. ZGEN_SEED, when set, replaces the master seed. Every
// problem raises ConfigError.
RunConfig LoadRunConfig(const std::filesystem::path& path);
RunConfig ParseRunConfig(const nlohmann::json& json, const std::filesystem::path& base_dir);
void ApplySeedOverride(RunConfig& config, const char* env_value);

// Checks that referenced inputs exist.
void ValidateRunConfig(const RunConfig& config);

// Canonical JSON of the effective configuration (seed included, no worker
// count, no timestamps).
nlohmann::json EffectiveConfig(const RunConfig& config);

}  // namespace zgen

#endif  // ZGEN_CONFIG_H_
