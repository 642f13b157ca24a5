#ifndef ZGEN_GAN_H_
#define ZGEN_GAN_H_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "zgen/nnet.h"
#include "zgen/preprocess.h"
#include "zgen/table.h"

namespace zgen {

struct GanConfig {
  int noise_dim = 64;
  int epochs = 100;
  int batch_size = 256;
  int hidden_width = 128;
  int hidden_layers = 2;
  double leaky_slope = 0.2;
  double discriminator_dropout = 0.3;
  double generator_lr = 2e-4;
  double discriminator_lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double gumbel_tau = 0.5;
  double label_smoothing = 0.9;
  // Rows the discriminator judges jointly; batch_size must be a multiple.
  int pac = 1;
  // Sampling uses an exponential moving average of the generator weights
  // (0 samples from the final weights).
  double ema_decay = 0.999;
  // Similarity filter quantum, in decimal digits of the encoded space.
  int precision = 3;
  // Filtered generation gives up after budget_factor * n draws.
  int budget_factor = 50;
  std::uint64_t seed = 0;

  bool operator==(const GanConfig&) const = default;
};

void ValidateGanConfig(const GanConfig& config);
nlohmann::json GanConfigToJson(const GanConfig& config);
GanConfig GanConfigFromJson(const nlohmann::json& json, GanConfig base = {});

// Position of one schema column in the generator output. Numeric and
// datetime columns take one slot; categorical columns take `width` slots,
// one per code (MISSING first). `allowed` marks codes seen in training.
// A numeric slot holds asinh((z - shift) / scale), with shift and scale taken
// over observed training values; missing cells sit at `missing_slot`, two
// units below the smallest observed slot value.
struct OutputBlock {
  bool categorical = false;
  int offset = 0;
  int width = 1;
  std::vector<std::uint8_t> allowed;
  double shift = 0.0;
  double scale = 1.0;
  double missing_slot = -3.0;
};

struct GanLayout {
  std::vector<OutputBlock> blocks;
  int width = 0;
};

GanLayout MakeLayout(const PreprocessPlan& plan, const Table& train);

struct EpochLoss {
  double discriminator = 0.0;
  double generator = 0.0;
};

struct GanModel {
  GanConfig config;
  PreprocessPlan plan;
  GanLayout layout;
  nnet::DenseNet generator;
  nnet::DenseNet discriminator;
  std::vector<std::uint64_t> real_hashes;  // sorted, unique
  std::vector<EpochLoss> loss_trace;

  bool Contains(std::uint64_t hash) const;
};

// Hash of one encoded row (numeric cells z-scored, categorical cells as
// codes): numeric cells are rounded to `precision` decimals, fields joined
// in schema order, then hashed with 64-bit FNV-1a.
std::uint64_t RowHash(const PreprocessPlan& plan, const double* encoded_row,
                      Eigen::Index stride, int precision);
std::vector<std::uint64_t> TableHashes(const Table& table,
                                       const PreprocessPlan& plan, int precision);

// True when the row survives: its hash is not among `real_hashes`.
bool SimilarityFilter(std::span<const std::uint64_t> real_hashes,
                      std::uint64_t candidate_hash);

GanModel FitGan(const Table& train, const GanConfig& config);

struct GenerateResult {
  Table table;
  std::size_t draws = 0;
  std::size_t rejected = 0;
};

// Draws n rows. With `filter`, rows whose hash matches a training row are
// redrawn; exceeding budget_factor * n draws throws.
GenerateResult Generate(const GanModel& model, std::size_t n, std::uint64_t seed,
                        bool filter);

// Fraction of held-out real rows and of fresh fake rows the discriminator
// classifies correctly (logit > 0 means real).
double DiscriminatorAccuracy(const GanModel& model, const Table& real,
                             std::uint64_t seed);

void SaveGan(std::ostream& out, const GanModel& model);
GanModel LoadGan(std::istream& in);
void SaveGan(const std::filesystem::path& path, const GanModel& model);
GanModel LoadGan(const std::filesystem::path& path);

}  // namespace zgen

#endif  // ZGEN_GAN_H_
