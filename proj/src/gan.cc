#include "zgen/gan.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "zgen/error.h"
#include "zgen/random.h"

namespace zgen {

namespace {

using nnet::Matrix;

constexpr char kMagic[4] = {'Z', 'G', 'A', 'N'};
constexpr std::uint32_t kVersion = 2;
constexpr double kMaskedLogit = -std::numeric_limits<double>::infinity();

nnet::DenseNetSpec GeneratorSpec(const GanConfig& config, int output_width) {
  nnet::DenseNetSpec spec;
  spec.input_width = config.noise_dim;
  spec.seed = DeriveSeed(config.seed, "gan-generator-init");
  for (int i = 0; i < config.hidden_layers; ++i) {
    spec.layers.push_back({config.hidden_width, nnet::Activation::kLeakyReLU,
                           config.leaky_slope, 0.0});
  }
  spec.layers.push_back({output_width, nnet::Activation::kIdentity, 0.0, 0.0});
  return spec;
}

nnet::DenseNetSpec DiscriminatorSpec(const GanConfig& config, int input_width) {
  nnet::DenseNetSpec spec;
  spec.input_width = input_width;
  spec.seed = DeriveSeed(config.seed, "gan-discriminator-init");
  for (int i = 0; i < config.hidden_layers; ++i) {
    spec.layers.push_back({config.hidden_width, nnet::Activation::kLeakyReLU,
                           config.leaky_slope, config.discriminator_dropout});
  }
  spec.layers.push_back({1, nnet::Activation::kIdentity, 0.0, 0.0});
  return spec;
}

// Groups of `pac` consecutive rows become one discriminator input row.
Matrix Pack(const Matrix& x, int pac) {
  if (pac == 1) return x;
  const Eigen::Index w = x.cols();
  Matrix out(x.rows() / pac, w * pac);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (int k = 0; k < pac; ++k) out.block(i, k * w, 1, w) = x.row(i * pac + k);
  }
  return out;
}

Matrix Unpack(const Matrix& g, int pac) {
  if (pac == 1) return g;
  const Eigen::Index w = g.cols() / pac;
  Matrix out(g.rows() * pac, w);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (int k = 0; k < pac; ++k) out.row(i * pac + k) = g.block(i, k * w, 1, w);
  }
  return out;
}

Matrix Noise(Eigen::Index rows, int dim, Rng& rng) {
  Matrix z(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) z(i, j) = rng.Normal();
  }
  return z;
}

// Generator-space view of a table: one-hot categorical blocks, and numeric
// slots re-standardized over observed values (asinh-compressed tails) with
// missing cells parked below the observed range.
Matrix Expand(const Table& table, const PreprocessPlan& plan, const GanLayout& layout) {
  const Eigen::MatrixXd encoded = Encode(table, plan).matrix;
  Matrix out = Matrix::Zero(encoded.rows(), layout.width);
  for (std::size_t c = 0; c < layout.blocks.size(); ++c) {
    const OutputBlock& b = layout.blocks[c];
    const auto ci = static_cast<Eigen::Index>(c);
    for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
      if (b.categorical) {
        out(r, b.offset + static_cast<Eigen::Index>(encoded(r, ci))) = 1.0;
      } else if (table.is_missing(static_cast<std::size_t>(r), c)) {
        out(r, b.offset) = b.missing_slot;
      } else {
        out(r, b.offset) = std::asinh((encoded(r, ci) - b.shift) / b.scale);
      }
    }
  }
  return out;
}

// Gumbel-softmax over each categorical block; numeric slots pass through.
Matrix GumbelSoftmax(const Matrix& logits, const GanLayout& layout, double tau,
                     Rng& rng) {
  Matrix out = logits;
  std::vector<double> buf;
  for (const OutputBlock& b : layout.blocks) {
    if (!b.categorical) continue;
    buf.resize(static_cast<std::size_t>(b.width));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      double top = kMaskedLogit;
      for (int k = 0; k < b.width; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        buf[ku] = b.allowed[ku] ? (logits(r, b.offset + k) + rng.Gumbel()) / tau
                                : kMaskedLogit;
        top = std::max(top, buf[ku]);
      }
      double sum = 0.0;
      for (int k = 0; k < b.width; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        buf[ku] = b.allowed[ku] ? std::exp(buf[ku] - top) : 0.0;
        sum += buf[ku];
      }
      for (int k = 0; k < b.width; ++k) {
        out(r, b.offset + k) = buf[static_cast<std::size_t>(k)] / sum;
      }
    }
  }
  return out;
}

// Gradient through GumbelSoftmax given its output `y`.
Matrix GumbelSoftmaxBackward(const Matrix& y, const Matrix& grad,
                             const GanLayout& layout, double tau) {
  Matrix out = grad;
  for (const OutputBlock& b : layout.blocks) {
    if (!b.categorical) continue;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int k = 0; k < b.width; ++k) dot += grad(r, b.offset + k) * y(r, b.offset + k);
      for (int k = 0; k < b.width; ++k) {
        out(r, b.offset + k) = y(r, b.offset + k) * (grad(r, b.offset + k) - dot) / tau;
      }
    }
  }
  return out;
}

void CheckFinite(double loss, int epoch, const char* which) {
  if (!std::isfinite(loss)) {
    throw Error(std::string("gan: non-finite ") + which + " loss at epoch " +
                std::to_string(epoch));
  }
}

double MeanBce(const Matrix& logits, double target) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double s = logits.data()[i];
    // target * softplus(-s) + (1 - target) * softplus(s)
    const double sp_pos = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    const double sp_neg = sp_pos - s;
    sum += target * sp_neg + (1.0 - target) * sp_pos;
  }
  return sum / static_cast<double>(logits.size());
}

void AddInto(nnet::Gradients& into, const nnet::Gradients& more) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += more.weights[l];
    into.biases[l] += more.biases[l];
  }
}

struct Sampled {
  Eigen::MatrixXd encoded;  // rows x schema columns, codes for categoricals
  Table table;
};

// Raw generator draw turned into a table: Gumbel-max for categorical blocks,
// missing-snap and range clipping for numeric columns.
Sampled SampleRows(const GanModel& model, Eigen::Index rows, Rng& rng) {
  const Matrix out = model.generator.Predict(Noise(rows, model.config.noise_dim, rng));
  const PreprocessPlan& plan = model.plan;
  const std::size_t nc = plan.columns.size();
  std::vector<Column> columns(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const ColumnPlan& cp = plan.columns[c];
    const OutputBlock& b = model.layout.blocks[c];
    Column& col = columns[c];
    col.missing.assign(static_cast<std::size_t>(rows), 0);
    if (b.categorical) {
      col.labels.resize(static_cast<std::size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        int best = -1;
        double best_value = kMaskedLogit;
        for (int k = 0; k < b.width; ++k) {
          const double g = rng.Gumbel();
          if (!b.allowed[static_cast<std::size_t>(k)]) continue;
          const double v = out(r, b.offset + k) + g;
          if (best < 0 || v > best_value) {
            best = k;
            best_value = v;
          }
        }
        if (best <= 0) {
          col.missing[static_cast<std::size_t>(r)] = 1;
        } else {
          col.labels[static_cast<std::size_t>(r)] = cp.levels[static_cast<std::size_t>(best - 1)];
        }
      }
      continue;
    }
    col.values.resize(static_cast<std::size_t>(rows));
    const double cut = b.missing_slot + 1.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto ru = static_cast<std::size_t>(r);
      const double slot = out(r, b.offset);
      double v = (std::sinh(slot) * b.scale + b.shift) * cp.std + cp.mean;
      if (!std::isfinite(v)) v = cp.mean;
      if (cp.has_missing && slot < cut) {
        col.missing[ru] = 1;
        col.values[ru] = 0.0;
      } else {
        col.values[ru] = std::clamp(v, cp.observed_min, cp.observed_max);
      }
    }
  }
  Sampled s;
  s.table = Table(plan.schema, std::move(columns));
  s.encoded = Encode(s.table, plan).matrix;
  return s;
}

template <typename T>
void WritePod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("gan checkpoint: truncated");
  return value;
}

int GetInt(const nlohmann::json& json, const char* key, int fallback) {
  if (!json.contains(key)) return fallback;
  if (!json.at(key).is_number_integer()) {
    throw ConfigError(std::string("gan.") + key + " must be an integer");
  }
  return json.at(key).get<int>();
}

double GetDouble(const nlohmann::json& json, const char* key, double fallback) {
  if (!json.contains(key)) return fallback;
  if (!json.at(key).is_number()) {
    throw ConfigError(std::string("gan.") + key + " must be a number");
  }
  return json.at(key).get<double>();
}

}  // namespace

void ValidateGanConfig(const GanConfig& c) {
  if (c.noise_dim < 1 || c.epochs < 1 || c.batch_size < 1 || c.hidden_width < 1 ||
      c.hidden_layers < 1) {
    throw ConfigError("gan: sizes and epochs must be positive");
  }
  if (!(c.generator_lr > 0.0) || !(c.discriminator_lr > 0.0)) {
    throw ConfigError("gan: learning rates must be positive");
  }
  if (!(c.gumbel_tau > 0.0)) throw ConfigError("gan: gumbel temperature must be positive");
  if (!(c.label_smoothing > 0.0 && c.label_smoothing <= 1.0)) {
    throw ConfigError("gan: label smoothing must lie in (0, 1]");
  }
  if (!(c.discriminator_dropout >= 0.0 && c.discriminator_dropout < 1.0)) {
    throw ConfigError("gan: dropout must lie in [0, 1)");
  }
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 &&
        c.adam_beta2 < 1.0)) {
    throw ConfigError("gan: adam betas must lie in [0, 1)");
  }
  if (c.pac < 1 || c.batch_size % c.pac != 0) {
    throw ConfigError("gan: batch size must be a positive multiple of pac");
  }
  if (!(c.ema_decay >= 0.0 && c.ema_decay < 1.0)) {
    throw ConfigError("gan: ema decay must lie in [0, 1)");
  }
  if (c.precision < 0 || c.precision > 12) throw ConfigError("gan: precision must lie in [0, 12]");
  if (c.budget_factor < 1) throw ConfigError("gan: budget factor must be positive");
}

nlohmann::json GanConfigToJson(const GanConfig& c) {
  return {{"noise_dim", c.noise_dim},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"leaky_slope", c.leaky_slope},
          {"discriminator_dropout", c.discriminator_dropout},
          {"generator_lr", c.generator_lr},
          {"discriminator_lr", c.discriminator_lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"gumbel_tau", c.gumbel_tau},
          {"label_smoothing", c.label_smoothing},
          {"pac", c.pac},
          {"ema_decay", c.ema_decay},
          {"precision", c.precision},
          {"budget_factor", c.budget_factor},
          {"seed", c.seed}};
}

GanConfig GanConfigFromJson(const nlohmann::json& json, GanConfig c) {
  if (!json.is_object()) throw ConfigError("gan config must be an object");
  c.noise_dim = GetInt(json, "noise_dim", c.noise_dim);
  c.epochs = GetInt(json, "epochs", c.epochs);
  c.batch_size = GetInt(json, "batch_size", c.batch_size);
  c.hidden_width = GetInt(json, "hidden_width", c.hidden_width);
  c.hidden_layers = GetInt(json, "hidden_layers", c.hidden_layers);
  c.leaky_slope = GetDouble(json, "leaky_slope", c.leaky_slope);
  c.discriminator_dropout = GetDouble(json, "discriminator_dropout", c.discriminator_dropout);
  c.generator_lr = GetDouble(json, "generator_lr", c.generator_lr);
  c.discriminator_lr = GetDouble(json, "discriminator_lr", c.discriminator_lr);
  c.adam_beta1 = GetDouble(json, "adam_beta1", c.adam_beta1);
  c.adam_beta2 = GetDouble(json, "adam_beta2", c.adam_beta2);
  c.gumbel_tau = GetDouble(json, "gumbel_tau", c.gumbel_tau);
  c.label_smoothing = GetDouble(json, "label_smoothing", c.label_smoothing);
  c.pac = GetInt(json, "pac", c.pac);
  c.ema_decay = GetDouble(json, "ema_decay", c.ema_decay);
  c.precision = GetInt(json, "precision", c.precision);
  c.budget_factor = GetInt(json, "budget_factor", c.budget_factor);
  if (json.contains("seed")) {
    if (!json.at("seed").is_number_unsigned()) throw ConfigError("gan.seed must be a non-negative integer");
    c.seed = json.at("seed").get<std::uint64_t>();
  }
  ValidateGanConfig(c);
  return c;
}

GanLayout MakeLayout(const PreprocessPlan& plan, const Table& train) {
  GanLayout layout;
  const Eigen::MatrixXd encoded = Encode(train, plan).matrix;
  for (std::size_t c = 0; c < plan.columns.size(); ++c) {
    const ColumnPlan& cp = plan.columns[c];
    OutputBlock b;
    b.offset = layout.width;
    if (cp.kind == ColumnKind::kCategorical) {
      b.categorical = true;
      b.width = static_cast<int>(cp.cardinality());
      b.allowed.assign(cp.cardinality(), 1);
      bool any_missing = false;
      for (std::uint8_t m : train.column(c).missing) any_missing = any_missing || m != 0;
      b.allowed[0] = any_missing ? 1 : 0;
      if (cp.levels.empty()) b.allowed[0] = 1;
    }
    if (!b.categorical) {
      double sum = 0.0, sq = 0.0, lo = 0.0, count = 0.0;
      for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
        if (train.is_missing(static_cast<std::size_t>(r), c)) continue;
        const double z = encoded(r, static_cast<Eigen::Index>(c));
        lo = count == 0.0 ? z : std::min(lo, z);
        sum += z;
        sq += z * z;
        count += 1.0;
      }
      if (count > 0.0) {
        b.shift = sum / count;
        const double var = sq / count - b.shift * b.shift;
        b.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
        b.missing_slot = std::asinh((lo - b.shift) / b.scale) - 2.0;
      }
    }
    layout.width += b.width;
    layout.blocks.push_back(std::move(b));
  }
  return layout;
}

bool GanModel::Contains(std::uint64_t hash) const {
  return std::binary_search(real_hashes.begin(), real_hashes.end(), hash);
}

std::uint64_t RowHash(const PreprocessPlan& plan, const double* row, Eigen::Index stride,
                      int precision) {
  const double scale = std::pow(10.0, precision);
  std::string key;
  for (std::size_t c = 0; c < plan.columns.size(); ++c) {
    const double v = row[static_cast<Eigen::Index>(c) * stride];
    if (c > 0) key.push_back(',');
    if (plan.columns[c].kind == ColumnKind::kCategorical) {
      key += std::to_string(static_cast<long long>(v));
    } else {
      key += std::to_string(std::llround(v * scale));
    }
  }
  return Fnv1a64(key);
}

std::vector<std::uint64_t> TableHashes(const Table& table, const PreprocessPlan& plan,
                                       int precision) {
  const Eigen::MatrixXd m = Encode(table, plan).matrix;
  std::vector<std::uint64_t> hashes(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    hashes[static_cast<std::size_t>(r)] = RowHash(plan, &m(r, 0), m.rows(), precision);
  }
  return hashes;
}

bool SimilarityFilter(std::span<const std::uint64_t> real_hashes,
                      std::uint64_t candidate_hash) {
  return !std::binary_search(real_hashes.begin(), real_hashes.end(), candidate_hash);
}

GanModel FitGan(const Table& train, const GanConfig& config) {
  ValidateGanConfig(config);
  const auto n = static_cast<Eigen::Index>(train.num_rows());
  if (n < 2 * config.batch_size) {
    throw Error("gan: need at least " + std::to_string(2 * config.batch_size) +
                " training rows, got " + std::to_string(n));
  }
  GanModel model;
  model.config = config;
  model.plan = FitPreprocess(train);
  model.layout = MakeLayout(model.plan, train);
  model.generator = nnet::DenseNet(GeneratorSpec(config, model.layout.width));
  model.discriminator =
      nnet::DenseNet(DiscriminatorSpec(config, model.layout.width * config.pac));
  model.real_hashes = TableHashes(train, model.plan, config.precision);
  std::sort(model.real_hashes.begin(), model.real_hashes.end());
  model.real_hashes.erase(std::unique(model.real_hashes.begin(), model.real_hashes.end()),
                          model.real_hashes.end());

  const Matrix real = Expand(train, model.plan, model.layout);
  nnet::Adam g_opt(model.generator, {config.generator_lr, config.adam_beta1,
                                     config.adam_beta2, 1e-8});
  nnet::Adam d_opt(model.discriminator, {config.discriminator_lr, config.adam_beta1,
                                         config.adam_beta2, 1e-8});
  Rng rng(DeriveSeed(config.seed, "gan-train"));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const Eigen::Index batch = config.batch_size;
  const Eigen::Index packs = batch / config.pac;
  const Eigen::Index steps = n / batch;
  nnet::DenseNet average = model.generator;
  const double decay = config.ema_decay;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    double d_sum = 0.0;
    double g_sum = 0.0;
    for (Eigen::Index s = 0; s < steps; ++s) {
      Matrix real_batch(batch, model.layout.width);
      for (Eigen::Index i = 0; i < batch; ++i) {
        real_batch.row(i) = real.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(s * batch + i)]));
      }
      // Discriminator step.
      const Matrix fake = GumbelSoftmax(
          model.generator.Predict(Noise(batch, config.noise_dim, rng)), model.layout,
          config.gumbel_tau, rng);
      const nnet::ForwardCache d_real =
          model.discriminator.Forward(Pack(real_batch, config.pac), &rng);
      const nnet::ForwardCache d_fake = model.discriminator.Forward(Pack(fake, config.pac), &rng);
      const Matrix real_targets = Matrix::Constant(packs, 1, config.label_smoothing);
      const Matrix fake_targets = Matrix::Zero(packs, 1);
      const double d_loss = MeanBce(d_real.output, config.label_smoothing) +
                            MeanBce(d_fake.output, 0.0);
      CheckFinite(d_loss, epoch, "discriminator");
      nnet::Gradients d_grads = model.discriminator.Backward(
          d_real, nnet::BinaryCrossEntropyLogitGrad(d_real.output, real_targets));
      AddInto(d_grads, model.discriminator.Backward(
                           d_fake, nnet::BinaryCrossEntropyLogitGrad(d_fake.output, fake_targets)));
      d_opt.Step(model.discriminator, d_grads);

      // Generator step: non-saturating loss toward "real".
      const nnet::ForwardCache g_cache =
          model.generator.Forward(Noise(batch, config.noise_dim, rng));
      const Matrix soft = GumbelSoftmax(g_cache.output, model.layout, config.gumbel_tau, rng);
      const nnet::ForwardCache d_gen = model.discriminator.Forward(Pack(soft, config.pac), &rng);
      const double g_loss = MeanBce(d_gen.output, 1.0);
      CheckFinite(g_loss, epoch, "generator");
      const nnet::Gradients through = model.discriminator.Backward(
          d_gen, nnet::BinaryCrossEntropyLogitGrad(d_gen.output, Matrix::Ones(packs, 1)));
      const Matrix g_out = GumbelSoftmaxBackward(soft, Unpack(through.input, config.pac), model.layout,
                                                 config.gumbel_tau);
      g_opt.Step(model.generator, model.generator.Backward(g_cache, g_out));
      if (decay > 0.0) {
        const auto live = model.generator.ParameterBlocks();
        const auto avg = average.ParameterBlocks();
        for (std::size_t b = 0; b < live.size(); ++b) {
          for (std::size_t k = 0; k < live[b].size(); ++k) {
            avg[b][k] = decay * avg[b][k] + (1.0 - decay) * live[b][k];
          }
        }
        average.Touch();
      }
      d_sum += d_loss;
      g_sum += g_loss;
    }
    model.loss_trace.push_back({d_sum / static_cast<double>(steps),
                                g_sum / static_cast<double>(steps)});
  }
  if (decay > 0.0) model.generator = std::move(average);
  return model;
}

GenerateResult Generate(const GanModel& model, std::size_t n, std::uint64_t seed,
                        bool filter) {
  if (n == 0) throw Error("generate: n must be at least 1");
  Rng rng(DeriveSeed(seed, "gan-generate"));
  const std::size_t budget = n * static_cast<std::size_t>(model.config.budget_factor);
  const std::size_t chunk_rows = std::min<std::size_t>(std::max<std::size_t>(n, 64), 4096);
  std::vector<Table> parts;
  std::size_t kept = 0;
  GenerateResult result;
  while (kept < n) {
    if (filter && result.draws >= budget) {
      throw Error("generate: similarity filter exhausted the retry budget of " +
                  std::to_string(budget) + " draws with " + std::to_string(kept) +
                  " of " + std::to_string(n) + " rows surviving");
    }
    std::size_t want = std::min(chunk_rows, n - kept);
    if (filter) want = std::min(chunk_rows, budget - result.draws);
    Sampled s = SampleRows(model, static_cast<Eigen::Index>(want), rng);
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < want && kept + keep.size() < n; ++r) {
      ++result.draws;
      const std::uint64_t h = RowHash(model.plan, &s.encoded(static_cast<Eigen::Index>(r), 0),
                                      s.encoded.rows(), model.config.precision);
      if (filter && !SimilarityFilter(model.real_hashes, h)) {
        ++result.rejected;
        continue;
      }
      keep.push_back(r);
    }
    kept += keep.size();
    parts.push_back(s.table.SelectRows(keep));
  }
  result.table = Table::Concat(parts);
  return result;
}

double DiscriminatorAccuracy(const GanModel& model, const Table& real, std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, "gan-accuracy"));
  const Matrix real_x = Expand(real, model.plan, model.layout);
  const Matrix fake_x = GumbelSoftmax(
      model.generator.Predict(Noise(real_x.rows(), model.config.noise_dim, rng)),
      model.layout, model.config.gumbel_tau, rng);
  const int pac = model.config.pac;
  const Eigen::Index rows = real_x.rows() / pac * pac;
  if (rows == 0) throw Error("discriminator accuracy: fewer real rows than pac");
  const Matrix real_logits = model.discriminator.Predict(Pack(real_x.topRows(rows), pac));
  const Matrix fake_logits = model.discriminator.Predict(Pack(fake_x.topRows(rows), pac));
  const double correct = static_cast<double>((real_logits.array() > 0.0).count() +
                                             (fake_logits.array() <= 0.0).count());
  return correct / static_cast<double>(2 * real_logits.rows());
}

void SaveGan(std::ostream& out, const GanModel& model) {
  nlohmann::json meta;
  meta["config"] = GanConfigToJson(model.config);
  meta["plan"] = PlanToJson(model.plan);
  nlohmann::json blocks = nlohmann::json::array();
  for (const OutputBlock& b : model.layout.blocks) {
    blocks.push_back({{"categorical", b.categorical}, {"offset", b.offset},
                      {"width", b.width}, {"allowed", b.allowed}, {"shift", b.shift},
                      {"scale", b.scale}, {"missing_slot", b.missing_slot}});
  }
  meta["layout"] = {{"width", model.layout.width}, {"blocks", blocks}};
  nlohmann::json trace = nlohmann::json::array();
  for (const EpochLoss& e : model.loss_trace) trace.push_back({e.discriminator, e.generator});
  meta["loss_trace"] = trace;
  const std::string text = meta.dump();
  out.write(kMagic, sizeof(kMagic));
  WritePod(out, kVersion);
  WritePod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.generator.Save(out);
  model.discriminator.Save(out);
  WritePod(out, static_cast<std::uint64_t>(model.real_hashes.size()));
  for (std::uint64_t h : model.real_hashes) WritePod(out, h);
  if (!out) throw Error("gan checkpoint: write failed");
}

GanModel LoadGan(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("gan checkpoint: bad magic");
  }
  const auto version = ReadPod<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error("gan checkpoint: unsupported version " + std::to_string(version));
  }
  const auto size = ReadPod<std::uint64_t>(in);
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error("gan checkpoint: truncated metadata");
  GanModel model;
  try {
    const nlohmann::json meta = nlohmann::json::parse(text);
    model.config = GanConfigFromJson(meta.at("config"));
    model.plan = PlanFromJson(meta.at("plan"));
    model.layout.width = meta.at("layout").at("width").get<int>();
    for (const auto& b : meta.at("layout").at("blocks")) {
      OutputBlock block;
      block.categorical = b.at("categorical").get<bool>();
      block.offset = b.at("offset").get<int>();
      block.width = b.at("width").get<int>();
      block.allowed = b.at("allowed").get<std::vector<std::uint8_t>>();
      block.shift = b.at("shift").get<double>();
      block.scale = b.at("scale").get<double>();
      block.missing_slot = b.at("missing_slot").get<double>();
      model.layout.blocks.push_back(std::move(block));
    }
    for (const auto& e : meta.at("loss_trace")) {
      model.loss_trace.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gan checkpoint: malformed metadata: ") + e.what());
  }
  model.generator = nnet::DenseNet::Load(in);
  model.discriminator = nnet::DenseNet::Load(in);
  const auto count = ReadPod<std::uint64_t>(in);
  model.real_hashes.resize(count);
  for (auto& h : model.real_hashes) h = ReadPod<std::uint64_t>(in);
  if (model.layout.blocks.size() != model.plan.columns.size() ||
      model.generator.output_width() != model.layout.width ||
      model.discriminator.input_width() != model.layout.width * model.config.pac) {
    throw Error("gan checkpoint: inconsistent layout");
  }
  return model;
}

void SaveGan(const std::filesystem::path& path, const GanModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  SaveGan(out, model);
}

GanModel LoadGan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read model file " + path.string());
  return LoadGan(in);
}

}  // namespace zgen
