#include "zgen/cvae.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "zgen/error.h"
#include "zgen/random.h"

namespace zgen {

namespace {

using nnet::Matrix;

constexpr char kMagic[4] = {'Z', 'C', 'V', 'A'};
constexpr std::uint32_t kVersion = 1;

double SignedLog(double v) { return std::copysign(std::log1p(std::abs(v)), v); }

std::size_t PackedLength(std::size_t d) { return d * (d + 1) / 2; }

template <typename T>
void WritePod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("cvae checkpoint: truncated");
  return value;
}

std::vector<double> ToStd(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd FromStd(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

void ValidateCvaeConfig(const CvaeConfig& c) {
  if (c.latent_dim < 1) throw ConfigError("cvae: latent dim must be at least 1");
  if (c.matrices < 2) throw ConfigError("cvae: at least 2 bootstrap matrices required");
  if (c.epochs < 1 || c.batch_size < 1 || c.hidden_width < 1) {
    throw ConfigError("cvae: epochs, batch size and width must be positive");
  }
  if (!(c.beta >= 0.0)) throw ConfigError("cvae: beta must be non-negative");
  if (!(c.learning_rate > 0.0)) throw ConfigError("cvae: learning rate must be positive");
  if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0)) {
    throw ConfigError("cvae: sample fraction must lie in (0, 1]");
  }
}

nlohmann::json CvaeConfigToJson(const CvaeConfig& c) {
  return {{"latent_dim", c.latent_dim},     {"epochs", c.epochs},
          {"batch_size", c.batch_size},     {"hidden_width", c.hidden_width},
          {"beta", c.beta},                 {"learning_rate", c.learning_rate},
          {"matrices", c.matrices},         {"sample_fraction", c.sample_fraction},
          {"seed", c.seed}};
}

CvaeConfig CvaeConfigFromJson(const nlohmann::json& json, CvaeConfig c) {
  if (!json.is_object()) throw ConfigError("cvae config must be an object");
  try {
    if (json.contains("latent_dim")) c.latent_dim = json.at("latent_dim").get<int>();
    if (json.contains("epochs")) c.epochs = json.at("epochs").get<int>();
    if (json.contains("batch_size")) c.batch_size = json.at("batch_size").get<int>();
    if (json.contains("hidden_width")) c.hidden_width = json.at("hidden_width").get<int>();
    if (json.contains("beta")) c.beta = json.at("beta").get<double>();
    if (json.contains("learning_rate")) c.learning_rate = json.at("learning_rate").get<double>();
    if (json.contains("matrices")) c.matrices = json.at("matrices").get<int>();
    if (json.contains("sample_fraction")) {
      c.sample_fraction = json.at("sample_fraction").get<double>();
    }
    if (json.contains("seed")) c.seed = json.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cvae: ") + e.what());
  }
  ValidateCvaeConfig(c);
  return c;
}

std::vector<CovMatrix> BuildTrainingSet(const Eigen::MatrixXd& matrix,
                                        std::span<const std::size_t> columns,
                                        const std::vector<std::string>& names,
                                        const CvaeConfig& config) {
  ValidateCvaeConfig(config);
  const auto rows = static_cast<std::size_t>(matrix.rows());
  const auto take = static_cast<std::size_t>(
      std::llround(config.sample_fraction * static_cast<double>(rows)));
  if (take < columns.size() + 1 || take < 2) {
    throw Error("cvae: bootstrap subsamples of " + std::to_string(take) +
                " rows are too small for " + std::to_string(columns.size()) + " columns");
  }
  std::vector<std::size_t> all(columns.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  Eigen::MatrixXd selected(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    selected.col(static_cast<Eigen::Index>(j)) = matrix.col(static_cast<Eigen::Index>(columns[j]));
  }
  std::vector<CovMatrix> out;
  for (int m = 0; m < config.matrices; ++m) {
    Rng rng(DeriveSeed(config.seed, "cvae-bootstrap", {static_cast<std::uint64_t>(m)}));
    Eigen::MatrixXd sample(static_cast<Eigen::Index>(take), selected.cols());
    for (std::size_t i = 0; i < take; ++i) {
      sample.row(static_cast<Eigen::Index>(i)) =
          selected.row(static_cast<Eigen::Index>(rng.Below(rows)));
    }
    out.push_back(EstimateCov(sample, all, names));
  }
  return out;
}

Eigen::VectorXd CovToVec(const CovMatrix& cov) {
  ValidateCov(cov);
  const Eigen::MatrixXd l = Cholesky(cov.values);
  const auto d = static_cast<std::size_t>(l.rows());
  Eigen::VectorXd v(static_cast<Eigen::Index>(PackedLength(d)));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) v(k++) = i == j ? std::log(l(i, i)) : l(i, j);
  }
  return v;
}

CovMatrix VecToCov(const Eigen::VectorXd& vec, std::vector<std::string> columns) {
  const std::size_t d = columns.size();
  if (static_cast<std::size_t>(vec.size()) != PackedLength(d)) {
    throw Error("cvae: vector length " + std::to_string(vec.size()) + " does not fit dimension " +
                std::to_string(d));
  }
  const auto di = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(di, di);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < di; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = i == j ? std::exp(vec(k++)) : vec(k++);
  }
  Eigen::MatrixXd cov = l * l.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return CovMatrix{std::move(columns), std::move(cov)};
}

Eigen::VectorXd ConditionVector(const Eigen::MatrixXd& matrix,
                                std::span<const std::size_t> columns) {
  const auto d = static_cast<Eigen::Index>(columns.size());
  Eigen::VectorXd out(2 * d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd col = matrix.col(static_cast<Eigen::Index>(columns[static_cast<std::size_t>(j)]));
    const double mean = col.mean();
    const double var = matrix.rows() > 1
                           ? (col.array() - mean).square().sum() / static_cast<double>(matrix.rows() - 1)
                           : 0.0;
    out(j) = SignedLog(mean);
    out(d + j) = SignedLog(std::sqrt(var));
  }
  return out;
}

CvaeModel FitCvae(std::span<const CovMatrix> matrices, const Eigen::VectorXd& condition,
                  const CvaeConfig& config) {
  ValidateCvaeConfig(config);
  if (matrices.size() < 2) throw Error("cvae: at least 2 training matrices required");
  CvaeModel model;
  model.config = config;
  model.columns = matrices.front().columns;
  model.condition = condition;
  const std::size_t d = model.dim();
  if (static_cast<std::size_t>(condition.size()) != 2 * d) {
    throw Error("cvae: condition vector must hold a mean and a std per column");
  }
  const auto k = static_cast<Eigen::Index>(PackedLength(d));
  const auto m = static_cast<Eigen::Index>(matrices.size());
  Matrix targets(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    const CovMatrix& cov = matrices[static_cast<std::size_t>(i)];
    if (cov.columns != model.columns) throw Error("cvae: training matrices disagree on columns");
    targets.row(i) = CovToVec(cov).transpose();
  }
  model.target_mean = targets.colwise().mean().transpose();
  model.target_scale.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double var = (targets.col(j).array() - model.target_mean(j)).square().mean();
    const double sd = std::sqrt(var);
    model.target_scale(j) = sd > 1e-8 ? sd : 1.0;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    targets.row(i) = (targets.row(i) - model.target_mean.transpose()).cwiseQuotient(
        model.target_scale.transpose());
  }

  const int latent = config.latent_dim;
  const auto cond_width = static_cast<int>(condition.size());
  nnet::DenseNetSpec enc;
  enc.input_width = static_cast<int>(k) + cond_width;
  enc.seed = DeriveSeed(config.seed, "cvae-encoder-init");
  enc.layers = {{config.hidden_width, nnet::Activation::kTanh, 0.0, 0.0},
                {2 * latent, nnet::Activation::kIdentity, 0.0, 0.0}};
  nnet::DenseNetSpec dec;
  dec.input_width = latent + cond_width;
  dec.seed = DeriveSeed(config.seed, "cvae-decoder-init");
  dec.layers = {{config.hidden_width, nnet::Activation::kTanh, 0.0, 0.0},
                {static_cast<int>(k), nnet::Activation::kIdentity, 0.0, 0.0}};
  model.encoder = nnet::DenseNet(enc);
  model.decoder = nnet::DenseNet(dec);
  nnet::Adam enc_opt(model.encoder, {config.learning_rate, 0.9, 0.999, 1e-8});
  nnet::Adam dec_opt(model.decoder, {config.learning_rate, 0.9, 0.999, 1e-8});

  Rng rng(DeriveSeed(config.seed, "cvae-train"));
  std::vector<std::size_t> order(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const Eigen::RowVectorXd cond_row = condition.transpose();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    double loss_sum = 0.0;
    double weight_sum = 0.0;
    for (Eigen::Index start = 0; start < m; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, m - start);
      Matrix x(b, k);
      for (Eigen::Index i = 0; i < b; ++i) {
        x.row(i) = targets.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + i)]));
      }
      Matrix enc_in(b, k + cond_width);
      enc_in << x, cond_row.replicate(b, 1);
      const nnet::ForwardCache ec = model.encoder.Forward(enc_in);
      const Matrix mu = ec.output.leftCols(latent);
      const Matrix logvar = ec.output.rightCols(latent);
      Matrix eps(b, latent);
      for (Eigen::Index i = 0; i < b; ++i) {
        for (int j = 0; j < latent; ++j) eps(i, j) = rng.Normal();
      }
      const Matrix sigma = (0.5 * logvar.array()).exp().matrix();
      const Matrix z = mu + sigma.cwiseProduct(eps);
      Matrix dec_in(b, latent + cond_width);
      dec_in << z, cond_row.replicate(b, 1);
      const nnet::ForwardCache dc = model.decoder.Forward(dec_in);
      const double recon = nnet::MeanSquaredError(dc.output, x);
      const double kl = nnet::KlStandardNormal(mu, logvar);
      const double loss = recon + config.beta * kl;
      if (!std::isfinite(loss)) {
        throw Error("cvae: non-finite loss at epoch " + std::to_string(epoch));
      }
      const nnet::Gradients dg = model.decoder.Backward(dc, nnet::MeanSquaredErrorGrad(dc.output, x));
      const Matrix dz = dg.input.leftCols(latent);
      auto [dmu_kl, dlv_kl] = nnet::KlStandardNormalGrad(mu, logvar);
      Matrix d_enc(b, 2 * latent);
      d_enc.leftCols(latent) = dz + config.beta * dmu_kl;
      d_enc.rightCols(latent) =
          (dz.cwiseProduct(eps).cwiseProduct(sigma) * 0.5) + config.beta * dlv_kl;
      const nnet::Gradients eg = model.encoder.Backward(ec, d_enc);
      dec_opt.Step(model.decoder, dg);
      enc_opt.Step(model.encoder, eg);
      loss_sum += loss * static_cast<double>(b);
      weight_sum += static_cast<double>(b);
    }
    model.loss_trace.push_back(loss_sum / weight_sum);
  }
  model.weak_convergence = model.loss_trace.back() > 0.5 * model.loss_trace.front();
  return model;
}

CovMatrix SampleCov(const CvaeModel& model, std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, "cvae-sample"));
  const int latent = model.config.latent_dim;
  const auto cond_width = static_cast<Eigen::Index>(model.condition.size());
  Matrix in(1, latent + cond_width);
  for (int j = 0; j < latent; ++j) in(0, j) = rng.Normal();
  in.rightCols(cond_width) = model.condition.transpose();
  const Matrix out = model.decoder.Predict(in);
  const Eigen::VectorXd vec =
      out.row(0).transpose().cwiseProduct(model.target_scale) + model.target_mean;
  return VecToCov(vec, model.columns);
}

void SaveCvae(std::ostream& out, const CvaeModel& model) {
  nlohmann::json meta = {{"config", CvaeConfigToJson(model.config)},
                         {"columns", model.columns},
                         {"condition", ToStd(model.condition)},
                         {"target_mean", ToStd(model.target_mean)},
                         {"target_scale", ToStd(model.target_scale)},
                         {"loss_trace", model.loss_trace},
                         {"weak_convergence", model.weak_convergence}};
  const std::string text = meta.dump();
  out.write(kMagic, sizeof(kMagic));
  WritePod(out, kVersion);
  WritePod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.encoder.Save(out);
  model.decoder.Save(out);
  if (!out) throw Error("cvae checkpoint: write failed");
}

CvaeModel LoadCvae(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("cvae checkpoint: bad magic");
  }
  if (ReadPod<std::uint32_t>(in) != kVersion) throw Error("cvae checkpoint: unsupported version");
  const auto size = ReadPod<std::uint64_t>(in);
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error("cvae checkpoint: truncated metadata");
  CvaeModel model;
  try {
    const nlohmann::json meta = nlohmann::json::parse(text);
    model.config = CvaeConfigFromJson(meta.at("config"));
    model.columns = meta.at("columns").get<std::vector<std::string>>();
    model.condition = FromStd(meta.at("condition").get<std::vector<double>>());
    model.target_mean = FromStd(meta.at("target_mean").get<std::vector<double>>());
    model.target_scale = FromStd(meta.at("target_scale").get<std::vector<double>>());
    model.loss_trace = meta.at("loss_trace").get<std::vector<double>>();
    model.weak_convergence = meta.at("weak_convergence").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("cvae checkpoint: malformed metadata: ") + e.what());
  }
  model.encoder = nnet::DenseNet::Load(in);
  model.decoder = nnet::DenseNet::Load(in);
  return model;
}

void SaveCvae(const std::filesystem::path& path, const CvaeModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  SaveCvae(out, model);
}

CvaeModel LoadCvae(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read model file " + path.string());
  return LoadCvae(in);
}

}  // namespace zgen
