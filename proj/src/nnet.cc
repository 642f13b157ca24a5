#include "zgen/nnet.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "zgen/error.h"

namespace zgen::nnet {

namespace {

constexpr char kMagic[4] = {'Z', 'N', 'N', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr double kProbClamp = 1e-7;

Matrix Activate(const Matrix& z, const LayerSpec& layer) {
  switch (layer.activation) {
    case Activation::kIdentity:
      return z;
    case Activation::kReLU:
      return z.cwiseMax(0.0);
    case Activation::kLeakyReLU:
      return z.unaryExpr([s = layer.slope](double v) { return v > 0 ? v : s * v; });
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kSigmoid:
      return Sigmoid(z);
  }
  return z;
}

// d(activation)/d(pre-activation), written in terms of the activation
// output `a`; every supported activation allows this.
Matrix ActivationDerivative(const Matrix& a, const LayerSpec& layer) {
  switch (layer.activation) {
    case Activation::kIdentity:
      return Matrix::Ones(a.rows(), a.cols());
    case Activation::kReLU:
      return a.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
    case Activation::kLeakyReLU:
      return a.unaryExpr([s = layer.slope](double v) { return v > 0 ? 1.0 : s; });
    case Activation::kTanh:
      return (1.0 - a.array().square()).matrix();
    case Activation::kSigmoid:
      return (a.array() * (1.0 - a.array())).matrix();
  }
  return a;
}

template <typename T>
void WritePod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("checkpoint: truncated network blob");
  return value;
}

void WriteDoubles(std::ostream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * static_cast<Eigen::Index>(sizeof(double))));
}

void ReadDoubles(std::istream& in, double* data, Eigen::Index n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * static_cast<Eigen::Index>(sizeof(double))));
  if (!in) throw Error("checkpoint: truncated weights");
}

}  // namespace

Matrix Sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

DenseNet::DenseNet(DenseNetSpec spec) : spec_(std::move(spec)) {
  if (spec_.layers.empty()) throw Error("nnet: at least one layer required");
  if (spec_.input_width <= 0) throw Error("nnet: input width must be positive");
  Rng rng(spec_.seed);
  int in = spec_.input_width;
  for (const LayerSpec& layer : spec_.layers) {
    if (layer.width <= 0) throw Error("nnet: layer widths must be positive");
    if (layer.dropout < 0.0 || layer.dropout >= 1.0) {
      throw Error("nnet: dropout must lie in [0, 1)");
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(in + layer.width));
    Matrix w(in, layer.width);
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < layer.width; ++j) {
        w(i, j) = (2.0 * rng.Uniform() - 1.0) * limit;
      }
    }
    weights_.push_back(std::move(w));
    biases_.push_back(RowVector::Zero(layer.width));
    in = layer.width;
  }
}

ForwardCache DenseNet::Forward(const Matrix& batch, Rng* dropout_rng) const {
  if (batch.cols() != spec_.input_width) {
    throw Error("nnet: batch width " + std::to_string(batch.cols()) +
                " does not match input width " +
                std::to_string(spec_.input_width));
  }
  ForwardCache cache;
  cache.generation = generation_;
  cache.valid = true;
  Matrix x = batch;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const LayerSpec& layer = spec_.layers[l];
    Matrix z = x * weights_[l];
    z.rowwise() += biases_[l];
    Matrix a = Activate(z, layer);
    Matrix mask;
    Matrix out;
    if (dropout_rng != nullptr && layer.dropout > 0.0) {
      const double keep = 1.0 - layer.dropout;
      mask.resize(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          mask(i, j) = dropout_rng->Uniform() < keep ? 1.0 / keep : 0.0;
        }
      }
      out = a.cwiseProduct(mask);
    } else {
      out = a;
    }
    cache.inputs.push_back(std::move(x));
    cache.activations.push_back(std::move(a));
    cache.masks.push_back(std::move(mask));
    x = std::move(out);
  }
  cache.output = std::move(x);
  return cache;
}

Matrix DenseNet::Predict(const Matrix& batch) const {
  return Forward(batch).output;
}

Gradients DenseNet::Backward(const ForwardCache& cache,
                             const Matrix& output_gradient) const {
  if (!cache.valid || cache.inputs.size() != weights_.size()) {
    throw Error("nnet: backward called without a matching forward cache");
  }
  if (cache.generation != generation_) {
    throw Error("nnet: stale forward cache (weights changed since forward)");
  }
  if (output_gradient.rows() != cache.output.rows() ||
      output_gradient.cols() != cache.output.cols()) {
    throw Error("nnet: output gradient shape mismatch");
  }
  Gradients grads;
  grads.weights.resize(weights_.size());
  grads.biases.resize(weights_.size());
  Matrix g = output_gradient;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const LayerSpec& layer = spec_.layers[l];
    if (cache.masks[l].size() > 0) g = g.cwiseProduct(cache.masks[l]);
    const Matrix dz = g.cwiseProduct(ActivationDerivative(cache.activations[l], layer));
    grads.weights[l] = cache.inputs[l].transpose() * dz;
    grads.biases[l] = dz.colwise().sum();
    g = dz * weights_[l].transpose();
  }
  grads.input = std::move(g);
  return grads;
}

Matrix& DenseNet::mutable_weights(std::size_t l) {
  Touch();
  return weights_[l];
}

RowVector& DenseNet::mutable_bias(std::size_t l) {
  Touch();
  return biases_[l];
}

std::vector<std::span<double>> DenseNet::ParameterBlocks() {
  std::vector<std::span<double>> blocks;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    blocks.emplace_back(weights_[l].data(), static_cast<std::size_t>(weights_[l].size()));
    blocks.emplace_back(biases_[l].data(), static_cast<std::size_t>(biases_[l].size()));
  }
  return blocks;
}

std::vector<std::string> DenseNet::ParameterNames() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    names.push_back("layer " + std::to_string(l) + " weights");
    names.push_back("layer " + std::to_string(l) + " bias");
  }
  return names;
}

std::vector<std::span<const double>> GradientBlocks(const Gradients& grads) {
  std::vector<std::span<const double>> blocks;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    blocks.emplace_back(grads.weights[l].data(),
                        static_cast<std::size_t>(grads.weights[l].size()));
    blocks.emplace_back(grads.biases[l].data(),
                        static_cast<std::size_t>(grads.biases[l].size()));
  }
  return blocks;
}

void DenseNet::Save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  WritePod(out, kVersion);
  WritePod(out, static_cast<std::uint32_t>(spec_.input_width));
  WritePod(out, static_cast<std::uint32_t>(spec_.layers.size()));
  WritePod(out, spec_.seed);
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const LayerSpec& layer = spec_.layers[l];
    WritePod(out, static_cast<std::uint32_t>(layer.width));
    WritePod(out, static_cast<std::uint8_t>(layer.activation));
    WritePod(out, layer.slope);
    WritePod(out, layer.dropout);
    WriteDoubles(out, weights_[l].data(), weights_[l].size());
    WriteDoubles(out, biases_[l].data(), biases_[l].size());
  }
  if (!out) throw Error("checkpoint: write failed");
}

DenseNet DenseNet::Load(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("checkpoint: not a network blob");
  }
  const auto version = ReadPod<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error("checkpoint: unsupported network version " +
                std::to_string(version));
  }
  DenseNet net;
  net.spec_.input_width = static_cast<int>(ReadPod<std::uint32_t>(in));
  const auto layers = ReadPod<std::uint32_t>(in);
  net.spec_.seed = ReadPod<std::uint64_t>(in);
  int width_in = net.spec_.input_width;
  for (std::uint32_t l = 0; l < layers; ++l) {
    LayerSpec layer;
    layer.width = static_cast<int>(ReadPod<std::uint32_t>(in));
    const auto tag = ReadPod<std::uint8_t>(in);
    if (tag > static_cast<std::uint8_t>(Activation::kSigmoid)) {
      throw Error("checkpoint: unknown activation tag");
    }
    layer.activation = static_cast<Activation>(tag);
    layer.slope = ReadPod<double>(in);
    layer.dropout = ReadPod<double>(in);
    Matrix w(width_in, layer.width);
    RowVector b(layer.width);
    ReadDoubles(in, w.data(), w.size());
    ReadDoubles(in, b.data(), b.size());
    net.spec_.layers.push_back(layer);
    net.weights_.push_back(std::move(w));
    net.biases_.push_back(std::move(b));
    width_in = layer.width;
  }
  if (net.spec_.layers.empty()) throw Error("checkpoint: network has no layers");
  return net;
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (spec_.input_width != other.spec_.input_width ||
      spec_.layers.size() != other.spec_.layers.size()) {
    return false;
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const LayerSpec& a = spec_.layers[l];
    const LayerSpec& b = other.spec_.layers[l];
    if (a.width != b.width || a.activation != b.activation ||
        a.slope != b.slope || a.dropout != b.dropout) {
      return false;
    }
    // Bitwise comparison; distinguishes -0.0 and NaN payloads.
    if (std::memcmp(weights_[l].data(), other.weights_[l].data(),
                    sizeof(double) * static_cast<std::size_t>(weights_[l].size())) != 0 ||
        std::memcmp(biases_[l].data(), other.biases_[l].data(),
                    sizeof(double) * static_cast<std::size_t>(biases_[l].size())) != 0) {
      return false;
    }
  }
  return true;
}

Adam::Adam(const DenseNet& net, AdamOptions options) : options_(options) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    first_moment_.emplace_back(static_cast<std::size_t>(net.weights(l).size()), 0.0);
    second_moment_.emplace_back(static_cast<std::size_t>(net.weights(l).size()), 0.0);
    first_moment_.emplace_back(static_cast<std::size_t>(net.bias(l).size()), 0.0);
    second_moment_.emplace_back(static_cast<std::size_t>(net.bias(l).size()), 0.0);
  }
}

void Adam::Step(DenseNet& net, const Gradients& grads) {
  std::vector<std::span<double>> params = net.ParameterBlocks();
  std::vector<std::span<const double>> g = GradientBlocks(grads);
  if (params.size() != g.size() || params.size() != first_moment_.size()) {
    throw Error("adam: parameter/gradient block count mismatch");
  }
  const std::vector<std::string> names = net.ParameterNames();
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (g[b].size() != params[b].size()) {
      throw Error("adam: shape mismatch in " + names[b]);
    }
    for (double v : g[b]) {
      if (!std::isfinite(v)) throw Error("adam: non-finite gradient in " + names[b]);
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t b = 0; b < g.size(); ++b) {
    std::vector<double>& m = first_moment_[b];
    std::vector<double>& v = second_moment_[b];
    for (std::size_t i = 0; i < g[b].size(); ++i) {
      const double gi = g[b][i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[b][i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
  net.Touch();
}

double BinaryCrossEntropy(const Matrix& probabilities, const Matrix& targets) {
  if (probabilities.rows() != targets.rows() ||
      probabilities.cols() != targets.cols()) {
    throw Error("bce: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities.data()[i], kProbClamp, 1.0 - kProbClamp);
    const double y = targets.data()[i];
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(probabilities.size());
}

Matrix BinaryCrossEntropyLogitGrad(const Matrix& logits, const Matrix& targets) {
  return (Sigmoid(logits) - targets) / static_cast<double>(logits.size());
}

double MeanSquaredError(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error("mse: shape mismatch");
  }
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

Matrix MeanSquaredErrorGrad(const Matrix& a, const Matrix& b) {
  return 2.0 * (a - b) / static_cast<double>(a.size());
}

double KlStandardNormal(const Matrix& mu, const Matrix& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw Error("kl: shape mismatch");
  }
  const double total = (logvar.array().exp() + mu.array().square() - 1.0 -
                        logvar.array()).sum();
  return 0.5 * total / static_cast<double>(mu.rows());
}

std::pair<Matrix, Matrix> KlStandardNormalGrad(const Matrix& mu,
                                               const Matrix& logvar) {
  const double batch = static_cast<double>(mu.rows());
  Matrix d_mu = mu / batch;
  Matrix d_logvar = (0.5 * (logvar.array().exp() - 1.0) / batch).matrix();
  return {std::move(d_mu), std::move(d_logvar)};
}

}  // namespace zgen::nnet
