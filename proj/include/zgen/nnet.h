#ifndef ZGEN_NNET_H_
#define ZGEN_NNET_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zgen/random.h"

namespace zgen::nnet {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation : std::uint8_t {
  kIdentity = 0,
  kReLU = 1,
  kLeakyReLU = 2,
  kTanh = 3,
  kSigmoid = 4,
};

struct LayerSpec {
  int width = 1;
  Activation activation = Activation::kIdentity;
  double slope = 0.2;    // LeakyReLU negative slope
  double dropout = 0.0;  // applied after the activation, training only
};

struct DenseNetSpec {
  int input_width = 1;
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;
};

// Activations recorded by Forward; Backward needs exactly this.
struct ForwardCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> activations;  // activation of each layer, pre-dropout
  std::vector<Matrix> masks;        // scaled dropout masks (empty if unused)
  Matrix output;
  std::uint64_t generation = 0;
  bool valid = false;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  Matrix input;  // gradient with respect to the batch fed to Forward
};

// Fully connected network, row-major batches: batch (rows) x features.
// Weights of layer l have shape in_width x out_width.
class DenseNet {
 public:
  DenseNet() = default;
  // Glorot-uniform weights and zero biases drawn from spec.seed.
  explicit DenseNet(DenseNetSpec spec);

  const DenseNetSpec& spec() const { return spec_; }
  int input_width() const { return spec_.input_width; }
  int output_width() const { return spec_.layers.back().width; }
  std::size_t num_layers() const { return weights_.size(); }

  // With `dropout_rng` the pass runs in training mode (dropout active).
  ForwardCache Forward(const Matrix& batch, Rng* dropout_rng = nullptr) const;
  Matrix Predict(const Matrix& batch) const;

  // Throws if `cache` came from an older set of weights.
  Gradients Backward(const ForwardCache& cache,
                     const Matrix& output_gradient) const;

  const Matrix& weights(std::size_t l) const { return weights_[l]; }
  const RowVector& bias(std::size_t l) const { return biases_[l]; }
  Matrix& mutable_weights(std::size_t l);
  RowVector& mutable_bias(std::size_t l);

  // Flat views of every parameter block, in order w0, b0, w1, b1, ...
  std::vector<std::span<double>> ParameterBlocks();
  std::vector<std::string> ParameterNames() const;

  // Bumped on every weight mutation; ties caches to weights.
  std::uint64_t generation() const { return generation_; }
  void Touch() { ++generation_; }

  // Versioned binary checkpoint; round-trips bitwise.
  void Save(std::ostream& out) const;
  static DenseNet Load(std::istream& in);

  bool operator==(const DenseNet& other) const;

 private:
  DenseNetSpec spec_;
  std::vector<Matrix> weights_;
  std::vector<RowVector> biases_;
  std::uint64_t generation_ = 0;
};

std::vector<std::span<const double>> GradientBlocks(const Gradients& grads);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam.
class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet& net, AdamOptions options);

  // Throws naming the parameter block if any gradient is non-finite; in
  // that case nothing is updated.
  void Step(DenseNet& net, const Gradients& grads);

  std::int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::int64_t steps_ = 0;
};

// Losses are mean-reduced. Probabilities are clamped to [1e-7, 1 - 1e-7].
double BinaryCrossEntropy(const Matrix& probabilities, const Matrix& targets);
// Gradient of the mean BCE of sigmoid(logits) with respect to the logits.
Matrix BinaryCrossEntropyLogitGrad(const Matrix& logits, const Matrix& targets);
double MeanSquaredError(const Matrix& a, const Matrix& b);
Matrix MeanSquaredErrorGrad(const Matrix& a, const Matrix& b);  // d/da
// 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar) / batch.
double KlStandardNormal(const Matrix& mu, const Matrix& logvar);
// Gradients with respect to (mu, logvar).
std::pair<Matrix, Matrix> KlStandardNormalGrad(const Matrix& mu,
                                               const Matrix& logvar);

Matrix Sigmoid(const Matrix& x);

}  // namespace zgen::nnet

#endif  // ZGEN_NNET_H_
