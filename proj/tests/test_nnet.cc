#include <cmath>
#include <sstream>

#include "doctest.h"
#include "zgen/error.h"
#include "zgen/nnet.h"

using namespace zgen;
using namespace zgen::nnet;

namespace {

double Act(Activation a, double x, double slope) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kReLU: return x > 0 ? x : 0;
    case Activation::kLeakyReLU: return x > 0 ? x : slope * x;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kSigmoid: return 1 / (1 + std::exp(-x));
  }
  return x;
}

// Straight-line loop evaluation of the net, independent of Eigen products.
Matrix LoopForward(const DenseNet& net, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weights(l);
    Matrix next(cur.rows(), w.cols());
    for (Eigen::Index r = 0; r < cur.rows(); ++r) {
      for (Eigen::Index o = 0; o < w.cols(); ++o) {
        double s = net.bias(l)(o);
        for (Eigen::Index i = 0; i < w.rows(); ++i) s += cur(r, i) * w(i, o);
        const auto& spec = net.spec().layers[l];
        next(r, o) = Act(spec.activation, s, spec.slope);
      }
    }
    cur = next;
  }
  return cur;
}

DenseNet RandomNet(std::uint64_t seed, int layers) {
  Rng rng(seed);
  DenseNetSpec spec;
  spec.input_width = 1 + static_cast<int>(rng.Below(6));
  spec.seed = seed;
  const Activation acts[] = {Activation::kTanh, Activation::kSigmoid, Activation::kLeakyReLU,
                             Activation::kIdentity};
  for (int l = 0; l < layers; ++l) {
    LayerSpec ls;
    ls.width = 1 + static_cast<int>(rng.Below(8));
    ls.activation = acts[rng.Below(4)];
    ls.slope = 0.2;
    spec.layers.push_back(ls);
  }
  return DenseNet(spec);
}

Matrix RandomMatrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.Normal();
  return m;
}

}  // namespace

TEST_SUITE("nnet") {

TEST_CASE("identity net passes input through") {
  DenseNet net(DenseNetSpec{3, {{3, Activation::kIdentity}}, 1});
  net.mutable_weights(0) = Matrix::Identity(3, 3);
  net.mutable_bias(0).setZero();
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 0, -7;
  CHECK(net.Predict(x) == x);
}

TEST_CASE("sigmoid of zero is one half") {
  CHECK((Sigmoid(Matrix::Zero(3, 4)).array() == 0.5).all());
}

TEST_CASE("forward matches loop evaluation") {
  Rng rng(3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DenseNet net = RandomNet(s + 100, 2);
    const Matrix x = RandomMatrix(5, net.input_width(), rng);
    const Matrix a = net.Predict(x);
    const Matrix b = LoopForward(net, x);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward rejects width mismatch") {
  DenseNet net(DenseNetSpec{3, {{2, Activation::kTanh}}, 1});
  CHECK_THROWS_AS(net.Predict(Matrix::Zero(1, 4)), Error);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(17);
  for (std::uint64_t s = 0; s < 30; ++s) {
    DenseNet net = RandomNet(s + 7, 1 + static_cast<int>(s % 3));
    const Matrix x = RandomMatrix(4, net.input_width(), rng);
    const Matrix upstream = RandomMatrix(4, net.output_width(), rng);
    const Gradients g = net.Backward(net.Forward(x), upstream);
    auto loss = [&](const DenseNet& n) { return (n.Predict(x).array() * upstream.array()).sum(); };
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      for (Eigen::Index i = 0; i < net.weights(l).size(); ++i) {
        DenseNet plus = net, minus = net;
        plus.mutable_weights(l).data()[i] += h;
        minus.mutable_weights(l).data()[i] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        const double an = g.weights[l].data()[i];
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-8);
      }
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) {
        DenseNet plus = net, minus = net;
        plus.mutable_bias(l)(i) += h;
        minus.mutable_bias(l)(i) -= h;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        const double an = g.biases[l](i);
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-8);
      }
    }
    // input gradient
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double fd = ((net.Predict(xp) - net.Predict(xm)).array() * upstream.array()).sum() / (2 * h);
      CHECK(std::abs(fd - g.input.data()[i]) <= 1e-4 * std::abs(fd) + 1e-8);
    }
  }
}

TEST_CASE("zero upstream gradient gives zero gradients; y = wx gives x") {
  DenseNet net = RandomNet(5, 3);
  Rng rng(1);
  const Matrix x = RandomMatrix(3, net.input_width(), rng);
  const Gradients g = net.Backward(net.Forward(x), Matrix::Zero(3, net.output_width()));
  for (const auto& w : g.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);

  DenseNet lin(DenseNetSpec{1, {{1, Activation::kIdentity}}, 0});
  lin.mutable_weights(0)(0, 0) = 0.7;
  Matrix xs(1, 1);
  xs << 2.5;
  const Gradients gl = lin.Backward(lin.Forward(xs), Matrix::Ones(1, 1));
  CHECK(gl.weights[0](0, 0) == 2.5);
  CHECK(gl.biases[0](0) == 1.0);
}

TEST_CASE("stale cache is rejected") {
  DenseNet net = RandomNet(8, 2);
  Rng rng(2);
  const Matrix x = RandomMatrix(2, net.input_width(), rng);
  const ForwardCache cache = net.Forward(x);
  net.mutable_bias(0)(0) += 1.0;
  CHECK_THROWS_AS(net.Backward(cache, Matrix::Ones(2, net.output_width())), Error);
  CHECK_THROWS_AS(net.Backward(ForwardCache{}, Matrix::Ones(2, net.output_width())), Error);
}

TEST_CASE("dropout: training mode masks, eval mode deterministic") {
  DenseNetSpec spec{4, {{16, Activation::kTanh, 0.2, 0.5}, {1, Activation::kIdentity}}, 3};
  DenseNet net(spec);
  Rng rng(5);
  const Matrix x = RandomMatrix(8, 4, rng);
  Rng d1(1), d2(1);
  CHECK(net.Forward(x, &d1).output == net.Forward(x, &d2).output);
  CHECK(net.Predict(x) == net.Forward(x).output);
  // gradient check with the same dropout mask
  Rng d3(9);
  const ForwardCache cache = net.Forward(x, &d3);
  const Matrix up = RandomMatrix(8, 1, rng);
  const Gradients g = net.Backward(cache, up);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < net.weights(0).size(); i += 7) {
    DenseNet p = net, m = net;
    p.mutable_weights(0).data()[i] += h;
    m.mutable_weights(0).data()[i] -= h;
    Rng a(9), b(9);
    const double fd = ((p.Forward(x, &a).output - m.Forward(x, &b).output).array() * up.array()).sum() / (2 * h);
    CHECK(std::abs(fd - g.weights[0].data()[i]) <= 1e-4 * std::abs(fd) + 1e-8);
  }
}

TEST_CASE("adam: first step matches hand computation") {
  DenseNet net(DenseNetSpec{2, {{1, Activation::kIdentity}}, 4});
  const Matrix w0 = net.weights(0);
  AdamOptions o;
  o.learning_rate = 0.01;
  Adam adam(net, o);
  Gradients g;
  g.weights = {Matrix(2, 1)};
  g.weights[0] << 0.3, -2.0;
  g.biases = {RowVector::Constant(1, 0.0)};
  adam.Step(net, g);
  CHECK(adam.steps() == 1);
  for (int i = 0; i < 2; ++i) {
    const double gi = g.weights[0](i, 0);
    const double m = (1 - o.beta1) * gi, v = (1 - o.beta2) * gi * gi;
    const double mh = m / (1 - o.beta1), vh = v / (1 - o.beta2);
    CHECK(net.weights(0)(i, 0) == doctest::Approx(w0(i, 0) - o.learning_rate * mh / (std::sqrt(vh) + o.epsilon)));
  }
  // zero gradient bias stays put
  CHECK(net.bias(0)(0) == 0.0);
}

TEST_CASE("adam: zero gradients and zero lr leave parameters unchanged") {
  DenseNet net = RandomNet(12, 2);
  const DenseNet before = net;
  Adam adam(net, AdamOptions{});
  Gradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights(l).rows(), net.weights(l).cols()));
    g.biases.push_back(RowVector::Zero(net.bias(l).size()));
  }
  adam.Step(net, g);
  CHECK(net == before);
  CHECK(adam.steps() == 1);

  AdamOptions zero;
  zero.learning_rate = 0.0;
  Adam still(net, zero);
  for (auto& w : g.weights) w.setOnes();
  still.Step(net, g);
  CHECK(net == before);
}

TEST_CASE("adam: non-finite gradient names the block and updates nothing") {
  DenseNet net = RandomNet(13, 2);
  const DenseNet before = net;
  Adam adam(net, AdamOptions{});
  Gradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Ones(net.weights(l).rows(), net.weights(l).cols()));
    g.biases.push_back(RowVector::Ones(net.bias(l).size()));
  }
  g.biases[1](0) = std::nan("");
  try {
    adam.Step(net, g);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(net.ParameterNames()[3]) != std::string::npos);
  }
  CHECK(net == before);
}

TEST_CASE("losses") {
  Matrix p = Matrix::Constant(3, 1, 0.5), y(3, 1);
  y << 0, 1, 1;
  CHECK(BinaryCrossEntropy(p, y) == doctest::Approx(std::log(2.0)));
  CHECK(KlStandardNormal(Matrix::Zero(2, 3), Matrix::Zero(2, 3)) == 0.0);
  CHECK(MeanSquaredError(y, y) == 0.0);
  CHECK(std::isfinite(BinaryCrossEntropy(Matrix::Zero(1, 1), Matrix::Ones(1, 1))));
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const Matrix mu = RandomMatrix(2, 3, rng) * 3, lv = RandomMatrix(2, 3, rng) * 3;
    CHECK(KlStandardNormal(mu, lv) >= 0.0);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(31);
  const Matrix logits = RandomMatrix(4, 2, rng), y = (RandomMatrix(4, 2, rng).array() > 0).cast<double>();
  const Matrix g = BinaryCrossEntropyLogitGrad(logits, y);
  const Matrix a = RandomMatrix(4, 2, rng), b = RandomMatrix(4, 2, rng);
  const Matrix gm = MeanSquaredErrorGrad(a, b);
  const Matrix mu = RandomMatrix(3, 2, rng), lv = RandomMatrix(3, 2, rng);
  const auto [gmu, glv] = KlStandardNormalGrad(mu, lv);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix p = logits, m = logits;
    p.data()[i] += h;
    m.data()[i] -= h;
    CHECK(g.data()[i] == doctest::Approx((BinaryCrossEntropy(Sigmoid(p), y) - BinaryCrossEntropy(Sigmoid(m), y)) / (2 * h)).epsilon(1e-5));
    Matrix ap = a, am = a;
    ap.data()[i] += h;
    am.data()[i] -= h;
    CHECK(gm.data()[i] == doctest::Approx((MeanSquaredError(ap, b) - MeanSquaredError(am, b)) / (2 * h)).epsilon(1e-5));
  }
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    Matrix p = mu, m = mu;
    p.data()[i] += h;
    m.data()[i] -= h;
    CHECK(gmu.data()[i] == doctest::Approx((KlStandardNormal(p, lv) - KlStandardNormal(m, lv)) / (2 * h)).epsilon(1e-5));
    Matrix lp = lv, lm = lv;
    lp.data()[i] += h;
    lm.data()[i] -= h;
    CHECK(glv.data()[i] == doctest::Approx((KlStandardNormal(mu, lp) - KlStandardNormal(mu, lm)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("checkpoint round-trips bitwise; identical seeds train identically") {
  DenseNet net = RandomNet(44, 3);
  std::stringstream buf;
  net.Save(buf);
  const DenseNet back = DenseNet::Load(buf);
  CHECK(back == net);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(DenseNet::Load(bad), Error);

  auto train = [](std::uint64_t seed) {
    DenseNet n(DenseNetSpec{3, {{5, Activation::kTanh}, {1, Activation::kIdentity}}, seed});
    Adam adam(n, AdamOptions{});
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
      const Matrix x = RandomMatrix(8, 3, rng);
      const Matrix target = x.rowwise().sum();
      const ForwardCache c = n.Forward(x);
      adam.Step(n, n.Backward(c, MeanSquaredErrorGrad(c.output, target)));
    }
    return n;
  };
  CHECK(train(5) == train(5));
  CHECK(!(train(5) == train(6)));
}

}  // TEST_SUITE
