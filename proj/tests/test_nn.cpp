#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "resgrad/nn.hpp"
#include "resgrad/rng.hpp"

using namespace resgrad;
using nn::BTensor;
using nn::MatX;
using nn::ParamRef;

namespace {

BTensor<double> random_tensor(Rng& rng, int b, int c, int h, int w) {
  BTensor<double> t;
  t.resize(b, c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = rng.normal();
  return t;
}

// Loss = sum(out .* R) for a fixed random projection R, so dL/dout = R.
struct Probe {
  MatX<double> r;
  void match(const BTensor<double>& out, Rng& rng) {
    r.resize(out.data.rows(), out.data.cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
  }
  double loss(const BTensor<double>& out) const {
    return (out.data.array() * r.array()).sum();
  }
  BTensor<double> grad(const BTensor<double>& out) const {
    BTensor<double> g;
    g.B = out.B; g.C = out.C; g.H = out.H; g.W = out.W;
    g.data = r;
    return g;
  }
};

// Central finite differences over a subsample of entries of every parameter
// and of the input; fwd() must recompute the loss from current state.
void check_grads(std::vector<ParamRef<double>> params, MatX<double>* input,
                 MatX<double>* input_grad,
                 const std::function<double()>& fwd, double tol = 1e-6) {
  const double h = 1e-5;
  Rng pick(99);
  auto check_entry = [&](double* v, double analytic) {
    const double keep = *v;
    *v = keep + h;
    const double lp = fwd();
    *v = keep - h;
    const double lm = fwd();
    *v = keep;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-4});
    CHECK(std::abs(fd - analytic) / denom < tol);
  };
  for (auto& p : params) {
    const Eigen::Index n = p.value->size();
    const Eigen::Index step = std::max<Eigen::Index>(1, n / 7);
    for (Eigen::Index i = pick.uniform_int(0, 2); i < n; i += step)
      check_entry(p.value->data() + i, p.grad->data()[i]);
  }
  if (input != nullptr) {
    const Eigen::Index n = input->size();
    const Eigen::Index step = std::max<Eigen::Index>(1, n / 11);
    for (Eigen::Index i = 0; i < n; i += step)
      check_entry(input->data() + i, input_grad->data()[i]);
  }
}

}  // namespace

TEST_CASE("Conv2d gradients, stride 1 and 2") {
  for (int stride : {1, 2}) {
    Rng rng(41 + stride);
    nn::Conv2d<double> conv;
    conv.setup("c", 3, 4, 3, stride, 1);
    conv.init(rng);
    BTensor<double> in = random_tensor(rng, 2, 3, 5, 6);

    Probe probe;
    probe.match(conv.forward(in), rng);

    std::vector<ParamRef<double>> params;
    conv.collect(params);
    for (auto& p : params) p.grad->setZero();
    BTensor<double> out = conv.forward(in);
    BTensor<double> gin = conv.backward(probe.grad(out));

    auto fwd = [&]() { return probe.loss(conv.forward(in)); };
    check_grads(params, &in.data, &gin.data, fwd);
  }
}

TEST_CASE("Conv2d output shape") {
  Rng rng(7);
  nn::Conv2d<double> conv;
  conv.setup("c", 2, 5, 3, 1, 1);
  conv.init(rng);
  BTensor<double> in = random_tensor(rng, 3, 2, 9, 13);
  auto out = conv.forward(in);
  CHECK(out.B == 3);
  CHECK(out.C == 5);
  CHECK(out.H == 9);
  CHECK(out.W == 13);

  nn::Conv2d<double> down;
  down.setup("d", 2, 2, 3, 2, 1);
  down.init(rng);
  BTensor<double> in2 = random_tensor(rng, 1, 2, 8, 12);
  auto out2 = down.forward(in2);
  CHECK(out2.H == 4);
  CHECK(out2.W == 6);
}

TEST_CASE("GroupNorm gradients and normalization") {
  Rng rng(17);
  nn::GroupNorm<double> gn;
  gn.setup("g", 6, 3);
  std::vector<ParamRef<double>> params;
  gn.collect(params);
  // non-trivial affine so gamma/beta gradients are exercised
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.value->size(); ++i)
      p.value->data()[i] = 0.5 + 0.2 * rng.normal();

  BTensor<double> in = random_tensor(rng, 2, 6, 3, 4);
  Probe probe;
  probe.match(gn.forward(in), rng);

  for (auto& p : params) p.grad->setZero();
  auto out = gn.forward(in);
  auto gin = gn.backward(probe.grad(out));
  auto fwd = [&]() { return probe.loss(gn.forward(in)); };
  check_grads(params, &in.data, &gin.data, fwd, 1e-5);
}

TEST_CASE("GroupNorm normalizes each group to zero mean unit variance") {
  Rng rng(3);
  nn::GroupNorm<double> gn;
  gn.setup("g", 8, 4);
  BTensor<double> in = random_tensor(rng, 1, 8, 6, 6);
  in.data.array() += 3.0;
  auto out = gn.forward(in);
  auto block = out.data.block(0, 0, 2, 36);  // first group of sample 0
  CHECK(std::abs(block.mean()) < 1e-10);
  CHECK(block.array().square().mean() == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("BatchNorm2d gradients, running stats, eval determinism") {
  Rng rng(23);
  nn::BatchNorm2d<double> bn;
  bn.setup("b", 4);
  std::vector<ParamRef<double>> params;
  bn.collect(params);
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.value->size(); ++i)
      p.value->data()[i] = 0.8 + 0.1 * rng.normal();

  BTensor<double> in = random_tensor(rng, 3, 4, 4, 5);
  in.data.array() += 1.5;
  Probe probe;
  probe.match(bn.forward(in, true), rng);

  for (auto& p : params) p.grad->setZero();
  auto out = bn.forward(in, true);
  auto gin = bn.backward(probe.grad(out));
  auto fwd = [&]() { return probe.loss(bn.forward(in, true)); };
  check_grads(params, &in.data, &gin.data, fwd, 1e-5);

  // eval path: pure function of running stats
  auto e1 = bn.forward(in, false);
  auto e2 = bn.forward(in, false);
  CHECK(e1.data == e2.data);

  // running mean drifts toward the batch mean
  std::vector<ParamRef<double>> state;
  bn.collect_state(state);
  CHECK(state[0].name.find("run_mean") != std::string::npos);
  CHECK(state[0].value->col(0).mean() > 0.0);
}

TEST_CASE("activation gradients") {
  Rng rng(31);
  BTensor<double> in = random_tensor(rng, 2, 3, 4, 4);

  nn::SiLU<double> silu;
  Probe p1;
  p1.match(silu.forward(in), rng);
  auto g1 = silu.backward(p1.grad(silu.forward(in)));
  check_grads({}, &in.data, &g1.data,
              [&]() { return p1.loss(silu.forward(in)); });

  nn::LeakyReLU<double> lrelu(0.2);
  Probe p2;
  p2.match(lrelu.forward(in), rng);
  auto g2 = lrelu.backward(p2.grad(lrelu.forward(in)));
  check_grads({}, &in.data, &g2.data,
              [&]() { return p2.loss(lrelu.forward(in)); });
}

TEST_CASE("Linear gradients") {
  Rng rng(37);
  nn::Linear<double> lin;
  lin.setup("l", 5, 3);
  lin.init(rng);
  MatX<double> in(4, 5);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();

  MatX<double> r(4, 3);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();

  std::vector<ParamRef<double>> params;
  lin.collect(params);
  for (auto& p : params) p.grad->setZero();
  MatX<double> out = lin.forward(in);
  MatX<double> gin = lin.backward(r);

  auto fwd = [&]() { return (lin.forward(in).array() * r.array()).sum(); };
  check_grads(params, &in, &gin, fwd);
}

TEST_CASE("Upsample2x forward and backward") {
  Rng rng(43);
  BTensor<double> in = random_tensor(rng, 2, 2, 3, 4);
  nn::Upsample2x<double> up;
  auto out = up.forward(in);
  CHECK(out.H == 6);
  CHECK(out.W == 8);
  CHECK(out.data(0, out.col(0, 5, 7)) == in.data(0, in.col(0, 2, 3)));
  CHECK(out.data(1, out.col(1, 0, 1)) == in.data(1, in.col(1, 0, 0)));

  Probe probe;
  probe.match(out, rng);
  auto gin = up.backward(probe.grad(out));
  check_grads({}, &in.data, &gin.data,
              [&]() { return probe.loss(up.forward(in)); });
}

TEST_CASE("Adam converges on a quadratic and clips gradients") {
  MatX<float> w(1, 1), g(1, 1);
  w(0, 0) = 10.0f;
  std::vector<ParamRef<float>> params = {{"w", &w, &g}};
  nn::Adam<float> opt(params, 0.1f);
  for (int i = 0; i < 2000; ++i) {
    g(0, 0) = 2.0f * (w(0, 0) - 3.0f);
    opt.step();
  }
  CHECK(w(0, 0) == doctest::Approx(3.0f).epsilon(1e-3));

  g(0, 0) = 30.0f;
  const double norm = opt.clip_global_norm(1.0);
  CHECK(norm == doctest::Approx(30.0));
  CHECK(g(0, 0) == doctest::Approx(1.0f));
}

TEST_CASE("sinusoidal embedding basics") {
  auto e1 = nn::sinusoidal_embedding<float>(1, 64);
  auto e2 = nn::sinusoidal_embedding<float>(1000, 64);
  REQUIRE(e1.size() == 64);
  CHECK(e1.allFinite());
  CHECK((e1 - e2).cwiseAbs().maxCoeff() > 0.1f);
  CHECK_THROWS_AS(nn::sinusoidal_embedding<float>(1, 63), ConfigError);
}
