#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resgrad/errors.hpp"
#include "resgrad/rng.hpp"
#include "resgrad/schedule.hpp"
#include "resgrad/scorenet.hpp"

using namespace resgrad;

namespace {

Mat random_mat(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("parameter budgets: default and large presets") {
  NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  ScoreNet def(ScoreNetArch::preset("default"), sched, 1);
  CHECK(def.param_count() >= 1'800'000);
  CHECK(def.param_count() <= 2'200'000);

  ScoreNet big(ScoreNetArch::preset("large"), sched, 1);
  CHECK(big.param_count() >= 7'000'000);
  CHECK(big.param_count() <= 8'500'000);
}

TEST_CASE("param_count equals summation over collected tensors") {
  ScoreNet net(ScoreNetArch::preset("tiny"), 3);
  int64_t total = 0;
  for (const auto& p : net.params()) total += p.value->size();
  CHECK(total == net.param_count());
  CHECK(total > 0);
}

TEST_CASE("tiny net maps 16x16 to 16x16") {
  ScoreNet net(ScoreNetArch::preset("tiny"), 7);
  Mat x = random_mat(16, 16, 11);
  Mat c = random_mat(16, 16, 12);
  Mat s = net.forward(x, 500, c);
  CHECK(s.rows() == 16);
  CHECK(s.cols() == 16);
  CHECK(s.allFinite());
}

TEST_CASE("shape contract across frame counts incl. non-divisible") {
  ScoreNet net(ScoreNetArch::preset("tiny"), 7);
  for (int frames : {37, 64, 345}) {
    Mat x = random_mat(frames, 64, 100 + static_cast<uint64_t>(frames));
    Mat c = random_mat(frames, 64, 200 + static_cast<uint64_t>(frames));
    Mat s = net.forward(x, 250, c);
    CHECK(s.rows() == frames);
    CHECK(s.cols() == 64);
    CHECK(s.allFinite());
  }
}

TEST_CASE("forward is deterministic") {
  ScoreNet net(ScoreNetArch::preset("tiny"), 21);
  Mat x = random_mat(32, 32, 5);
  Mat c = random_mat(32, 32, 6);
  Mat a = net.forward(x, 700, c);
  Mat b = net.forward(x, 700, c);
  CHECK(a == b);

  // same seed, fresh net: identical weights, identical output
  ScoreNet net2(ScoreNetArch::preset("tiny"), 21);
  CHECK(net2.forward(x, 700, c) == a);
  ScoreNet net3(ScoreNetArch::preset("tiny"), 22);
  CHECK((net3.forward(x, 700, c) - a).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("conditioning is live on the default arch") {
  ScoreNet net(ScoreNetArch::preset("default"), 9);
  Mat x = random_mat(32, 64, 31);
  Mat c = random_mat(32, 64, 32);
  Mat base = net.forward(x, 400, c);
  Mat c2 = c;
  c2(7, 13) += 0.5;
  Mat moved = net.forward(x, 400, c2);
  CHECK((moved - base).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("time embedding distinguishes t=1 from t=T on a fresh net") {
  for (const char* preset : {"tiny", "default"}) {
    ScoreNet net(ScoreNetArch::preset(preset), 13);
    Mat x = random_mat(32, 64, 41);
    Mat c = random_mat(32, 64, 42);
    Mat s1 = net.forward(x, 1, c);
    Mat sT = net.forward(x, 1000, c);
    CHECK((s1 - sT).cwiseAbs().maxCoeff() > 1e-6);
  }
}

TEST_CASE("public forward equals -raw / sqrt(1 - alpha_bar_t)") {
  NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  ScoreNet net(ScoreNetArch::preset("tiny"), 17);
  const int t = 333;
  Mat x = random_mat(16, 16, 51);
  Mat c = random_mat(16, 16, 52);

  nn::BTensor<float> xc;
  xc.resize(1, 2, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int j = 0; j < 16; ++j) {
      xc.data(0, xc.col(0, y, j)) = static_cast<float>(x(y, j));
      xc.data(1, xc.col(0, y, j)) = static_cast<float>(c(y, j));
    }
  nn::BTensor<float> raw = net.raw_forward(xc, {t});
  Mat s = net.forward(x, t, c);
  const double scale = -1.0 / std::sqrt(1.0 - sched.alpha_bar_t(t));
  for (int y = 0; y < 16; ++y)
    for (int j = 0; j < 16; ++j)
      CHECK(s(y, j) ==
            doctest::Approx(scale * raw.data(0, raw.col(0, y, j))).epsilon(1e-12));
}

TEST_CASE("batched gradients match finite differences (double, tiny)") {
  ScoreNetT<double> net(ScoreNetArch::preset("tiny"), 23);
  const int B = 2, H = 8, W = 8;
  Rng rng(99);
  nn::BTensor<double> xc;
  xc.resize(B, 2, H, W);
  for (Eigen::Index i = 0; i < xc.data.size(); ++i)
    xc.data.data()[i] = rng.normal();
  std::vector<int> ts = {1, 900};

  nn::BTensor<double> R;
  R.resize(B, 1, H, W);
  for (Eigen::Index i = 0; i < R.data.size(); ++i)
    R.data.data()[i] = rng.normal();

  auto loss = [&]() {
    nn::BTensor<double> out = net.raw_forward(xc, ts);
    return (out.data.array() * R.data.array()).sum();
  };

  for (auto& p : net.params()) p.grad->setZero();
  net.raw_forward(xc, ts);
  nn::BTensor<double> gin = net.raw_backward(R);

  // spot-check a spread of parameter entries against central differences
  auto params = net.params();
  const double h = 1e-5;
  int checked = 0;
  for (size_t pi = 0; pi < params.size(); pi += 3) {
    auto& p = params[pi];
    const Eigen::Index n = p.value->size();
    for (Eigen::Index k = 0; k < n; k += std::max<Eigen::Index>(1, n / 2)) {
      double* v = p.value->data() + k;
      const double orig = *v;
      *v = orig + h;
      const double lp = loss();
      *v = orig - h;
      const double lm = loss();
      *v = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = p.grad->data()[k];
      CHECK(an == doctest::Approx(fd).epsilon(5e-4).scale(1.0));
      ++checked;
    }
  }
  CHECK(checked >= 20);

  // input gradient too
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::Index k = static_cast<Eigen::Index>(
        rng.uniform_int(0, static_cast<int>(xc.data.size()) - 1));
    double* v = xc.data.data() + k;
    const double orig = *v;
    *v = orig + h;
    const double lp = loss();
    *v = orig - h;
    const double lm = loss();
    *v = orig;
    const double fd = (lp - lm) / (2 * h);
    CHECK(gin.data.data()[k] == doctest::Approx(fd).epsilon(5e-4).scale(1.0));
  }
}

TEST_CASE("diffusion_loss runs on the real net and is finite") {
  ScoreNetT<double> net(ScoreNetArch::preset("tiny"), 29);
  NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  Mat x0 = random_mat(16, 16, 61);
  Mat c = random_mat(16, 16, 62);
  Mat eps = random_mat(16, 16, 63);
  const double l = diffusion_loss(net, x0, c, 500, eps, sched);
  CHECK(std::isfinite(l));
  CHECK(l >= 0.0);
}

TEST_CASE("invalid archs are rejected") {
  ScoreNetArch a;
  a.depth = 0;
  CHECK_THROWS_AS(a.validate(), ConfigError);

  ScoreNetArch b;
  b.channel_mult = {1, 2};  // depth 2 needs 3 entries
  CHECK_THROWS_AS(b.validate(), ConfigError);

  ScoreNetArch c;
  c.time_embed_dim = 33;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ScoreNetArch d;
  d.base_channels = 12;
  CHECK_THROWS_AS(d.validate(), ConfigError);

  CHECK_THROWS_AS(ScoreNetArch::preset("huge"), ConfigError);
}

TEST_CASE("mismatched shapes and bad t are rejected") {
  ScoreNet net(ScoreNetArch::preset("tiny"), 31);
  Mat x = random_mat(16, 16, 71);
  Mat c = random_mat(16, 18, 72);
  CHECK_THROWS_AS(net.forward(x, 10, c), ConfigError);
  Mat c2 = random_mat(16, 16, 73);
  CHECK_THROWS_AS(net.forward(x, 0, c2), ConfigError);
  CHECK_THROWS_AS(net.forward(x, 1001, c2), ConfigError);
}
