#include "resgrad/train.hpp"

#include <cmath>
#include <cstdio>

#include "resgrad/errors.hpp"

namespace resgrad {

void TrainConfig::validate() const {
  if (lr <= 0 || steps < 1 || batch < 1 || T < 1 || crop_seconds <= 0 ||
      log_every < 1 || ckpt_every < 1 || patch_frames < 1)
    throw ConfigError("train config: all settings must be positive");
  if (!(0 < beta_1 && beta_1 <= beta_T && beta_T < 1))
    throw ConfigError("train config: need 0 < beta_1 <= beta_T < 1");
}

TrainResult train_scorenet(ScoreNet& net, const BuiltDataset& ds,
                           const TrainConfig& cfg, CheckpointInfo info,
                           const std::string& out_dir) {
  cfg.validate();
  if (ds.samples.empty()) throw DataError("training dataset is empty");
  if (net.schedule().T != cfg.T)
    throw ConfigError("train config T does not match the network's schedule");
  const int grain = 1 << net.arch().depth;
  if (cfg.patch_frames % grain != 0 || ds.config.n_mels % grain != 0)
    throw ConfigError("patch_frames and n_mels must be multiples of 2^depth");
  for (const auto& s : ds.samples)
    if (s.values.rows() < cfg.patch_frames)
      throw DataError("a training sample is shorter than patch_frames");

  const NoiseSchedule& sched = net.schedule();
  const int P = cfg.patch_frames;
  const int M = ds.config.n_mels;
  const int B = cfg.batch;
  const Eigen::Index pixels = static_cast<Eigen::Index>(P) * M;

  nn::Adam<float> opt(net.params(), static_cast<float>(cfg.lr));

  info.kind = "score";
  info.arch = net.arch();
  info.T = cfg.T;
  info.beta_1 = cfg.beta_1;
  info.beta_T = cfg.beta_T;
  info.res_stats = ds.res_stats;
  info.cond_stats = ds.cond_stats;
  info.mel = ds.config;
  info.param_count = net.param_count();

  TrainResult result;
  double ema = 0.0;
  bool ema_init = false;

  nn::BTensor<float> xc, eps;
  std::vector<int> ts(static_cast<size_t>(B));
  std::vector<double> w(static_cast<size_t>(B));  // 1/(1 - abar_t) per slot

  for (int step = 1; step <= cfg.steps; ++step) {
    xc.resize(B, 2, P, M);
    eps.resize(B, 1, P, M);
    for (int b = 0; b < B; ++b) {
      Rng rng(derive_seed(cfg.seed, 0x7472636eu, static_cast<uint64_t>(step),
                          static_cast<uint64_t>(b)));
      const auto& s = ds.samples[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int>(ds.samples.size()) - 1))];
      const int frames = static_cast<int>(s.values.rows());
      const int start = frames > P ? rng.uniform_int(0, frames - P) : 0;
      const int t = rng.uniform_int(1, cfg.T);
      ts[static_cast<size_t>(b)] = t;
      const double ab = sched.alpha_bar_t(t);
      w[static_cast<size_t>(b)] = 1.0 / (1.0 - ab);
      const double sq_ab = std::sqrt(ab);
      const double sq1m = std::sqrt(1.0 - ab);
      for (int y = 0; y < P; ++y) {
        for (int x = 0; x < M; ++x) {
          const double e = rng.normal();
          const double x0 = s.values(start + y, x);
          const double c = (s.cond(start + y, x) - ds.cond_stats.mean) /
                           ds.cond_stats.std;
          const Eigen::Index col = xc.col(b, y, x);
          xc.data(0, col) = static_cast<float>(sq_ab * x0 + sq1m * e);
          xc.data(1, col) = static_cast<float>(c);
          eps.data(0, col) = static_cast<float>(e);
        }
      }
    }

    opt.zero_grad();
    nn::BTensor<float> raw = net.raw_forward(xc, ts);

    // Eq. 3 with s = -raw/sqrt(1-abar): mean_b mean_px (raw - eps)^2/(1-abar)
    double loss = 0.0;
    nn::BTensor<float> gout;
    gout.resize(B, 1, P, M);
    for (int b = 0; b < B; ++b) {
      auto diff = raw.data.row(0).segment(raw.sample_offset(b), pixels) -
                  eps.data.row(0).segment(eps.sample_offset(b), pixels);
      loss += w[static_cast<size_t>(b)] *
              static_cast<double>(diff.template cast<double>().squaredNorm()) /
              static_cast<double>(pixels);
      const double gscale =
          2.0 * w[static_cast<size_t>(b)] / (static_cast<double>(pixels) * B);
      gout.data.row(0).segment(gout.sample_offset(b), pixels) =
          diff * static_cast<float>(gscale);
    }
    loss /= B;
    if (!std::isfinite(loss))
      throw NumericalError("training loss became non-finite at step " +
                           std::to_string(step));

    net.raw_backward(gout);
    opt.clip_global_norm(1.0);
    opt.step();

    if (!ema_init) {
      ema = loss;
      ema_init = true;
      result.initial_ema = ema;
    } else {
      ema = 0.99 * ema + 0.01 * loss;
    }
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      result.loss_log.emplace_back(step, ema);
      std::fprintf(stderr, "step %6d  loss %.6f  ema %.6f\n", step, loss, ema);
    }
    if (!out_dir.empty() &&
        (step % cfg.ckpt_every == 0 || step == cfg.steps)) {
      info.step = step;
      save_checkpoint(out_dir, info, net.params());
    }
    result.steps_done = step;
  }
  result.final_ema = ema;
  return result;
}

}  // namespace resgrad
