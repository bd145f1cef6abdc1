#include "resgrad/regbaseline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "resgrad/errors.hpp"

namespace resgrad {

namespace {
// channel widths 1x, 2x, 4x, 8x, 32x of base: the bulk of the parameters sits
// in the wide bottleneck, keeping the >= 10x size ratio to the score net
// without blowing up compute at full resolution
constexpr int kMult[RegBaseline::kDepth + 1] = {1, 2, 4, 8, 32};

inline int reflect_index(int i, int n) {
  if (i < n) return i;
  const int r = 2 * n - 2 - i;
  return n > 1 ? (r >= 0 ? r : 0) : 0;
}
}  // namespace

void RegBaseline::Block::setup(const std::string& name, int cin, int cout) {
  bn.setup(name + ".bn", cin);
  conv.setup(name + ".conv", cin, cout, 3, 1, 1);
}

void RegBaseline::Block::init(Rng& rng) { conv.init(rng); }

nn::BTensor<float> RegBaseline::Block::forward(const nn::BTensor<float>& in,
                                               bool train_mode) {
  training = train_mode;
  return conv.forward(act.forward(bn.forward(in, train_mode)));
}

nn::BTensor<float> RegBaseline::Block::backward(const nn::BTensor<float>& gout) {
  return bn.backward(act.backward(conv.backward(gout)));
}

void RegBaseline::Block::collect(std::vector<nn::ParamRef<float>>& out) {
  bn.collect(out);
  conv.collect(out);
}

void RegBaseline::Block::collect_state(std::vector<nn::ParamRef<float>>& out) {
  bn.collect_state(out);
}

int RegBaseline::channels_at(int level) const { return base_ * kMult[level]; }

RegBaseline::RegBaseline(int base_channels, uint64_t seed)
    : base_(base_channels) {
  if (base_ < 1) throw ConfigError("resunet: base_channels must be positive");
  stem_.setup("stem", 1, channels_at(0), 3, 1, 1);
  down_blk_.resize(kDepth);
  down_conv_.resize(kDepth);
  for (int l = 0; l < kDepth; ++l) {
    down_blk_[static_cast<size_t>(l)].setup("down" + std::to_string(l),
                                            channels_at(l), channels_at(l));
    down_conv_[static_cast<size_t>(l)].setup("downc" + std::to_string(l),
                                             channels_at(l), channels_at(l + 1),
                                             3, 2, 1);
  }
  mid_.resize(kBottomBlocks);
  for (int m = 0; m < kBottomBlocks; ++m)
    mid_[static_cast<size_t>(m)].setup("mid" + std::to_string(m),
                                       channels_at(kDepth), channels_at(kDepth));
  up_samp_.resize(kDepth);
  up_conv_.resize(kDepth);
  up_blk_.resize(kDepth);
  for (int l = 0; l < kDepth; ++l) {
    up_conv_[static_cast<size_t>(l)].setup("upc" + std::to_string(l),
                                           channels_at(l + 1), channels_at(l),
                                           3, 1, 1);
    up_blk_[static_cast<size_t>(l)].setup("up" + std::to_string(l),
                                          channels_at(l), channels_at(l));
  }
  head_.setup("head", channels_at(0), 1);

  Rng rng(derive_seed(seed, 0x72756e74u));
  stem_.init(rng);
  for (auto& b : down_blk_) b.init(rng);
  for (auto& c : down_conv_) c.init(rng);
  for (auto& b : mid_) b.init(rng);
  for (auto& c : up_conv_) c.init(rng);
  for (auto& b : up_blk_) b.init(rng);
  head_.init(rng);
}

nn::BTensor<float> RegBaseline::raw_forward(const nn::BTensor<float>& c,
                                            bool training) {
  if (c.C != 1) throw ConfigError("resunet: input must be a single channel");
  const int grain = 1 << kDepth;
  if (c.H % grain != 0 || c.W % grain != 0)
    throw ConfigError("resunet: raw input dims must be multiples of 2^depth");
  nn::BTensor<float> x = stem_.forward(c);
  skip_cache_.clear();
  for (int l = 0; l < kDepth; ++l) {
    x = down_blk_[static_cast<size_t>(l)].forward(x, training);
    skip_cache_.push_back(x);
    x = down_conv_[static_cast<size_t>(l)].forward(x);
  }
  for (auto& b : mid_) x = b.forward(x, training);
  for (int l = kDepth - 1; l >= 0; --l) {
    x = up_conv_[static_cast<size_t>(l)].forward(
        up_samp_[static_cast<size_t>(l)].forward(x));
    x.data += skip_cache_[static_cast<size_t>(l)].data;  // additive skip
    x = up_blk_[static_cast<size_t>(l)].forward(x, training);
  }
  return head_.forward(x, training);
}

nn::BTensor<float> RegBaseline::raw_backward(const nn::BTensor<float>& gout) {
  nn::BTensor<float> g = head_.backward(gout);
  std::vector<nn::BTensor<float>> gskip(kDepth);
  for (int l = 0; l < kDepth; ++l) {
    g = up_blk_[static_cast<size_t>(l)].backward(g);
    gskip[static_cast<size_t>(l)] = g;  // additive skip branches the gradient
    g = up_samp_[static_cast<size_t>(l)].backward(
        up_conv_[static_cast<size_t>(l)].backward(g));
  }
  for (auto it = mid_.rbegin(); it != mid_.rend(); ++it) g = it->backward(g);
  for (int l = kDepth - 1; l >= 0; --l) {
    g = down_conv_[static_cast<size_t>(l)].backward(g);
    g.data += gskip[static_cast<size_t>(l)].data;
    g = down_blk_[static_cast<size_t>(l)].backward(g);
  }
  return stem_.backward(g);
}

Mat RegBaseline::predict(const Mat& c_std) {
  const int H = static_cast<int>(c_std.rows());
  const int W = static_cast<int>(c_std.cols());
  const int grain = 1 << kDepth;
  const int Hp = (H + grain - 1) / grain * grain;
  const int Wp = (W + grain - 1) / grain * grain;
  nn::BTensor<float> in;
  in.resize(1, 1, Hp, Wp);
  for (int y = 0; y < Hp; ++y) {
    const int sy = reflect_index(y, H);
    for (int x = 0; x < Wp; ++x)
      in.data(0, in.col(0, y, x)) =
          static_cast<float>(c_std(sy, reflect_index(x, W)));
  }
  nn::BTensor<float> out = raw_forward(in, false);
  Mat pred(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      pred(y, x) = static_cast<double>(out.data(0, out.col(0, y, x)));
  if (!pred.allFinite())
    throw NumericalError("resunet produced non-finite output");
  return pred;
}

std::vector<nn::ParamRef<float>> RegBaseline::params() {
  std::vector<nn::ParamRef<float>> out;
  stem_.collect(out);
  for (auto& b : down_blk_) b.collect(out);
  for (auto& c : down_conv_) c.collect(out);
  for (auto& b : mid_) b.collect(out);
  for (auto& c : up_conv_) c.collect(out);
  for (auto& b : up_blk_) b.collect(out);
  head_.collect(out);
  return out;
}

std::vector<nn::ParamRef<float>> RegBaseline::state() {
  std::vector<nn::ParamRef<float>> out;
  for (auto& b : down_blk_) b.collect_state(out);
  for (auto& b : mid_) b.collect_state(out);
  for (auto& b : up_blk_) b.collect_state(out);
  head_.collect_state(out);
  return out;
}

std::vector<nn::ParamRef<float>> RegBaseline::all_tensors() {
  auto out = params();
  auto st = state();
  out.insert(out.end(), st.begin(), st.end());
  return out;
}

int64_t RegBaseline::param_count() {
  int64_t n = 0;
  for (const auto& p : params()) n += p.value->size();
  return n;
}

TrainResult fit_baseline(RegBaseline& model, const BuiltDataset& ds,
                         const TrainConfig& cfg, CheckpointInfo info,
                         const std::string& out_dir) {
  cfg.validate();
  if (ds.samples.empty()) throw DataError("training dataset is empty");
  const int grain = 1 << RegBaseline::kDepth;
  if (cfg.patch_frames % grain != 0 || ds.config.n_mels % grain != 0)
    throw ConfigError("patch_frames and n_mels must be multiples of 2^depth");
  for (const auto& s : ds.samples)
    if (s.values.rows() < cfg.patch_frames)
      throw DataError("a training sample is shorter than patch_frames");

  const int P = cfg.patch_frames;
  const int M = ds.config.n_mels;
  const int B = cfg.batch;
  const Eigen::Index pixels = static_cast<Eigen::Index>(P) * M;

  nn::Adam<float> opt(model.params(), static_cast<float>(cfg.lr));

  info.kind = "resunet";
  info.resunet_base = model.base_channels();
  info.T = cfg.T;
  info.beta_1 = cfg.beta_1;
  info.beta_T = cfg.beta_T;
  info.res_stats = ds.res_stats;
  info.cond_stats = ds.cond_stats;
  info.mel = ds.config;
  info.param_count = model.param_count();

  TrainResult result;
  double ema = 0.0;
  bool ema_init = false;

  nn::BTensor<float> cin, target;
  for (int step = 1; step <= cfg.steps; ++step) {
    cin.resize(B, 1, P, M);
    target.resize(B, 1, P, M);
    for (int b = 0; b < B; ++b) {
      Rng rng(derive_seed(cfg.seed, 0x72756674u, static_cast<uint64_t>(step),
                          static_cast<uint64_t>(b)));
      const auto& s = ds.samples[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int>(ds.samples.size()) - 1))];
      const int frames = static_cast<int>(s.values.rows());
      const int start = frames > P ? rng.uniform_int(0, frames - P) : 0;
      for (int y = 0; y < P; ++y) {
        for (int x = 0; x < M; ++x) {
          const Eigen::Index col = cin.col(b, y, x);
          cin.data(0, col) = static_cast<float>(
              (s.cond(start + y, x) - ds.cond_stats.mean) / ds.cond_stats.std);
          target.data(0, col) = static_cast<float>(s.values(start + y, x));
        }
      }
    }

    opt.zero_grad();
    nn::BTensor<float> pred = model.raw_forward(cin, true);
    nn::BTensor<float> gout;
    gout.B = pred.B; gout.C = pred.C; gout.H = pred.H; gout.W = pred.W;
    gout.data = pred.data - target.data;
    const double loss =
        static_cast<double>(gout.data.cast<double>().squaredNorm()) /
        static_cast<double>(pixels * B);
    if (!std::isfinite(loss))
      throw NumericalError("baseline loss became non-finite at step " +
                           std::to_string(step));
    gout.data *= static_cast<float>(2.0 / static_cast<double>(pixels * B));
    model.raw_backward(gout);
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
      save_checkpoint(out_dir, info, model.all_tensors());
    }
    result.steps_done = step;
  }
  result.final_ema = ema;
  return result;
}

RefinementResult refine_with_baseline(const MelSpectrogram& base_mel,
                                      RegBaseline& model,
                                      const ResidualStats& res_stats,
                                      const ResidualStats& cond_stats) {
  RefinementResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const Mat c_std =
      (base_mel.values.array() - cond_stats.mean) / cond_stats.std;
  const Mat res =
      (model.predict(c_std).array() * res_stats.std + res_stats.mean).matrix();
  out.mel_ref.config = base_mel.config;
  out.mel_ref.values = quantize_f32(base_mel.values + res);
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_time = std::chrono::duration<double>(t1 - t0).count();
  out.residual_hat = out.mel_ref.values - base_mel.values;
  return out;
}

}  // namespace resgrad
