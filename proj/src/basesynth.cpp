#include "resgrad/basesynth.hpp"

#include <algorithm>
#include <cmath>

#include "resgrad/errors.hpp"
#include "resgrad/rng.hpp"

namespace resgrad {

PitchMode pitch_mode_from_string(const std::string& s) {
  if (s == "gt_pitch") return PitchMode::gt_pitch;
  if (s == "pred_pitch") return PitchMode::pred_pitch;
  throw ConfigError("unknown pitch mode: " + s);
}

std::string to_string(PitchMode m) {
  return m == PitchMode::gt_pitch ? "gt_pitch" : "pred_pitch";
}

BaseKind base_kind_from_string(const std::string& s) {
  if (s == "blur") return BaseKind::blur;
  if (s == "regressor") return BaseKind::regressor;
  throw ConfigError("unknown base model kind: " + s);
}

std::string to_string(BaseKind k) {
  return k == BaseKind::blur ? "blur" : "regressor";
}

namespace {

// Truncated, normalized 1-D Gaussian; radius floor(4*sigma).
std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::floor(4.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Convolve along rows (axis 0) with reflect boundary.
Mat conv_axis0(const Mat& in, const std::vector<double>& kernel) {
  if (kernel.size() == 1) return in;
  const int radius = static_cast<int>(kernel.size() / 2);
  Mat out = Mat::Zero(in.rows(), in.cols());
  const int n = static_cast<int>(in.rows());
  for (int r = 0; r < n; ++r)
    for (int j = -radius; j <= radius; ++j)
      out.row(r) += kernel[static_cast<size_t>(j + radius)] * in.row(reflect(r + j, n));
  return out;
}

}  // namespace

MelSpectrogram blur_corrupt(const MelSpectrogram& mel, double sigma_time,
                            double sigma_freq) {
  if (sigma_time < 0.0 || sigma_freq < 0.0)
    throw ConfigError("blur sigmas must be >= 0");
  if (sigma_time == 0.0 && sigma_freq == 0.0) return mel;
  Mat v = conv_axis0(mel.values, gaussian_kernel(sigma_time));  // time = rows
  v = conv_axis0(v.transpose(), gaussian_kernel(sigma_freq)).transpose();
  MelSpectrogram out;
  out.config = mel.config;
  out.values = quantize_f32(v);
  return out;
}

MelSpectrogram pitch_warp(const MelSpectrogram& mel, int shift_bins) {
  const int n = static_cast<int>(mel.values.cols());
  if (std::abs(shift_bins) >= n / 4)
    throw ConfigError("pitch shift too large for " + std::to_string(n) + " bins");
  if (shift_bins == 0) return mel;
  MelSpectrogram out;
  out.config = mel.config;
  out.values.resize(mel.values.rows(), n);
  for (int j = 0; j < n; ++j) {
    const int src = std::clamp(j - shift_bins, 0, n - 1);
    out.values.col(j) = mel.values.col(src);
  }
  return out;
}

int pitch_shift_for_utterance(const BaseModel& base, int utt_index) {
  if (base.pitch_mode != PitchMode::pred_pitch) return 0;
  Rng rng(derive_seed(base.pitch_seed, 0x70697463u,
                      static_cast<uint64_t>(utt_index)));
  const int mag = rng.uniform_int(1, base.pitch_max_shift);
  return rng.uniform() < 0.5 ? -mag : mag;
}

FeatureSeq features_from_mel(const MelSpectrogram& mel) {
  const int n_mels = static_cast<int>(mel.values.cols());
  FeatureSeq f;
  f.values = Mat::Zero(mel.values.rows(), kFeatureBands);
  for (int b = 0; b < kFeatureBands; ++b) {
    const int lo = b * n_mels / kFeatureBands;
    const int hi = (b + 1) * n_mels / kFeatureBands;
    f.values.col(b) =
        mel.values.middleCols(lo, hi - lo).rowwise().mean();
  }
  return f;
}

// --------------------------------------------------------------------------

namespace {
constexpr int kRegKernel = 9;

nn::BTensor<float> to_btensor(const Mat& features) {
  // frames x bands -> (B=1, C=bands, H=1, W=frames)
  nn::BTensor<float> t;
  t.resize(1, static_cast<int>(features.cols()), 1,
           static_cast<int>(features.rows()));
  for (int c = 0; c < t.C; ++c)
    for (int x = 0; x < t.W; ++x)
      t.data(c, x) = static_cast<float>(features(x, c));
  return t;
}
}  // namespace

MelRegressor::MelRegressor(int n_bands, int n_mels, int hidden, uint64_t seed)
    : n_bands_(n_bands), n_mels_(n_mels), hidden_(hidden) {
  // 1-D convs along time: kernels are 1 x k over height-1 tensors.
  c1_.setup("reg.c1", n_bands, hidden, 1, kRegKernel, 1, 0, kRegKernel / 2);
  c2_.setup("reg.c2", hidden, hidden, 1, kRegKernel, 1, 0, kRegKernel / 2);
  c3_.setup("reg.c3", hidden, n_mels, 1, kRegKernel, 1, 0, kRegKernel / 2);
  Rng rng(derive_seed(seed, 0x7265672du));
  c1_.init(rng);
  c2_.init(rng);
  c3_.init(rng);
}

Mat MelRegressor::predict(const Mat& features) {
  if (static_cast<int>(features.cols()) != n_bands_)
    throw DataError("regressor: feature band count mismatch");
  auto h = a2_.forward(c2_.forward(a1_.forward(c1_.forward(to_btensor(features)))));
  auto out = c3_.forward(h);
  Mat mel(features.rows(), n_mels_);
  for (int c = 0; c < n_mels_; ++c)
    for (int x = 0; x < out.W; ++x) mel(x, c) = out.data(c, x);
  return mel;
}

void MelRegressor::train_backward(const Mat& gout) {
  nn::BTensor<float> g;
  g.resize(1, n_mels_, 1, static_cast<int>(gout.rows()));
  for (int c = 0; c < n_mels_; ++c)
    for (int x = 0; x < g.W; ++x)
      g.data(c, x) = static_cast<float>(gout(x, c));
  c1_.backward(a1_.backward(c2_.backward(a2_.backward(c3_.backward(g)))));
}

std::vector<nn::ParamRef<float>> MelRegressor::params() {
  std::vector<nn::ParamRef<float>> out;
  c1_.collect(out);
  c2_.collect(out);
  c3_.collect(out);
  return out;
}

int64_t MelRegressor::param_count() const {
  return c1_.param_count() + c2_.param_count() + c3_.param_count();
}

BaseModel fit_regressor(const std::vector<FeatureSeq>& features,
                        const std::vector<MelSpectrogram>& targets,
                        const RegressorFitConfig& cfg) {
  if (features.empty() || features.size() != targets.size())
    throw DataError("fit_regressor: empty or misaligned dataset");
  const int n_mels = static_cast<int>(targets[0].values.cols());
  for (size_t i = 0; i < features.size(); ++i)
    if (features[i].values.rows() != targets[i].values.rows() ||
        targets[i].values.cols() != n_mels)
      throw DataError("fit_regressor: shape mismatch at item " +
                      std::to_string(i));

  auto reg = std::make_shared<MelRegressor>(kFeatureBands, n_mels, cfg.hidden,
                                            cfg.seed);
  nn::Adam<float> opt(reg->params(), static_cast<float>(cfg.lr));
  Rng rng(derive_seed(cfg.seed, 0x66697472u));
  for (int step = 0; step < cfg.steps; ++step) {
    const size_t i = static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(features.size()) - 1));
    opt.zero_grad();
    Mat pred = reg->train_forward(features[i].values);
    Mat diff = pred - targets[i].values;
    const double loss = diff.array().square().mean();
    if (!std::isfinite(loss))
      throw NumericalError("fit_regressor: loss diverged at step " +
                           std::to_string(step));
    reg->train_backward(2.0 / static_cast<double>(diff.size()) * diff);
    opt.clip_global_norm(1.0);
    opt.step();
  }

  BaseModel base;
  base.kind = BaseKind::regressor;
  base.regressor = reg;
  return base;
}

MelSpectrogram synthesize(const BaseModel& base, const MelSpectrogram& mel,
                          int utt_index) {
  if (base.kind != BaseKind::blur)
    throw ConfigError("synthesize: this base model expects FeatureSeq input");
  MelSpectrogram in = mel;
  const int shift = pitch_shift_for_utterance(base, utt_index);
  if (shift != 0) in = pitch_warp(in, shift);
  return blur_corrupt(in, base.sigma_time, base.sigma_freq);
}

MelSpectrogram synthesize(const BaseModel& base, const FeatureSeq& features,
                          const MelConfig& cfg, int utt_index) {
  if (base.kind != BaseKind::regressor || !base.regressor)
    throw ConfigError("synthesize: this base model expects mel input");
  MelSpectrogram out;
  out.config = cfg;
  out.values = quantize_f32(base.regressor->predict(features.values));
  const int shift = pitch_shift_for_utterance(base, utt_index);
  if (shift != 0) out = pitch_warp(out, shift);
  return out;
}

}  // namespace resgrad
