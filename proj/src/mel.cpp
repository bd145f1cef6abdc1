#include "resgrad/mel.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include "resgrad/errors.hpp"

namespace resgrad {

namespace {

std::mutex g_fftw_plan_mutex;  // FFTW planning is not thread-safe

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;

// Periodic Hann of length win, centered in an n_fft buffer.
std::vector<double> make_window(const MelConfig& cfg) {
  const int win = cfg.win_or_default();
  std::vector<double> w(static_cast<size_t>(cfg.n_fft), 0.0);
  const int off = (cfg.n_fft - win) / 2;
  for (int i = 0; i < win; ++i)
    w[static_cast<size_t>(off + i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);
  return w;
}

int reflect_index(int i, int len) {
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
  }
  return i;
}

class FftPlan {
 public:
  explicit FftPlan(int n) : n_(n), in_(n), out_(static_cast<size_t>(n) / 2 + 1) {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fwd_ = fftw_plan_dft_r2c_1d(n, in_.data(),
                                reinterpret_cast<fftw_complex*>(out_.data()),
                                FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(out_.data()),
                                in_.data(), FFTW_ESTIMATE);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void forward(const double* frame, std::complex<double>* spec) {
    std::copy(frame, frame + n_, in_.begin());
    fftw_execute(fwd_);
    std::copy(out_.begin(), out_.end(), spec);
  }

  // c2r destroys its input; scales by n (FFTW convention), undone here.
  void inverse(const std::complex<double>* spec, double* frame) {
    std::copy(spec, spec + n_ / 2 + 1, out_.begin());
    fftw_execute(inv_);
    for (int i = 0; i < n_; ++i) frame[i] = in_[static_cast<size_t>(i)] / n_;
  }

 private:
  int n_;
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

CMat stft(const std::vector<double>& samples, const MelConfig& cfg) {
  const int len = static_cast<int>(samples.size());
  const int pad = cfg.n_fft / 2;
  const int n_frames = len / cfg.hop + 1;
  const int n_bins = cfg.n_fft / 2 + 1;
  const auto window = make_window(cfg);

  CMat spec(n_frames, n_bins);
  FftPlan fft(cfg.n_fft);
  std::vector<double> frame(static_cast<size_t>(cfg.n_fft));
  for (int f = 0; f < n_frames; ++f) {
    const int start = f * cfg.hop - pad;
    for (int i = 0; i < cfg.n_fft; ++i)
      frame[static_cast<size_t>(i)] =
          samples[static_cast<size_t>(reflect_index(start + i, len))] *
          window[static_cast<size_t>(i)];
    fft.forward(frame.data(), spec.row(f).data());
  }
  return spec;
}

// Overlap-add with squared-window normalization; returns the centered signal
// of length frames * hop (the reflect padding is trimmed).
std::vector<double> istft(const CMat& spec, const MelConfig& cfg) {
  const int n_frames = static_cast<int>(spec.rows());
  const int pad = cfg.n_fft / 2;
  const auto window = make_window(cfg);
  const int buf_len = (n_frames - 1) * cfg.hop + cfg.n_fft;

  std::vector<double> acc(static_cast<size_t>(buf_len), 0.0);
  std::vector<double> wsum(static_cast<size_t>(buf_len), 0.0);
  FftPlan fft(cfg.n_fft);
  std::vector<double> frame(static_cast<size_t>(cfg.n_fft));
  for (int f = 0; f < n_frames; ++f) {
    fft.inverse(spec.row(f).data(), frame.data());
    const int start = f * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double w = window[static_cast<size_t>(i)];
      acc[static_cast<size_t>(start + i)] += frame[static_cast<size_t>(i)] * w;
      wsum[static_cast<size_t>(start + i)] += w * w;
    }
  }
  const int out_len = n_frames * cfg.hop;
  std::vector<double> out(static_cast<size_t>(out_len), 0.0);
  for (int i = 0; i < out_len; ++i) {
    const int j = i + pad;
    if (j < buf_len && wsum[static_cast<size_t>(j)] > 1e-10)
      out[static_cast<size_t>(i)] = acc[static_cast<size_t>(j)] / wsum[static_cast<size_t>(j)];
  }
  return out;
}

// Linear magnitudes the inversion targets: exp(mel) through the pseudo-inverse.
Mat target_magnitudes(const MelSpectrogram& mel) {
  const Mat fb = mel_filterbank(mel.config);
  Eigen::MatrixXd pinv =
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(fb).pseudoInverse();
  Mat amp = mel.values.array().exp().matrix();
  Mat mag = amp * pinv.transpose();
  return mag.cwiseMax(0.0);
}

}  // namespace

void MelConfig::validate() const {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (n_fft < 2 || hop < 1 || hop > n_fft) throw ConfigError("need 1 <= hop <= n_fft");
  if (win_or_default() > n_fft) throw ConfigError("win must be <= n_fft");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (!(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0))
    throw ConfigError("need 0 <= fmin < fmax <= sample_rate/2");
  if (log_floor <= 0.0) throw ConfigError("log_floor must be positive");
}

MelConfig preset_config(const std::string& name) {
  MelConfig cfg;
  if (name == "ljspeech") {
    cfg.n_mels = 80; cfg.n_fft = 1024; cfg.hop = 256;
    cfg.fmin = 80.0; cfg.fmax = 7600.0; cfg.sample_rate = 22050;
  } else if (name == "libritts") {
    cfg.n_mels = 80; cfg.n_fft = 2048; cfg.hop = 300;
    cfg.fmin = 80.0; cfg.fmax = 7600.0; cfg.sample_rate = 24000;
  } else if (name == "vctk") {
    cfg.n_mels = 128; cfg.n_fft = 2048; cfg.hop = 480;
    cfg.fmin = 0.0; cfg.fmax = 24000.0; cfg.sample_rate = 48000;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  cfg.validate();
  return cfg;
}

double mel_log_floor(const MelConfig& cfg) {
  return quantize_f32(std::log(cfg.log_floor));
}

Mat mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);

  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  Mat fb = Mat::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double c = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double rise = (f - lo) / (c - lo);
      const double fall = (hi - f) / (hi - c);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

Vec mel_center_frequencies(const MelConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  Vec centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
  return centers;
}

MelSpectrogram extract_mel(const AudioClip& clip, const MelConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw DataError("sample-rate mismatch: clip " + std::to_string(clip.sample_rate) +
                    " vs config " + std::to_string(cfg.sample_rate));
  if (static_cast<int>(clip.samples.size()) < cfg.win_or_default())
    throw DataError("clip shorter than one analysis window");

  const CMat spec = stft(clip.samples, cfg);
  const Mat fb = mel_filterbank(cfg);
  Mat mag = spec.cwiseAbs();
  Mat mel = mag * fb.transpose();
  mel = mel.cwiseMax(cfg.log_floor).array().log().matrix();

  MelSpectrogram out;
  out.values = quantize_f32(mel);
  out.config = cfg;
  return out;
}

AudioClip griffin_lim_invert(const MelSpectrogram& mel, int iters) {
  if (iters < 1) throw ConfigError("griffin_lim_invert needs iters >= 1");
  mel.config.validate();
  const MelConfig& cfg = mel.config;
  const Mat mag = target_magnitudes(mel);

  // zero-phase init keeps the inversion deterministic
  CMat spec = mag.cast<std::complex<double>>();
  for (int it = 0; it < iters; ++it) {
    const auto x = istft(spec, cfg);
    // re-analysis of frames*hop samples yields one extra boundary frame; drop it
    const CMat s = stft(x, cfg).topRows(spec.rows());
    for (Eigen::Index f = 0; f < s.rows(); ++f) {
      for (Eigen::Index k = 0; k < s.cols(); ++k) {
        const double a = std::abs(s(f, k));
        spec(f, k) = a > 1e-12 ? s(f, k) / a * mag(f, k)
                               : std::complex<double>(mag(f, k), 0.0);
      }
    }
  }

  AudioClip out;
  out.sample_rate = cfg.sample_rate;
  out.samples = istft(spec, cfg);
  return out;
}

double spectral_convergence(const AudioClip& clip, const MelSpectrogram& mel) {
  const Mat target = target_magnitudes(mel);
  const CMat s = stft(clip.samples, mel.config);
  Mat mag = s.cwiseAbs();
  const Eigen::Index rows = std::min(mag.rows(), target.rows());
  const double num = (mag.topRows(rows) - target.topRows(rows)).norm();
  const double den = target.topRows(rows).norm();
  return den > 0.0 ? num / den : num;
}

}  // namespace resgrad
