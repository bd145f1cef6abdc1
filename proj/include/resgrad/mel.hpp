#pragma once

#include <string>

#include "resgrad/mat.hpp"
#include "resgrad/wav.hpp"

namespace resgrad {

struct MelConfig {
  int n_mels = 80;
  int n_fft = 1024;
  int hop = 256;
  int win = 0;  // 0 means n_fft
  double fmin = 80.0;
  double fmax = 7600.0;
  int sample_rate = 22050;
  double log_floor = 1e-5;

  int win_or_default() const { return win > 0 ? win : n_fft; }
  void validate() const;
  bool operator==(const MelConfig&) const = default;
};

// Extraction parameters for the three corpora.
MelConfig preset_config(const std::string& name);

struct MelSpectrogram {
  Mat values;  // frames x n_mels, natural-log amplitude, float32-gridded
  MelConfig config;

  int frames() const { return static_cast<int>(values.rows()); }
  int n_mels() const { return static_cast<int>(values.cols()); }
  double audio_seconds() const {
    return static_cast<double>(frames()) * config.hop / config.sample_rate;
  }
};

// Quantized clamp floor; every extracted entry is >= this.
double mel_log_floor(const MelConfig& cfg);

// HTK-spaced triangular filterbank, n_mels x (n_fft/2 + 1), no normalization.
Mat mel_filterbank(const MelConfig& cfg);

// Center frequencies (Hz) of the triangular filters.
Vec mel_center_frequencies(const MelConfig& cfg);

// Magnitude STFT (periodic Hann, reflect center padding) -> filterbank ->
// clamp at log_floor -> natural log. Frame count is floor(len/hop) + 1.
MelSpectrogram extract_mel(const AudioClip& clip, const MelConfig& cfg);

// Classical phase reconstruction through the filterbank pseudo-inverse.
// Deterministic (zero-phase init); output length is frames * hop.
AudioClip griffin_lim_invert(const MelSpectrogram& mel, int iters);

// || |STFT(x)| - M ||_F / ||M||_F against the linear magnitudes the inversion
// targeted; exposed for convergence checks.
double spectral_convergence(const AudioClip& clip, const MelSpectrogram& mel);

}  // namespace resgrad
