#pragma once
// Surrogate for the fast non-iterative base synthesizer f_psi: either a
// deterministic blur of the ground-truth mel or a small learned conv
// regressor, optionally with a seeded pitch displacement to emulate the
// predicted-pitch training condition.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "resgrad/mel.hpp"
#include "resgrad/nn.hpp"

namespace resgrad {

enum class PitchMode { gt_pitch, pred_pitch };
enum class BaseKind { blur, regressor };

PitchMode pitch_mode_from_string(const std::string& s);
std::string to_string(PitchMode m);
BaseKind base_kind_from_string(const std::string& s);
std::string to_string(BaseKind k);

// Per-frame conditioning features for the regressor variant: a coarse
// band-average of the target mel standing in for the text input.
struct FeatureSeq {
  Mat values;  // frames x n_bands
};

constexpr int kFeatureBands = 8;

FeatureSeq features_from_mel(const MelSpectrogram& mel);

// Small 1-D conv stack over frames: bands -> hidden -> hidden -> n_mels.
class MelRegressor {
 public:
  MelRegressor(int n_bands, int n_mels, int hidden, uint64_t seed);

  Mat predict(const Mat& features);  // frames x n_mels

  std::vector<nn::ParamRef<float>> params();
  int64_t param_count() const;

  // forward with caches + backward for the L2 fit; grad flows into params()
  Mat train_forward(const Mat& features) { return predict(features); }
  void train_backward(const Mat& gout);

  int n_bands() const { return n_bands_; }
  int n_mels() const { return n_mels_; }
  int hidden() const { return hidden_; }

 private:
  int n_bands_, n_mels_, hidden_;
  nn::Conv2d<float> c1_, c2_, c3_;
  nn::SiLU<float> a1_, a2_;
};

struct BaseModel {
  BaseKind kind = BaseKind::blur;
  double sigma_time = 2.0;
  double sigma_freq = 2.0;
  PitchMode pitch_mode = PitchMode::gt_pitch;
  int pitch_max_shift = 3;
  uint64_t pitch_seed = 0;
  std::shared_ptr<MelRegressor> regressor;  // set when kind == regressor
};

// Separable Gaussian smoothing (time axis then frequency axis), reflect
// boundary, kernel truncated at 4 sigma. Output stays on the float32 grid so
// residual arithmetic against quantized ground truth is exact.
MelSpectrogram blur_corrupt(const MelSpectrogram& mel, double sigma_time,
                            double sigma_freq);

// Frequency-axis roll with edge replication; positive shift moves energy to
// higher bins.
MelSpectrogram pitch_warp(const MelSpectrogram& mel, int shift_bins);

// The seeded per-utterance displacement used in pred_pitch mode (never 0, so
// the ablation direction is unambiguous).
int pitch_shift_for_utterance(const BaseModel& base, int utt_index);

struct RegressorFitConfig {
  int steps = 2000;
  double lr = 1e-3;
  uint64_t seed = 0;
  int hidden = 48;
};

BaseModel fit_regressor(const std::vector<FeatureSeq>& features,
                        const std::vector<MelSpectrogram>& targets,
                        const RegressorFitConfig& cfg);

MelSpectrogram synthesize(const BaseModel& base, const MelSpectrogram& mel,
                          int utt_index = 0);
MelSpectrogram synthesize(const BaseModel& base, const FeatureSeq& features,
                          const MelConfig& cfg, int utt_index = 0);

}  // namespace resgrad
