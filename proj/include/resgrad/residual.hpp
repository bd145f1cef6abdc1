#pragma once
// Residual dataset construction: the diffusion model trains on
// x = mel_GT - mel_base with the paired base mel as conditioning.

#include <cstdint>
#include <vector>

#include "resgrad/mel.hpp"

namespace resgrad {

struct ResidualSample {
  Mat values;          // frames x n_mels residual (x_0)
  bool standardized = false;
  Mat cond;            // the paired mel_base, kept unstandardized
};

struct ResidualStats {
  double mean = 0.0;
  double std = 1.0;
};

ResidualSample compute_residual(const MelSpectrogram& mel_gt,
                                const MelSpectrogram& mel_base);

ResidualStats fit_stats(const std::vector<ResidualSample>& samples);

// Scalar mean/std for the conditioning inputs, same floor rule as fit_stats.
ResidualStats fit_cond_stats(const std::vector<ResidualSample>& samples);

ResidualSample standardize(const ResidualSample& s, const ResidualStats& stats);
ResidualSample destandardize(const ResidualSample& s, const ResidualStats& stats);

struct BuiltDataset {
  std::vector<ResidualSample> samples;  // standardized, cropped
  ResidualStats res_stats;              // fit on the given corpus before standardizing
  ResidualStats cond_stats;
  MelConfig config;
};

// Residuals for each (gt, base) pair, cropped to at most crop_seconds of
// frames with a seeded offset keyed by (epoch, pair index), then standardized
// by stats fit on the uncropped corpus.
BuiltDataset build_dataset(const std::vector<MelSpectrogram>& gt,
                           const std::vector<MelSpectrogram>& base,
                           double crop_seconds, uint64_t seed, int epoch = 0);

int max_crop_frames(const MelConfig& cfg, double crop_seconds);

}  // namespace resgrad
