#pragma once
// ResUNet-style direct regression baseline: one-shot map from the base mel to
// the residual. Much larger than the score net by design; exists to reproduce
// the regression-vs-diffusion ablation.

#include <cstdint>
#include <string>
#include <vector>

#include "resgrad/mat.hpp"
#include "resgrad/mel.hpp"
#include "resgrad/nn.hpp"
#include "resgrad/residual.hpp"
#include "resgrad/sampler.hpp"
#include "resgrad/train.hpp"

namespace resgrad {

// Encoder/decoder with BN + LeakyReLU + conv blocks, additive skips, and a
// deep 512-channel bottleneck at 1/16 resolution.
class RegBaseline {
 public:
  static constexpr int kDepth = 4;
  static constexpr int kBottomBlocks = 9;

  explicit RegBaseline(int base_channels, uint64_t seed);

  nn::BTensor<float> raw_forward(const nn::BTensor<float>& c, bool training);
  nn::BTensor<float> raw_backward(const nn::BTensor<float>& gout);

  // Eval-mode single-sample inference on a standardized conditioning mel;
  // reflect-pads to a multiple of 2^depth and crops back.
  Mat predict(const Mat& c_std);

  std::vector<nn::ParamRef<float>> params();       // trainable
  std::vector<nn::ParamRef<float>> state();        // BN running stats
  std::vector<nn::ParamRef<float>> all_tensors();  // params + state
  int64_t param_count();
  int base_channels() const { return base_; }

 private:
  struct Block {  // BN -> LeakyReLU -> conv3x3
    nn::BatchNorm2d<float> bn;
    nn::LeakyReLU<float> act;
    nn::Conv2d<float> conv;
    bool training = false;

    void setup(const std::string& name, int cin, int cout);
    void init(Rng& rng);
    nn::BTensor<float> forward(const nn::BTensor<float>& in, bool train_mode);
    nn::BTensor<float> backward(const nn::BTensor<float>& gout);
    void collect(std::vector<nn::ParamRef<float>>& out);
    void collect_state(std::vector<nn::ParamRef<float>>& out);
  };

  int channels_at(int level) const;

  int base_ = 16;
  nn::Conv2d<float> stem_;
  std::vector<Block> down_blk_;
  std::vector<nn::Conv2d<float>> down_conv_;
  std::vector<Block> mid_;
  std::vector<nn::Upsample2x<float>> up_samp_;
  std::vector<nn::Conv2d<float>> up_conv_;
  std::vector<Block> up_blk_;
  Block head_;

  std::vector<nn::BTensor<float>> skip_cache_;
};

// MSE fit of model(c_std) to the standardized residual over seeded patches;
// same optimizer, clipping, logging, and checkpoint cadence as the diffusion
// trainer. Mutates model in place.
TrainResult fit_baseline(RegBaseline& model, const BuiltDataset& ds,
                         const TrainConfig& cfg, CheckpointInfo info,
                         const std::string& out_dir);

RefinementResult refine_with_baseline(const MelSpectrogram& base_mel,
                                      RegBaseline& model,
                                      const ResidualStats& res_stats,
                                      const ResidualStats& cond_stats);

}  // namespace resgrad
