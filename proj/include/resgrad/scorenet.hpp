#pragma once
// Conditional U-Net s_theta(x_t, t, c) over (frame x mel-bin) grids. The raw
// network predicts the noise eps-hat; the public forward rescales it to the
// score -eps_hat / sqrt(1 - alpha_bar_t), so the quantity the net itself must
// regress stays O(1) across all t.

#include <cstdint>
#include <string>
#include <vector>

#include "resgrad/errors.hpp"
#include "resgrad/mat.hpp"
#include "resgrad/nn.hpp"
#include "resgrad/rng.hpp"
#include "resgrad/schedule.hpp"

namespace resgrad {

struct ScoreNetArch {
  int base_channels = 16;
  int depth = 2;  // number of 2x downsamplings
  int time_embed_dim = 64;
  int mid_blocks = 8;
  std::vector<int> channel_mult = {1, 2, 7};

  void validate() const;
  int channels_at(int level) const {
    return base_channels * channel_mult[static_cast<size_t>(level)];
  }
  // "default" ~2.0M params, "large" ~7.9M, "tiny" for fast tests.
  static ScoreNetArch preset(const std::string& name);
};

namespace nn {

// GroupNorm -> SiLU -> conv3x3 -> (+ time proj) -> GroupNorm -> SiLU ->
// conv3x3(small-gain) -> + shortcut.
template <typename S>
class ResBlock {
 public:
  void setup(const std::string& name, int cin, int cout, int ted) {
    cin_ = cin;
    cout_ = cout;
    gn1_.setup(name + ".gn1", cin, 8);
    conv1_.setup(name + ".conv1", cin, cout, 3, 1, 1);
    tproj_.setup(name + ".tproj", ted, cout);
    gn2_.setup(name + ".gn2", cout, 8);
    conv2_.setup(name + ".conv2", cout, cout, 3, 1, 1);
    if (cin != cout) skip_.setup(name + ".skip", cin, cout, 1, 1, 0);
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    tproj_.init(rng);
    // Small (not zero) gain keeps a fresh block near-identity for stable deep
    // stacking while leaving the time/conditioning pathways live.
    conv2_.init(rng, 0.1);
    if (cin_ != cout_) skip_.init(rng);
  }

  BTensor<S> forward(const BTensor<S>& x, const MatX<S>& temb) {
    BTensor<S> h = conv1_.forward(act1_.forward(gn1_.forward(x)));
    tp_ = tproj_.forward(temb);  // B x cout, one bias per (sample, channel)
    const Eigen::Index hw = static_cast<Eigen::Index>(h.H) * h.W;
    for (int b = 0; b < h.B; ++b)
      for (int c = 0; c < h.C; ++c)
        h.data.row(c).segment(h.sample_offset(b), hw).array() += tp_(b, c);
    BTensor<S> out = conv2_.forward(act2_.forward(gn2_.forward(h)));
    if (cin_ != cout_)
      out.data += skip_.forward(x).data;
    else
      out.data += x.data;
    return out;
  }

  // Accumulates the gradient w.r.t. the (post-SiLU) time embedding into gtemb.
  BTensor<S> backward(const BTensor<S>& gout, MatX<S>& gtemb) {
    BTensor<S> gh = gn2_.backward(act2_.backward(conv2_.backward(gout)));
    MatX<S> gtp(gh.B, gh.C);
    const Eigen::Index hw = static_cast<Eigen::Index>(gh.H) * gh.W;
    for (int b = 0; b < gh.B; ++b)
      for (int c = 0; c < gh.C; ++c)
        gtp(b, c) = gh.data.row(c).segment(gh.sample_offset(b), hw).sum();
    gtemb += tproj_.backward(gtp);
    BTensor<S> gx = gn1_.backward(act1_.backward(conv1_.backward(gh)));
    if (cin_ != cout_)
      gx.data += skip_.backward(gout).data;
    else
      gx.data += gout.data;
    return gx;
  }

  void collect(std::vector<ParamRef<S>>& out) {
    gn1_.collect(out);
    conv1_.collect(out);
    tproj_.collect(out);
    gn2_.collect(out);
    conv2_.collect(out);
    if (cin_ != cout_) skip_.collect(out);
  }

 private:
  int cin_ = 0, cout_ = 0;
  GroupNorm<S> gn1_, gn2_;
  SiLU<S> act1_, act2_;
  Conv2d<S> conv1_, conv2_, skip_;
  Linear<S> tproj_;
  MatX<S> tp_;
};

}  // namespace nn

template <typename S>
class ScoreNetT {
 public:
  ScoreNetT(const ScoreNetArch& arch, const NoiseSchedule& sched, uint64_t seed);
  ScoreNetT(const ScoreNetArch& arch, uint64_t seed)
      : ScoreNetT(arch, make_schedule(1000, 1e-4, 0.02), seed) {}

  // Batched training path on pre-assembled 2-channel (x_t, c) tensors with one
  // timestep per sample. Returns the raw eps-hat prediction (1 channel).
  nn::BTensor<S> raw_forward(const nn::BTensor<S>& xc, const std::vector<int>& ts);
  nn::BTensor<S> raw_backward(const nn::BTensor<S>& gout);

  // Single-sample inference: reflect-pads to a multiple of 2^depth on both
  // axes, runs the net, crops back, and rescales eps-hat to the score.
  Mat forward(const Mat& x_t, int t, const Mat& c);
  Mat score(const Mat& x_t, int t, const Mat& c) { return forward(x_t, t, c); }

  std::vector<nn::ParamRef<S>> params();
  int64_t param_count();
  const ScoreNetArch& arch() const { return arch_; }
  const NoiseSchedule& schedule() const { return sched_; }

 private:
  nn::MatX<S> time_embed(const std::vector<int>& ts);

  ScoreNetArch arch_;
  NoiseSchedule sched_;

  nn::Conv2d<S> stem_;
  std::vector<nn::ResBlock<S>> down_rb_;
  std::vector<nn::Conv2d<S>> down_conv_;
  std::vector<nn::ResBlock<S>> mid_;
  std::vector<nn::Upsample2x<S>> up_samp_;
  std::vector<nn::Conv2d<S>> up_conv_;
  std::vector<nn::ResBlock<S>> up_rb_;
  nn::GroupNorm<S> head_gn_;
  nn::SiLU<S> head_act_;
  nn::Conv2d<S> head_conv_;
  nn::Linear<S> tmlp1_, tmlp2_;

  // caches for backward
  std::vector<nn::BTensor<S>> skip_cache_;
  nn::MatX<S> mlp_h1_, temb_, temb_silu_;
};

using ScoreNet = ScoreNetT<float>;

extern template class ScoreNetT<float>;
extern template class ScoreNetT<double>;

}  // namespace resgrad
