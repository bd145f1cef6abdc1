#include "resgrad/scorenet.hpp"

#include <cmath>
#include <utility>

namespace resgrad {

void ScoreNetArch::validate() const {
  if (depth < 1) throw ConfigError("scorenet: depth must be >= 1");
  if (base_channels < 8 || base_channels % 8 != 0)
    throw ConfigError("scorenet: base_channels must be a positive multiple of 8");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
    throw ConfigError("scorenet: time_embed_dim must be even and >= 2");
  if (mid_blocks < 1) throw ConfigError("scorenet: mid_blocks must be >= 1");
  if (channel_mult.size() != static_cast<size_t>(depth) + 1)
    throw ConfigError("scorenet: channel_mult needs depth+1 entries");
  for (int m : channel_mult)
    if (m < 1) throw ConfigError("scorenet: channel multipliers must be >= 1");
}

ScoreNetArch ScoreNetArch::preset(const std::string& name) {
  ScoreNetArch arch;  // default ~2.0M
  if (name == "default") {
  } else if (name == "large") {
    arch.base_channels = 32;  // ~7.9M
  } else if (name == "tiny") {
    arch.base_channels = 8;
    arch.depth = 1;
    arch.time_embed_dim = 32;
    arch.mid_blocks = 1;
    arch.channel_mult = {1, 2};
  } else {
    throw ConfigError("unknown scorenet preset: " + name);
  }
  arch.validate();
  return arch;
}

namespace {

template <typename S>
nn::MatX<S> silu_mat(const nn::MatX<S>& x) {
  return (x.array() * (S(1) / (S(1) + (-x.array()).exp()))).matrix();
}

template <typename S>
nn::MatX<S> silu_mat_grad(const nn::MatX<S>& x, const nn::MatX<S>& gout) {
  auto sig = S(1) / (S(1) + (-x.array()).exp());
  return (gout.array() * sig * (S(1) + x.array() * (S(1) - sig))).matrix();
}

template <typename S>
nn::BTensor<S> concat_channels(const nn::BTensor<S>& a, const nn::BTensor<S>& b) {
  nn::BTensor<S> out;
  out.B = a.B; out.C = a.C + b.C; out.H = a.H; out.W = a.W;
  out.data.resize(out.C, a.data.cols());
  out.data.topRows(a.C) = a.data;
  out.data.bottomRows(b.C) = b.data;
  return out;
}

// Index into the source row for reflect-101 padding of a length-n axis.
inline int reflect_index(int i, int n) {
  if (i < n) return i;
  const int r = 2 * n - 2 - i;
  return n > 1 ? (r >= 0 ? r : 0) : 0;
}

}  // namespace

template <typename S>
ScoreNetT<S>::ScoreNetT(const ScoreNetArch& arch, const NoiseSchedule& sched,
                        uint64_t seed)
    : arch_(arch), sched_(sched) {
  arch_.validate();
  const int d = arch_.depth;
  const int ted = arch_.time_embed_dim;

  stem_.setup("stem", 2, arch_.channels_at(0), 3, 1, 1);
  down_rb_.resize(static_cast<size_t>(d));
  down_conv_.resize(static_cast<size_t>(d));
  for (int l = 0; l < d; ++l) {
    down_rb_[static_cast<size_t>(l)].setup("down" + std::to_string(l),
                                           arch_.channels_at(l),
                                           arch_.channels_at(l), ted);
    down_conv_[static_cast<size_t>(l)].setup("downc" + std::to_string(l),
                                             arch_.channels_at(l),
                                             arch_.channels_at(l + 1), 3, 2, 1);
  }
  mid_.resize(static_cast<size_t>(arch_.mid_blocks));
  for (int m = 0; m < arch_.mid_blocks; ++m)
    mid_[static_cast<size_t>(m)].setup("mid" + std::to_string(m),
                                       arch_.channels_at(d),
                                       arch_.channels_at(d), ted);
  up_samp_.resize(static_cast<size_t>(d));
  up_conv_.resize(static_cast<size_t>(d));
  up_rb_.resize(static_cast<size_t>(d));
  for (int l = 0; l < d; ++l) {
    up_conv_[static_cast<size_t>(l)].setup("upc" + std::to_string(l),
                                           arch_.channels_at(l + 1),
                                           arch_.channels_at(l), 3, 1, 1);
    up_rb_[static_cast<size_t>(l)].setup("up" + std::to_string(l),
                                         2 * arch_.channels_at(l),
                                         arch_.channels_at(l), ted);
  }
  head_gn_.setup("head.gn", arch_.channels_at(0), 8);
  head_conv_.setup("head.conv", arch_.channels_at(0), 1, 3, 1, 1);
  tmlp1_.setup("tmlp.l1", ted, 4 * ted);
  tmlp2_.setup("tmlp.l2", 4 * ted, ted);

  Rng rng(derive_seed(seed, 0x73636e74u));
  stem_.init(rng);
  for (auto& rb : down_rb_) rb.init(rng);
  for (auto& c : down_conv_) c.init(rng);
  for (auto& rb : mid_) rb.init(rng);
  for (auto& c : up_conv_) c.init(rng);
  for (auto& rb : up_rb_) rb.init(rng);
  head_conv_.init(rng, 0.1);  // fresh net predicts a small eps-hat
  tmlp1_.init(rng);
  tmlp2_.init(rng);
}

template <typename S>
nn::MatX<S> ScoreNetT<S>::time_embed(const std::vector<int>& ts) {
  const int ted = arch_.time_embed_dim;
  nn::MatX<S> emb0(static_cast<Eigen::Index>(ts.size()), ted);
  for (size_t b = 0; b < ts.size(); ++b)
    emb0.row(static_cast<Eigen::Index>(b)) =
        nn::sinusoidal_embedding<S>(ts[b], ted).transpose();
  mlp_h1_ = tmlp1_.forward(emb0);
  temb_ = tmlp2_.forward(silu_mat(mlp_h1_));
  temb_silu_ = silu_mat(temb_);
  return temb_silu_;
}

template <typename S>
nn::BTensor<S> ScoreNetT<S>::raw_forward(const nn::BTensor<S>& xc,
                                         const std::vector<int>& ts) {
  if (xc.C != 2) throw ConfigError("scorenet: input must stack (x_t, c)");
  if (static_cast<int>(ts.size()) != xc.B)
    throw ConfigError("scorenet: one timestep per batch entry required");
  const int grain = 1 << arch_.depth;
  if (xc.H % grain != 0 || xc.W % grain != 0)
    throw ConfigError("scorenet: raw input dims must be multiples of 2^depth");

  const nn::MatX<S> temb = time_embed(ts);
  nn::BTensor<S> x = stem_.forward(xc);
  skip_cache_.clear();
  for (int l = 0; l < arch_.depth; ++l) {
    x = down_rb_[static_cast<size_t>(l)].forward(x, temb);
    skip_cache_.push_back(x);
    x = down_conv_[static_cast<size_t>(l)].forward(x);
  }
  for (auto& rb : mid_) x = rb.forward(x, temb);
  for (int l = arch_.depth - 1; l >= 0; --l) {
    x = up_conv_[static_cast<size_t>(l)].forward(
        up_samp_[static_cast<size_t>(l)].forward(x));
    x = concat_channels(x, skip_cache_[static_cast<size_t>(l)]);
    x = up_rb_[static_cast<size_t>(l)].forward(x, temb);
  }
  return head_conv_.forward(head_act_.forward(head_gn_.forward(x)));
}

template <typename S>
nn::BTensor<S> ScoreNetT<S>::raw_backward(const nn::BTensor<S>& gout) {
  nn::BTensor<S> g = head_gn_.backward(head_act_.backward(head_conv_.backward(gout)));
  nn::MatX<S> gtemb = nn::MatX<S>::Zero(temb_.rows(), temb_.cols());

  std::vector<nn::BTensor<S>> gskip(static_cast<size_t>(arch_.depth));
  for (int l = 0; l < arch_.depth; ++l) {
    g = up_rb_[static_cast<size_t>(l)].backward(g, gtemb);
    const int ch = arch_.channels_at(l);
    nn::BTensor<S> gmain;
    gmain.B = g.B; gmain.C = ch; gmain.H = g.H; gmain.W = g.W;
    gmain.data = g.data.topRows(ch);
    gskip[static_cast<size_t>(l)].B = g.B;
    gskip[static_cast<size_t>(l)].C = ch;
    gskip[static_cast<size_t>(l)].H = g.H;
    gskip[static_cast<size_t>(l)].W = g.W;
    gskip[static_cast<size_t>(l)].data = g.data.bottomRows(ch);
    g = up_samp_[static_cast<size_t>(l)].backward(
        up_conv_[static_cast<size_t>(l)].backward(gmain));
  }
  for (auto it = mid_.rbegin(); it != mid_.rend(); ++it) g = it->backward(g, gtemb);
  for (int l = arch_.depth - 1; l >= 0; --l) {
    g = down_conv_[static_cast<size_t>(l)].backward(g);
    g.data += gskip[static_cast<size_t>(l)].data;
    g = down_rb_[static_cast<size_t>(l)].backward(g, gtemb);
  }
  g = stem_.backward(g);

  // time-MLP backward: per-block projections consumed silu(temb)
  nn::MatX<S> gt = silu_mat_grad(temb_, gtemb);
  gt = tmlp2_.backward(gt);
  gt = silu_mat_grad(mlp_h1_, gt);
  tmlp1_.backward(gt);
  return g;
}

template <typename S>
Mat ScoreNetT<S>::forward(const Mat& x_t, int t, const Mat& c) {
  if (x_t.rows() != c.rows() || x_t.cols() != c.cols())
    throw ConfigError("scorenet: x_t and c must share a shape");
  if (t < 1 || t > sched_.T) throw ConfigError("scorenet: t out of range");
  const int H = static_cast<int>(x_t.rows());
  const int W = static_cast<int>(x_t.cols());
  const int grain = 1 << arch_.depth;
  const int Hp = (H + grain - 1) / grain * grain;
  const int Wp = (W + grain - 1) / grain * grain;

  nn::BTensor<S> xc;
  xc.resize(1, 2, Hp, Wp);
  for (int y = 0; y < Hp; ++y) {
    const int sy = reflect_index(y, H);
    for (int x = 0; x < Wp; ++x) {
      const int sx = reflect_index(x, W);
      xc.data(0, xc.col(0, y, x)) = static_cast<S>(x_t(sy, sx));
      xc.data(1, xc.col(0, y, x)) = static_cast<S>(c(sy, sx));
    }
  }

  nn::BTensor<S> out = raw_forward(xc, {t});
  const double scale = -1.0 / std::sqrt(1.0 - sched_.alpha_bar_t(t));
  Mat score(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      score(y, x) = scale * static_cast<double>(out.data(0, out.col(0, y, x)));
  if (!score.allFinite())
    throw NumericalError("score network produced non-finite output");
  return score;
}

template <typename S>
std::vector<nn::ParamRef<S>> ScoreNetT<S>::params() {
  std::vector<nn::ParamRef<S>> out;
  stem_.collect(out);
  for (auto& rb : down_rb_) rb.collect(out);
  for (auto& c : down_conv_) c.collect(out);
  for (auto& rb : mid_) rb.collect(out);
  for (auto& c : up_conv_) c.collect(out);
  for (auto& rb : up_rb_) rb.collect(out);
  head_gn_.collect(out);
  head_conv_.collect(out);
  tmlp1_.collect(out);
  tmlp2_.collect(out);
  return out;
}

template <typename S>
int64_t ScoreNetT<S>::param_count() {
  int64_t n = 0;
  for (const auto& p : params()) n += p.value->size();
  return n;
}

template class ScoreNetT<float>;
template class ScoreNetT<double>;

}  // namespace resgrad
