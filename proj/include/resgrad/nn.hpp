#pragma once
// Small dense-layer kit (conv / norm / linear / Adam) backing the score
// network, the regression baseline, and the surrogate regressor.
// Templated on the scalar: training runs in float, gradient tests replay the
// same code in double against finite differences.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "resgrad/errors.hpp"
#include "resgrad/rng.hpp"

namespace resgrad::nn {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Batched NCHW feature maps with channels as rows; column = (b*H + y)*W + x,
// so each sample occupies a contiguous column block of H*W per channel row.
template <typename S>
struct BTensor {
  int B = 0, C = 0, H = 0, W = 0;
  MatX<S> data;

  void resize(int b, int c, int h, int w) {
    B = b; C = c; H = h; W = w;
    data.setZero(c, static_cast<Eigen::Index>(b) * h * w);
  }
  Eigen::Index col(int b, int y, int x) const {
    return (static_cast<Eigen::Index>(b) * H + y) * W + x;
  }
  Eigen::Index sample_offset(int b) const {
    return static_cast<Eigen::Index>(b) * H * W;
  }
};

template <typename S>
struct ParamRef {
  std::string name;
  MatX<S>* value;
  MatX<S>* grad;
};

template <typename S>
struct Param {
  std::string name;
  MatX<S> value;
  MatX<S> grad;

  void setup(const std::string& n, int rows, int cols) {
    name = n;
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void collect(std::vector<ParamRef<S>>& out) {
    out.push_back({name, &value, &grad});
  }
};

// ---------------------------------------------------------------------------

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;

  void setup(const std::string& name, int cin, int cout, int k, int stride,
             int pad) {
    setup(name, cin, cout, k, k, stride, pad, pad);
  }

  // Rectangular kernels (kh x kw), used for 1-D convs over height-1 tensors.
  void setup(const std::string& name, int cin, int cout, int kh, int kw,
             int stride, int pad_h, int pad_w) {
    cin_ = cin; cout_ = cout; kh_ = kh; kw_ = kw; stride_ = stride;
    pad_h_ = pad_h; pad_w_ = pad_w;
    w_.setup(name + ".w", cout, cin * kh * kw);
    b_.setup(name + ".b", cout, 1);
  }

  // He-normal weights; pass gain 0 to zero-init (used for the last conv of
  // residual blocks and the output head).
  void init(Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / (cin_ * kh_ * kw_));
    for (Eigen::Index i = 0; i < w_.value.size(); ++i)
      w_.value.data()[i] = static_cast<S>(rng.normal() * std);
    b_.value.setZero();
  }

  BTensor<S> forward(const BTensor<S>& in) {
    if (in.C != cin_) throw ConfigError("Conv2d: channel mismatch");
    in_shape_ = {in.B, in.C, in.H, in.W};
    const int ho = (in.H + 2 * pad_h_ - kh_) / stride_ + 1;
    const int wo = (in.W + 2 * pad_w_ - kw_) / stride_ + 1;
    im2col(in, ho, wo);
    BTensor<S> out;
    out.resize(in.B, cout_, ho, wo);
    out.data.noalias() = w_.value * col_;
    out.data.colwise() += b_.value.col(0);
    return out;
  }

  BTensor<S> backward(const BTensor<S>& gout) {
    w_.grad.noalias() += gout.data * col_.transpose();
    b_.grad.col(0) += gout.data.rowwise().sum();
    MatX<S> gcol = w_.value.transpose() * gout.data;
    return col2im(gcol, gout.H, gout.W);
  }

  void collect(std::vector<ParamRef<S>>& out) {
    w_.collect(out);
    b_.collect(out);
  }
  int64_t param_count() const { return w_.value.size() + b_.value.size(); }

 private:
  void im2col(const BTensor<S>& in, int ho, int wo) {
    const int K = cin_ * kh_ * kw_;
    col_.resize(K, static_cast<Eigen::Index>(in.B) * ho * wo);
    col_.setZero();
    for (int b = 0; b < in.B; ++b) {
      for (int c = 0; c < cin_; ++c) {
        const S* src_ch = in.data.data() + c * in.data.cols() + in.sample_offset(b);
        for (int ky = 0; ky < kh_; ++ky) {
          for (int kx = 0; kx < kw_; ++kx) {
            const int r = (c * kh_ + ky) * kw_ + kx;
            S* dst_row = col_.data() + static_cast<Eigen::Index>(r) * col_.cols() +
                         static_cast<Eigen::Index>(b) * ho * wo;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride_ - pad_h_ + ky;
              if (iy < 0 || iy >= in.H) continue;
              const S* src = src_ch + static_cast<Eigen::Index>(iy) * in.W;
              S* dst = dst_row + static_cast<Eigen::Index>(oy) * wo;
              if (stride_ == 1) {
                const int x0 = std::max(0, pad_w_ - kx);
                const int x1 = std::min(wo, in.W + pad_w_ - kx);
                for (int ox = x0; ox < x1; ++ox) dst[ox] = src[ox - pad_w_ + kx];
              } else {
                for (int ox = 0; ox < wo; ++ox) {
                  const int ix = ox * stride_ - pad_w_ + kx;
                  if (ix >= 0 && ix < in.W) dst[ox] = src[ix];
                }
              }
            }
          }
        }
      }
    }
  }

  BTensor<S> col2im(const MatX<S>& gcol, int ho, int wo) {
    BTensor<S> gin;
    gin.resize(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    const int H = gin.H, W = gin.W;
    for (int b = 0; b < gin.B; ++b) {
      for (int c = 0; c < cin_; ++c) {
        S* dst_ch = gin.data.data() + c * gin.data.cols() + gin.sample_offset(b);
        for (int ky = 0; ky < kh_; ++ky) {
          for (int kx = 0; kx < kw_; ++kx) {
            const int r = (c * kh_ + ky) * kw_ + kx;
            const S* src_row = gcol.data() + static_cast<Eigen::Index>(r) * gcol.cols() +
                               static_cast<Eigen::Index>(b) * ho * wo;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride_ - pad_h_ + ky;
              if (iy < 0 || iy >= H) continue;
              S* dst = dst_ch + static_cast<Eigen::Index>(iy) * W;
              const S* src = src_row + static_cast<Eigen::Index>(oy) * wo;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride_ - pad_w_ + kx;
                if (ix >= 0 && ix < W) dst[ix] += src[ox];
              }
            }
          }
        }
      }
    }
    return gin;
  }

  int cin_ = 0, cout_ = 0, kh_ = 0, kw_ = 0, stride_ = 1, pad_h_ = 0, pad_w_ = 0;
  Param<S> w_, b_;
  MatX<S> col_;
  std::array<int, 4> in_shape_{};
};

// ---------------------------------------------------------------------------

template <typename S>
class GroupNorm {
 public:
  void setup(const std::string& name, int channels, int groups) {
    if (channels % groups != 0)
      throw ConfigError("GroupNorm: channels not divisible by groups");
    c_ = channels; g_ = groups;
    gamma_.setup(name + ".gamma", channels, 1);
    beta_.setup(name + ".beta", channels, 1);
    gamma_.value.setOnes();
  }

  BTensor<S> forward(const BTensor<S>& in) {
    if (in.C != c_) throw ConfigError("GroupNorm: channel mismatch");
    const int rows_per = c_ / g_;
    const Eigen::Index hw = static_cast<Eigen::Index>(in.H) * in.W;
    xhat_ = in.data;
    invstd_.resize(static_cast<size_t>(in.B) * g_);
    for (int b = 0; b < in.B; ++b) {
      for (int g = 0; g < g_; ++g) {
        auto block = xhat_.block(g * rows_per, in.sample_offset(b), rows_per, hw);
        const S mean = block.mean();
        const S var = (block.array() - mean).square().mean();
        const S inv = S(1) / std::sqrt(var + eps_);
        block = (block.array() - mean) * inv;
        invstd_[static_cast<size_t>(b) * g_ + g] = inv;
      }
    }
    BTensor<S> out;
    out.B = in.B; out.C = in.C; out.H = in.H; out.W = in.W;
    out.data = xhat_.array().colwise() * gamma_.value.col(0).array();
    out.data.colwise() += beta_.value.col(0);
    shape_ = {in.B, in.C, in.H, in.W};
    return out;
  }

  BTensor<S> backward(const BTensor<S>& gout) {
    gamma_.grad.col(0) += (gout.data.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad.col(0) += gout.data.rowwise().sum();
    const int rows_per = c_ / g_;
    const Eigen::Index hw = static_cast<Eigen::Index>(shape_[3]) * shape_[2];
    BTensor<S> gin;
    gin.resize(shape_[0], shape_[1], shape_[2], shape_[3]);
    MatX<S> gxhat = gout.data.array().colwise() * gamma_.value.col(0).array();
    for (int b = 0; b < shape_[0]; ++b) {
      for (int g = 0; g < g_; ++g) {
        auto gx = gxhat.block(g * rows_per, static_cast<Eigen::Index>(b) * hw,
                              rows_per, hw);
        auto xh = xhat_.block(g * rows_per, static_cast<Eigen::Index>(b) * hw,
                              rows_per, hw);
        const S n = static_cast<S>(rows_per * hw);
        const S sum_g = gx.sum();
        const S sum_gx = (gx.array() * xh.array()).sum();
        gin.data.block(g * rows_per, static_cast<Eigen::Index>(b) * hw, rows_per,
                       hw) =
            (invstd_[static_cast<size_t>(b) * g_ + g] / n) *
            (n * gx.array() - sum_g - xh.array() * sum_gx);
      }
    }
    return gin;
  }

  void collect(std::vector<ParamRef<S>>& out) {
    gamma_.collect(out);
    beta_.collect(out);
  }
  int64_t param_count() const { return 2 * c_; }

 private:
  int c_ = 0, g_ = 1;
  S eps_ = static_cast<S>(1e-5);
  Param<S> gamma_, beta_;
  MatX<S> xhat_;
  std::vector<S> invstd_;
  std::array<int, 4> shape_{};
};

// ---------------------------------------------------------------------------

// Per-channel batch normalization over batch+spatial, with running statistics
// for deterministic inference.
template <typename S>
class BatchNorm2d {
 public:
  void setup(const std::string& name, int channels) {
    c_ = channels;
    gamma_.setup(name + ".gamma", channels, 1);
    beta_.setup(name + ".beta", channels, 1);
    gamma_.value.setOnes();
    run_mean_.setup(name + ".run_mean", channels, 1);
    run_var_.setup(name + ".run_var", channels, 1);
    run_var_.value.setOnes();
  }

  BTensor<S> forward(const BTensor<S>& in, bool training) {
    if (in.C != c_) throw ConfigError("BatchNorm2d: channel mismatch");
    BTensor<S> out;
    out.B = in.B; out.C = in.C; out.H = in.H; out.W = in.W;
    if (training) {
      const S n = static_cast<S>(in.data.cols());
      mean_ = in.data.rowwise().mean();
      var_ = (in.data.colwise() - mean_).array().square().rowwise().mean();
      invstd_ = (var_.array() + eps_).sqrt().inverse();
      xhat_ = (in.data.colwise() - mean_).array().colwise() * invstd_.array();
      run_mean_.value.col(0) =
          (S(1) - momentum_) * run_mean_.value.col(0) + momentum_ * mean_;
      run_var_.value.col(0) =
          (S(1) - momentum_) * run_var_.value.col(0) +
          momentum_ * (var_ * (n / std::max(n - S(1), S(1))));
      out.data = xhat_.array().colwise() * gamma_.value.col(0).array();
      out.data.colwise() += beta_.value.col(0);
    } else {
      VecX<S> inv = (run_var_.value.col(0).array() + eps_).sqrt().inverse();
      out.data = ((in.data.colwise() - VecX<S>(run_mean_.value.col(0))).array()
                      .colwise() * (inv.array() * gamma_.value.col(0).array()));
      out.data.colwise() += beta_.value.col(0);
    }
    return out;
  }

  BTensor<S> backward(const BTensor<S>& gout) {
    gamma_.grad.col(0) += (gout.data.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad.col(0) += gout.data.rowwise().sum();
    const S n = static_cast<S>(gout.data.cols());
    BTensor<S> gin;
    gin.B = gout.B; gin.C = gout.C; gin.H = gout.H; gin.W = gout.W;
    MatX<S> gxhat = gout.data.array().colwise() * gamma_.value.col(0).array();
    VecX<S> sum_g = gxhat.rowwise().sum();
    VecX<S> sum_gx = (gxhat.array() * xhat_.array()).rowwise().sum();
    gin.data = ((n * gxhat.array()).colwise() - sum_g.array()) -
               xhat_.array().colwise() * sum_gx.array();
    gin.data = gin.data.array().colwise() * (invstd_.array() / n);
    return gin;
  }

  // running stats are state, not trainable parameters, but they are collected
  // for checkpointing via state()
  void collect(std::vector<ParamRef<S>>& out) {
    gamma_.collect(out);
    beta_.collect(out);
  }
  void collect_state(std::vector<ParamRef<S>>& out) {
    run_mean_.collect(out);
    run_var_.collect(out);
  }
  int64_t param_count() const { return 2 * c_; }

 private:
  int c_ = 0;
  S eps_ = static_cast<S>(1e-5);
  S momentum_ = static_cast<S>(0.1);
  Param<S> gamma_, beta_, run_mean_, run_var_;
  VecX<S> mean_, var_, invstd_;
  MatX<S> xhat_;
};

// ---------------------------------------------------------------------------

template <typename S>
class SiLU {
 public:
  BTensor<S> forward(const BTensor<S>& in) {
    sig_ = (S(1) / (S(1) + (-in.data.array()).exp())).matrix();
    x_ = in.data;
    BTensor<S> out;
    out.B = in.B; out.C = in.C; out.H = in.H; out.W = in.W;
    out.data = in.data.array() * sig_.array();
    return out;
  }
  BTensor<S> backward(const BTensor<S>& gout) {
    BTensor<S> gin;
    gin.B = gout.B; gin.C = gout.C; gin.H = gout.H; gin.W = gout.W;
    gin.data = gout.data.array() *
               (sig_.array() * (S(1) + x_.array() * (S(1) - sig_.array())));
    return gin;
  }

 private:
  MatX<S> sig_, x_;
};

template <typename S>
class LeakyReLU {
 public:
  explicit LeakyReLU(S slope = static_cast<S>(0.2)) : slope_(slope) {}
  BTensor<S> forward(const BTensor<S>& in) {
    mask_ = (in.data.array() > S(0)).template cast<S>();
    BTensor<S> out;
    out.B = in.B; out.C = in.C; out.H = in.H; out.W = in.W;
    out.data = in.data.array() * (mask_.array() + slope_ * (S(1) - mask_.array()));
    return out;
  }
  BTensor<S> backward(const BTensor<S>& gout) {
    BTensor<S> gin;
    gin.B = gout.B; gin.C = gout.C; gin.H = gout.H; gin.W = gout.W;
    gin.data = gout.data.array() * (mask_.array() + slope_ * (S(1) - mask_.array()));
    return gin;
  }

 private:
  S slope_;
  MatX<S> mask_;
};

// ---------------------------------------------------------------------------

// Rows are batch entries: in (B x in_dim) -> out (B x out_dim).
template <typename S>
class Linear {
 public:
  void setup(const std::string& name, int in_dim, int out_dim) {
    in_dim_ = in_dim; out_dim_ = out_dim;
    w_.setup(name + ".w", out_dim, in_dim);
    b_.setup(name + ".b", out_dim, 1);
  }

  void init(Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / in_dim_);
    for (Eigen::Index i = 0; i < w_.value.size(); ++i)
      w_.value.data()[i] = static_cast<S>(rng.normal() * std);
    b_.value.setZero();
  }

  MatX<S> forward(const MatX<S>& in) {
    in_ = in;
    MatX<S> out = in * w_.value.transpose();
    out.rowwise() += b_.value.col(0).transpose();
    return out;
  }

  MatX<S> backward(const MatX<S>& gout) {
    w_.grad.noalias() += gout.transpose() * in_;
    b_.grad.col(0) += gout.colwise().sum().transpose();
    return gout * w_.value;
  }

  void collect(std::vector<ParamRef<S>>& out) {
    w_.collect(out);
    b_.collect(out);
  }
  int64_t param_count() const { return w_.value.size() + b_.value.size(); }

 private:
  int in_dim_ = 0, out_dim_ = 0;
  Param<S> w_, b_;
  MatX<S> in_;
};

// ---------------------------------------------------------------------------

template <typename S>
class Upsample2x {
 public:
  BTensor<S> forward(const BTensor<S>& in) {
    BTensor<S> out;
    out.resize(in.B, in.C, in.H * 2, in.W * 2);
    for (int b = 0; b < in.B; ++b)
      for (int y = 0; y < out.H; ++y)
        for (int x = 0; x < out.W; ++x)
          out.data.col(out.col(b, y, x)) = in.data.col(in.col(b, y / 2, x / 2));
    return out;
  }
  BTensor<S> backward(const BTensor<S>& gout) {
    BTensor<S> gin;
    gin.resize(gout.B, gout.C, gout.H / 2, gout.W / 2);
    for (int b = 0; b < gout.B; ++b)
      for (int y = 0; y < gout.H; ++y)
        for (int x = 0; x < gout.W; ++x)
          gin.data.col(gin.col(b, y / 2, x / 2)) += gout.data.col(gout.col(b, y, x));
    return gin;
  }
};

// ---------------------------------------------------------------------------

template <typename S>
class Adam {
 public:
  Adam(std::vector<ParamRef<S>> params, S lr)
      : params_(std::move(params)), lr_(lr) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(MatX<S>::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(MatX<S>::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->setZero();
  }

  // Rescales all gradients so their global L2 norm is at most max_norm;
  // returns the pre-clip norm.
  double clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_)
      sq += static_cast<double>(p.grad->template cast<double>().squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
      const S scale = static_cast<S>(max_norm / norm);
      for (auto& p : params_) *p.grad *= scale;
    }
    return norm;
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& g = *params_[i].grad;
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * g;
      v_[i] = (beta2_ * v_[i].array() + (S(1) - beta2_) * g.array().square()).matrix();
      params_[i].value->array() -=
          (lr_ / bc1) * m_[i].array() /
          ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  int t() const { return t_; }
  void set_lr(S lr) { lr_ = lr; }

 private:
  std::vector<ParamRef<S>> params_;
  S lr_;
  S beta1_ = static_cast<S>(0.9);
  S beta2_ = static_cast<S>(0.999);
  S eps_ = static_cast<S>(1e-8);
  int t_ = 0;
  std::vector<MatX<S>> m_, v_;
};

// Sinusoidal position embedding of an integer timestep, dimension must be even.
template <typename S>
VecX<S> sinusoidal_embedding(int t, int dim) {
  if (dim % 2 != 0) throw ConfigError("time_embed_dim must be even");
  const int half = dim / 2;
  VecX<S> emb(dim);
  for (int i = 0; i < half; ++i) {
    const double freq =
        half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
    emb[i] = static_cast<S>(std::sin(t * freq));
    emb[half + i] = static_cast<S>(std::cos(t * freq));
  }
  return emb;
}

}  // namespace resgrad::nn
