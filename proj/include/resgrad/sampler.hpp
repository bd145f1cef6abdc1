#pragma once
// Reverse-process inference: step-subsampled ancestral sampling of the
// residual and the final additive refinement.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "resgrad/errors.hpp"
#include "resgrad/mel.hpp"
#include "resgrad/residual.hpp"
#include "resgrad/rng.hpp"
#include "resgrad/schedule.hpp"

namespace resgrad {

enum class SigmaKind { beta, beta_tilde };

SigmaKind sigma_kind_from_string(const std::string& s);
std::string to_string(SigmaKind k);

struct SamplerPlan {
  int N = 0;
  std::vector<int> t_seq;  // strictly decreasing, t_seq[0] = T, ends at 1
  SigmaKind sigma_kind = SigmaKind::beta_tilde;
};

// Evenly spaced timesteps: round(linspace(T, 1, N)), deduplicated.
SamplerPlan plan_steps(int T, int N,
                       SigmaKind sigma_kind = SigmaKind::beta_tilde);

// One reverse step t -> t_next. t_next = 0 means "emit the predicted x_0"
// (the z draw is ignored on that final step).
Mat ancestral_step(const Mat& x_t, int t, int t_next, const Mat& score,
                   const NoiseSchedule& sched, const Mat& z, SigmaKind kind);

struct RefinementResult {
  MelSpectrogram mel_ref;
  Mat residual_hat;             // mel_ref - base, bit-exact by construction
  std::vector<Mat> trajectory;  // intermediate x_t, destandardized
  double wall_time = 0.0;       // sampling loop only, seconds
};

// Runs the reverse chain in standardized residual space conditioned on the
// (standardized) base mel, then destandardizes. Net needs
// Mat score(const Mat& x_t, int t, const Mat& c).
template <typename Net>
Mat sample_residual(Net& net, const Mat& c_raw, const SamplerPlan& plan,
                    const NoiseSchedule& sched, const ResidualStats& res_stats,
                    const ResidualStats& cond_stats, uint64_t seed,
                    std::vector<Mat>* trajectory = nullptr) {
  if (plan.t_seq.empty() || plan.t_seq.front() != sched.T)
    throw ConfigError("sampler plan does not match the schedule's T");
  const Mat c = (c_raw.array() - cond_stats.mean) / cond_stats.std;

  Rng rng(derive_seed(seed, 0x73616d70u));
  const auto draw_normal = [&rng](Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
  };

  Mat x = draw_normal(c.rows(), c.cols());  // x_T ~ N(0, I)
  const Mat zero = Mat::Zero(c.rows(), c.cols());
  for (size_t i = 0; i < plan.t_seq.size(); ++i) {
    const int t = plan.t_seq[i];
    const int t_next = i + 1 < plan.t_seq.size() ? plan.t_seq[i + 1] : 0;
    const Mat s = net.score(x, t, c);
    const Mat z = t_next > 0 ? draw_normal(c.rows(), c.cols()) : zero;
    x = ancestral_step(x, t, t_next, s, sched, z, plan.sigma_kind);
    if (trajectory)
      trajectory->push_back((x.array() * res_stats.std + res_stats.mean).matrix());
  }
  return (x.array() * res_stats.std + res_stats.mean).matrix();
}

// mel_ref = base + sampled residual, requantized to the float32 grid;
// residual_hat is stored as the post-quantization difference so the
// additivity invariant holds bit-exactly.
template <typename Net>
RefinementResult refine(const MelSpectrogram& base_mel, Net& net,
                        const SamplerPlan& plan, const NoiseSchedule& sched,
                        const ResidualStats& res_stats,
                        const ResidualStats& cond_stats, uint64_t seed,
                        bool keep_trajectory = false) {
  RefinementResult out;
  const auto t0 = std::chrono::steady_clock::now();
  Mat res = sample_residual(net, base_mel.values, plan, sched, res_stats,
                            cond_stats, seed,
                            keep_trajectory ? &out.trajectory : nullptr);
  out.mel_ref.config = base_mel.config;
  out.mel_ref.values = quantize_f32(base_mel.values + res);
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_time = std::chrono::duration<double>(t1 - t0).count();
  out.residual_hat = out.mel_ref.values - base_mel.values;
  return out;
}

}  // namespace resgrad
