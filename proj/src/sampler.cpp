#include "resgrad/sampler.hpp"

#include <cmath>

namespace resgrad {

SigmaKind sigma_kind_from_string(const std::string& s) {
  if (s == "beta") return SigmaKind::beta;
  if (s == "beta_tilde") return SigmaKind::beta_tilde;
  throw ConfigError("unknown sigma_kind: " + s);
}

std::string to_string(SigmaKind k) {
  return k == SigmaKind::beta ? "beta" : "beta_tilde";
}

SamplerPlan plan_steps(int T, int N, SigmaKind sigma_kind) {
  if (N < 1 || N > T) throw ConfigError("plan_steps: need 1 <= N <= T");
  SamplerPlan plan;
  plan.sigma_kind = sigma_kind;
  if (N == 1) {
    plan.t_seq = {T};
  } else {
    for (int i = 0; i < N; ++i) {
      const double v = T + (1.0 - T) * i / (N - 1);  // linspace(T, 1, N)
      const int t = static_cast<int>(std::lround(v));
      if (plan.t_seq.empty() || t < plan.t_seq.back()) plan.t_seq.push_back(t);
    }
  }
  plan.N = static_cast<int>(plan.t_seq.size());
  return plan;
}

Mat ancestral_step(const Mat& x_t, int t, int t_next, const Mat& score,
                   const NoiseSchedule& sched, const Mat& z, SigmaKind kind) {
  if (t < 1 || t > sched.T || t_next < 0 || t_next >= t)
    throw ConfigError("ancestral_step: need T >= t > t_next >= 0");
  const double ab_t = sched.alpha_bar_t(t);
  const double sq1m = std::sqrt(1.0 - ab_t);

  // score parameterization back to the noise estimate, then invert Eq. 2
  const Mat eps_hat = -sq1m * score;
  const Mat x0_hat = (x_t - sq1m * eps_hat) / std::sqrt(ab_t);
  if (t_next == 0) {
    if (!x0_hat.allFinite())
      throw NumericalError("ancestral_step produced non-finite output");
    return x0_hat;
  }

  const double ab_next = sched.alpha_bar_t(t_next);
  const double alpha_eff = ab_t / ab_next;
  const double beta_eff = 1.0 - alpha_eff;
  const Mat mean = (std::sqrt(alpha_eff) * (1.0 - ab_next) * x_t +
                    std::sqrt(ab_next) * beta_eff * x0_hat) /
                   (1.0 - ab_t);
  const double var = kind == SigmaKind::beta
                         ? beta_eff
                         : (1.0 - ab_next) / (1.0 - ab_t) * beta_eff;
  Mat out = mean + std::sqrt(var) * z;
  if (!out.allFinite())
    throw NumericalError("ancestral_step produced non-finite output");
  return out;
}

}  // namespace resgrad
