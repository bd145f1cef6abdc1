#pragma once
// Noise schedule and forward-process math for the residual DDPM.

#include <vector>

#include "resgrad/errors.hpp"
#include "resgrad/mat.hpp"

namespace resgrad {

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta[t-1] holds beta_t, t in [1, T]
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // running product of alpha

  double beta_t(int t) const { return beta[static_cast<size_t>(t) - 1]; }
  double alpha_t(int t) const { return alpha[static_cast<size_t>(t) - 1]; }
  // alpha_bar_t(0) == 1 by convention (no noise applied yet)
  double alpha_bar_t(int t) const {
    return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t) - 1];
  }
};

struct NoisedSample {
  Mat x_t;
  int t = 0;
  Mat eps;
};

NoiseSchedule make_schedule(int T, double beta_1, double beta_T);

NoisedSample q_sample(const Mat& x0, int t, const Mat& eps,
                      const NoiseSchedule& sched);

// Regression target for the score head: s = -eps / sqrt(1 - alpha_bar_t).
Mat score_target(const Mat& eps, int t, const NoiseSchedule& sched);

// Marginal score of the noised distribution when x_0 ~ N(mu, var); the
// sampler oracle tests run the reverse chain against this closed form.
Mat gaussian_analytic_score(const Mat& x_t, int t, double mu, double var,
                            const NoiseSchedule& sched);

// Score-matching objective on one sample; Net needs
// Mat score(const Mat& x_t, int t, const Mat& c).
template <typename Net>
double diffusion_loss(Net& net, const Mat& x0, const Mat& c, int t,
                      const Mat& eps, const NoiseSchedule& sched) {
  NoisedSample ns = q_sample(x0, t, eps, sched);
  Mat target = score_target(eps, t, sched);
  Mat s = net.score(ns.x_t, t, c);
  if (!s.allFinite()) throw NumericalError("score network produced non-finite output");
  return (s - target).array().square().mean();
}

}  // namespace resgrad
