#include "resgrad/schedule.hpp"

#include <cmath>

#include "resgrad/errors.hpp"

namespace resgrad {

NoiseSchedule make_schedule(int T, double beta_1, double beta_T) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  if (!(0.0 < beta_1 && beta_1 <= beta_T && beta_T < 1.0))
    throw ConfigError("schedule needs 0 < beta_1 <= beta_T < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<size_t>(T));
  s.alpha.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double b =
        T == 1 ? beta_1 : beta_1 + (beta_T - beta_1) * t / (T - 1);
    s.beta[static_cast<size_t>(t)] = b;
    s.alpha[static_cast<size_t>(t)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  return s;
}

namespace {
void check_t(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T) throw ConfigError("timestep out of range");
}
}  // namespace

NoisedSample q_sample(const Mat& x0, int t, const Mat& eps,
                      const NoiseSchedule& sched) {
  check_t(t, sched);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw DataError("q_sample: shape mismatch");
  const double ab = sched.alpha_bar_t(t);
  NoisedSample out;
  out.t = t;
  out.eps = eps;
  out.x_t = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
  return out;
}

Mat score_target(const Mat& eps, int t, const NoiseSchedule& sched) {
  check_t(t, sched);
  const double denom = std::sqrt(1.0 - sched.alpha_bar_t(t));
  if (denom == 0.0) throw NumericalError("score_target: alpha_bar_t == 1");
  return (-1.0 / denom) * eps;
}

Mat gaussian_analytic_score(const Mat& x_t, int t, double mu, double var,
                            const NoiseSchedule& sched) {
  check_t(t, sched);
  if (var < 0.0) throw ConfigError("gaussian_analytic_score: var must be >= 0");
  const double ab = sched.alpha_bar_t(t);
  const double marginal_var = ab * var + (1.0 - ab);
  return (-(x_t.array() - std::sqrt(ab) * mu) / marginal_var).matrix();
}

}  // namespace resgrad
