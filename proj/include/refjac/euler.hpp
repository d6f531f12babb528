#pragma once

#include "refjac/linalg.hpp"
#include "refjac/model.hpp"

#include <cmath>

namespace refjac {

// Coefficients frozen at the left end of one Euler-Maruyama step.
struct FrozenCoefficients {
  Vec drift;
  Mat sigma;
  Mat drift_jacobian;
  MatStack sigma_jacobians;
  bool constant_sigma = true;
};

inline FrozenCoefficients freeze(const CoefficientField& field, const Vec& x) {
  FrozenCoefficients c;
  c.drift = field.drift(x);
  c.sigma = field.sigma(x);
  c.drift_jacobian = field.drift_jacobian(x);
  c.constant_sigma = field.constant_sigma;
  if (!c.constant_sigma) c.sigma_jacobians = field.sigma_jacobians(x);
  return c;
}

// Per-path coefficient evaluation; state-independent fields are frozen once.
class CoefficientCache {
 public:
  CoefficientCache(const CoefficientField& field, const Vec& x0) : field_(field) {
    if (field.state_independent) frozen_ = freeze(field, x0);
  }
  const FrozenCoefficients& at(const Vec& x) {
    if (!field_.state_independent) frozen_ = freeze(field_, x);
    return frozen_;
  }

 private:
  const CoefficientField& field_;
  FrozenCoefficients frozen_;
};

// X + b dt + sigma dB
inline Vec euler_position(const Vec& x, const FrozenCoefficients& c, double dt, const Vec& dB) {
  return x + c.drift * dt + c.sigma * dB;
}

// Id + (d b) dt + sum_j (d sigma_j) dB^j, so that the free Jacobian update is
// H = M J (Euler step of the linearised equation).
inline Mat euler_propagator(const FrozenCoefficients& c, double dt, const Vec& dB) {
  const int d = static_cast<int>(dB.size());
  Mat m = Mat::Identity(d, d) + c.drift_jacobian * dt;
  if (!c.constant_sigma) {
    for (int j = 0; j < d; ++j) m += c.sigma_jacobians[j] * dB[j];
  }
  return m;
}

// Uniform steps of size dt followed, if needed, by one partial step so the
// final time equals the horizon exactly.
struct StepPlan {
  long full_steps = 0;
  double dt = 0.0;
  double last_dt = 0.0;  // zero when the horizon is a multiple of dt

  long total_steps() const { return full_steps + (last_dt > 0.0 ? 1 : 0); }
  double step_size(long k) const { return k < full_steps ? dt : last_dt; }
  // Time reached after step k (0-based); the last step lands on the horizon.
  double time_after(long k, double horizon) const {
    return k + 1 >= total_steps() ? horizon : static_cast<double>(k + 1) * dt;
  }
};

inline StepPlan plan_steps(double horizon, double dt) {
  StepPlan plan;
  plan.dt = dt;
  const double ratio = horizon / dt;
  long n = static_cast<long>(std::floor(ratio + 1e-9));
  double rest = horizon - static_cast<double>(n) * dt;
  if (rest <= 1e-9 * dt) rest = 0.0;
  plan.full_steps = n;
  plan.last_dt = rest;
  return plan;
}

}  // namespace refjac
