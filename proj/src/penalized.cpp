#include "refjac/penalized.hpp"

#include "refjac/errors.hpp"
#include "refjac/euler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace refjac {

namespace {

void check_stability(double dt, double penalty, double limit) {
  if (dt * penalty > std::min(limit, 1.0) * (1.0 + 1e-12)) {
    throw StabilityError("penalized step: dt * n = " + std::to_string(dt * penalty) +
                         " exceeds the stability limit " + std::to_string(std::min(limit, 1.0)));
  }
}

void require_start(const DomainGeometry& g, const Vec& x, const char* who) {
  if (x.size() != g.dimension() || !x.allFinite()) {
    throw InvalidInputError(std::string(who) + ": starting point has the wrong dimension or is not finite");
  }
  if (!g.contains(x)) throw PreconditionError(std::string(who) + ": starting point is outside the domain");
}

void advance_frozen(PenalizedPathState& s, double dt, const Vec& noise, const FrozenCoefficients& c,
                    const DomainGeometry& g) {
  const auto outside = exterior_projection(g, s.x);
  Vec next = euler_position(s.x, c, dt, noise);
  Mat jac = euler_propagator(c, dt, noise) * s.jacobian;
  if (outside) {
    const double pull = s.penalty * dt;
    next -= pull * (s.x - outside->point);
    // n N(pi(X)) J dt acts on the pre-step Jacobian.
    const Vec& gamma = outside->normal;
    const double gg = gamma.squaredNorm();
    for (int k = 0; k < jac.cols(); ++k) {
      jac.col(k) -= (pull * s.jacobian.col(k).dot(gamma) / gg) * gamma;
    }
    s.occupation += dt;
  }
  s.x = next;
  s.jacobian = jac;
  s.t += dt;
  ++s.steps;
}

}  // namespace

PenalizedPathState initial_penalized_state(const Vec& x, double penalty) {
  return initial_penalized_state(x, Mat::Identity(x.size(), x.size()), penalty);
}

PenalizedPathState initial_penalized_state(const Vec& x, const Mat& directions, double penalty) {
  if (!(penalty > 0.0)) throw InvalidInputError("penalty n must be positive");
  PenalizedPathState s;
  s.x = x;
  s.jacobian = directions;
  s.penalty = penalty;
  return s;
}

void advance_penalized(PenalizedPathState& s, double dt, const Vec& noise, const CoefficientField& field,
                       const DomainGeometry& g) {
  if (!(dt > 0.0)) throw InvalidInputError("penalized step: dt must be positive");
  check_stability(dt, s.penalty, 1.0);
  advance_frozen(s, dt, noise, freeze(field, s.x), g);
}

PenalizedPathState step_penalized(PenalizedPathState state, double dt, const Vec& noise,
                                  const CoefficientField& field, const DomainGeometry& g) {
  advance_penalized(state, dt, noise, field, g);
  return state;
}

PenalizedPathState run_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                 const Mat& directions, double horizon, const PenaltyScheme& scheme,
                                 NoiseStream& noise, const PenalizedObserver& observer) {
  require_start(g, x, "simulate_penalized");
  if (!(horizon > 0.0)) throw PreconditionError("simulate_penalized: horizon must be positive");
  if (!(scheme.dt > 0.0)) throw InvalidInputError("simulate_penalized: dt must be positive");
  check_stability(scheme.dt, scheme.penalty, scheme.max_dt_times_n);
  PenalizedPathState s = initial_penalized_state(x, directions, scheme.penalty);
  if (observer) observer(s);
  const StepPlan plan = plan_steps(horizon, scheme.dt);
  const long total = plan.total_steps();
  CoefficientCache coefficients(field, x);
  for (long k = 0; k < total; ++k) {
    const double dt = plan.step_size(k);
    advance_frozen(s, dt, noise.increments(g.dimension(), dt), coefficients.at(s.x), g);
    s.t = plan.time_after(k, horizon);
    if (observer) observer(s);
  }
  return s;
}

PenalizedRun simulate_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                double horizon, const PenaltyScheme& scheme, NoiseStream& noise,
                                bool record_full_path) {
  PenalizedRun run;
  PenalizedObserver observer;
  if (record_full_path) observer = [&run](const PenalizedPathState& s) { run.path.push_back(s); };
  run.terminal = run_penalized(g, field, x, Mat::Identity(x.size(), x.size()), horizon, scheme, noise, observer);
  return run;
}

void write_penalized_csv(std::ostream& os, const std::vector<PenalizedPathState>& path) {
  os << "# schema=1\n";
  if (path.empty()) return;
  const int d = static_cast<int>(path.front().x.size());
  const int m = static_cast<int>(path.front().jacobian.cols());
  os << "step,t";
  for (int i = 0; i < d; ++i) os << ",X_" << i + 1;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) os << ",J_" << i + 1 << j + 1;
  os << ",T_n\n";
  os.precision(17);
  for (const auto& s : path) {
    os << s.steps << ',' << s.t;
    for (int i = 0; i < d; ++i) os << ',' << s.x[i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) os << ',' << s.jacobian(i, j);
    os << ',' << s.occupation << '\n';
  }
}

Vec flow_ratio_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x, const Vec& nu,
                         double eps, double horizon, const PenaltyScheme& scheme, std::uint64_t seed,
                         std::uint64_t path) {
  if (!(eps > 0.0)) throw InvalidInputError("flow_ratio_penalized: eps must be positive");
  const Vec shifted = x + eps * nu;
  if (!g.contains(x) || !g.contains(shifted)) {
    throw PreconditionError("flow_ratio_penalized: x and x + eps nu must both lie in the domain");
  }
  const Mat id = Mat::Identity(x.size(), x.size());
  NoiseStream base(seed, path);
  NoiseStream bumped(seed, path);
  const auto a = run_penalized(g, field, x, id, horizon, scheme, base);
  const auto b = run_penalized(g, field, shifted, id, horizon, scheme, bumped);
  return (b.x - a.x) / eps;
}

double PenaltyDtRule::dt_for(double penalty) const { return std::min(dt_max, dt_times_n / penalty); }

OccupationStudy occupation_moment_study(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                        double horizon, const std::vector<double>& penalties,
                                        std::uint64_t paths, const PenaltyDtRule& rule, std::uint64_t seed,
                                        int workers) {
  if (penalties.size() < 3) throw PreconditionError("occupation study needs at least 3 penalty values");
  const auto [lo, hi] = std::minmax_element(penalties.begin(), penalties.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0 * (1.0 - 1e-12)) {
    throw PreconditionError("occupation study: penalty values must be positive and span at least two decades");
  }
  if (!(rule.dt_times_n > 0.0 && rule.dt_times_n <= 0.1 + 1e-15)) {
    throw PreconditionError("occupation study: the dt rule must keep dt * n <= 0.1");
  }
  if (paths < 2) throw PreconditionError("occupation study needs at least 2 paths per penalty");

  OccupationStudy study;
  const Mat id = Mat::Identity(x.size(), x.size());
  for (double n : penalties) {
    OccupationRow row;
    row.penalty = n;
    row.dt = rule.dt_for(n);
    const PenaltyScheme scheme{n, row.dt, 0.1};
    std::vector<double> occupation(paths);
    for_each_path(paths, workers, [&](std::uint64_t p) {
      NoiseStream noise(seed, p);
      occupation[p] = run_penalized(g, field, x, id, horizon, scheme, noise).occupation;
    });
    std::vector<double> fourth(paths);
    std::transform(occupation.begin(), occupation.end(), fourth.begin(), [](double v) { return v * v * v * v; });
    row.fourth_moment = sample_stats(fourth);
    row.mean = sample_stats(occupation);
    if (!(row.fourth_moment.mean > 0.0)) {
      throw DegenerateDataError("occupation study: no path left the domain at n = " + std::to_string(n) +
                                "; use a smaller n or start closer to the boundary");
    }
    study.rows.push_back(row);
  }

  // Ordinary least squares on (log n, log m); the slope error propagates the
  // per-point standard errors through d log m = dm / m.
  const std::size_t k = study.rows.size();
  double mx = 0.0, my = 0.0;
  for (const auto& r : study.rows) {
    mx += std::log(r.penalty);
    my += std::log(r.fourth_moment.mean);
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& r : study.rows) {
    const double dx = std::log(r.penalty) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(r.fourth_moment.mean) - my);
  }
  study.slope = sxy / sxx;
  double var = 0.0;
  for (const auto& r : study.rows) {
    const double w = (std::log(r.penalty) - mx) / sxx;
    const double rel = r.fourth_moment.std_error / r.fourth_moment.mean;
    var += w * w * rel * rel;
  }
  study.slope_std_error = std::sqrt(var);
  return study;
}

SampleStats jacobian_sup_moment(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                const Vec& nu, double horizon, const PenaltyScheme& scheme,
                                std::uint64_t paths, std::uint64_t seed, int workers) {
  if (nu.size() != x.size()) throw InvalidInputError("jacobian_sup_moment: direction has the wrong dimension");
  Mat direction(x.size(), 1);
  direction.col(0) = nu;
  std::vector<double> sup4(paths);
  for_each_path(paths, workers, [&](std::uint64_t p) {
    NoiseStream noise(seed, p);
    double sup2 = 0.0;
    run_penalized(g, field, x, direction, horizon, scheme, noise,
                  [&sup2](const PenalizedPathState& s) { sup2 = std::max(sup2, s.jacobian.col(0).squaredNorm()); });
    sup4[p] = sup2 * sup2;
  });
  return sample_stats(sup4);
}

}  // namespace refjac
