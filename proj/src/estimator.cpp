#include "refjac/estimator.hpp"

#include "refjac/errors.hpp"
#include "refjac/euler.hpp"
#include "refjac/penalized.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace refjac {

std::string SchemeConfig::label() const {
  if (kind == SchemeKind::penalized) return "penalized";
  return mode == JumpMode::epsilon_excursion ? "reflected:excursion" : "reflected";
}

TerminalState simulate_path(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                            const Mat& directions, double horizon, const SchemeConfig& scheme, NoiseStream& noise,
                            const PathVisitor& visitor) {
  if (scheme.kind == SchemeKind::penalized) {
    const PenaltyScheme ps{scheme.penalty, scheme.dt, 1.0};
    PenalizedObserver observer;
    if (visitor) {
      observer = [&visitor](const PenalizedPathState& s) { visitor(PathPoint{s.t, s.x, s.jacobian, 0.0, false}); };
    }
    auto s = run_penalized(g, field, x, directions, horizon, ps, noise, observer);
    return {s.x, s.jacobian};
  }
  const ReflectionScheme rs{scheme.dt, scheme.mode, scheme.epsilon};
  ReflectedObserver observer;
  if (visitor) {
    observer = [&visitor](const ReflectedPathState& s) {
      visitor(PathPoint{s.t, s.x, s.jacobian, s.last_local_time_increment, s.contact});
    };
  }
  auto s = run_reflected(g, field, x, directions, horizon, rs, noise, observer);
  return {s.x, s.jacobian};
}

namespace {

void require_paths(const RunControl& run) {
  if (run.paths < 1) throw InvalidInputError("Monte Carlo run needs at least one path");
}

void require_dimension(const Problem& p, const Vec& x) {
  if (x.size() != p.geometry.dimension() || p.field.dim != p.geometry.dimension()) {
    throw InvalidInputError("dimension mismatch between point, domain and coefficient field");
  }
}

ValueEstimate to_value(const SampleStats& s) { return {s.mean, s.std_error, s.count}; }

}  // namespace

ValueEstimate estimate_value(const Problem& problem, const Vec& x, double horizon, const SchemeConfig& scheme,
                             const RunControl& run) {
  require_paths(run);
  require_dimension(problem, x);
  const Mat none(x.size(), 0);
  std::vector<double> values(run.paths);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    const auto end = simulate_path(problem.geometry, problem.field, x, none, horizon, scheme, noise);
    values[p] = problem.initial.f(end.x);
  });
  return to_value(sample_stats(values));
}

GradientEstimate estimate_gradient(const Problem& problem, const Vec& x, double horizon, const SchemeConfig& scheme,
                                   const RunControl& run) {
  require_paths(run);
  require_dimension(problem, x);
  const int d = static_cast<int>(x.size());
  const Mat id = Mat::Identity(d, d);
  // Row-major per path: [f, v_1, ..., v_d].
  const std::size_t stride = static_cast<std::size_t>(d) + 1;
  std::vector<double> samples(run.paths * stride);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    const auto end = simulate_path(problem.geometry, problem.field, x, id, horizon, scheme, noise);
    const Vec grad = problem.initial.grad(end.x);
    double* row = samples.data() + p * stride;
    row[0] = problem.initial.f(end.x);
    for (int i = 0; i < d; ++i) row[i + 1] = grad.dot(end.jacobian.col(i));
  });

  GradientEstimate est;
  est.x = x;
  est.t = horizon;
  est.paths = run.paths;
  est.seed = run.seed;
  est.scheme = scheme;
  est.gradient = Vec::Zero(d);
  est.std_error = Vec::Zero(d);
  std::vector<double> column(run.paths);
  for (std::size_t c = 0; c < stride; ++c) {
    for (std::uint64_t p = 0; p < run.paths; ++p) column[p] = samples[p * stride + c];
    const SampleStats s = sample_stats(column);
    if (c == 0) {
      est.value = s.mean;
      est.value_std_error = s.std_error;
    } else {
      est.gradient[c - 1] = s.mean;
      est.std_error[c - 1] = s.std_error;
    }
  }
  return est;
}

ValueEstimate estimate_directional(const Problem& problem, const Vec& x, const Vec& nu, double horizon,
                                   const SchemeConfig& scheme, const RunControl& run) {
  require_paths(run);
  require_dimension(problem, x);
  if (nu.size() != x.size()) throw InvalidInputError("direction has the wrong dimension");
  Mat direction(x.size(), 1);
  direction.col(0) = nu;
  std::vector<double> values(run.paths);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    const auto end = simulate_path(problem.geometry, problem.field, x, direction, horizon, scheme, noise);
    values[p] = problem.initial.grad(end.x).dot(end.jacobian.col(0));
  });
  return to_value(sample_stats(values));
}

GeneratorTerms apply_generator(const TestFunction& F, const CoefficientField& field, const Vec& x, const Vec& nu) {
  const FrozenCoefficients c = freeze(field, x);
  const int d = static_cast<int>(x.size());
  const Mat hxx = F.hess_xx(x, nu);
  GeneratorTerms t;
  for (int k = 0; k < d; ++k) t.lx_second += 0.5 * c.sigma.col(k).dot(hxx * c.sigma.col(k));
  t.lx_drift = c.drift.dot(F.grad_x(x, nu));
  t.lj_first = (c.drift_jacobian * nu).dot(F.grad_nu(x, nu));
  if (!c.constant_sigma) {
    const Mat hnn = F.hess_nunu(x, nu);
    const Mat hxn = F.hess_xnu(x, nu);
    for (int k = 0; k < d; ++k) {
      const Vec w = c.sigma_jacobians[k] * nu;
      t.lj_second += 0.5 * w.dot(hnn * w);
      t.lj_mixed += c.sigma.col(k).dot(hxn * w);
    }
  }
  return t;
}

ResidualReport martingale_residual(const TestFunction& F, const DomainGeometry& g, const CoefficientField& field,
                                   const Vec& x, const Vec& nu, double horizon, const SchemeConfig& scheme,
                                   const RunControl& run, int record_every) {
  require_paths(run);
  if (record_every < 1) throw InvalidInputError("martingale residual: record_every must be at least 1");
  const auto cert = certify(F, g);
  if (!cert.admissible()) {
    throw PreconditionError("martingale residual: test function " + F.name +
                            " violates the boundary conditions of the generator domain");
  }
  if (nu.size() != x.size()) throw InvalidInputError("martingale residual: direction has the wrong dimension");
  Mat direction(x.size(), 1);
  direction.col(0) = nu;
  const double start_value = F.value(x, nu);

  constexpr int kColumns = 7;  // residual, terminal, five integrals
  std::vector<double> samples(run.paths * kColumns);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    std::array<CompensatedSum, 5> integral;
    GeneratorTerms prev;
    double prev_t = 0.0;
    long index = 0;
    bool have_prev = false;
    double last_t = -1.0;
    Vec last_x;
    Vec last_nu;
    auto absorb = [&](double t, const Vec& xs, const Vec& js) {
      const GeneratorTerms cur = apply_generator(F, field, xs, js);
      if (have_prev) {
        const double h = 0.5 * (t - prev_t);
        integral[0].add(h * (prev.lx_second + cur.lx_second));
        integral[1].add(h * (prev.lx_drift + cur.lx_drift));
        integral[2].add(h * (prev.lj_second + cur.lj_second));
        integral[3].add(h * (prev.lj_mixed + cur.lj_mixed));
        integral[4].add(h * (prev.lj_first + cur.lj_first));
      }
      prev = cur;
      prev_t = t;
      have_prev = true;
    };
    const auto end = simulate_path(g, field, x, direction, horizon, scheme, noise, [&](const PathPoint& pt) {
      if (index++ % record_every == 0) {
        absorb(pt.t, pt.x, pt.jacobian.col(0));
      } else {
        last_t = pt.t;
        last_x = pt.x;
        last_nu = pt.jacobian.col(0);
      }
    });
    // The grid always closes at the horizon.
    if (prev_t < horizon && last_t == horizon) absorb(last_t, last_x, last_nu);

    double* row = samples.data() + p * kColumns;
    row[1] = F.value(end.x, end.jacobian.col(0)) - start_value;
    double total = 0.0;
    for (int k = 0; k < 5; ++k) {
      row[2 + k] = integral[k].value();
      total += row[2 + k];
    }
    row[0] = row[1] - total;
  });

  std::array<double, kColumns> means{};
  std::vector<double> column(run.paths);
  double se = 0.0;
  for (int c = 0; c < kColumns; ++c) {
    for (std::uint64_t p = 0; p < run.paths; ++p) column[p] = samples[p * kColumns + c];
    const SampleStats s = sample_stats(column);
    means[c] = s.mean;
    if (c == 0) se = s.std_error;
  }
  ResidualReport r;
  r.residual = means[0];
  r.std_error = se;
  r.terminal_increment = means[1];
  r.integral_lx_second = means[2];
  r.integral_lx_drift = means[3];
  r.integral_lj_second = means[4];
  r.integral_lj_mixed = means[5];
  r.integral_lj_first = means[6];
  r.paths = run.paths;
  r.dt = scheme.dt;
  return r;
}

DirichletReport boundary_dirichlet_check(const Problem& problem, const Vec& alpha, double horizon,
                                         const SchemeConfig& scheme, const RunControl& run) {
  require_paths(run);
  require_dimension(problem, alpha);
  if (!problem.geometry.on_boundary(alpha)) {
    throw PreconditionError("boundary Dirichlet check: starting point is not on the boundary");
  }
  DirichletReport rep;
  rep.normal = inward_normal(problem.geometry, alpha);
  Mat direction(alpha.size(), 1);
  direction.col(0) = rep.normal;
  std::vector<double> values(run.paths);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    const auto end = simulate_path(problem.geometry, problem.field, alpha, direction, horizon, scheme, noise);
    values[p] = problem.initial.grad(end.x).dot(end.jacobian.col(0));
  });
  rep.estimate = to_value(sample_stats(values));
  rep.exact_zero = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  return rep;
}

WeingartenReport weingarten_diagnostic(const Problem& problem, const Vec& x, double horizon,
                                       const SchemeConfig& scheme, const RunControl& run) {
  require_paths(run);
  require_dimension(problem, x);
  if (scheme.kind != SchemeKind::reflected) {
    throw PreconditionError("Weingarten diagnostic needs the reflected scheme (local time)");
  }
  const DomainGeometry& g = problem.geometry;
  const int d = static_cast<int>(x.size());
  const auto* ball = std::get_if<Ball>(&g.shape());
  const Mat id = Mat::Identity(d, d);

  // Per path: d accumulators, d twins, one defect.
  const std::size_t stride = 2 * static_cast<std::size_t>(d) + 1;
  std::vector<double> samples(run.paths * stride, 0.0);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream noise(run.seed, p);
    double* row = samples.data() + p * stride;
    simulate_path(g, problem.field, x, id, horizon, scheme, noise, [&](const PathPoint& pt) {
      if (!pt.contact || pt.local_time_increment == 0.0) return;
      const BoundaryFrame frame = make_frame(g, pt.x);
      const Vec grad = problem.initial.grad(pt.x);
      for (int i = 0; i < d; ++i) {
        const Vec eta = project_tangential(frame, pt.jacobian.col(i));
        row[i] -= grad.dot(weingarten(g, frame, eta)) * pt.local_time_increment;
        if (ball) row[d + i] -= grad.dot(eta) * pt.local_time_increment / ball->radius;
      }
    });
    if (ball) {
      double defect = 0.0;
      for (int i = 0; i < d; ++i) defect = std::max(defect, std::abs(row[i] - row[d + i]));
      row[2 * d] = defect;
    }
  });

  WeingartenReport rep;
  rep.paths = run.paths;
  rep.mean = Vec::Zero(d);
  rep.std_error = Vec::Zero(d);
  rep.twin_mean = Vec::Zero(d);
  rep.twin_available = ball != nullptr;
  std::vector<double> column(run.paths);
  for (int c = 0; c < 2 * d; ++c) {
    for (std::uint64_t p = 0; p < run.paths; ++p) column[p] = samples[p * stride + c];
    const SampleStats s = sample_stats(column);
    if (c < d) {
      rep.mean[c] = s.mean;
      rep.std_error[c] = s.std_error;
    } else {
      rep.twin_mean[c - d] = s.mean;
    }
  }
  for (std::uint64_t p = 0; p < run.paths; ++p) {
    rep.max_twin_defect = std::max(rep.max_twin_defect, samples[p * stride + 2 * d]);
  }
  return rep;
}

}  // namespace refjac
