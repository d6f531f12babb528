#include "refjac/reflected.hpp"

#include "refjac/errors.hpp"
#include "refjac/euler.hpp"

#include <Eigen/LU>

#include <cmath>
#include <ostream>

namespace refjac {

namespace {

void require_start(const DomainGeometry& g, const Vec& x) {
  if (x.size() != g.dimension() || !x.allFinite()) {
    throw InvalidInputError("simulate_reflected: starting point has the wrong dimension or is not finite");
  }
  if (!g.contains(x) && signed_distance(g, x) > g.boundary_tolerance()) {
    throw PreconditionError("simulate_reflected: starting point is outside the domain");
  }
}

// (Id - u w^T / (w^T u)) m
void apply_transported_projection(const PendingJump& p, Mat& m) {
  const double uw = p.dual_normal.dot(p.transported_normal);
  for (int k = 0; k < m.cols(); ++k) {
    const double c = p.dual_normal.dot(m.col(k)) / uw;
    m.col(k) -= c * p.transported_normal;
  }
}

void apply_pending(ReflectedPathState& s) {
  apply_transported_projection(s.pending, s.jacobian);
  if (s.restarted) apply_transported_projection(s.pending, *s.restarted);
  s.pending.active = false;
  ++s.jumps;
}

}  // namespace

ReflectedPathState initial_reflected_state(const DomainGeometry& g, const Vec& x, const Mat& directions) {
  require_start(g, x);
  ReflectedPathState s;
  s.x = x;
  s.jacobian = directions;
  // Starting on the boundary: the initial directions are projected onto the
  // tangent space before the first step.
  if (g.on_boundary(x)) {
    const Vec gamma = inward_normal(g, x);
    project_tangential_columns(gamma, s.jacobian);
  }
  return s;
}

namespace {

void advance_frozen(ReflectedPathState& s, double dt, const Vec& noise, const FrozenCoefficients& c,
                    const DomainGeometry& g, const ReflectionScheme& scheme) {
  const Vec tentative = euler_position(s.x, c, dt, noise);
  const Mat propagator = euler_propagator(c, dt, noise);
  s.jacobian = propagator * s.jacobian;
  if (s.restarted) *s.restarted = propagator * *s.restarted;
  const double now = s.t + dt;

  const bool epsilon_mode = scheme.mode == JumpMode::epsilon_excursion;
  if (epsilon_mode && s.pending.active) {
    s.pending.transported_normal = propagator * s.pending.transported_normal;
    s.pending.dual_normal = propagator.transpose().partialPivLu().solve(s.pending.dual_normal);
  }

  if (auto proj = exterior_projection(g, tentative)) {
    s.x = proj->point;
    s.last_local_time_increment = proj->distance;
    s.local_time += proj->distance;
    s.contact = true;
    s.contact_normal = proj->normal;
    if (epsilon_mode) {
      // The excursion that just ended closes the previous cluster if it was
      // longer than epsilon.
      if (s.pending.active && now - s.pending.contact_time > scheme.epsilon) apply_pending(s);
      s.pending.active = true;
      s.pending.contact_time = now;
      s.pending.transported_normal = proj->normal;
      s.pending.dual_normal = proj->normal;
    } else {
      project_tangential_columns(proj->normal, s.jacobian);
      if (s.restarted) project_tangential_columns(proj->normal, *s.restarted);
      ++s.jumps;
    }
  } else {
    s.x = tentative;
    s.last_local_time_increment = 0.0;
    s.contact = false;
    if (epsilon_mode && s.pending.active && now - s.pending.contact_time > scheme.epsilon) apply_pending(s);
  }
  s.t = now;
  ++s.steps;
}

void require_inside(const DomainGeometry& g, const Vec& x) {
  if (!g.contains(x) && signed_distance(g, x) > g.boundary_tolerance()) {
    throw CorruptedStateError("reflected step: current position is outside the domain");
  }
}

}  // namespace

void advance_reflected(ReflectedPathState& s, double dt, const Vec& noise, const CoefficientField& field,
                       const DomainGeometry& g, const ReflectionScheme& scheme) {
  require_inside(g, s.x);
  advance_frozen(s, dt, noise, freeze(field, s.x), g, scheme);
}

ReflectedPathState step_reflected(ReflectedPathState state, double dt, const Vec& noise,
                                  const CoefficientField& field, const DomainGeometry& g,
                                  const ReflectionScheme& scheme) {
  if (!(dt > 0.0)) throw InvalidInputError("reflected step: dt must be positive");
  advance_reflected(state, dt, noise, field, g, scheme);
  return state;
}

void finalize_pending_jump(ReflectedPathState& state) {
  if (state.pending.active) apply_pending(state);
}

ReflectedPathState run_reflected(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                 const Mat& directions, double horizon, const ReflectionScheme& scheme,
                                 NoiseStream& noise, const ReflectedObserver& observer,
                                 const ReflectedRunOptions& options) {
  if (!(horizon > 0.0)) throw PreconditionError("simulate_reflected: horizon must be positive");
  if (!(scheme.dt > 0.0)) throw InvalidInputError("simulate_reflected: dt must be positive");
  if (scheme.mode == JumpMode::epsilon_excursion && !(scheme.epsilon >= 0.0)) {
    throw InvalidInputError("simulate_reflected: epsilon must be non-negative");
  }
  ReflectedPathState s = initial_reflected_state(g, x, directions);
  if (options.restart_after_steps == 0) s.restarted = Mat::Identity(x.size(), x.size());
  if (observer) observer(s);
  const StepPlan plan = plan_steps(horizon, scheme.dt);
  const long total = plan.total_steps();
  CoefficientCache coefficients(field, x);
  for (long k = 0; k < total; ++k) {
    const double dt = plan.step_size(k);
    require_inside(g, s.x);
    advance_frozen(s, dt, noise.increments(g.dimension(), dt), coefficients.at(s.x), g, scheme);
    s.t = plan.time_after(k, horizon);
    if (k + 1 == total) finalize_pending_jump(s);
    if (k + 1 == options.restart_after_steps) s.restarted = Mat::Identity(x.size(), x.size());
    if (observer) observer(s);
  }
  return s;
}

ReflectedPathRecord simulate_reflected(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                       double horizon, const ReflectionScheme& scheme, NoiseStream& noise) {
  ReflectedPathRecord rec;
  const auto terminal = run_reflected(g, field, x, Mat::Identity(x.size(), x.size()), horizon, scheme, noise,
                                      [&rec](const ReflectedPathState& s) {
                                        rec.times.push_back(s.t);
                                        rec.positions.push_back(s.x);
                                        rec.jacobians.push_back(s.jacobian);
                                        rec.local_time.push_back(s.local_time);
                                        rec.contact.push_back(s.contact);
                                      });
  rec.jump_count = terminal.jumps;
  return rec;
}

ExcursionDecomposition excursion_decomposition(const ReflectedPathRecord& record, double eps) {
  ExcursionDecomposition dec;
  if (record.size() < 2) return dec;
  auto push = [&](long a, long b, bool on_boundary) {
    ExcursionRecord e;
    e.start_index = a;
    e.end_index = b;
    e.duration = record.times[b] - record.times[a];
    e.start_point = record.positions[a];
    e.end_point = record.positions[b];
    e.ends_on_boundary = on_boundary;
    if (e.duration > eps) {
      if (on_boundary) {
        dec.jump_times.push_back(record.times[b]);
        dec.jump_indices.push_back(b);
      }
      dec.excursions.push_back(std::move(e));
    }
  };
  long start = 0;
  bool any_contact = false;
  for (long k = 1; k < static_cast<long>(record.size()); ++k) {
    if (record.contact[k]) {
      push(start, k, true);
      start = k;
      any_contact = true;
    }
  }
  if (!any_contact) push(0, static_cast<long>(record.size()) - 1, false);
  return dec;
}

Mat compose_jacobians(const Mat& j_rs, const Mat& j_st) { return j_st * j_rs; }

MultiplicativeCheck check_multiplicative_functional(const DomainGeometry& g, const CoefficientField& field,
                                                    const Vec& x, double horizon, double split,
                                                    const ReflectionScheme& scheme, std::uint64_t seed,
                                                    std::uint64_t path) {
  if (!(split >= 0.0 && split <= horizon)) throw PreconditionError("MOF check: split must lie in [0, t]");
  const long split_steps = std::lround(split / scheme.dt);
  MultiplicativeCheck out;
  const Mat id = Mat::Identity(x.size(), x.size());
  NoiseStream noise(seed, path);
  ReflectedRunOptions options;
  options.restart_after_steps = split_steps;
  out.direct_split = id;
  const auto terminal = run_reflected(g, field, x, id, horizon, scheme, noise,
                                      [&](const ReflectedPathState& s) {
                                        if (s.steps == split_steps) out.direct_split = s.jacobian;
                                      },
                                      options);
  out.direct_full = terminal.jacobian;
  out.restarted = terminal.restarted.value_or(id);
  out.max_error = (compose_jacobians(out.direct_split, out.restarted) - out.direct_full).cwiseAbs().maxCoeff();
  return out;
}

void write_reflected_csv(std::ostream& os, const ReflectedPathRecord& record) {
  os << "# schema=1\n";
  if (record.size() == 0) return;
  const int d = static_cast<int>(record.positions.front().size());
  const int m = static_cast<int>(record.jacobians.front().cols());
  os << "step,t";
  for (int i = 0; i < d; ++i) os << ",X_" << i + 1;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) os << ",J_" << i + 1 << j + 1;
  os << ",L,contact\n";
  os.precision(17);
  for (std::size_t k = 0; k < record.size(); ++k) {
    os << k << ',' << record.times[k];
    for (int i = 0; i < d; ++i) os << ',' << record.positions[k][i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) os << ',' << record.jacobians[k](i, j);
    os << ',' << record.local_time[k] << ',' << (record.contact[k] ? 1 : 0) << '\n';
  }
}

void write_excursions_csv(std::ostream& os, const ReflectedPathRecord& record, const ExcursionDecomposition& dec) {
  os << "# schema=1\n";
  const int d = record.size() ? static_cast<int>(record.positions.front().size()) : 0;
  os << "start_t,end_t,duration";
  for (int i = 0; i < d; ++i) os << ",start_point_" << i + 1;
  for (int i = 0; i < d; ++i) os << ",end_point_" << i + 1;
  os << '\n';
  os.precision(17);
  for (const auto& e : dec.excursions) {
    os << record.times[e.start_index] << ',' << record.times[e.end_index] << ',' << e.duration;
    for (int i = 0; i < d; ++i) os << ',' << e.start_point[i];
    for (int i = 0; i < d; ++i) os << ',' << e.end_point[i];
    os << '\n';
  }
}

}  // namespace refjac
