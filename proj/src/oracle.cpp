#include "refjac/oracle.hpp"

#include "refjac/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

namespace refjac {

double Grid1D::at(double x) const {
  const double h = spacing();
  const double s = std::clamp((x - lo) / h, 0.0, static_cast<double>(points - 1));
  const int i = std::min(static_cast<int>(s), points - 2);
  const double w = s - i;
  return (1.0 - w) * values[i] + w * values[i + 1];
}

SeriesValue series_gradient_1d(int k, double sigma, double t, double x, double lo, double hi) {
  if (k < 1 || !(hi > lo)) throw InvalidInputError("series oracle: need k >= 1 and lo < hi");
  const double w = k * std::numbers::pi / (hi - lo);
  const double decay = std::exp(-0.5 * sigma * sigma * w * w * t);
  const double th = w * (x - lo);
  SeriesValue out{decay * std::cos(th), -decay * w * std::sin(th)};
  if (x == lo || x == hi) out.du = 0.0;
  return out;
}

namespace {

// Row i of a three-point operator: lower * v[i-1] + diag * v[i] + upper * v[i+1].
struct Stencil {
  std::vector<double> lower, diag, upper;
};

// Thomas algorithm for (Id - c A) x = rhs.
void solve_implicit(const Stencil& a, double c, std::vector<double>& rhs) {
  const std::size_t n = rhs.size();
  std::vector<double> cp(n), dp(n);
  double denom = 1.0 - c * a.diag[0];
  if (!(std::abs(denom) > 1e-300)) throw NumericalError("tridiagonal solve: zero pivot");
  cp[0] = -c * a.upper[0] / denom;
  dp[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    const double lo = -c * a.lower[i];
    denom = (1.0 - c * a.diag[i]) - lo * cp[i - 1];
    if (!(std::abs(denom) > 1e-300) || !std::isfinite(denom)) throw NumericalError("tridiagonal solve: zero pivot");
    cp[i] = (i + 1 < n) ? -c * a.upper[i] / denom : 0.0;
    dp[i] = (rhs[i] - lo * dp[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) dp[i] -= cp[i] * dp[i + 1];
  for (double v : dp) {
    if (!std::isfinite(v)) throw NumericalError("tridiagonal solve produced non-finite values");
  }
  rhs.swap(dp);
}

std::vector<double> apply_stencil(const Stencil& a, const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = a.diag[i] * v[i];
    if (i > 0) s += a.lower[i] * v[i - 1];
    if (i + 1 < n) s += a.upper[i] * v[i + 1];
    out[i] = s;
  }
  return out;
}

// Crank-Nicolson time stepping; `pin` fixes Dirichlet values after each step.
void march(const Stencil& a, double t, int steps, std::vector<double>& v, bool dirichlet) {
  if (steps < 1) throw InvalidInputError("grid solver: steps must be at least 1");
  if (t == 0.0) return;
  const double dt = t / steps;
  for (int s = 0; s < steps; ++s) {
    std::vector<double> rhs = apply_stencil(a, v);
    for (std::size_t i = 0; i < v.size(); ++i) rhs[i] = v[i] + 0.5 * dt * rhs[i];
    solve_implicit(a, 0.5 * dt, rhs);
    v.swap(rhs);
    if (dirichlet) {
      v.front() = 0.0;
      v.back() = 0.0;
    }
  }
}

void require_grid(const GridSpec& grid) {
  if (grid.points < 3 || !(grid.hi > grid.lo)) throw InvalidInputError("grid needs at least 3 points and lo < hi");
  if (grid.steps < 1) throw InvalidInputError("grid solver: steps must be at least 1");
}

struct Coeffs1D {
  double a, a_prime, b, b_prime;
};

Coeffs1D coefficients_at(const CoefficientField& field, double x) {
  const Vec p = Vec::Constant(1, x);
  const double s = field.sigma(p)(0, 0);
  const double s_prime = field.constant_sigma ? 0.0 : field.sigma_jacobians(p)[0](0, 0);
  return {s * s, 2.0 * s * s_prime, field.drift(p)[0], field.drift_jacobian(p)(0, 0)};
}

Grid1D make_grid(double lo, double hi, int points, double time) {
  Grid1D g;
  g.lo = lo;
  g.hi = hi;
  g.points = points;
  g.time = time;
  g.values.assign(points, 0.0);
  return g;
}

Grid1D centred_derivative(const Grid1D& u) {
  Grid1D du = make_grid(u.lo, u.hi, u.points, u.time);
  const double h = u.spacing();
  for (int i = 1; i + 1 < u.points; ++i) du.values[i] = (u.values[i + 1] - u.values[i - 1]) / (2.0 * h);
  return du;
}

}  // namespace

NeumannSolution crank_nicolson_neumann_1d(const CoefficientField& field, const std::function<double(double)>& f,
                                          double t, const GridSpec& grid) {
  require_grid(grid);
  if (field.dim != 1) throw InvalidInputError("crank_nicolson_neumann_1d needs a 1D coefficient field");
  const int n = grid.points;
  NeumannSolution sol;
  sol.u = make_grid(grid.lo, grid.hi, n, t);
  const double h = sol.u.spacing();
  Stencil a{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int i = 0; i < n; ++i) {
    const Coeffs1D c = coefficients_at(field, sol.u.node(i));
    const double diff = 0.5 * c.a / (h * h);
    const double adv = c.b / (2.0 * h);
    if (i == 0) {
      // Ghost node u_{-1} = u_1: the first-derivative term vanishes.
      a.diag[i] = -2.0 * diff;
      a.upper[i] = 2.0 * diff;
    } else if (i == n - 1) {
      a.diag[i] = -2.0 * diff;
      a.lower[i] = 2.0 * diff;
    } else {
      a.lower[i] = diff - adv;
      a.diag[i] = -2.0 * diff;
      a.upper[i] = diff + adv;
    }
  }
  for (int i = 0; i < n; ++i) sol.u.values[i] = f(sol.u.node(i));
  march(a, t, grid.steps, sol.u.values, false);
  sol.du = centred_derivative(sol.u);
  return sol;
}

NeumannSolution crank_nicolson_radial(double a_coef, int dim, const std::function<double(double)>& f_radial,
                                      double t, double radius, int points, int steps) {
  if (points < 3 || !(radius > 0.0) || dim < 1) throw InvalidInputError("radial solver: bad grid or dimension");
  const int n = points;
  NeumannSolution sol;
  sol.u = make_grid(0.0, radius, n, t);
  const double h = sol.u.spacing();
  const double diff = 0.5 * a_coef / (h * h);
  Stencil a{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  // r = 0: (d - 1) u'/r -> (d - 1) u''(0), so the operator is (1/2) a d u''.
  a.diag[0] = -2.0 * diff * dim;
  a.upper[0] = 2.0 * diff * dim;
  for (int i = 1; i < n - 1; ++i) {
    const double r = sol.u.node(i);
    const double adv = 0.5 * a_coef * (dim - 1) / r / (2.0 * h);
    a.lower[i] = diff - adv;
    a.diag[i] = -2.0 * diff;
    a.upper[i] = diff + adv;
  }
  a.diag[n - 1] = -2.0 * diff;
  a.lower[n - 1] = 2.0 * diff;
  for (int i = 0; i < n; ++i) sol.u.values[i] = f_radial(sol.u.node(i));
  march(a, t, steps, sol.u.values, false);
  sol.du = centred_derivative(sol.u);
  return sol;
}

Grid1D gradient_system_1d(const CoefficientField& field, const std::function<double(double)>& f_prime, double t,
                          const GridSpec& grid) {
  require_grid(grid);
  if (field.dim != 1) throw InvalidInputError("gradient_system_1d needs a 1D coefficient field");
  const int n = grid.points;
  Grid1D w = make_grid(grid.lo, grid.hi, n, t);
  const double h = w.spacing();
  Stencil a{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int i = 1; i < n - 1; ++i) {
    const Coeffs1D c = coefficients_at(field, w.node(i));
    const double diff = 0.5 * c.a / (h * h);
    const double adv = (c.b + 0.5 * c.a_prime) / (2.0 * h);
    a.lower[i] = diff - adv;
    a.diag[i] = -2.0 * diff + c.b_prime;
    a.upper[i] = diff + adv;
  }
  for (int i = 0; i < n; ++i) w.values[i] = f_prime(w.node(i));
  march(a, t, grid.steps, w.values, t > 0.0);
  return w;
}

ValueEstimate mc_finite_difference_gradient(const Problem& problem, const Vec& x, const Vec& nu, double eps,
                                            double horizon, const SchemeConfig& scheme, const RunControl& run,
                                            bool common_random_numbers) {
  if (!(eps > 0.0)) throw InvalidInputError("finite-difference oracle: eps must be positive");
  if (run.paths < 1) throw InvalidInputError("finite-difference oracle: paths must be positive");
  const Vec plus = x + eps * nu;
  const Vec minus = x - eps * nu;
  const DomainGeometry& g = problem.geometry;
  if (!g.contains(plus) || !g.contains(minus)) {
    throw PreconditionError("finite-difference oracle: x +/- eps nu must lie in the domain");
  }
  const Mat none(x.size(), 0);
  std::vector<double> values(run.paths);
  for_each_path(run.paths, run.workers, [&](std::uint64_t p) {
    NoiseStream a(run.seed, p);
    NoiseStream b(run.seed, common_random_numbers ? p : p + run.paths);
    const auto up = simulate_path(g, problem.field, plus, none, horizon, scheme, a);
    const auto down = simulate_path(g, problem.field, minus, none, horizon, scheme, b);
    values[p] = (problem.initial.f(up.x) - problem.initial.f(down.x)) / (2.0 * eps);
  });
  const SampleStats s = sample_stats(values);
  return {s.mean, s.std_error, s.count};
}

Mat free_jacobian_closed_form(const Mat& b, double t) {
  const Eigen::MatrixXd m = Eigen::MatrixXd(b) * t;
  return Mat(m.exp());
}

}  // namespace refjac
