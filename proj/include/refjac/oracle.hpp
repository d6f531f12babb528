#pragma once

#include "refjac/estimator.hpp"
#include "refjac/linalg.hpp"
#include "refjac/model.hpp"

#include <functional>
#include <vector>

namespace refjac {

// Values on a uniform grid over [lo, hi] at a given time.
struct Grid1D {
  double lo = 0.0;
  double hi = 1.0;
  int points = 0;
  std::vector<double> values;
  double time = 0.0;

  double spacing() const { return (hi - lo) / (points - 1); }
  double node(int i) const { return lo + i * spacing(); }
  // Piecewise-linear interpolation.
  double at(double x) const;
};

struct SeriesValue {
  double u = 0.0;
  double du = 0.0;
};

/// Closed-form Neumann solution for f = cos(k pi (x - lo) / L), b = 0 and
/// constant sigma: u = exp(-sigma^2 lambda_k t / 2) f(x), lambda_k = (k pi / L)^2.
SeriesValue series_gradient_1d(int k, double sigma, double t, double x, double lo = 0.0, double hi = 1.0);

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int points = 801;
  int steps = 2000;
};

struct NeumannSolution {
  Grid1D u;
  Grid1D du;  // centred differences inside, zero (the boundary condition) at the ends
};

/// Crank-Nicolson for u_t = (1/2) a u'' + b u' with ghost-node Neumann
/// closure u_{-1} = u_1 at both ends. Coefficients come from a 1D field.
NeumannSolution crank_nicolson_neumann_1d(const CoefficientField& field, const std::function<double(double)>& f,
                                          double t, const GridSpec& grid);

/// Radial reduction for a ball with sigma = s Id, b = 0 and radial data:
/// u_t = (1/2) a (u'' + (d - 1) / r u') on [0, R], u'(0) = 0 by symmetry and
/// u'(R) = 0 (Neumann).
NeumannSolution crank_nicolson_radial(double a, int dim, const std::function<double(double)>& f_radial,
                                      double t, double radius, int points, int steps);

/// Gradient system in 1D: w_t = (1/2) a w'' + (b + a'/2) w' + b' w, w(0) = f',
/// with w = 0 at both ends (the absolute boundary condition in 1D).
Grid1D gradient_system_1d(const CoefficientField& field, const std::function<double(double)>& f_prime, double t,
                          const GridSpec& grid);

/// Central difference (u(x + eps nu) - u(x - eps nu)) / (2 eps) from Monte
/// Carlo values; with common random numbers both sides of path p share its
/// noise, otherwise the minus side uses path index p + paths.
ValueEstimate mc_finite_difference_gradient(const Problem& problem, const Vec& x, const Vec& nu, double eps,
                                            double horizon, const SchemeConfig& scheme, const RunControl& run,
                                            bool common_random_numbers = true);

/// exp(B t) by scaling and squaring (Pade).
Mat free_jacobian_closed_form(const Mat& b, double t);

}  // namespace refjac
