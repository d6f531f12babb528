#pragma once

#include "refjac/geometry.hpp"
#include "refjac/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace refjac {

/// A function F(x, nu) of position and Jacobian direction with the first and
/// second partials the coupled generator needs.
struct TestFunction {
  std::string name;
  int dim = 0;
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> grad_x;
  std::function<Vec(const Vec&, const Vec&)> grad_nu;
  std::function<Mat(const Vec&, const Vec&)> hess_xx;
  // (i, j) = d^2 F / dx^i dnu^j
  std::function<Mat(const Vec&, const Vec&)> hess_xnu;
  std::function<Mat(const Vec&, const Vec&)> hess_nunu;
};

// Boundary conditions a test function must satisfy to be in the domain of
// the coupled generator, checked on boundary samples.
struct AdmissibilityCertificate {
  double max_normal_derivative = 0.0;  // |d_gamma F(., nu)(alpha)|
  double max_projection_defect = 0.0;  // |F(alpha, nu) - F(alpha, N_perp nu)|
  bool neumann = false;                // max_normal_derivative <= 1e-8
  bool tangential = false;             // max_projection_defect <= 1e-10
  int samples = 0;

  bool admissible() const { return neumann && tangential; }
};

AdmissibilityCertificate certify(const TestFunction& F, const DomainGeometry& g, int samples = 64,
                                 std::uint64_t seed = 11);

enum class DirectionPart {
  none,       // h = 0
  linear,     // h(nu) = nu_1
  quadratic,  // h(nu) = nu . nu
};

/// F(x, nu) = a g_k(x) + c psi(x) h(nu) on an interval or a ball:
///   interval: g_k = cos(k pi (x - lo) / (hi - lo)), psi = (x - lo)^2 (hi - x)^2
///   ball:     g_k = cos(k pi |x - c|^2 / R^2),       psi = (R^2 - |x - c|^2)^2
/// g_k has zero normal derivative and psi vanishes to second order on the
/// boundary, so every member is admissible. k = 0 drops the g part.
TestFunction family_member(const DomainGeometry& g, int k, double a, double c, DirectionPart h);

// Constant function; lies in the kernel of the generator.
TestFunction constant_test_function(int dim, double value);

}  // namespace refjac
