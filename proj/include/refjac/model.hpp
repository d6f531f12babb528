#pragma once

#include "refjac/geometry.hpp"
#include "refjac/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace refjac {

// Declared sup-norm bounds (C^1_b assumption); checked by sampling.
struct CoefficientBounds {
  double drift = 0.0;
  double sigma = 0.0;
  double drift_jacobian = 0.0;
  double sigma_jacobian = 0.0;
};

/// Drift b, diffusion sigma (columns sigma_j) and their spatial derivatives.
///
/// All callbacks must be pure: the path schemes call them concurrently from
/// several workers.
struct CoefficientField {
  int dim = 0;
  std::string name;
  std::function<Vec(const Vec&)> drift;
  std::function<Mat(const Vec&)> sigma;
  // (i, j) = d b^i / d x^j
  std::function<Mat(const Vec&)> drift_jacobian;
  // [j](i, k) = d sigma_j^i / d x^k
  std::function<MatStack(const Vec&)> sigma_jacobians;
  // True when sigma_jacobians is identically zero; the steppers then skip the
  // stochastic Jacobian term.
  bool constant_sigma = false;
  // True when b, sigma and all derivatives are constant; the steppers then
  // evaluate them once per path.
  bool state_independent = false;
  CoefficientBounds bounds;

  // a = sigma sigma^T
  Mat diffusion(const Vec& x) const {
    const Mat s = sigma(x);
    return s * s.transpose();
  }
};

struct InitialCondition {
  std::string name;
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
};

// Built-in coefficient catalog.
CoefficientField brownian_field(int dim);
// b(x) = B x inside a box around D, frozen outside it.
CoefficientField linear_drift_field(const Mat& drift_matrix, const DomainGeometry& g);
// b = 0, sigma(x) = (1 + kappa sin x^1) Id, kappa in [0, 0.5].
CoefficientField varsigma_field(int dim, double kappa);
// b(x) = B x + b0, constant sigma; an explicit grad_b overrides the true
// derivative (used to exercise the derivative check).
CoefficientField affine_field(const Mat& drift_matrix, const Vec& drift_offset, const Mat& sigma,
                              const Mat* supplied_drift_jacobian = nullptr);

// Initial conditions.
InitialCondition constant_initial(int dim, double value);
InitialCondition linear_initial(double constant, const Vec& weights);
// Neumann eigenmode: cos(k pi (x - lo) / L) on an interval, and the radial
// profile cos(k pi |x - c|^2 / R^2) on a ball. Both have zero normal derivative.
InitialCondition cosine_mode_initial(const DomainGeometry& g, int k);
InitialCondition gaussian_bump_initial(const Vec& center, double width, double amplitude);

struct AssumptionThresholds {
  double ellipticity = 0.5;        // c
  double noncharacteristic = 0.5;  // c_a
  double derivative_tolerance = 1e-6;
};

struct AssumptionReport {
  double min_ellipticity = 0.0;
  double min_noncharacteristic = 0.0;
  double max_derivative_mismatch = 0.0;
  double max_symmetry_defect = 0.0;
  bool ellipticity_checked = false;
  bool noncharacteristic_checked = false;
  bool derivatives_checked = false;
  bool ellipticity_pass = true;
  bool noncharacteristic_pass = true;
  bool derivatives_pass = true;
  std::vector<std::string> notes;

  bool pass() const { return ellipticity_pass && noncharacteristic_pass && derivatives_pass; }
};

// Low-discrepancy (shifted Halton) points of D, by rejection from the
// bounding box. The seed fixes the Cranley-Patterson shift.
std::vector<Vec> sample_domain(const DomainGeometry& g, int count, std::uint64_t seed);
// Points spread over the boundary, obtained by radial projection of
// low-discrepancy box samples (the two endpoints for an interval).
std::vector<Vec> sample_boundary(const DomainGeometry& g, int count, std::uint64_t seed);

AssumptionReport check_ellipticity(const CoefficientField& field, const DomainGeometry& g, int samples,
                                   std::uint64_t seed, const AssumptionThresholds& thresholds = {});

AssumptionReport check_noncharacteristic(const CoefficientField& field, const DomainGeometry& g,
                                         double shell_width, int samples, std::uint64_t seed,
                                         const AssumptionThresholds& thresholds = {});

AssumptionReport check_derivatives(const CoefficientField& field, const InitialCondition& initial,
                                   const DomainGeometry& g, int samples, double step, double tolerance,
                                   std::uint64_t seed = 7);

}  // namespace refjac
