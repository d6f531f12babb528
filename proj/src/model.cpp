#include "refjac/model.hpp"

#include "refjac/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace refjac {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double radical_inverse(std::uint64_t index, int base) {
  double inv = 1.0 / base;
  double factor = inv;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % base) * factor;
    index /= base;
    factor *= inv;
  }
  return value;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13};

class ShiftedHalton {
 public:
  ShiftedHalton(int dim, std::uint64_t seed) : dim_(dim) {
    std::uint64_t state = seed;
    for (int i = 0; i < dim + 1; ++i) {
      shift_[i] = static_cast<double>(splitmix64(state) >> 11) * 0x1p-53;
    }
  }

  // Point in [0,1)^(dim+1); the extra coordinate is spare for callers.
  std::array<double, kMaxDim + 1> next() {
    ++index_;
    std::array<double, kMaxDim + 1> u{};
    for (int i = 0; i < dim_ + 1; ++i) {
      double v = radical_inverse(index_, kPrimes[i]) + shift_[i];
      u[i] = v - std::floor(v);
    }
    return u;
  }

 private:
  int dim_;
  std::uint64_t index_ = 0;
  std::array<double, kMaxDim + 1> shift_{};
};

Vec box_point(const DomainGeometry& g, const std::array<double, kMaxDim + 1>& u) {
  const Vec lo = g.box_lo();
  const Vec hi = g.box_hi();
  Vec p(g.dimension());
  for (int i = 0; i < g.dimension(); ++i) p[i] = lo[i] + (hi[i] - lo[i]) * u[i];
  return p;
}

Vec clamp_to_box(const Vec& x, const Vec& lo, const Vec& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

CoefficientField brownian_field(int dim) {
  CoefficientField field;
  field.dim = dim;
  field.name = "bm";
  field.drift = [dim](const Vec&) { return Vec(Vec::Zero(dim)); };
  field.sigma = [dim](const Vec&) { return Mat(Mat::Identity(dim, dim)); };
  field.drift_jacobian = [dim](const Vec&) { return Mat(Mat::Zero(dim, dim)); };
  field.sigma_jacobians = [dim](const Vec&) {
    MatStack out;
    for (int j = 0; j < dim; ++j) out[j] = Mat::Zero(dim, dim);
    return out;
  };
  field.constant_sigma = true;
  field.state_independent = true;
  field.bounds = {0.0, 1.0, 0.0, 0.0};
  return field;
}

CoefficientField linear_drift_field(const Mat& drift_matrix, const DomainGeometry& g) {
  const int dim = g.dimension();
  if (drift_matrix.rows() != dim || drift_matrix.cols() != dim) {
    throw InvalidInputError("linear drift matrix must be d x d with d = domain dimension");
  }
  // The field is only ever evaluated on D and a thin exterior shell; beyond a
  // margin of one length scale it is frozen so the drift stays bounded.
  const double margin = g.length_scale();
  const Vec lo = g.box_lo().array() - margin;
  const Vec hi = g.box_hi().array() + margin;
  CoefficientField field = brownian_field(dim);
  field.name = "linear_drift";
  field.state_independent = false;
  field.drift = [drift_matrix, lo, hi](const Vec& x) { return Vec(drift_matrix * clamp_to_box(x, lo, hi)); };
  field.drift_jacobian = [drift_matrix, lo, hi](const Vec& x) {
    Mat jac = drift_matrix;
    for (int k = 0; k < x.size(); ++k) {
      if (x[k] < lo[k] || x[k] > hi[k]) jac.col(k).setZero();
    }
    return jac;
  };
  const double box_norm = std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff()) * std::sqrt(double(dim));
  const double op_norm = drift_matrix.operatorNorm();
  field.bounds = {op_norm * box_norm, 1.0, op_norm, 0.0};
  return field;
}

CoefficientField varsigma_field(int dim, double kappa) {
  if (!(kappa >= 0.0 && kappa <= 0.5)) {
    throw InvalidInputError("varsigma model requires kappa in [0, 0.5]");
  }
  CoefficientField field = brownian_field(dim);
  field.name = "varsigma";
  field.state_independent = false;
  field.sigma = [dim, kappa](const Vec& x) {
    return Mat((1.0 + kappa * std::sin(x[0])) * Mat::Identity(dim, dim));
  };
  field.sigma_jacobians = [dim, kappa](const Vec& x) {
    MatStack out;
    const double c = kappa * std::cos(x[0]);
    for (int j = 0; j < dim; ++j) {
      out[j] = Mat::Zero(dim, dim);
      out[j](j, 0) = c;
    }
    return out;
  };
  field.constant_sigma = (kappa == 0.0);
  field.bounds = {0.0, 1.0 + kappa, 0.0, kappa};
  return field;
}

CoefficientField affine_field(const Mat& drift_matrix, const Vec& drift_offset, const Mat& sigma,
                              const Mat* supplied_drift_jacobian) {
  const int dim = static_cast<int>(sigma.rows());
  if (sigma.cols() != dim || drift_matrix.rows() != dim || drift_matrix.cols() != dim || drift_offset.size() != dim) {
    throw InvalidInputError("affine model: drift matrix, offset and sigma must agree in dimension");
  }
  CoefficientField field = brownian_field(dim);
  field.name = "custom";
  field.state_independent = false;
  field.drift = [drift_matrix, drift_offset](const Vec& x) { return Vec(drift_matrix * x + drift_offset); };
  field.sigma = [sigma](const Vec&) { return sigma; };
  const Mat jac = supplied_drift_jacobian ? *supplied_drift_jacobian : drift_matrix;
  if (jac.rows() != dim || jac.cols() != dim) {
    throw InvalidInputError("affine model: supplied grad_b must be d x d");
  }
  field.drift_jacobian = [jac](const Vec&) { return jac; };
  field.bounds = {std::numeric_limits<double>::infinity(), sigma.operatorNorm(), jac.operatorNorm(), 0.0};
  return field;
}

InitialCondition constant_initial(int dim, double value) {
  return {"constant", [value](const Vec&) { return value; }, [dim](const Vec&) { return Vec(Vec::Zero(dim)); }};
}

InitialCondition linear_initial(double constant, const Vec& weights) {
  return {"linear", [constant, weights](const Vec& x) { return constant + weights.dot(x); },
          [weights](const Vec&) { return weights; }};
}

InitialCondition cosine_mode_initial(const DomainGeometry& g, int k) {
  if (k < 1) throw InvalidInputError("cosine mode index must be >= 1");
  const double kpi = k * std::numbers::pi;
  if (const auto* s = std::get_if<Interval>(&g.shape())) {
    const double lo = s->lo;
    const double len = s->hi - s->lo;
    return {"cosine_mode", [=](const Vec& x) { return std::cos(kpi * (x[0] - lo) / len); },
            [=](const Vec& x) { return Vec(Vec::Constant(1, -kpi / len * std::sin(kpi * (x[0] - lo) / len))); }};
  }
  if (const auto* s = std::get_if<Ball>(&g.shape())) {
    const Vec c = s->center;
    const double r2 = s->radius * s->radius;
    return {"cosine_mode", [=](const Vec& x) { return std::cos(kpi * (x - c).squaredNorm() / r2); },
            [=](const Vec& x) {
              const Vec z = x - c;
              return Vec(-std::sin(kpi * z.squaredNorm() / r2) * kpi * 2.0 / r2 * z);
            }};
  }
  throw InvalidInputError("cosine_mode initial condition is defined for interval and ball domains only");
}

InitialCondition gaussian_bump_initial(const Vec& center, double width, double amplitude) {
  if (!(width > 0.0)) throw InvalidInputError("gaussian bump width must be positive");
  const double inv = 1.0 / (2.0 * width * width);
  auto f = [=](const Vec& x) { return amplitude * std::exp(-(x - center).squaredNorm() * inv); };
  return {"gaussian_bump", f, [=](const Vec& x) { return Vec(-2.0 * inv * f(x) * (x - center)); }};
}

std::vector<Vec> sample_domain(const DomainGeometry& g, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  ShiftedHalton seq(g.dimension(), seed);
  const long max_attempts = 1000L * std::max(count, 1);
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < count; ++attempt) {
    Vec p = box_point(g, seq.next());
    if (g.contains(p)) out.push_back(p);
  }
  if (static_cast<int>(out.size()) < count) {
    throw NumericalError("sample_domain: rejection sampling did not produce enough interior points");
  }
  return out;
}

std::vector<Vec> sample_boundary(const DomainGeometry& g, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  ShiftedHalton seq(g.dimension(), seed);
  while (static_cast<int>(out.size()) < count) {
    const auto u = seq.next();
    Vec p = box_point(g, u);
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Interval>) {
            out.push_back(Vec::Constant(1, out.size() % 2 == 0 ? s.lo : s.hi));
          } else if constexpr (std::is_same_v<S, Ball>) {
            const Vec z = p - s.center;
            if (z.norm() > 1e-12) out.push_back(s.center + s.radius * z / z.norm());
          } else if constexpr (std::is_same_v<S, Ellipsoid>) {
            const Vec z = p - s.center;
            const double q = (z.array() / s.semi_axes.array()).square().sum();
            if (q > 1e-24) out.push_back(s.center + z / std::sqrt(q));
          } else {
            out.push_back(p + (s.offset - s.normal.dot(p)) * s.normal);
          }
        },
        g.shape());
  }
  return out;
}

AssumptionReport check_ellipticity(const CoefficientField& field, const DomainGeometry& g, int samples,
                                   std::uint64_t seed, const AssumptionThresholds& thresholds) {
  if (samples < 1) throw PreconditionError("check_ellipticity requires samples >= 1");
  AssumptionReport report;
  report.ellipticity_checked = true;
  report.min_ellipticity = std::numeric_limits<double>::infinity();
  for (const Vec& x : sample_domain(g, samples, seed)) {
    const Mat a = field.diffusion(x);
    report.max_symmetry_defect = std::max(report.max_symmetry_defect, max_abs_diff(a, a.transpose()));
    Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
    report.min_ellipticity = std::min(report.min_ellipticity, eig.eigenvalues().minCoeff());
  }
  report.ellipticity_pass = report.min_ellipticity >= thresholds.ellipticity && report.max_symmetry_defect <= 1e-10;
  return report;
}

AssumptionReport check_noncharacteristic(const CoefficientField& field, const DomainGeometry& g,
                                         double shell_width, int samples, std::uint64_t seed,
                                         const AssumptionThresholds& thresholds) {
  if (!(shell_width > 0.0)) throw PreconditionError("check_noncharacteristic requires a positive shell width");
  if (samples < 1) throw PreconditionError("check_noncharacteristic requires samples >= 1");
  AssumptionReport report;
  report.noncharacteristic_checked = true;
  report.min_noncharacteristic = std::numeric_limits<double>::infinity();
  const auto boundary = sample_boundary(g, samples, seed);
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    const Vec& alpha = boundary[i];
    const Vec gamma = inward_normal(g, alpha);
    // Depth into the shell, spread by the golden-ratio sequence; i = 0 sits on the boundary.
    const double frac = std::fmod(static_cast<double>(i) * 0.6180339887498949, 1.0);
    const Vec x = alpha + frac * shell_width * gamma;
    const double value = (field.sigma(x).transpose() * gamma).squaredNorm();
    report.min_noncharacteristic = std::min(report.min_noncharacteristic, value);
  }
  report.noncharacteristic_pass = report.min_noncharacteristic >= thresholds.noncharacteristic;
  return report;
}

AssumptionReport check_derivatives(const CoefficientField& field, const InitialCondition& initial,
                                   const DomainGeometry& g, int samples, double step, double tolerance,
                                   std::uint64_t seed) {
  if (!(step > 0.0)) throw PreconditionError("check_derivatives requires a positive step");
  AssumptionReport report;
  report.derivatives_checked = true;
  const int d = field.dim;
  double worst = 0.0;
  for (const Vec& x : sample_domain(g, samples, seed)) {
    const Mat jb = field.drift_jacobian(x);
    const MatStack js = field.sigma_jacobians(x);
    const Vec gf = initial.grad(x);
    for (int k = 0; k < d; ++k) {
      Vec xp = x, xm = x;
      xp[k] += step;
      xm[k] -= step;
      const Vec db = (field.drift(xp) - field.drift(xm)) / (2.0 * step);
      worst = std::max(worst, (db - jb.col(k)).cwiseAbs().maxCoeff());
      const Mat ds = (field.sigma(xp) - field.sigma(xm)) / (2.0 * step);
      for (int j = 0; j < d; ++j) {
        // column j of d sigma / d x^k against [j](., k)
        worst = std::max(worst, (ds.col(j) - js[j].col(k)).cwiseAbs().maxCoeff());
      }
      const double df = (initial.f(xp) - initial.f(xm)) / (2.0 * step);
      worst = std::max(worst, std::abs(df - gf[k]));
    }
  }
  report.max_derivative_mismatch = worst;
  report.derivatives_pass = worst <= tolerance;
  return report;
}

}  // namespace refjac
