#include "refjac/geometry.hpp"

#include "refjac/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace refjac {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string describe(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

void require_finite(const Vec& x, const char* what) {
  if (!x.allFinite()) {
    throw InvalidInputError(std::string(what) + ": non-finite coordinates " + describe(x));
  }
}

void require_dimension(const Vec& x, int dim) {
  if (x.size() != dim) {
    throw InvalidInputError("point " + describe(x) + " has dimension " + std::to_string(x.size()) +
                            ", domain has dimension " + std::to_string(dim));
  }
}

int validate(const Shape& shape, const GeometryOptions& options) {
  auto check_dim = [](long d) {
    if (d < 1 || d > kMaxDim) {
      throw InvalidInputError("domain dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    }
    return static_cast<int>(d);
  };
  return std::visit(
      overloaded{
          [&](const Interval& s) {
            if (!std::isfinite(s.lo) || !std::isfinite(s.hi) || !(s.lo < s.hi)) {
              throw InvalidInputError("interval requires finite lo < hi");
            }
            return 1;
          },
          [&](const Ball& s) {
            int d = check_dim(s.center.size());
            if (!s.center.allFinite() || !std::isfinite(s.radius) || !(s.radius > 0.0)) {
              throw InvalidInputError("ball requires a finite center and a positive radius");
            }
            return d;
          },
          [&](const Ellipsoid& s) {
            int d = check_dim(s.center.size());
            if (s.semi_axes.size() != d) {
              throw InvalidInputError("ellipsoid center and semi-axes differ in dimension");
            }
            if (!s.center.allFinite() || !s.semi_axes.allFinite() || !(s.semi_axes.minCoeff() > 0.0)) {
              throw InvalidInputError("ellipsoid requires finite center and positive semi-axes");
            }
            return d;
          },
          [&](const HalfSpace& s) {
            if (!options.allow_test_only) {
              throw InvalidInputError("half-space domains are unbounded and only available as test-only geometry");
            }
            int d = check_dim(s.normal.size());
            if (!s.normal.allFinite() || std::abs(s.normal.norm() - 1.0) > 1e-10 || !std::isfinite(s.offset)) {
              throw InvalidInputError("half-space requires a unit normal and a finite offset");
            }
            return d;
          },
      },
      shape);
}

struct EllipsoidRoot {
  Vec point;
  double lambda;
};

// Closest point of the ellipsoid surface to an exterior point. The Lagrange
// multiplier lambda >= 0 solves phi(lambda) = sum (a_i z_i / (a_i^2 + lambda))^2 - 1 = 0;
// phi is convex and decreasing, so Newton from the left is monotone. Bisection
// takes over if an iterate leaves the bracket.
EllipsoidRoot ellipsoid_exterior_root(const Ellipsoid& e, const Vec& y) {
  const Vec z = y - e.center;
  const Vec a2 = e.semi_axes.array().square();
  auto phi = [&](double lambda, double* dphi) {
    double value = -1.0;
    double deriv = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      const double denom = a2[i] + lambda;
      const double r = e.semi_axes[i] * z[i] / denom;
      value += r * r;
      deriv += -2.0 * r * r / denom;
    }
    if (dphi) *dphi = deriv;
    return value;
  };

  double lo = 0.0;
  double hi = e.semi_axes.maxCoeff() * z.norm();
  double lambda = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    double dphi = 0.0;
    const double value = phi(lambda, &dphi);
    if (std::abs(value) < 1e-14) break;
    if (value > 0.0) {
      lo = lambda;
    } else {
      hi = lambda;
    }
    double next = lambda - value / dphi;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - lambda) <= 1e-16 * std::max(1.0, lambda)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  if (std::abs(phi(lambda, nullptr)) >= 1e-10) {
    throw NumericalError("ellipsoid projection did not converge for point " + describe(y));
  }
  Vec point = e.center;
  for (int i = 0; i < z.size(); ++i) point[i] += a2[i] * z[i] / (a2[i] + lambda);
  return {point, lambda};
}

Vec ellipsoid_outward_gradient(const Ellipsoid& e, const Vec& x) {
  return ((x - e.center).array() / e.semi_axes.array().square()).matrix();
}

double ellipsoid_level(const Ellipsoid& e, const Vec& x) {
  return ((x - e.center).array() / e.semi_axes.array()).square().sum();
}

}  // namespace

DomainGeometry::DomainGeometry(Shape shape, GeometryOptions options)
    : shape_(std::move(shape)), dim_(validate(shape_, options)) {
  std::visit(overloaded{
                 [&](const Interval& s) {
                   box_lo_ = Vec::Constant(1, s.lo);
                   box_hi_ = Vec::Constant(1, s.hi);
                 },
                 [&](const Ball& s) {
                   box_lo_ = s.center.array() - s.radius;
                   box_hi_ = s.center.array() + s.radius;
                 },
                 [&](const Ellipsoid& s) {
                   box_lo_ = s.center - s.semi_axes;
                   box_hi_ = s.center + s.semi_axes;
                 },
                 [&](const HalfSpace& s) {
                   // Unit box sitting on the boundary plane, on the inner side.
                   const Vec base = s.offset * s.normal;
                   box_lo_ = base.array() - 0.5;
                   box_hi_ = base.array() + 0.5;
                   for (int i = 0; i < dim_; ++i) {
                     if (s.normal[i] > 0.0) box_lo_[i] = std::max(box_lo_[i], base[i]);
                     if (s.normal[i] < 0.0) box_hi_[i] = std::min(box_hi_[i], base[i]);
                   }
                 },
             },
             shape_);
}

DomainGeometry DomainGeometry::interval(double lo, double hi) { return DomainGeometry(Interval{lo, hi}); }

DomainGeometry DomainGeometry::ball(Vec center, double radius) {
  return DomainGeometry(Ball{std::move(center), radius});
}

DomainGeometry DomainGeometry::ellipsoid(Vec center, Vec semi_axes) {
  return DomainGeometry(Ellipsoid{std::move(center), std::move(semi_axes)});
}

DomainGeometry DomainGeometry::half_space(Vec normal, double offset, GeometryOptions options) {
  return DomainGeometry(HalfSpace{std::move(normal), offset}, options);
}

std::string DomainGeometry::kind() const {
  return std::visit(overloaded{[](const Interval&) { return std::string("interval"); },
                               [](const Ball&) { return std::string("ball"); },
                               [](const Ellipsoid&) { return std::string("ellipsoid"); },
                               [](const HalfSpace&) { return std::string("halfspace"); }},
                    shape_);
}

bool DomainGeometry::bounded() const { return !std::holds_alternative<HalfSpace>(shape_); }

double DomainGeometry::diameter() const {
  return std::visit(overloaded{[](const Interval& s) { return s.hi - s.lo; },
                               [](const Ball& s) { return 2.0 * s.radius; },
                               [](const Ellipsoid& s) { return 2.0 * s.semi_axes.maxCoeff(); },
                               [](const HalfSpace&) { return std::numeric_limits<double>::infinity(); }},
                    shape_);
}

double DomainGeometry::length_scale() const { return bounded() ? diameter() : 1.0; }

double DomainGeometry::boundary_tolerance() const { return 1e-8 * length_scale(); }

Vec DomainGeometry::centroid() const { return 0.5 * (box_lo_ + box_hi_); }

bool DomainGeometry::contains(const Vec& x) const {
  return std::visit(
      overloaded{[&](const Interval& s) { return x[0] >= s.lo && x[0] <= s.hi; },
                 [&](const Ball& s) { return (x - s.center).squaredNorm() <= s.radius * s.radius; },
                 [&](const Ellipsoid& s) { return ellipsoid_level(s, x) <= 1.0; },
                 [&](const HalfSpace& s) { return s.normal.dot(x) >= s.offset; }},
      shape_);
}

double DomainGeometry::interior_gap(const Vec& x) const {
  return std::visit(overloaded{
                        [&](const Interval& s) { return std::min(x[0] - s.lo, s.hi - x[0]); },
                        [&](const Ball& s) { return s.radius - (x - s.center).norm(); },
                        [&](const Ellipsoid& s) {
                          const double root = std::sqrt(ellipsoid_level(s, x));
                          const double grad = ellipsoid_outward_gradient(s, x).norm();
                          if (grad == 0.0) return s.semi_axes.minCoeff();
                          return (1.0 - root) * root / grad;
                        },
                        [&](const HalfSpace& s) { return s.normal.dot(x) - s.offset; },
                    },
                    shape_);
}

bool DomainGeometry::on_boundary(const Vec& x) const {
  if (x.size() != dim_ || !x.allFinite()) return false;
  if (contains(x)) return interior_gap(x) <= boundary_tolerance();
  return signed_distance(*this, x) <= boundary_tolerance();
}

std::optional<ExteriorProjection> exterior_projection(const DomainGeometry& g, const Vec& x) {
  if (g.contains(x)) return std::nullopt;
  return std::visit(
      overloaded{
          [&](const Interval& s) -> std::optional<ExteriorProjection> {
            if (x[0] < s.lo) return ExteriorProjection{Vec::Constant(1, s.lo), s.lo - x[0], Vec::Constant(1, 1.0)};
            return ExteriorProjection{Vec::Constant(1, s.hi), x[0] - s.hi, Vec::Constant(1, -1.0)};
          },
          [&](const Ball& s) -> std::optional<ExteriorProjection> {
            const Vec z = x - s.center;
            const double r = z.norm();
            const Vec outward = z / r;
            return ExteriorProjection{s.center + s.radius * outward, r - s.radius, -outward};
          },
          [&](const Ellipsoid& s) -> std::optional<ExteriorProjection> {
            EllipsoidRoot root = ellipsoid_exterior_root(s, x);
            const Vec grad = ellipsoid_outward_gradient(s, root.point);
            return ExteriorProjection{root.point, (x - root.point).norm(), -grad / grad.norm()};
          },
          [&](const HalfSpace& s) -> std::optional<ExteriorProjection> {
            const double depth = s.offset - s.normal.dot(x);
            return ExteriorProjection{x + depth * s.normal, depth, s.normal};
          },
      },
      g.shape());
}

double signed_distance(const DomainGeometry& g, const Vec& x) {
  require_dimension(x, g.dimension());
  require_finite(x, "signed_distance");
  auto proj = exterior_projection(g, x);
  return proj ? proj->distance : 0.0;
}

Vec project_to_boundary(const DomainGeometry& g, const Vec& x) {
  require_dimension(x, g.dimension());
  require_finite(x, "project_to_boundary");
  if (auto proj = exterior_projection(g, x)) return proj->point;
  if (g.interior_gap(x) <= g.boundary_tolerance()) return x;
  throw PreconditionError("project_to_boundary: point " + describe(x) + " is strictly interior");
}

Vec inward_normal(const DomainGeometry& g, const Vec& alpha) {
  require_dimension(alpha, g.dimension());
  require_finite(alpha, "inward_normal");
  if (!g.on_boundary(alpha)) {
    throw InvalidInputError("inward_normal: point " + describe(alpha) + " is not on the boundary");
  }
  return std::visit(overloaded{
                        [&](const Interval& s) {
                          const bool lower = std::abs(alpha[0] - s.lo) <= std::abs(alpha[0] - s.hi);
                          return Vec(Vec::Constant(1, lower ? 1.0 : -1.0));
                        },
                        [&](const Ball& s) {
                          const Vec z = s.center - alpha;
                          return Vec(z / z.norm());
                        },
                        [&](const Ellipsoid& s) {
                          const Vec grad = ellipsoid_outward_gradient(s, alpha);
                          return Vec(-grad / grad.norm());
                        },
                        [&](const HalfSpace& s) { return s.normal; },
                    },
                    g.shape());
}

Vec beta0(const DomainGeometry& g, const Vec& x) {
  require_dimension(x, g.dimension());
  require_finite(x, "beta0");
  if (auto proj = exterior_projection(g, x)) return x - proj->point;
  return Vec::Zero(g.dimension());
}

BoundaryFrame make_frame(const DomainGeometry& g, const Vec& alpha) {
  return BoundaryFrame{alpha, inward_normal(g, alpha)};
}

Vec project_normal(const BoundaryFrame& frame, const Vec& v) {
  const Vec& n = frame.normal;
  return (v.dot(n) / n.squaredNorm()) * n;
}

Vec project_tangential(const BoundaryFrame& frame, const Vec& v) {
  const Vec& n = frame.normal;
  return v - (v.dot(n) / n.squaredNorm()) * n;
}

void project_tangential_columns(const Vec& normal, Mat& m) {
  const double nn = normal.squaredNorm();
  for (int k = 0; k < m.cols(); ++k) {
    const double c = m.col(k).dot(normal) / nn;
    m.col(k) -= c * normal;
  }
}

void subtract_normal_columns(const Vec& normal, double scale, Mat& m) {
  const double nn = normal.squaredNorm();
  for (int k = 0; k < m.cols(); ++k) {
    const double c = scale * m.col(k).dot(normal) / nn;
    m.col(k) -= c * normal;
  }
}

Vec weingarten(const DomainGeometry& g, const BoundaryFrame& frame, const Vec& eta) {
  require_dimension(eta, g.dimension());
  const double normal_part = eta.dot(frame.normal);
  if (std::abs(normal_part) > 1e-10 * std::max(1.0, eta.norm())) {
    throw PreconditionError("weingarten: direction is not tangent (eta . gamma = " + std::to_string(normal_part) + ")");
  }
  return std::visit(overloaded{
                        [&](const Interval&) { return Vec(Vec::Zero(1)); },
                        [&](const Ball& s) { return Vec(eta / s.radius); },
                        [&](const Ellipsoid& s) {
                          // q(x) = sum (z_i/a_i)^2, outward normal n = grad q / |grad q|;
                          // -grad_eta gamma = grad_eta n = P_T Hess(q) eta / |grad q|.
                          const Vec grad = 2.0 * ellipsoid_outward_gradient(s, frame.point);
                          const Vec hess_eta = (2.0 * eta.array() / s.semi_axes.array().square()).matrix();
                          Vec out = hess_eta / grad.norm();
                          return project_tangential(frame, out);
                        },
                        [&](const HalfSpace& s) { return Vec(Vec::Zero(s.normal.size())); },
                    },
                    g.shape());
}

}  // namespace refjac
