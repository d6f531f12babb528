#pragma once

#include "refjac/linalg.hpp"

#include <optional>
#include <string>
#include <variant>

namespace refjac {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct Ball {
  Vec center;
  double radius = 1.0;
};

struct Ellipsoid {
  Vec center;
  Vec semi_axes;
};

// {x : normal . x >= offset}; `normal` is the inward unit normal.
// Unbounded, so only accepted when test-only geometry is enabled.
struct HalfSpace {
  Vec normal;
  double offset = 0.0;
};

using Shape = std::variant<Interval, Ball, Ellipsoid, HalfSpace>;

struct GeometryOptions {
  bool allow_test_only = false;
};

/// A closed convex smooth domain D together with its boundary geometry.
///
/// Values are immutable after construction and may be shared freely between
/// worker threads.
class DomainGeometry {
 public:
  explicit DomainGeometry(Shape shape, GeometryOptions options = {});

  static DomainGeometry interval(double lo, double hi);
  static DomainGeometry ball(Vec center, double radius);
  static DomainGeometry ellipsoid(Vec center, Vec semi_axes);
  static DomainGeometry half_space(Vec normal, double offset, GeometryOptions options);

  int dimension() const { return dim_; }
  const Shape& shape() const { return shape_; }
  std::string kind() const;

  bool bounded() const;
  // Infinite for a half-space.
  double diameter() const;
  // Diameter, or 1 for unbounded shapes; all tolerances scale with this.
  double length_scale() const;
  // Boundary membership tolerance: 1e-8 * length_scale().
  double boundary_tolerance() const;

  // Closed-domain membership.
  bool contains(const Vec& x) const;
  // Distance to the boundary for points of D (first-order estimate for the
  // ellipsoid); zero on the boundary.
  double interior_gap(const Vec& x) const;
  bool on_boundary(const Vec& x) const;

  // Axis-aligned box containing D (a unit box around the boundary plane for a
  // half-space). Used by the samplers.
  Vec box_lo() const { return box_lo_; }
  Vec box_hi() const { return box_hi_; }
  Vec centroid() const;

 private:
  Shape shape_;
  int dim_ = 0;
  Vec box_lo_;
  Vec box_hi_;
};

// Closest boundary point of an exterior point, with its inward normal.
struct ExteriorProjection {
  Vec point;
  double distance = 0.0;
  Vec normal;
};

/// d(x, D): zero for x in D, the Euclidean distance to D otherwise.
double signed_distance(const DomainGeometry& g, const Vec& x);

/// Metric projection pi(x) onto the boundary. Points already on the boundary
/// are returned unchanged; strictly interior points raise PreconditionError.
Vec project_to_boundary(const DomainGeometry& g, const Vec& x);

/// Unit inward normal at a boundary point.
Vec inward_normal(const DomainGeometry& g, const Vec& alpha);

/// beta0(x) = (1/2) grad d(x,D)^2 = x - pi(x) outside D, zero inside.
Vec beta0(const DomainGeometry& g, const Vec& x);

/// Fused projection used by the path schemes: nullopt when x is in D.
std::optional<ExteriorProjection> exterior_projection(const DomainGeometry& g, const Vec& x);

struct BoundaryFrame {
  Vec point;
  Vec normal;
};

BoundaryFrame make_frame(const DomainGeometry& g, const Vec& alpha);

// N(alpha) v = (v . gamma) gamma
Vec project_normal(const BoundaryFrame& frame, const Vec& v);
// N_perp(alpha) v = v - (v . gamma) gamma
Vec project_tangential(const BoundaryFrame& frame, const Vec& v);

// Column-wise projections used by the Jacobian updates. The coefficient is
// (v . gamma) / (gamma . gamma), so projecting gamma itself yields an exact zero.
void project_tangential_columns(const Vec& normal, Mat& m);
void subtract_normal_columns(const Vec& normal, double scale, Mat& m);

/// Shape operator S(alpha) eta = -grad_eta gamma(alpha) on the tangent space,
/// computed analytically per shape. Sign convention: the unit sphere has S = Id.
Vec weingarten(const DomainGeometry& g, const BoundaryFrame& frame, const Vec& eta);

}  // namespace refjac
