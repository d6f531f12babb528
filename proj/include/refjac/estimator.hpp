#pragma once

#include "refjac/geometry.hpp"
#include "refjac/model.hpp"
#include "refjac/noise.hpp"
#include "refjac/parallel.hpp"
#include "refjac/reflected.hpp"
#include "refjac/test_functions.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace refjac {

enum class SchemeKind { reflected, penalized };

struct SchemeConfig {
  SchemeKind kind = SchemeKind::reflected;
  double dt = 1e-4;
  double penalty = 1000.0;  // penalized only
  JumpMode mode = JumpMode::project_every_contact;  // reflected only
  double epsilon = 0.0;

  std::string label() const;
};

// Everything a Monte Carlo run needs besides the scheme.
struct Problem {
  const DomainGeometry& geometry;
  const CoefficientField& field;
  const InitialCondition& initial;
};

struct RunControl {
  std::uint64_t paths = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
};

// One recorded point of a path, as seen by a visitor.
struct PathPoint {
  double t;
  const Vec& x;
  const Mat& jacobian;
  double local_time_increment;
  bool contact;
};
using PathVisitor = std::function<void(const PathPoint&)>;

struct TerminalState {
  Vec x;
  Mat jacobian;
};

// Runs one path of either scheme; the visitor sees the initial point and
// every post-step point.
TerminalState simulate_path(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                            const Mat& directions, double horizon, const SchemeConfig& scheme, NoiseStream& noise,
                            const PathVisitor& visitor = {});

struct ValueEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t paths = 0;
};

/// u(t, x) = E f(X_t).
ValueEstimate estimate_value(const Problem& problem, const Vec& x, double horizon, const SchemeConfig& scheme,
                             const RunControl& run);

struct GradientEstimate {
  Vec x;
  double t = 0.0;
  double value = 0.0;  // u_hat, from the same paths
  double value_std_error = 0.0;
  Vec gradient;        // v_hat_i = mean of grad f(X_t) . J^{e_i}_t
  Vec std_error;
  std::uint64_t paths = 0;
  std::uint64_t seed = 0;
  SchemeConfig scheme;
};

/// v_i(t, x) = E grad f(X_t) . J^{e_i}_t from one matrix Jacobian per path.
GradientEstimate estimate_gradient(const Problem& problem, const Vec& x, double horizon, const SchemeConfig& scheme,
                                   const RunControl& run);

/// E grad f(X_t) . J^nu_t for a single direction.
ValueEstimate estimate_directional(const Problem& problem, const Vec& x, const Vec& nu, double horizon,
                                   const SchemeConfig& scheme, const RunControl& run);

struct ResidualReport {
  double residual = 0.0;  // E F(X_t, J_t) - F(x, nu) - int_0^t E L F ds
  double std_error = 0.0;
  // Decomposition of the residual: terminal increment minus the integrals.
  double terminal_increment = 0.0;
  double integral_lx_second = 0.0;  // 1/2 tr(a F_xx)
  double integral_lx_drift = 0.0;   // b . F_x
  double integral_lj_second = 0.0;  // 1/2 sum_k w_k^T F_nunu w_k, w_k = (d sigma_k) nu
  double integral_lj_mixed = 0.0;   // sum_k sigma_k^T F_xnu w_k
  double integral_lj_first = 0.0;   // (d b nu) . F_nu
  std::uint64_t paths = 0;
  double dt = 0.0;
};

/// Martingale-problem residual of the coupled generator L = L^X + L^J along
/// simulated (X, J^nu), with the time integral by the trapezoid rule on every
/// `record_every`-th step. Throws PreconditionError for inadmissible F.
ResidualReport martingale_residual(const TestFunction& F, const DomainGeometry& g, const CoefficientField& field,
                                   const Vec& x, const Vec& nu, double horizon, const SchemeConfig& scheme,
                                   const RunControl& run, int record_every = 1);

// The L^X and L^J parts of L F at one point, term by term.
struct GeneratorTerms {
  double lx_second = 0.0;
  double lx_drift = 0.0;
  double lj_second = 0.0;
  double lj_mixed = 0.0;
  double lj_first = 0.0;
  double total() const { return lx_second + lx_drift + lj_second + lj_mixed + lj_first; }
};
GeneratorTerms apply_generator(const TestFunction& F, const CoefficientField& field, const Vec& x, const Vec& nu);

struct DirichletReport {
  ValueEstimate estimate;  // E grad f(X_t) . J^gamma_t started at alpha
  bool exact_zero = false;
  Vec normal;
};

/// Started at a boundary point alpha with initial direction gamma(alpha).
/// The reflected scheme projects gamma away at once, so the estimate is an
/// exact zero; the penalized scheme keeps J(0) = gamma.
DirichletReport boundary_dirichlet_check(const Problem& problem, const Vec& alpha, double horizon,
                                         const SchemeConfig& scheme, const RunControl& run);

struct WeingartenReport {
  // Mean over paths of -sum_contacts grad f(X) . S(X) N_perp J^{e_i} dL.
  Vec mean;
  Vec std_error;
  // Ball only: the same sum written as -sum grad f . N_perp J dL / R, and the
  // largest per-path difference between the two bookkeepings.
  bool twin_available = false;
  Vec twin_mean;
  double max_twin_defect = 0.0;
  std::uint64_t paths = 0;
};

WeingartenReport weingarten_diagnostic(const Problem& problem, const Vec& x, double horizon,
                                       const SchemeConfig& scheme, const RunControl& run);

}  // namespace refjac
