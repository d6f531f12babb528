#pragma once

#include "refjac/geometry.hpp"
#include "refjac/model.hpp"
#include "refjac/noise.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace refjac {

enum class JumpMode {
  // N_perp applied at every projected step.
  project_every_contact,
  // Contacts separated by interior stretches no longer than epsilon form one
  // cluster; a single N_perp jump is applied at the cluster's last contact.
  epsilon_excursion,
};

struct ReflectionScheme {
  double dt = 1e-4;
  JumpMode mode = JumpMode::project_every_contact;
  double epsilon = 0.0;
};

// Deferred jump of the epsilon-excursion mode. The tangential projection
// N_perp taken at contact time t_c and then carried along the free flow Phi
// equals Id - u w^T / (w^T u) with u = Phi gamma and w = Phi^{-T} gamma, so the
// retroactive jump is a left multiplication applied when the cluster closes.
struct PendingJump {
  bool active = false;
  double contact_time = 0.0;
  Vec transported_normal;  // u
  Vec dual_normal;         // w
};

struct ReflectedPathState {
  double t = 0.0;
  Vec x;
  Mat jacobian;  // columns J^{nu} for the initial directions
  double local_time = 0.0;
  double last_local_time_increment = 0.0;
  bool contact = false;  // last step ended on the boundary through a projection
  Vec contact_normal;    // inward normal at x when `contact` is set
  long steps = 0;
  long jumps = 0;
  PendingJump pending;
  // Jacobian restarted at the identity at some intermediate time; it receives
  // exactly the same left multiplications as `jacobian` from then on.
  std::optional<Mat> restarted;
};

ReflectedPathState initial_reflected_state(const DomainGeometry& g, const Vec& x, const Mat& directions);

/// One step of the projection scheme for (X, J):
///   Y = X + b dt + sigma dB,  H = J + (d b) J dt + sum_j (d sigma_j) J dB^j.
/// Y in D: X' = Y, J' = H. Otherwise X' = pi(Y), dL = d(Y, D) and, in the
/// project mode, J' = N_perp(X') H column-wise.
/// Throws CorruptedStateError if the current X is not in D.
ReflectedPathState step_reflected(ReflectedPathState state, double dt, const Vec& noise,
                                  const CoefficientField& field, const DomainGeometry& g,
                                  const ReflectionScheme& scheme);
void advance_reflected(ReflectedPathState& state, double dt, const Vec& noise, const CoefficientField& field,
                       const DomainGeometry& g, const ReflectionScheme& scheme);

// Applies a pending epsilon-mode jump (used when the horizon cuts a cluster).
void finalize_pending_jump(ReflectedPathState& state);

using ReflectedObserver = std::function<void(const ReflectedPathState&)>;

struct ReflectedRunOptions {
  // Restart a second Jacobian at the identity after this many steps (< 0: never).
  long restart_after_steps = -1;
};

ReflectedPathState run_reflected(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                 const Mat& directions, double horizon, const ReflectionScheme& scheme,
                                 NoiseStream& noise, const ReflectedObserver& observer = {},
                                 const ReflectedRunOptions& options = {});

struct ReflectedPathRecord {
  std::vector<double> times;
  std::vector<Vec> positions;
  std::vector<Mat> jacobians;
  std::vector<double> local_time;
  std::vector<bool> contact;
  long jump_count = 0;

  std::size_t size() const { return times.size(); }
};

ReflectedPathRecord simulate_reflected(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                       double horizon, const ReflectionScheme& scheme, NoiseStream& noise);

struct ExcursionRecord {
  long start_index = 0;
  long end_index = 0;
  double duration = 0.0;
  Vec start_point;
  Vec end_point;
  bool ends_on_boundary = false;
};

struct ExcursionDecomposition {
  std::vector<ExcursionRecord> excursions;
  // Right ends of the retained excursions that terminate on the boundary.
  std::vector<double> jump_times;
  std::vector<long> jump_indices;
};

/// Splits a recorded path at its contact steps into maximal interior
/// excursions and keeps those longer than eps. A stretch that runs from the
/// last contact into the horizon is censored and dropped; a path without any
/// contact is reported as one excursion over [0, t].
ExcursionDecomposition excursion_decomposition(const ReflectedPathRecord& record, double eps);

/// Jacobian over [r, t] from the ones over [r, s] and [s, t]. Columns map
/// initial directions, so the later factor acts on the left: J_rt = J_st J_rs.
Mat compose_jacobians(const Mat& j_rs, const Mat& j_st);

struct MultiplicativeCheck {
  Mat direct_split;    // J over [0, s]
  Mat direct_full;     // J over [0, t]
  Mat restarted;       // J over [s, t]
  double max_error = 0.0;
};

// Simulates one path, restarts a Jacobian at the step closest to `split`,
// and compares compose_jacobians(J_0s, J_st) with J_0t.
MultiplicativeCheck check_multiplicative_functional(const DomainGeometry& g, const CoefficientField& field,
                                                    const Vec& x, double horizon, double split,
                                                    const ReflectionScheme& scheme, std::uint64_t seed,
                                                    std::uint64_t path);

// CSV with columns step, t, X_*, J_*, L, contact.
void write_reflected_csv(std::ostream& os, const ReflectedPathRecord& record);
// CSV with columns start_t, end_t, duration, start_point_*, end_point_*.
void write_excursions_csv(std::ostream& os, const ReflectedPathRecord& record, const ExcursionDecomposition& dec);

}  // namespace refjac
