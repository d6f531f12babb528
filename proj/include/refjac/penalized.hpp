#pragma once

#include "refjac/geometry.hpp"
#include "refjac/model.hpp"
#include "refjac/noise.hpp"
#include "refjac/parallel.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace refjac {

/// State of the penalized diffusion X_n with its directional Jacobians.
///
/// Columns of `jacobian` are J_n^{nu} for the initial directions (the identity
/// by default); `occupation` is the time spent outside D so far.
struct PenalizedPathState {
  double t = 0.0;
  Vec x;
  Mat jacobian;
  double occupation = 0.0;
  double penalty = 1.0;
  long steps = 0;
};

struct PenaltyScheme {
  double penalty = 1000.0;  // n
  double dt = 1e-4;
  // Stability guard: dt * n must not exceed this (and never 1).
  double max_dt_times_n = 1.0;
};

PenalizedPathState initial_penalized_state(const Vec& x, double penalty);
PenalizedPathState initial_penalized_state(const Vec& x, const Mat& directions, double penalty);

/// One Euler-Maruyama step of the penalized system:
///   X' = X + b dt + sigma dB - n beta0(X) dt
///   J' = J + (d b) J dt + sum_j (d sigma_j) J dB^j - n 1{X not in D} N(pi(X)) J dt
///   T' = T + 1{X not in D} dt
/// Throws StabilityError when dt * n > 1.
PenalizedPathState step_penalized(PenalizedPathState state, double dt, const Vec& noise,
                                  const CoefficientField& field, const DomainGeometry& g);
void advance_penalized(PenalizedPathState& state, double dt, const Vec& noise, const CoefficientField& field,
                       const DomainGeometry& g);

using PenalizedObserver = std::function<void(const PenalizedPathState&)>;

// Simulates up to the horizon (partial last step lands exactly on it). The
// observer, if any, sees the initial state and every post-step state.
PenalizedPathState run_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                 const Mat& directions, double horizon, const PenaltyScheme& scheme,
                                 NoiseStream& noise, const PenalizedObserver& observer = {});

struct PenalizedRun {
  PenalizedPathState terminal;
  std::vector<PenalizedPathState> path;  // filled when recording
};

PenalizedRun simulate_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                double horizon, const PenaltyScheme& scheme, NoiseStream& noise,
                                bool record_full_path = false);

// CSV with columns step, t, X_1..X_d, J_11..J_dd, T_n (J_ij = row i, column j).
void write_penalized_csv(std::ostream& os, const std::vector<PenalizedPathState>& path);

/// (X_n^{x + eps nu}(t) - X_n^x(t)) / eps on common noise (seed, path).
Vec flow_ratio_penalized(const DomainGeometry& g, const CoefficientField& field, const Vec& x, const Vec& nu,
                         double eps, double horizon, const PenaltyScheme& scheme, std::uint64_t seed,
                         std::uint64_t path);

struct OccupationRow {
  double penalty = 0.0;
  double dt = 0.0;
  SampleStats fourth_moment;  // E (T^n(t))^4
  SampleStats mean;           // E T^n(t)
};

struct OccupationStudy {
  std::vector<OccupationRow> rows;
  double slope = 0.0;           // least-squares slope of log E T^4 against log n
  double slope_std_error = 0.0;
};

// dt(n) = min(dt_max, dt_times_n / n)
struct PenaltyDtRule {
  double dt_times_n = 0.1;
  double dt_max = 1e-2;
  double dt_for(double penalty) const;
};

OccupationStudy occupation_moment_study(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                        double horizon, const std::vector<double>& penalties,
                                        std::uint64_t paths, const PenaltyDtRule& rule, std::uint64_t seed,
                                        int workers = 1);

/// Monte Carlo estimate of E sup_{s <= t} |J_n^nu(s)|^4.
SampleStats jacobian_sup_moment(const DomainGeometry& g, const CoefficientField& field, const Vec& x,
                                const Vec& nu, double horizon, const PenaltyScheme& scheme,
                                std::uint64_t paths, std::uint64_t seed, int workers = 1);

}  // namespace refjac
