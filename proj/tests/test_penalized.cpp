#include "helpers.hpp"
#include "refjac/errors.hpp"
#include "refjac/penalized.hpp"

#include <cmath>
#include <sstream>

using namespace refjac;
using namespace refjac::testing;

namespace {

const DomainGeometry kUnit = DomainGeometry::interval(0.0, 1.0);

CoefficientField frozen(int d) { return affine_field(Mat::Zero(d, d), Vec::Zero(d), Mat::Zero(d, d)); }
CoefficientField contraction(int d) { return affine_field(-Mat::Identity(d, d), Vec::Zero(d), Mat::Identity(d, d)); }

}  // namespace

TEST_CASE("quiescent interior step") {
  const auto g = DomainGeometry::ball(vec({0.0, 0.0}), 1.0);
  auto s = initial_penalized_state(vec({0.2, -0.1}), 50.0);
  const auto next = step_penalized(s, 0.01, Vec::Zero(2), brownian_field(2), g);
  CHECK(max_abs(next.x - s.x) == 0.0);
  CHECK(max_abs(next.jacobian - Mat::Identity(2, 2)) == 0.0);
  CHECK(next.occupation == 0.0);
  CHECK(next.t == doctest::Approx(0.01));
}

TEST_CASE("exterior step by hand") {
  auto s = initial_penalized_state(vec({1.2}), 10.0);
  s.x[0] = 1.2;  // exterior states arise mid-path; set one up directly
  const auto next = step_penalized(s, 0.01, Vec::Zero(1), frozen(1), kUnit);
  CHECK(next.x[0] == doctest::Approx(1.18).epsilon(1e-15));
  CHECK(next.jacobian(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(next.occupation == doctest::Approx(0.01));
}

TEST_CASE("linear drift Jacobian step is exact") {
  const auto g = DomainGeometry::ball(vec({0.0, 0.0}), 1.0);
  auto s = initial_penalized_state(vec({0.1, 0.1}), 100.0);
  const auto next = step_penalized(s, 1e-3, vec({0.01, -0.02}), contraction(2), g);
  CHECK(max_abs(next.jacobian - (1.0 - 1e-3) * Mat::Identity(2, 2)) < 1e-16);
}

TEST_CASE("stability guard") {
  auto s = initial_penalized_state(vec({0.5}), 1000.0);
  CHECK_THROWS_AS(step_penalized(s, 2e-3, Vec::Zero(1), brownian_field(1), kUnit), StabilityError);
  CHECK_NOTHROW(step_penalized(s, 1e-3, Vec::Zero(1), brownian_field(1), kUnit));
}

TEST_CASE("frozen dynamics keep the starting point") {
  NoiseStream noise(1, 0);
  const auto run = simulate_penalized(kUnit, frozen(1), vec({0.3}), 0.37, {100.0, 1e-3, 1.0}, noise, true);
  CHECK(run.terminal.x[0] == 0.3);
  CHECK(run.terminal.jacobian(0, 0) == 1.0);
  CHECK(run.terminal.occupation == 0.0);
  CHECK(run.terminal.t == doctest::Approx(0.37).epsilon(1e-14));
  CHECK(run.terminal.steps == 370);
  CHECK(run.path.size() == 371);
}

TEST_CASE("partial final step lands on the horizon") {
  NoiseStream noise(1, 0);
  const auto run = simulate_penalized(kUnit, brownian_field(1), vec({0.3}), 0.1005, {10.0, 1e-3, 1.0}, noise, true);
  CHECK(run.terminal.steps == 101);
  CHECK(run.terminal.t == doctest::Approx(0.1005).epsilon(1e-15));
  CHECK(noise.counter() == 101);
}

TEST_CASE("occupation is nondecreasing and bounded by t") {
  NoiseStream noise(3, 11);
  const auto run = simulate_penalized(kUnit, brownian_field(1), vec({0.95}), 0.5, {100.0, 1e-3, 1.0}, noise, true);
  double prev = 0.0;
  for (const auto& st : run.path) {
    CHECK(st.occupation >= prev);
    CHECK(st.occupation <= st.t + 1e-15);
    prev = st.occupation;
  }
  CHECK(run.terminal.occupation > 0.0);
}

TEST_CASE("symmetric start has mean 1/2") {
  const int paths = 4000;
  std::vector<double> xs(paths);
  for (int p = 0; p < paths; ++p) {
    NoiseStream noise(8, p);
    xs[p] = simulate_penalized(kUnit, brownian_field(1), vec({0.5}), 0.5, {100.0, 1e-3, 1.0}, noise).terminal.x[0];
  }
  const auto s = sample_stats(xs);
  CHECK(std::abs(s.mean - 0.5) <= 3.0 * s.std_error);
}

TEST_CASE("mean occupation decreases with n") {
  double prev = 1e300;
  for (double n : {10.0, 100.0, 1000.0}) {
    const int paths = 2000;
    std::vector<double> occ(paths);
    for_each_path(paths, 1, [&](std::uint64_t p) {
      NoiseStream noise(21, p);
      occ[p] = simulate_penalized(kUnit, brownian_field(1), vec({0.9}), 1.0, {n, 0.1 / n, 1.0}, noise)
                   .terminal.occupation;
    });
    const double m = sample_stats(occ).mean;
    CHECK(m < prev);
    prev = m;
  }
}

TEST_CASE("flow ratio examples") {
  CHECK(flow_ratio_penalized(kUnit, frozen(1), vec({0.4}), vec({1.0}), 0.1, 1.0, {100.0, 1e-3, 1.0}, 1, 0)[0] ==
        doctest::Approx(1.0).epsilon(1e-12));
  // Far from the boundary of a large ball: exact affine flow e^{-t} nu.
  const auto big = DomainGeometry::ball(vec({0.0, 0.0}), 100.0);
  const Vec nu = vec({0.6, 0.8});
  const Vec r = flow_ratio_penalized(big, contraction(2), vec({0.0, 0.0}), nu, 1e-3, 0.5, {10.0, 1e-3, 1.0}, 4, 2);
  CHECK(max_abs(r - std::pow(1.0 - 1e-3, 500) * nu) < 1e-9);
  CHECK(max_abs(r - std::exp(-0.5) * nu) < 1e-3);
  CHECK_THROWS_AS(flow_ratio_penalized(kUnit, frozen(1), vec({0.99}), vec({1.0}), 0.1, 1.0, {}, 1, 0),
                  PreconditionError);
}

TEST_CASE("flow ratio converges to the Jacobian as eps shrinks") {
  const auto g = DomainGeometry::ball(vec({0.0, 0.0}), 1.0);
  const auto field = varsigma_field(2, 0.3);
  const Vec x = vec({0.7, 0.1}), nu = vec({1.0, 0.0});
  const PenaltyScheme scheme{100.0, 1e-3, 1.0};
  double total_prev = 0.0;
  std::vector<double> err(3, 0.0);
  for (std::uint64_t p = 0; p < 20; ++p) {
    NoiseStream noise(6, p);
    const Vec jnu = run_penalized(g, field, x, Mat::Identity(2, 2), 0.3, scheme, noise).jacobian * nu;
    int i = 0;
    for (double eps : {1e-2, 1e-3, 1e-4}) err[i++] += (flow_ratio_penalized(g, field, x, nu, eps, 0.3, scheme, 6, p) - jnu).norm();
  }
  (void)total_prev;
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}

TEST_CASE("Jacobian columns are linear in the direction") {
  const auto g = DomainGeometry::ball(vec({0.0, 0.0}), 1.0);
  const auto field = varsigma_field(2, 0.4);
  NoiseStream a(12, 3), b(12, 3);
  const PenaltyScheme scheme{300.0, 1e-4, 1.0};
  const Mat full = run_penalized(g, field, vec({0.8, 0.3}), Mat::Identity(2, 2), 0.2, scheme, a).jacobian;
  const Mat one = run_penalized(g, field, vec({0.8, 0.3}), vec({1.0, 1.0}), 0.2, scheme, b).jacobian;
  CHECK(max_abs(one.col(0) - full.col(0) - full.col(1)) < 1e-10);
}

TEST_CASE("occupation study: degenerate and statistically stable") {
  CHECK_THROWS_AS(occupation_moment_study(kUnit, frozen(1), vec({0.5}), 1.0, {10, 100, 1000}, 10, {}, 1),
                  DegenerateDataError);
  CHECK_THROWS_AS(occupation_moment_study(kUnit, brownian_field(1), vec({0.5}), 1.0, {10, 20, 40}, 10, {}, 1),
                  PreconditionError);
  const auto a = occupation_moment_study(kUnit, brownian_field(1), vec({0.9}), 0.3, {10, 100, 1000}, 800, {}, 1);
  const auto b = occupation_moment_study(kUnit, brownian_field(1), vec({0.9}), 0.3, {10, 100, 1000}, 1600, {}, 1);
  CHECK(a.rows.size() == 3);
  CHECK(std::abs(a.slope - b.slope) <= 2.0 * std::hypot(a.slope_std_error, b.slope_std_error));
  CHECK(a.slope < -1.0);
}

TEST_CASE("penalized CSV has the versioned header") {
  NoiseStream noise(1, 0);
  const auto run = simulate_penalized(kUnit, brownian_field(1), vec({0.5}), 0.003, {10.0, 1e-3, 1.0}, noise, true);
  std::ostringstream os;
  write_penalized_csv(os, run.path);
  const std::string out = os.str();
  CHECK(out.rfind("# schema=1\nstep,t,X_1,J_11,T_n\n", 0) == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 2 + 4);
}
