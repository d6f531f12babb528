#include "helpers.hpp"
#include "refjac/errors.hpp"
#include "refjac/estimator.hpp"

#include <cmath>

using namespace refjac;
using namespace refjac::testing;

namespace {

const DomainGeometry kUnit = DomainGeometry::interval(0.0, 1.0);
const DomainGeometry kDisc = DomainGeometry::ball(vec({0.0, 0.0}), 1.0);

// Test-side matrix exponential: Taylor series with scaling and squaring.
Mat taylor_expm(const Mat& a) {
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.1) norm /= 2.0, ++squarings;
  const Mat s = a / std::pow(2.0, squarings);
  Mat term = Mat::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * s / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

SchemeConfig reflected(double dt) {
  SchemeConfig s;
  s.dt = dt;
  return s;
}

SchemeConfig penalized(double n, double dt) {
  SchemeConfig s;
  s.kind = SchemeKind::penalized;
  s.penalty = n;
  s.dt = dt;
  return s;
}

// Test-side solver for the penalized problem u_t = u''/2 - n beta0(x) u' on an
// extended interval: backward Euler in time, central differences, Thomas.
std::pair<double, double> penalized_pde(double n, double t, double x0) {
  const double h = 5e-4, lo = -0.4, hi = 1.4;
  const int m = static_cast<int>(std::lround((hi - lo) / h)) + 1;
  const int steps = 4000;
  const double dt = t / steps;
  std::vector<double> u(m), a(m), b(m), c(m), cp(m), dp(m);
  for (int i = 0; i < m; ++i) u[i] = std::cos(M_PI * (lo + i * h));
  for (int i = 0; i < m; ++i) {
    const double x = lo + i * h;
    const double drift = x < 0.0 ? -n * x : (x > 1.0 ? -n * (x - 1.0) : 0.0);
    const double diff = 0.5 / (h * h), adv = drift / (2.0 * h);
    a[i] = -dt * (diff - adv);
    b[i] = 1.0 + 2.0 * dt * diff;
    c[i] = -dt * (diff + adv);
  }
  c[0] = -dt * 1.0 / (h * h);
  a[m - 1] = -dt * 1.0 / (h * h);
  for (int s = 0; s < steps; ++s) {
    cp[0] = c[0] / b[0];
    dp[0] = u[0] / b[0];
    for (int i = 1; i < m; ++i) {
      const double den = b[i] - a[i] * cp[i - 1];
      cp[i] = c[i] / den;
      dp[i] = (u[i] - a[i] * dp[i - 1]) / den;
    }
    u[m - 1] = dp[m - 1];
    for (int i = m - 2; i >= 0; --i) u[i] = dp[i] - cp[i] * u[i + 1];
  }
  const int i = static_cast<int>(std::lround((x0 - lo) / h));
  return {u[i], (u[i + 1] - u[i - 1]) / (2.0 * h)};
}

}  // namespace

TEST_CASE("constant initial data") {
  const auto f = constant_initial(2, 1.0);
  const auto field = brownian_field(2);
  const Problem p{kDisc, field, f};
  const auto v = estimate_value(p, vec({0.2, 0.3}), 0.1, reflected(1e-3), {200, 1, 1});
  CHECK(v.value == 1.0);
  CHECK(v.std_error == 0.0);
  const auto g = estimate_gradient(p, vec({0.2, 0.3}), 0.1, penalized(100, 1e-3), {200, 1, 1});
  CHECK(max_abs(g.gradient) == 0.0);
  CHECK(max_abs(g.std_error) == 0.0);
}

TEST_CASE("cosine benchmark, reflected scheme") {
  const auto f = cosine_mode_initial(kUnit, 1);
  const auto field = brownian_field(1);
  const Problem p{kUnit, field, f};
  const double u = std::exp(-M_PI * M_PI * 0.1) * std::cos(0.3 * M_PI);
  const double v = -M_PI * std::exp(-M_PI * M_PI * 0.1) * std::sin(0.3 * M_PI);
  const auto est = estimate_gradient(p, vec({0.3}), 0.2, reflected(1e-4), {5000, 3, 1});
  CHECK(std::abs(est.value - u) <= 3.0 * est.value_std_error + 0.02);
  CHECK(std::abs(est.gradient[0] - v) <= 3.0 * est.std_error[0] + 0.03);
  CHECK(est.paths == 5000);
  CHECK(est.seed == 3);
  const auto val = estimate_value(p, vec({0.3}), 0.2, reflected(1e-4), {5000, 3, 1});
  CHECK(val.value == est.value);
}

TEST_CASE("standard errors are sample deviation over root paths") {
  const auto f = cosine_mode_initial(kUnit, 1);
  const auto field = brownian_field(1);
  const Problem p{kUnit, field, f};
  const auto est = estimate_gradient(p, vec({0.4}), 0.05, reflected(1e-3), {300, 8, 1});
  std::vector<double> per_path;
  for (std::uint64_t i = 0; i < 300; ++i) {
    NoiseStream noise(8, i);
    const auto end = simulate_path(kUnit, field, vec({0.4}), Mat::Identity(1, 1), 0.05, reflected(1e-3), noise);
    per_path.push_back(f.grad(end.x)[0] * end.jacobian(0, 0));
  }
  double mean = 0.0, sq = 0.0;
  for (double v : per_path) mean += v;
  mean /= 300.0;
  for (double v : per_path) sq += (v - mean) * (v - mean);
  CHECK(est.gradient[0] == doctest::Approx(mean).epsilon(1e-13));
  CHECK(est.std_error[0] == doctest::Approx(std::sqrt(sq / 299.0 / 300.0)).epsilon(1e-12));
}

TEST_CASE("short horizon recovers f and grad f") {
  const auto f = gaussian_bump_initial(vec({0.1, -0.2}), 0.5, 1.0);
  const auto field = varsigma_field(2, 0.3);
  const Problem p{kDisc, field, f};
  const Vec x = vec({0.3, 0.1});
  const auto est = estimate_gradient(p, x, 1e-4, reflected(1e-5), {2000, 2, 1});
  CHECK(std::abs(est.value - f.f(x)) <= 3.0 * est.value_std_error + 1e-3);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(est.gradient[i] - f.grad(x)[i]) <= 3.0 * est.std_error[i] + 1e-3);
}

TEST_CASE("linear drift, linear data: v = exp(B^T t) w") {
  const auto big = DomainGeometry::ball(vec({0.0, 0.0}), 20.0);
  const Mat B = mat({{-1.0, 0.5}, {0.2, -0.5}});
  const Vec w = vec({1.0, -2.0});
  const auto field = linear_drift_field(B, big);
  const auto f = linear_initial(0.3, w);
  const Problem p{big, field, f};
  const double t = 0.5;
  const auto est = estimate_gradient(p, vec({0.0, 0.0}), t, reflected(1e-4), {50, 1, 1});
  // Deterministic Jacobian: every path gives the same value.
  CHECK(max_abs(est.std_error) < 1e-13);
  CHECK(max_abs(est.gradient - taylor_expm(B.transpose() * t) * w) < 1e-3);
}

TEST_CASE("directional consistency and linearity in f") {
  const auto field = varsigma_field(2, 0.4);
  const auto f1 = cosine_mode_initial(kDisc, 1);
  const auto f2 = gaussian_bump_initial(vec({0.3, 0.0}), 0.4, 1.0);
  const InitialCondition sum{"sum", [&](const Vec& x) { return f1.f(x) + 2.5 * f2.f(x); },
                             [&](const Vec& x) { return Vec(f1.grad(x) + 2.5 * f2.grad(x)); }};
  const Vec x = vec({0.6, -0.3});
  const RunControl run{400, 4, 1};
  const auto scheme = reflected(1e-3);
  const auto e1 = estimate_gradient({kDisc, field, f1}, x, 0.3, scheme, run);
  const auto e2 = estimate_gradient({kDisc, field, f2}, x, 0.3, scheme, run);
  const auto es = estimate_gradient({kDisc, field, sum}, x, 0.3, scheme, run);
  CHECK(std::abs(es.value - (e1.value + 2.5 * e2.value)) < 1e-12);
  CHECK(max_abs(es.gradient - (e1.gradient + 2.5 * e2.gradient)) < 1e-12);
  const Vec nu = vec({0.3, -1.7});
  const auto dir = estimate_directional({kDisc, field, f1}, x, nu, 0.3, scheme, run);
  CHECK(std::abs(dir.value - e1.gradient.dot(nu)) < 1e-12);
}

TEST_CASE("estimates do not depend on the worker count") {
  const auto field = varsigma_field(2, 0.2);
  const auto f = cosine_mode_initial(kDisc, 1);
  for (const auto& scheme : {reflected(1e-3), penalized(100, 1e-3)}) {
    const auto a = estimate_gradient({kDisc, field, f}, vec({0.5, 0.0}), 0.2, scheme, {777, 9, 1});
    const auto b = estimate_gradient({kDisc, field, f}, vec({0.5, 0.0}), 0.2, scheme, {777, 9, 8});
    CHECK(a.value == b.value);
    CHECK(a.value_std_error == b.value_std_error);
    CHECK(max_abs(a.gradient - b.gradient) == 0.0);
    CHECK(max_abs(a.std_error - b.std_error) == 0.0);
  }
}

TEST_CASE("penalized estimates match the penalized PDE") {
  // The penalized scheme targets its own PDE, not the Neumann one; the gap
  // between the two is the penalization bias.
  const auto f = cosine_mode_initial(kUnit, 1);
  const auto field = brownian_field(1);
  const auto [u, v] = penalized_pde(100.0, 0.2, 0.3);
  const auto est = estimate_gradient({kUnit, field, f}, vec({0.3}), 0.2, penalized(100, 1e-4), {20000, 5, 1});
  CHECK(std::abs(est.value - u) <= 3.0 * est.value_std_error + 5e-3);
  CHECK(std::abs(est.gradient[0] - v) <= 3.0 * est.std_error[0] + 5e-3);
  const double neumann = -M_PI * std::exp(-M_PI * M_PI * 0.1) * std::sin(0.3 * M_PI);
  CHECK(std::abs(v - neumann) > 0.1);
}

TEST_CASE("generator terms by hand") {
  SUBCASE("cosine mode under Brownian motion") {
    const auto F = family_member(kUnit, 1, 1.0, 0.0, DirectionPart::none);
    for (double x : {0.1, 0.45, 0.9}) {
      const auto t = apply_generator(F, brownian_field(1), vec({x}), vec({0.7}));
      CHECK(t.total() == doctest::Approx(-0.5 * M_PI * M_PI * std::cos(M_PI * x)).epsilon(1e-12));
      CHECK(t.lj_second == 0.0);
      CHECK(t.lj_mixed == 0.0);
    }
  }
  SUBCASE("psi nu^2 under the varsigma field") {
    const double kappa = 0.4, x = 0.3, nu = 1.3;
    const auto F = family_member(kUnit, 0, 0.0, 1.0, DirectionPart::quadratic);
    const auto t = apply_generator(F, varsigma_field(1, kappa), vec({x}), vec({nu}));
    const double psi = x * x * (1 - x) * (1 - x);
    const double dpsi = 2 * x * (1 - x) * (1 - 2 * x);
    const double d2psi = 2 * (1 - 6 * x + 6 * x * x);
    const double s = 1 + kappa * std::sin(x), ds = kappa * std::cos(x);
    CHECK(t.lx_second == doctest::Approx(0.5 * s * s * d2psi * nu * nu).epsilon(1e-12));
    CHECK(t.lj_second == doctest::Approx(psi * ds * ds * nu * nu).epsilon(1e-12));
    CHECK(t.lj_mixed == doctest::Approx(2.0 * s * dpsi * nu * ds * nu).epsilon(1e-12));
    CHECK(t.lj_first == 0.0);
    CHECK(t.lx_drift == 0.0);
  }
  SUBCASE("linear drift first-order term") {
    const Mat B = mat({{-1.0, 0.5}, {0.2, -0.5}});
    const auto field = linear_drift_field(B, kDisc);
    const auto F = family_member(kDisc, 0, 0.0, 1.0, DirectionPart::quadratic);
    const Vec x = vec({0.2, 0.1}), nu = vec({0.3, -0.4});
    const auto t = apply_generator(F, field, x, nu);
    const double psi = std::pow(1.0 - x.squaredNorm(), 2);
    CHECK(t.lj_first == doctest::Approx((B * nu).dot(2.0 * psi * nu)).epsilon(1e-12));
  }
}

TEST_CASE("admissibility certificates") {
  for (const auto& g : {kUnit, kDisc}) {
    for (auto h : {DirectionPart::none, DirectionPart::linear, DirectionPart::quadratic}) {
      CHECK(certify(family_member(g, 2, 1.0, 0.7, h), g).admissible());
    }
  }
  TestFunction bad = family_member(kUnit, 1, 1.0, 0.0, DirectionPart::none);
  bad.value = [](const Vec& x, const Vec&) { return x[0]; };
  bad.grad_x = [](const Vec&, const Vec&) { return Vec(Vec::Ones(1)); };
  CHECK_FALSE(certify(bad, kUnit).neumann);
  TestFunction nu_only = family_member(kDisc, 0, 0.0, 1.0, DirectionPart::none);
  nu_only.value = [](const Vec&, const Vec& nu) { return nu.squaredNorm(); };
  CHECK_FALSE(certify(nu_only, kDisc).tangential);
  CHECK_THROWS_AS(martingale_residual(bad, kUnit, brownian_field(1), vec({0.3}), vec({1.0}), 0.1, reflected(1e-3),
                                      {10, 1, 1}),
                  PreconditionError);
}

TEST_CASE("martingale residual") {
  const auto field = brownian_field(1);
  const auto one = constant_test_function(1, 1.0);
  const auto r1 = martingale_residual(one, kUnit, field, vec({0.3}), vec({1.0}), 0.5, reflected(1e-3), {200, 1, 1});
  CHECK(r1.residual == 0.0);
  CHECK(r1.std_error == 0.0);

  const auto g = family_member(kUnit, 1, 1.0, 0.0, DirectionPart::none);
  const auto r = martingale_residual(g, kUnit, field, vec({0.3}), vec({1.0}), 0.5, reflected(1e-4), {2000, 2, 1});
  CHECK(std::abs(r.residual) <= 3.0 * r.std_error + 0.02);
  CHECK(r.residual == doctest::Approx(r.terminal_increment - r.integral_lx_second - r.integral_lx_drift -
                                      r.integral_lj_second - r.integral_lj_mixed - r.integral_lj_first)
                          .epsilon(1e-12));
}

TEST_CASE("boundary Dirichlet check") {
  const auto f = cosine_mode_initial(kDisc, 1);
  const auto field = varsigma_field(2, 0.3);
  const Problem p{kDisc, field, f};
  const auto r = boundary_dirichlet_check(p, vec({0.6, 0.8}), 0.2, reflected(1e-3), {500, 1, 1});
  CHECK(r.exact_zero);
  CHECK(r.estimate.value == 0.0);
  CHECK(max_abs(r.normal - vec({-0.6, -0.8})) < 1e-15);
  // Contrast: a tangential starting direction is not absorbed.
  const auto tangential = estimate_directional(p, vec({0.6, 0.8}), vec({-0.8, 0.6}), 0.2, reflected(1e-3), {500, 1, 1});
  CHECK(tangential.std_error > 0.0);
  CHECK_THROWS_AS(boundary_dirichlet_check(p, vec({0.1, 0.1}), 0.2, reflected(1e-3), {10, 1, 1}), PreconditionError);
  // Penalized analogue shrinks with n.
  const auto fi = cosine_mode_initial(kUnit, 1);
  const auto bm = brownian_field(1);
  double prev = 1e300;
  for (double n : {100.0, 1000.0, 10000.0}) {
    const auto pr = boundary_dirichlet_check({kUnit, bm, fi}, vec({0.0}), 0.2, penalized(n, 0.1 / n), {400, 1, 1});
    CHECK(std::abs(pr.estimate.value) < prev);
    prev = std::abs(pr.estimate.value);
  }
}

TEST_CASE("Weingarten diagnostic") {
  const auto f1 = cosine_mode_initial(kUnit, 1);
  const auto bm1 = brownian_field(1);
  const auto w1 = weingarten_diagnostic({kUnit, bm1, f1}, vec({0.1}), 0.5, reflected(1e-3), {200, 1, 1});
  CHECK(w1.mean[0] == 0.0);
  CHECK_FALSE(w1.twin_available);

  const auto f = gaussian_bump_initial(vec({0.2, 0.1}), 0.5, 1.0);
  const auto field = varsigma_field(2, 0.3);
  const auto still = affine_field(Mat::Zero(2, 2), Vec::Zero(2), Mat::Zero(2, 2));
  const auto w0 = weingarten_diagnostic({kDisc, still, f}, vec({0.1, 0.1}), 0.5, reflected(1e-3), {20, 1, 1});
  CHECK(max_abs(w0.mean) == 0.0);

  const auto ball = DomainGeometry::ball(vec({0.5, 0.0}), 2.0);
  const auto w = weingarten_diagnostic({ball, field, f}, vec({2.0, 0.3}), 1.0, reflected(1e-3), {300, 1, 1});
  CHECK(w.twin_available);
  CHECK(w.max_twin_defect <= 1e-12);
  CHECK(max_abs(w.mean) > 0.0);
  SchemeConfig pen = penalized(100, 1e-3);
  CHECK_THROWS_AS(weingarten_diagnostic({ball, field, f}, vec({2.0, 0.3}), 1.0, pen, {3, 1, 1}), PreconditionError);
}
