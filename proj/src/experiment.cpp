#include "refjac/experiment.hpp"

#include "refjac/errors.hpp"
#include "refjac/oracle.hpp"
#include "refjac/penalized.hpp"
#include "refjac/reflected.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace refjac {

namespace {

// ---------------------------------------------------------------------------
// Config access

const Json& empty_object() {
  static const Json e = Json::object();
  return e;
}

const Json& section(const Json& cfg, const std::string& name) {
  if (!cfg.contains(name)) return empty_object();
  const Json& s = cfg.at(name);
  if (!s.is_object()) throw ConfigError("[" + name + "] must be a table");
  return s;
}

bool has(const Json& s, const std::string& key) { return s.contains(key); }

double number(const Json& s, const std::string& where, const std::string& key, std::optional<double> fallback = {}) {
  if (!s.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + "." + key + " is required");
  }
  const Json& v = s.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v.get<double>();
}

std::int64_t integer(const Json& s, const std::string& where, const std::string& key,
                     std::optional<std::int64_t> fallback = {}) {
  if (!s.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + "." + key + " is required");
  }
  const Json& v = s.at(key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  throw ConfigError(where + "." + key + " must be an integer");
}

std::uint64_t count(const Json& s, const std::string& where, const std::string& key,
                    std::optional<std::uint64_t> fallback = {}) {
  const std::int64_t v = integer(s, where, key, fallback ? std::optional<std::int64_t>(*fallback) : std::nullopt);
  if (v < 1) throw ConfigError(where + "." + key + " must be a positive integer (got " + std::to_string(v) + ")");
  return static_cast<std::uint64_t>(v);
}

bool flag(const Json& s, const std::string& where, const std::string& key, bool fallback) {
  if (!s.contains(key)) return fallback;
  if (!s.at(key).is_boolean()) throw ConfigError(where + "." + key + " must be true or false");
  return s.at(key).get<bool>();
}

std::string text(const Json& s, const std::string& where, const std::string& key,
                 std::optional<std::string> fallback = {}) {
  if (!s.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + "." + key + " is required");
  }
  if (!s.at(key).is_string()) throw ConfigError(where + "." + key + " must be a string");
  return s.at(key).get<std::string>();
}

std::vector<double> numbers(const Json& s, const std::string& where, const std::string& key,
                            std::optional<std::vector<double>> fallback = {}) {
  if (!s.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + "." + key + " is required");
  }
  const Json& v = s.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(where + "." + key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(where + "." + key + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Vec vector_of(const Json& s, const std::string& where, const std::string& key, int dim,
              std::optional<Vec> fallback = {}) {
  if (!s.contains(key) && fallback) return *fallback;
  const auto v = numbers(s, where, key);
  if (dim > 0 && static_cast<int>(v.size()) != dim) {
    throw ConfigError(where + "." + key + " must have " + std::to_string(dim) + " entries (got " +
                      std::to_string(v.size()) + ")");
  }
  if (v.empty() || static_cast<int>(v.size()) > kMaxDim) {
    throw ConfigError(where + "." + key + " must have between 1 and " + std::to_string(kMaxDim) + " entries");
  }
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

Mat matrix_of(const Json& s, const std::string& where, const std::string& key, int dim,
              std::optional<Mat> fallback = {}) {
  if (!s.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + "." + key + " is required");
  }
  const Json& v = s.at(key);
  const std::string msg = where + "." + key + " must be a " + std::to_string(dim) + "x" + std::to_string(dim) +
                          " matrix given as an array of rows";
  if (!v.is_array() || static_cast<int>(v.size()) != dim) throw ConfigError(msg);
  Mat m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const Json& row = v.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != dim) throw ConfigError(msg);
    for (int j = 0; j < dim; ++j) {
      if (!row.at(j).is_number()) throw ConfigError(msg);
      m(i, j) = row.at(j).get<double>();
    }
  }
  return m;
}

void known_keys(const Json& s, const std::string& where, std::initializer_list<const char*> keys) {
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key " + where + "." + it.key());
  }
}

std::string describe(const Vec& x) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// ---------------------------------------------------------------------------
// Building blocks

DomainGeometry build_geometry(const Json& cfg) {
  const Json& s = section(cfg, "domain");
  const std::string kind = text(s, "domain", "kind");
  try {
    if (kind == "interval") {
      known_keys(s, "domain", {"kind", "lo", "hi"});
      return DomainGeometry::interval(number(s, "domain", "lo", 0.0), number(s, "domain", "hi", 1.0));
    }
    if (kind == "ball") {
      known_keys(s, "domain", {"kind", "center", "radius"});
      return DomainGeometry::ball(vector_of(s, "domain", "center", 0), number(s, "domain", "radius", 1.0));
    }
    if (kind == "ellipsoid") {
      known_keys(s, "domain", {"kind", "center", "semi_axes"});
      const Vec axes = vector_of(s, "domain", "semi_axes", 0);
      return DomainGeometry::ellipsoid(vector_of(s, "domain", "center", static_cast<int>(axes.size())), axes);
    }
    if (kind == "halfspace") {
      known_keys(s, "domain", {"kind", "normal", "offset", "test_only"});
      GeometryOptions opt;
      opt.allow_test_only = flag(s, "domain", "test_only", false);
      if (!opt.allow_test_only) {
        throw ConfigError("domain.kind = halfspace is test-only geometry; set domain.test_only = true");
      }
      return DomainGeometry::half_space(vector_of(s, "domain", "normal", 0), number(s, "domain", "offset", 0.0), opt);
    }
  } catch (const InvalidInputError& e) {
    throw ConfigError(std::string("[domain]: ") + e.what());
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("[domain]: ") + e.what());
  }
  throw ConfigError("domain.kind must be one of interval, ball, ellipsoid, halfspace (got '" + kind + "')");
}

CoefficientField build_field(const Json& cfg, const DomainGeometry& g) {
  const Json& s = section(cfg, "model");
  const int d = g.dimension();
  const std::string kind = text(s, "model", "kind", "bm");
  try {
    if (kind == "bm") {
      known_keys(s, "model", {"kind"});
      return brownian_field(d);
    }
    if (kind == "linear_drift") {
      known_keys(s, "model", {"kind", "matrix"});
      return linear_drift_field(matrix_of(s, "model", "matrix", d), g);
    }
    if (kind == "varsigma") {
      known_keys(s, "model", {"kind", "kappa"});
      return varsigma_field(d, number(s, "model", "kappa", 0.1));
    }
    if (kind == "custom") {
      known_keys(s, "model", {"kind", "drift_matrix", "drift_offset", "sigma", "grad_b"});
      const Mat b = matrix_of(s, "model", "drift_matrix", d, Mat(Mat::Zero(d, d)));
      const Vec b0 = vector_of(s, "model", "drift_offset", d, Vec(Vec::Zero(d)));
      const Mat sigma = matrix_of(s, "model", "sigma", d, Mat(Mat::Identity(d, d)));
      if (has(s, "grad_b")) {
        const Mat supplied = matrix_of(s, "model", "grad_b", d);
        return affine_field(b, b0, sigma, &supplied);
      }
      return affine_field(b, b0, sigma);
    }
  } catch (const InvalidInputError& e) {
    throw ConfigError(std::string("[model]: ") + e.what());
  }
  throw ConfigError("model.kind must be one of bm, linear_drift, varsigma, custom (got '" + kind + "')");
}

InitialCondition build_initial(const Json& cfg, const DomainGeometry& g) {
  const Json& s = section(cfg, "initial");
  const int d = g.dimension();
  const std::string kind = text(s, "initial", "kind", "cosine_mode");
  try {
    if (kind == "cosine_mode") {
      known_keys(s, "initial", {"kind", "k"});
      return cosine_mode_initial(g, static_cast<int>(integer(s, "initial", "k", 1)));
    }
    if (kind == "gaussian_bump") {
      known_keys(s, "initial", {"kind", "center", "width", "amplitude"});
      return gaussian_bump_initial(vector_of(s, "initial", "center", d, g.centroid()),
                                   number(s, "initial", "width", 0.25), number(s, "initial", "amplitude", 1.0));
    }
    if (kind == "custom" || kind == "linear") {
      known_keys(s, "initial", {"kind", "constant", "weights"});
      return linear_initial(number(s, "initial", "constant", 0.0), vector_of(s, "initial", "weights", d));
    }
    if (kind == "constant") {
      known_keys(s, "initial", {"kind", "value"});
      return constant_initial(d, number(s, "initial", "value", 1.0));
    }
  } catch (const InvalidInputError& e) {
    throw ConfigError(std::string("[initial]: ") + e.what());
  }
  throw ConfigError("initial.kind must be one of cosine_mode, gaussian_bump, custom, constant (got '" + kind + "')");
}

JumpMode parse_mode(const std::string& m) {
  if (m == "project") return JumpMode::project_every_contact;
  if (m == "excursion") return JumpMode::epsilon_excursion;
  throw ConfigError("reflected.mode must be 'project' or 'excursion' (got '" + m + "')");
}

SchemeConfig reflected_scheme(const Json& cfg) {
  const Json& s = section(cfg, "reflected");
  SchemeConfig c;
  c.kind = SchemeKind::reflected;
  c.dt = number(s, "reflected", "dt", 1e-4);
  c.mode = parse_mode(text(s, "reflected", "mode", "project"));
  c.epsilon = number(s, "reflected", "epsilon", 0.0);
  if (!(c.dt > 0.0)) throw ConfigError("reflected.dt must be positive");
  if (!(c.epsilon >= 0.0)) throw ConfigError("reflected.epsilon must be non-negative");
  return c;
}

SchemeConfig penalized_scheme(const Json& cfg) {
  const Json& s = section(cfg, "penalized");
  SchemeConfig c;
  c.kind = SchemeKind::penalized;
  c.dt = number(s, "penalized", "dt", 1e-4);
  c.penalty = number(s, "penalized", "n", 1000.0);
  if (!(c.dt > 0.0)) throw ConfigError("penalized.dt must be positive");
  if (!(c.penalty > 0.0)) throw ConfigError("penalized.n must be positive");
  return c;
}

double stat_bound(double z, double se, double allowance) { return z * se + allowance; }

Rule make_rule(std::string name, double value, double bound, std::string detail = {}) {
  Rule r;
  r.name = std::move(name);
  r.value = value;
  r.bound = bound;
  r.pass = std::isfinite(value) && value <= bound;
  r.detail = std::move(detail);
  return r;
}

Json estimate_json(const GradientEstimate& est) {
  Json j;
  j["x"] = to_json(est.x);
  j["t"] = est.t;
  j["scheme"] = est.scheme.label();
  j["dt"] = est.scheme.dt;
  if (est.scheme.kind == SchemeKind::penalized) j["n"] = est.scheme.penalty;
  if (est.scheme.kind == SchemeKind::reflected && est.scheme.mode == JumpMode::epsilon_excursion) {
    j["epsilon"] = est.scheme.epsilon;
  }
  j["paths"] = est.paths;
  j["seed"] = est.seed;
  j["u_hat"] = est.value;
  j["u_se"] = est.value_std_error;
  j["v_hat"] = to_json(est.gradient);
  j["v_se"] = to_json(est.std_error);
  j["diagnostics"] = Json::object();
  return j;
}

struct Context {
  const Experiment& e;
  ExperimentResult& result;
  std::vector<GradientEstimate> estimates;
  double z = 3.0;
  double bias = 0.02;

  RunControl control(std::uint64_t paths) const { return {paths, e.seed, e.workers}; }
  Problem problem() const { return {e.geometry, e.field, e.initial}; }
  void add(Rule r) { result.rules.push_back(std::move(r)); }
};

// b = 0 and sigma = s Id for all x (the closed-form and radial oracles need it).
std::optional<double> scalar_brownian_sigma(const Experiment& e) {
  if (!e.field.state_independent && e.field.name != "custom") return std::nullopt;
  const Vec x = e.geometry.centroid();
  const int d = e.geometry.dimension();
  if (e.field.drift(x).norm() != 0.0 || e.field.drift_jacobian(x).norm() != 0.0) return std::nullopt;
  const Mat s = e.field.sigma(x);
  const double s0 = s(0, 0);
  if ((s - s0 * Mat::Identity(d, d)).norm() != 0.0 || !e.field.constant_sigma) return std::nullopt;
  // Custom fields may still depend on x through the drift offset; probe a second point.
  const Vec y = e.geometry.box_lo();
  if (e.field.drift(y).norm() != 0.0 || (e.field.sigma(y) - s).norm() != 0.0) return std::nullopt;
  return s0;
}

void compare_estimates(Context& c, const std::string& oracle, double u_ref, const Vec& v_ref, double allowance) {
  for (const auto& est : c.estimates) {
    const std::string tag = oracle + "[" + est.scheme.label() + "]";
    c.add(make_rule(tag + ".u", std::abs(est.value - u_ref), stat_bound(c.z, est.value_std_error, allowance),
                    "estimate " + std::to_string(est.value) + " vs " + std::to_string(u_ref)));
    for (int i = 0; i < v_ref.size(); ++i) {
      c.add(make_rule(tag + ".v" + std::to_string(i + 1), std::abs(est.gradient[i] - v_ref[i]),
                      stat_bound(c.z, est.std_error[i], allowance),
                      "estimate " + std::to_string(est.gradient[i]) + " vs " + std::to_string(v_ref[i])));
    }
  }
}

// ---------------------------------------------------------------------------
// Oracles

void run_oracles(Context& c) {
  const Json& s = section(c.e.config, "oracle");
  if (s.empty()) return;
  known_keys(s, "oracle", {"series", "crank_nicolson", "radial", "free_jacobian", "mc_fd", "grid_points",
                           "grid_steps", "fd_epsilon", "fd_direction", "fd_scheme", "fd_paths", "fd_independent",
                           "bias_allowance"});
  const Experiment& e = c.e;
  const int d = e.geometry.dimension();
  const double allowance = number(s, "oracle", "bias_allowance", c.bias);
  Json& out = c.result.estimates["oracles"];
  out = Json::array();
  const auto* interval = std::get_if<Interval>(&e.geometry.shape());
  const auto* ball = std::get_if<Ball>(&e.geometry.shape());
  const bool cosine = e.initial.name == "cosine_mode";
  const int k = static_cast<int>(integer(section(e.config, "initial"), "initial", "k", 1));
  const int grid_points = static_cast<int>(integer(s, "oracle", "grid_points", 801));
  const int grid_steps = static_cast<int>(integer(s, "oracle", "grid_steps", 2000));

  if (flag(s, "oracle", "series", false)) {
    const auto sigma = scalar_brownian_sigma(e);
    if (!interval || !cosine || !sigma) {
      throw ConfigError("oracle.series needs an interval, a cosine_mode initial condition, b = 0 and constant sigma");
    }
    const SeriesValue sv = series_gradient_1d(k, *sigma, e.t, e.x[0], interval->lo, interval->hi);
    out.push_back({{"scheme", "oracle:series"}, {"x", to_json(e.x)}, {"t", e.t}, {"u", sv.u}, {"v", {sv.du}}});
    compare_estimates(c, "series", sv.u, Vec::Constant(1, sv.du), allowance);
  }
  if (flag(s, "oracle", "crank_nicolson", false)) {
    if (!interval) throw ConfigError("oracle.crank_nicolson needs an interval domain");
    GridSpec grid{interval->lo, interval->hi, grid_points, grid_steps};
    const auto f = [&](double x) { return e.initial.f(Vec::Constant(1, x)); };
    const auto sol = crank_nicolson_neumann_1d(e.field, f, e.t, grid);
    const double u = sol.u.at(e.x[0]);
    const double du = sol.du.at(e.x[0]);
    out.push_back({{"scheme", "oracle:crank_nicolson"}, {"x", to_json(e.x)}, {"t", e.t}, {"u", u}, {"v", {du}}});
    compare_estimates(c, "crank_nicolson", u, Vec::Constant(1, du), allowance);
  }
  if (flag(s, "oracle", "radial", false)) {
    const auto sigma = scalar_brownian_sigma(e);
    if (!ball || !cosine || !sigma) {
      throw ConfigError("oracle.radial needs a ball, a cosine_mode initial condition, b = 0 and sigma = s Id");
    }
    const double r2 = ball->radius * ball->radius;
    const auto profile = [&](double r) { return std::cos(k * std::numbers::pi * r * r / r2); };
    const auto sol = crank_nicolson_radial((*sigma) * (*sigma), d, profile, e.t, ball->radius, grid_points, grid_steps);
    const Vec z = e.x - ball->center;
    const double r = z.norm();
    const double u = sol.u.at(r);
    const Vec v = r > 0.0 ? Vec(sol.du.at(r) / r * z) : Vec(Vec::Zero(d));
    out.push_back({{"scheme", "oracle:radial"}, {"x", to_json(e.x)}, {"t", e.t}, {"u", u}, {"v", to_json(v)}});
    compare_estimates(c, "radial", u, v, allowance);
  }
  if (flag(s, "oracle", "free_jacobian", false)) {
    if (e.initial.name != "linear" || !e.field.drift_jacobian) {
      throw ConfigError("oracle.free_jacobian needs a linear (custom) initial condition");
    }
    const Mat b = e.field.drift_jacobian(e.x);
    const Mat j = free_jacobian_closed_form(b, e.t);
    const Vec w = e.initial.grad(e.x);
    const Vec v = j.transpose() * w;
    out.push_back({{"scheme", "oracle:free_jacobian"}, {"x", to_json(e.x)}, {"t", e.t}, {"v", to_json(v)}});
    for (const auto& est : c.estimates) {
      for (int i = 0; i < d; ++i) {
        c.add(make_rule("free_jacobian[" + est.scheme.label() + "].v" + std::to_string(i + 1),
                        std::abs(est.gradient[i] - v[i]), stat_bound(c.z, est.std_error[i], allowance)));
      }
    }
  }
  if (flag(s, "oracle", "mc_fd", false)) {
    const double eps = number(s, "oracle", "fd_epsilon", 1e-3);
    Vec nu = vector_of(s, "oracle", "fd_direction", d, Vec(Vec::Unit(d, 0)));
    const std::string which = text(s, "oracle", "fd_scheme", "penalized");
    SchemeConfig scheme;
    if (which == "penalized") {
      scheme = penalized_scheme(e.config);
    } else if (which == "reflected") {
      scheme = reflected_scheme(e.config);
    } else {
      throw ConfigError("oracle.fd_scheme must be 'penalized' or 'reflected'");
    }
    const std::uint64_t paths = count(s, "oracle", "fd_paths", e.paths);
    const auto fd = mc_finite_difference_gradient(c.problem(), e.x, nu, eps, e.t, scheme, c.control(paths), true);
    Json entry = {{"scheme", "oracle:mc_fd"},  {"x", to_json(e.x)}, {"t", e.t},         {"direction", to_json(nu)},
                  {"epsilon", eps},            {"fd_scheme", scheme.label()}, {"dt", scheme.dt},
                  {"paths", paths},            {"v", fd.value}, {"v_se", fd.std_error}};
    if (scheme.kind == SchemeKind::penalized) entry["n"] = scheme.penalty;
    // Gradient estimate under the same scheme: reuse one from the estimate
    // phase when it matches, otherwise run the directional estimator.
    std::optional<ValueEstimate> ref;
    for (const auto& est : c.estimates) {
      if (est.scheme.label() == scheme.label() && est.scheme.dt == scheme.dt &&
          est.scheme.penalty == scheme.penalty && est.paths == paths) {
        for (int i = 0; i < d; ++i) {
          if (nu == Vec(Vec::Unit(d, i))) ref = ValueEstimate{est.gradient[i], est.std_error[i], est.paths};
        }
      }
    }
    if (!ref) ref = estimate_directional(c.problem(), e.x, nu, e.t, scheme, c.control(paths));
    entry["reference_v"] = ref->value;
    entry["reference_v_se"] = ref->std_error;
    if (flag(s, "oracle", "fd_independent", false)) {
      const auto indep =
          mc_finite_difference_gradient(c.problem(), e.x, nu, eps, e.t, scheme, c.control(paths), false);
      entry["independent_v"] = indep.value;
      entry["independent_v_se"] = indep.std_error;
      c.add(make_rule("mc_fd.crn_variance", fd.std_error, indep.std_error,
                      "CRN standard error must be below the independent-noise one"));
      c.result.rules.back().pass = fd.std_error < indep.std_error;
    }
    out.push_back(entry);
    const double combined = std::hypot(fd.std_error, ref->std_error);
    c.add(make_rule("mc_fd_vs_gradient[" + scheme.label() + "]", std::abs(fd.value - ref->value),
                    c.z * combined,
                    "finite difference " + std::to_string(fd.value) + " vs " + std::to_string(ref->value)));
  }
}

// ---------------------------------------------------------------------------
// Checks

void check_cross_scheme(Context& c) {
  const GradientEstimate* r = nullptr;
  const GradientEstimate* p = nullptr;
  for (const auto& est : c.estimates) {
    if (est.scheme.kind == SchemeKind::reflected && !r) r = &est;
    if (est.scheme.kind == SchemeKind::penalized && !p) p = &est;
  }
  if (!r || !p) throw ConfigError("checks.cross_scheme needs estimate.scheme = \"both\"");
  for (int i = 0; i < r->gradient.size(); ++i) {
    const double se = std::hypot(r->std_error[i], p->std_error[i]);
    c.add(make_rule("cross_scheme.v" + std::to_string(i + 1), std::abs(r->gradient[i] - p->gradient[i]), c.z * se,
                    "reflected " + std::to_string(r->gradient[i]) + " vs penalized " + std::to_string(p->gradient[i])));
  }
}

void check_occupation(Context& c, const Json& s) {
  known_keys(s, "checks.occupation", {"x", "t", "penalties", "paths", "dt_times_n", "dt_max", "max_slope"});
  const Experiment& e = c.e;
  const Vec x = vector_of(s, "checks.occupation", "x", e.geometry.dimension(), e.x);
  const double t = number(s, "checks.occupation", "t", 1.0);
  const auto penalties = numbers(s, "checks.occupation", "penalties", std::vector<double>{16, 64, 256, 1024, 4096});
  const std::uint64_t paths = count(s, "checks.occupation", "paths", 10000);
  PenaltyDtRule rule;
  rule.dt_times_n = number(s, "checks.occupation", "dt_times_n", 0.1);
  rule.dt_max = number(s, "checks.occupation", "dt_max", 1e-2);
  const double max_slope = number(s, "checks.occupation", "max_slope", -1.5);
  const auto study = occupation_moment_study(e.geometry, e.field, x, t, penalties, paths, rule, e.seed, e.workers);
  Json rows = Json::array();
  for (const auto& row : study.rows) {
    rows.push_back({{"n", row.penalty},
                    {"dt", row.dt},
                    {"fourth_moment", row.fourth_moment.mean},
                    {"fourth_moment_se", row.fourth_moment.std_error},
                    {"mean", row.mean.mean},
                    {"mean_se", row.mean.std_error}});
  }
  c.result.estimates["checks"]["occupation"] = {
      {"x", to_json(x)}, {"t", t}, {"paths", paths}, {"rows", rows}, {"slope", study.slope},
      {"slope_se", study.slope_std_error}};
  c.add(make_rule("occupation.slope", study.slope, max_slope,
                  "slope " + std::to_string(study.slope) + " +/- " + std::to_string(study.slope_std_error)));
}

ReflectionScheme reflection_from(const SchemeConfig& s) { return {s.dt, s.mode, s.epsilon}; }

void check_mof(Context& c, const Json& s) {
  known_keys(s, "checks.mof", {"paths", "split", "tolerance", "modes"});
  const Experiment& e = c.e;
  const std::uint64_t paths = count(s, "checks.mof", "paths", 100);
  const double split = number(s, "checks.mof", "split", 0.5);
  const double tol = number(s, "checks.mof", "tolerance", 1e-12);
  std::vector<std::string> modes{"project"};
  if (has(s, "modes")) modes = s.at("modes").get<std::vector<std::string>>();
  Json out = Json::object();
  for (const auto& m : modes) {
    SchemeConfig scheme = reflected_scheme(e.config);
    scheme.mode = parse_mode(m);
    std::vector<double> errors(paths);
    for_each_path(paths, e.workers, [&](std::uint64_t p) {
      errors[p] = check_multiplicative_functional(e.geometry, e.field, e.x, e.t, split * e.t,
                                                  reflection_from(scheme), e.seed, p)
                      .max_error;
    });
    const double worst = *std::max_element(errors.begin(), errors.end());
    out[m] = {{"paths", paths}, {"split", split * e.t}, {"max_error", worst}};
    c.add(make_rule("mof[" + m + "].max_error", worst, tol));
  }
  c.result.estimates["checks"]["mof"] = out;
}

void check_tangentiality(Context& c, const Json& s) {
  known_keys(s, "checks.tangentiality", {"paths", "tolerance"});
  const Experiment& e = c.e;
  const std::uint64_t paths = count(s, "checks.tangentiality", "paths", 1000);
  const double tol = number(s, "checks.tangentiality", "tolerance", 1e-12);
  SchemeConfig scheme = reflected_scheme(e.config);
  scheme.mode = JumpMode::project_every_contact;
  const int d = e.geometry.dimension();
  std::vector<double> worst(paths, 0.0);
  std::vector<double> contacts(paths, 0.0);
  for_each_path(paths, e.workers, [&](std::uint64_t p) {
    NoiseStream noise(e.seed, p);
    run_reflected(e.geometry, e.field, e.x, Mat::Identity(d, d), e.t, reflection_from(scheme), noise,
                  [&](const ReflectedPathState& st) {
                    if (!st.contact) return;
                    contacts[p] += 1.0;
                    for (int k = 0; k < st.jacobian.cols(); ++k) {
                      worst[p] = std::max(worst[p], std::abs(st.jacobian.col(k).dot(st.contact_normal)));
                    }
                  });
  });
  const double max_dev = *std::max_element(worst.begin(), worst.end());
  CompensatedSum total;
  for (double v : contacts) total.add(v);
  c.result.estimates["checks"]["tangentiality"] = {
      {"paths", paths}, {"contact_steps", total.value()}, {"max_normal_component", max_dev}};
  c.add(make_rule("tangentiality.max_normal_component", max_dev, tol,
                  std::to_string(static_cast<long long>(total.value())) + " contact steps"));
  if (total.value() == 0.0) {
    c.result.rules.back().pass = false;
    c.result.rules.back().detail = "no contact steps; the check is vacuous";
  }
}

void check_dirichlet(Context& c, const Json& s) {
  known_keys(s, "checks.dirichlet", {"alpha", "t", "paths", "penalties", "dt_times_n", "dt_max"});
  const Experiment& e = c.e;
  const int d = e.geometry.dimension();
  const Vec alpha = vector_of(s, "checks.dirichlet", "alpha", d);
  const double t = number(s, "checks.dirichlet", "t", e.t);
  const std::uint64_t paths = count(s, "checks.dirichlet", "paths", e.paths);
  const auto penalties = numbers(s, "checks.dirichlet", "penalties", std::vector<double>{1e2, 1e3, 1e4});
  PenaltyDtRule rule;
  rule.dt_times_n = number(s, "checks.dirichlet", "dt_times_n", 0.1);
  rule.dt_max = number(s, "checks.dirichlet", "dt_max", 1e-3);
  Json out;
  out["alpha"] = to_json(alpha);
  out["t"] = t;
  out["paths"] = paths;

  const SchemeConfig refl = reflected_scheme(e.config);
  const auto r = boundary_dirichlet_check(c.problem(), alpha, t, refl, c.control(paths));
  out["reflected"] = {{"estimate", r.estimate.value}, {"se", r.estimate.std_error}, {"exact_zero", r.exact_zero}};
  c.add(make_rule("dirichlet[reflected].abs_estimate", std::abs(r.estimate.value), 0.0,
                  r.exact_zero ? "every path contributes an exact zero" : "non-zero path contributions"));
  c.result.rules.back().pass = r.exact_zero;

  Json rows = Json::array();
  std::vector<ValueEstimate> pen;
  for (double n : penalties) {
    SchemeConfig ps;
    ps.kind = SchemeKind::penalized;
    ps.penalty = n;
    ps.dt = rule.dt_for(n);
    const auto rep = boundary_dirichlet_check(c.problem(), alpha, t, ps, c.control(paths));
    pen.push_back(rep.estimate);
    rows.push_back({{"n", n}, {"dt", ps.dt}, {"estimate", rep.estimate.value}, {"se", rep.estimate.std_error}});
  }
  out["penalized"] = rows;
  c.result.estimates["checks"]["dirichlet"] = out;
  if (pen.empty()) return;
  bool decreasing = true;
  double worst_ratio = 0.0;
  for (std::size_t i = 1; i < pen.size(); ++i) {
    const double ratio = std::abs(pen[i].value) / std::abs(pen[i - 1].value);
    worst_ratio = std::max(worst_ratio, ratio);
    decreasing = decreasing && std::abs(pen[i].value) < std::abs(pen[i - 1].value);
  }
  Rule dec = make_rule("dirichlet[penalized].decreasing", worst_ratio, 1.0,
                       "largest ratio |estimate(n_next)| / |estimate(n)|");
  dec.pass = decreasing;
  c.add(dec);
  c.add(make_rule("dirichlet[penalized].last_within_z_se", std::abs(pen.back().value), c.z * pen.back().std_error,
                  "estimate at the largest n"));
}

DirectionPart parse_part(const std::string& h) {
  if (h == "none" || h == "0") return DirectionPart::none;
  if (h == "nu1" || h == "linear") return DirectionPart::linear;
  if (h == "nu.nu" || h == "quadratic") return DirectionPart::quadratic;
  throw ConfigError("checks.residual member h must be none, linear or quadratic (got '" + h + "')");
}

void check_residual(Context& c, const Json& s) {
  known_keys(s, "checks.residual", {"members", "dts", "paths", "x", "nu", "t", "record_every"});
  const Experiment& e = c.e;
  const int d = e.geometry.dimension();
  const auto dts = numbers(s, "checks.residual", "dts", std::vector<double>{1e-2, 1e-3});
  if (dts.size() < 2) throw ConfigError("checks.residual.dts needs at least two step sizes");
  const std::uint64_t paths = count(s, "checks.residual", "paths", 10000);
  const Vec x = vector_of(s, "checks.residual", "x", d, e.x);
  const Vec nu = vector_of(s, "checks.residual", "nu", d, Vec(Vec::Unit(d, 0)));
  const double t = number(s, "checks.residual", "t", e.t);
  const int every = static_cast<int>(integer(s, "checks.residual", "record_every", 1));
  if (!has(s, "members") || !s.at("members").is_array()) {
    throw ConfigError("checks.residual.members must be an array of {k, a, c, h} tables");
  }
  Json out = Json::array();
  for (const auto& m : s.at("members")) {
    if (!m.is_object()) throw ConfigError("checks.residual.members entries must be tables");
    const TestFunction F =
        family_member(e.geometry, static_cast<int>(integer(m, "member", "k", 1)), number(m, "member", "a", 1.0),
                      number(m, "member", "c", 0.0), parse_part(text(m, "member", "h", "none")));
    Json rows = Json::array();
    std::vector<ResidualReport> reps;
    for (double dt : dts) {
      SchemeConfig scheme = reflected_scheme(e.config);
      scheme.dt = dt;
      reps.push_back(martingale_residual(F, e.geometry, e.field, x, nu, t, scheme, c.control(paths), every));
      const auto& r = reps.back();
      rows.push_back({{"dt", dt},
                      {"residual", r.residual},
                      {"se", r.std_error},
                      {"terminal_increment", r.terminal_increment},
                      {"int_lx_second", r.integral_lx_second},
                      {"int_lx_drift", r.integral_lx_drift},
                      {"int_lj_second", r.integral_lj_second},
                      {"int_lj_mixed", r.integral_lj_mixed},
                      {"int_lj_first", r.integral_lj_first}});
    }
    // |R(dt)| <= z SE(dt) + C dt with C the least-squares slope through the
    // origin of |R| against dt; the fitted line must explain every run.
    double num = 0.0, den = 0.0;
    for (const auto& r : reps) {
      num += std::abs(r.residual) * r.dt;
      den += r.dt * r.dt;
    }
    const double C = num / den;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& r : reps) worst = std::max(worst, std::abs(r.residual) - (c.z * r.std_error + C * r.dt));
    out.push_back({{"member", F.name}, {"runs", rows}, {"C", C}});
    c.add(make_rule("residual[" + F.name + "].bound", worst, 0.0,
                    "max over dt of |R| - (z SE + C dt), C = " + std::to_string(C)));
    const double first = std::abs(reps.front().residual);
    const double last = std::abs(reps.back().residual);
    Rule dec = make_rule("residual[" + F.name + "].decreasing", last, first, "|R| at the smallest vs largest dt");
    dec.pass = last < first || (first <= c.z * reps.front().std_error && last <= c.z * reps.back().std_error);
    c.add(dec);
  }
  c.result.estimates["checks"]["residual"] = out;
}

void check_sup_moment(Context& c, const Json& s) {
  known_keys(s, "checks.sup_moment", {"penalties", "paths", "t", "x", "nu", "dt_times_n", "dt_max", "max_ratio"});
  const Experiment& e = c.e;
  const int d = e.geometry.dimension();
  const auto penalties = numbers(s, "checks.sup_moment", "penalties", std::vector<double>{1e2, 1e4});
  if (penalties.size() < 2) throw ConfigError("checks.sup_moment.penalties needs at least two values");
  const std::uint64_t paths = count(s, "checks.sup_moment", "paths", 10000);
  const double t = number(s, "checks.sup_moment", "t", 1.0);
  const Vec x = vector_of(s, "checks.sup_moment", "x", d, e.x);
  const Vec nu = vector_of(s, "checks.sup_moment", "nu", d, Vec(Vec::Unit(d, 0)));
  PenaltyDtRule rule;
  rule.dt_times_n = number(s, "checks.sup_moment", "dt_times_n", 0.1);
  rule.dt_max = number(s, "checks.sup_moment", "dt_max", 1e-3);
  const double max_ratio = number(s, "checks.sup_moment", "max_ratio", 2.0);
  Json rows = Json::array();
  std::vector<SampleStats> m;
  for (double n : penalties) {
    const PenaltyScheme scheme{n, rule.dt_for(n), 1.0};
    m.push_back(jacobian_sup_moment(e.geometry, e.field, x, nu, t, scheme, paths, e.seed, e.workers));
    rows.push_back({{"n", n}, {"dt", scheme.dt}, {"moment", m.back().mean}, {"se", m.back().std_error}});
  }
  c.result.estimates["checks"]["sup_moment"] = {{"x", to_json(x)}, {"t", t}, {"paths", paths}, {"rows", rows}};
  c.add(make_rule("sup_moment.ratio", m.back().mean / m.front().mean, max_ratio,
                  "E sup |J|^4 at the largest n over the smallest"));
}

void check_grid(Context& c, const Json& s) {
  known_keys(s, "checks.grid", {"points", "steps", "t", "min_reduction", "derivative_factor", "derivative_offset"});
  const Experiment& e = c.e;
  const auto* interval = std::get_if<Interval>(&e.geometry.shape());
  const auto sigma = scalar_brownian_sigma(e);
  if (!interval || e.initial.name != "cosine_mode" || !sigma) {
    throw ConfigError("checks.grid needs an interval, b = 0, constant sigma and a cosine_mode initial condition");
  }
  const int k = static_cast<int>(integer(section(e.config, "initial"), "initial", "k", 1));
  const auto points = numbers(s, "checks.grid", "points", std::vector<double>{101, 201, 401, 801});
  const int steps = static_cast<int>(integer(s, "checks.grid", "steps", 2000));
  const double t = number(s, "checks.grid", "t", e.t);
  const double min_reduction = number(s, "checks.grid", "min_reduction", 3.5);
  const double factor = number(s, "checks.grid", "derivative_factor", 5.0);
  const double offset = number(s, "checks.grid", "derivative_offset", 1e-8);
  const auto f = [&](double x) { return e.initial.f(Vec::Constant(1, x)); };
  const auto fp = [&](double x) { return e.initial.grad(Vec::Constant(1, x))[0]; };
  Json rows = Json::array();
  std::vector<double> errors;
  double worst_consistency = -std::numeric_limits<double>::infinity();
  for (double pts : points) {
    GridSpec grid{interval->lo, interval->hi, static_cast<int>(pts), steps};
    const auto sol = crank_nicolson_neumann_1d(e.field, f, t, grid);
    const Grid1D w = gradient_system_1d(e.field, fp, t, grid);
    double err = 0.0, gap = 0.0;
    for (int i = 0; i < grid.points; ++i) {
      const double x = sol.u.node(i);
      err = std::max(err, std::abs(sol.u.values[i] - series_gradient_1d(k, *sigma, t, x, interval->lo, interval->hi).u));
      gap = std::max(gap, std::abs(w.values[i] - sol.du.values[i]));
    }
    const double h = sol.u.spacing();
    const double bound = factor * h * h + offset;
    worst_consistency = std::max(worst_consistency, gap - bound);
    errors.push_back(err);
    rows.push_back({{"points", grid.points}, {"h", h}, {"max_error_u", err}, {"max_gap_w_du", gap}, {"gap_bound", bound}});
  }
  double min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < errors.size(); ++i) min_ratio = std::min(min_ratio, errors[i - 1] / errors[i]);
  c.result.estimates["checks"]["grid"] = {{"t", t}, {"steps", steps}, {"rows", rows}, {"min_reduction", min_ratio}};
  c.add(make_rule("grid.gradient_system_vs_derivative", worst_consistency, 0.0,
                  "max over grids of gap - (factor h^2 + offset)"));
  Rule order = make_rule("grid.crank_nicolson_order", -min_ratio, -min_reduction,
                         "smallest error reduction per halving: " + std::to_string(min_ratio));
  c.add(order);
}

void check_weingarten(Context& c, const Json& s) {
  known_keys(s, "checks.weingarten", {"paths", "tolerance"});
  const Experiment& e = c.e;
  const std::uint64_t paths = count(s, "checks.weingarten", "paths", 1000);
  const double tol = number(s, "checks.weingarten", "tolerance", 1e-12);
  const auto rep = weingarten_diagnostic(c.problem(), e.x, e.t, reflected_scheme(e.config), c.control(paths));
  Json out = {{"paths", paths}, {"mean", to_json(rep.mean)}, {"se", to_json(rep.std_error)}};
  if (rep.twin_available) {
    out["twin_mean"] = to_json(rep.twin_mean);
    out["max_twin_defect"] = rep.max_twin_defect;
    c.add(make_rule("weingarten.twin_defect", rep.max_twin_defect, tol));
  }
  c.result.estimates["checks"]["weingarten"] = out;
}

}  // namespace

// ---------------------------------------------------------------------------

Experiment build_experiment(const Json& config, const RunOverrides& overrides) {
  if (!config.is_object()) throw ConfigError("config must be a table of sections");
  static const std::set<std::string> sections = {"domain", "model",  "initial",     "penalized", "reflected",
                                                 "estimate", "oracle", "checks", "output",    "convergence"};
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (!sections.count(it.key())) throw ConfigError("unknown section [" + it.key() + "]");
  }
  if (!config.contains("domain")) throw ConfigError("config has no [domain] section");
  if (!config.contains("estimate")) throw ConfigError("config has no [estimate] section");

  DomainGeometry g = build_geometry(config);
  CoefficientField field = build_field(config, g);
  InitialCondition initial = build_initial(config, g);
  Experiment e{config, std::move(g), std::move(field), std::move(initial)};

  const Json& est = section(config, "estimate");
  known_keys(est, "estimate", {"x", "t", "paths", "seed", "scheme"});
  const int d = e.geometry.dimension();
  e.x = vector_of(est, "estimate", "x", d);
  e.t = number(est, "estimate", "t");
  if (!(e.t > 0.0)) throw ConfigError("estimate.t must be positive");
  e.paths = count(est, "estimate", "paths");
  if (!est.contains("seed")) throw ConfigError("estimate.seed is required (runs must be reproducible)");
  const std::int64_t seed = integer(est, "estimate", "seed");
  if (seed < 0) throw ConfigError("estimate.seed must be non-negative");
  e.seed = overrides.seed ? *overrides.seed : static_cast<std::uint64_t>(seed);
  e.workers = std::max(1, overrides.workers);

  const std::string scheme = text(est, "estimate", "scheme", "reflected");
  known_keys(section(config, "reflected"), "reflected", {"dt", "paths", "mode", "epsilon", "record_full_path"});
  known_keys(section(config, "penalized"), "penalized", {"n", "dt", "paths", "record_full_path"});
  if (scheme == "reflected" || scheme == "both") {
    e.schemes.push_back(reflected_scheme(config));
    e.scheme_paths.push_back(count(section(config, "reflected"), "reflected", "paths", e.paths));
  }
  if (scheme == "penalized" || scheme == "both") {
    e.schemes.push_back(penalized_scheme(config));
    e.scheme_paths.push_back(count(section(config, "penalized"), "penalized", "paths", e.paths));
  }
  if (scheme != "reflected" && scheme != "penalized" && scheme != "both" && scheme != "none") {
    throw ConfigError("estimate.scheme must be reflected, penalized, both or none (got '" + scheme + "')");
  }

  const Json& out = section(config, "output");
  known_keys(out, "output", {"directory", "format"});
  e.out_dir = overrides.out ? *overrides.out : std::filesystem::path(text(out, "output", "directory", "refjac-out"));
  const std::string format = overrides.format ? *overrides.format : text(out, "output", "format", "both");
  if (format != "csv" && format != "json" && format != "both") {
    throw ConfigError("output format must be csv, json or both (got '" + format + "')");
  }
  e.write_csv = format != "json";
  e.write_json = format != "csv";

  if (!e.geometry.contains(e.x)) {
    throw PreconditionError("estimate.x = " + describe(e.x) + " is outside the domain");
  }
  return e;
}

std::vector<ValidationRow> validate_experiment(const Experiment& e) {
  const Json& s = section(section(e.config, "checks"), "assumptions");
  known_keys(s, "checks.assumptions", {"samples", "seed", "shell_width", "ellipticity", "noncharacteristic",
                                       "derivative_step", "derivative_tolerance"});
  const DomainGeometry& g = e.geometry;
  const int samples = static_cast<int>(count(s, "checks.assumptions", "samples", 256));
  const std::uint64_t seed = static_cast<std::uint64_t>(integer(s, "checks.assumptions", "seed", 7));
  AssumptionThresholds th;
  th.ellipticity = number(s, "checks.assumptions", "ellipticity", th.ellipticity);
  th.noncharacteristic = number(s, "checks.assumptions", "noncharacteristic", th.noncharacteristic);
  th.derivative_tolerance = number(s, "checks.assumptions", "derivative_tolerance", th.derivative_tolerance);
  const double step = number(s, "checks.assumptions", "derivative_step", 1e-5);
  const double shell = number(s, "checks.assumptions", "shell_width", 0.1 * g.length_scale());

  std::vector<ValidationRow> rows;
  // Convexity: midpoints of sampled interior pairs stay in D.
  const auto pts = sample_domain(g, samples, seed);
  double convexity_defect = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
    const Vec mid = 0.5 * (pts[i] + pts[i + 1]);
    convexity_defect = std::max(convexity_defect, signed_distance(g, mid));
  }
  rows.push_back({"geometry.convexity", convexity_defect == 0.0, convexity_defect, 0.0});
  // Boundary frames: unit normals pointing into D.
  double normal_defect = 0.0;
  bool inward = true;
  const double probe = 1e-6 * g.length_scale();
  for (const auto& alpha : sample_boundary(g, std::min(samples, 64), seed)) {
    const Vec gamma = inward_normal(g, alpha);
    normal_defect = std::max(normal_defect, std::abs(gamma.norm() - 1.0));
    const Vec inside = alpha + probe * gamma;
    inward = inward && g.contains(inside) && g.interior_gap(inside) > 0.0;
  }
  rows.push_back({"geometry.unit_normal", normal_defect <= 1e-12, normal_defect, 1e-12});
  rows.push_back({"geometry.inward_normal", inward, inward ? 1.0 : 0.0, 1.0});

  const auto ell = check_ellipticity(e.field, g, samples, seed, th);
  rows.push_back({"ellipticity.min_eigenvalue", ell.ellipticity_pass, ell.min_ellipticity, th.ellipticity});
  const auto nc = check_noncharacteristic(e.field, g, shell, samples, seed, th);
  rows.push_back({"noncharacteristic.min", nc.noncharacteristic_pass, nc.min_noncharacteristic,
                  th.noncharacteristic});
  const auto der = check_derivatives(e.field, e.initial, g, samples, step, th.derivative_tolerance, seed);
  rows.push_back({"derivatives.max_mismatch", der.derivatives_pass, der.max_derivative_mismatch,
                  th.derivative_tolerance});
  return rows;
}

bool ExperimentResult::pass() const {
  return std::all_of(rules.begin(), rules.end(), [](const Rule& r) { return r.pass; });
}

Json ExperimentResult::summary() const {
  Json rows = Json::array();
  for (const auto& r : rules) {
    rows.push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"bound", r.bound}, {"detail", r.detail}});
  }
  return {{"pass", pass()}, {"rules", rows}};
}

namespace {

std::vector<GradientEstimate> estimate_all(const Experiment& e) {
  std::vector<GradientEstimate> out;
  const Problem problem{e.geometry, e.field, e.initial};
  for (std::size_t i = 0; i < e.schemes.size(); ++i) {
    out.push_back(estimate_gradient(problem, e.x, e.t, e.schemes[i], {e.scheme_paths[i], e.seed, e.workers}));
  }
  return out;
}

}  // namespace

ExperimentResult run_estimates(const Experiment& e) {
  ExperimentResult r;
  r.estimates["estimates"] = Json::array();
  for (const auto& est : estimate_all(e)) r.estimates["estimates"].push_back(estimate_json(est));
  return r;
}

ExperimentResult run_experiment(const Experiment& e) {
  ExperimentResult result;
  Context c{e, result, estimate_all(e)};
  const Json& checks = section(e.config, "checks");
  known_keys(checks, "checks", {"z", "bias_allowance", "cross_scheme", "assumptions", "occupation", "mof",
                                "tangentiality", "dirichlet", "residual", "sup_moment", "grid", "weingarten"});
  c.z = number(checks, "checks", "z", 3.0);
  c.bias = number(checks, "checks", "bias_allowance", 0.02);
  result.estimates["estimates"] = Json::array();
  for (const auto& est : c.estimates) result.estimates["estimates"].push_back(estimate_json(est));
  result.estimates["checks"] = Json::object();

  run_oracles(c);
  if (flag(checks, "checks", "cross_scheme", false)) check_cross_scheme(c);
  if (checks.contains("occupation")) check_occupation(c, section(checks, "occupation"));
  if (checks.contains("mof")) check_mof(c, section(checks, "mof"));
  if (checks.contains("tangentiality")) check_tangentiality(c, section(checks, "tangentiality"));
  if (checks.contains("dirichlet")) check_dirichlet(c, section(checks, "dirichlet"));
  if (checks.contains("residual")) check_residual(c, section(checks, "residual"));
  if (checks.contains("sup_moment")) check_sup_moment(c, section(checks, "sup_moment"));
  if (checks.contains("grid")) check_grid(c, section(checks, "grid"));
  if (checks.contains("weingarten")) check_weingarten(c, section(checks, "weingarten"));
  return result;
}

ExperimentResult run_convergence(const Experiment& e) {
  const Json& s = section(e.config, "convergence");
  known_keys(s, "convergence", {"parameter", "values", "scheme"});
  const std::string param = text(s, "convergence", "parameter");
  const auto values = numbers(s, "convergence", "values");
  const std::string which = text(s, "convergence", "scheme", "reflected");
  SchemeConfig base;
  std::uint64_t base_paths = e.paths;
  if (which == "reflected") {
    base = reflected_scheme(e.config);
  } else if (which == "penalized") {
    base = penalized_scheme(e.config);
  } else {
    throw ConfigError("convergence.scheme must be reflected or penalized");
  }
  ExperimentResult r;
  r.estimates["convergence"] = {{"parameter", param}, {"scheme", which}};
  Json rows = Json::array();
  const Problem problem{e.geometry, e.field, e.initial};
  for (double v : values) {
    SchemeConfig sc = base;
    std::uint64_t paths = base_paths;
    if (param == "dt") {
      sc.dt = v;
    } else if (param == "n") {
      sc.penalty = v;
    } else if (param == "epsilon") {
      sc.epsilon = v;
      sc.mode = JumpMode::epsilon_excursion;
    } else if (param == "paths") {
      paths = static_cast<std::uint64_t>(v);
    } else {
      throw ConfigError("convergence.parameter must be dt, n, epsilon or paths");
    }
    Json row = estimate_json(estimate_gradient(problem, e.x, e.t, sc, {paths, e.seed, e.workers}));
    row["value"] = v;
    rows.push_back(row);
  }
  r.estimates["estimates"] = rows;
  return r;
}

ExperimentResult run_excursions(const Experiment& e, std::uint64_t paths, double eps) {
  ExperimentResult r;
  const SchemeConfig sc = reflected_scheme(e.config);
  std::filesystem::create_directories(e.out_dir);
  Json rows = Json::array();
  for (std::uint64_t p = 0; p < paths; ++p) {
    NoiseStream noise(e.seed, p);
    const auto rec = simulate_reflected(e.geometry, e.field, e.x, e.t, reflection_from(sc), noise);
    const auto dec = excursion_decomposition(rec, eps);
    double total = 0.0, longest = 0.0;
    for (const auto& ex : dec.excursions) {
      total += ex.duration;
      longest = std::max(longest, ex.duration);
    }
    long contacts = std::count(rec.contact.begin(), rec.contact.end(), true);
    rows.push_back({{"path", p},
                    {"contacts", contacts},
                    {"jumps", rec.jump_count},
                    {"local_time", rec.local_time.back()},
                    {"excursions", dec.excursions.size()},
                    {"mean_duration", dec.excursions.empty() ? 0.0 : total / dec.excursions.size()},
                    {"longest", longest}});
    if (e.write_csv) {
      std::ofstream path_csv(e.out_dir / ("path_" + std::to_string(p) + ".csv"));
      write_reflected_csv(path_csv, rec);
      std::ofstream exc_csv(e.out_dir / ("excursions_" + std::to_string(p) + ".csv"));
      write_excursions_csv(exc_csv, rec, dec);
    }
  }
  r.estimates["excursions"] = {{"epsilon", eps}, {"scheme", sc.label()}, {"dt", sc.dt}, {"paths", rows}};
  return r;
}

void write_outputs(const Experiment& e, const ExperimentResult& r, const std::string& command, double wall_seconds) {
  std::filesystem::create_directories(e.out_dir);
  if (e.write_json) {
    std::ofstream(e.out_dir / "estimates.json") << r.estimates.dump(2) << '\n';
  }
  if (e.write_csv && r.estimates.contains("estimates")) {
    std::ofstream csv(e.out_dir / "estimates.csv");
    csv << "# schema=1\n";
    const int d = e.geometry.dimension();
    csv << "scheme,x,t,dt,n,paths,seed,u_hat,u_se";
    for (int i = 0; i < d; ++i) csv << ",v_hat_" << i + 1;
    for (int i = 0; i < d; ++i) csv << ",v_se_" << i + 1;
    csv << '\n';
    csv << std::setprecision(17);
    for (const auto& j : r.estimates["estimates"]) {
      std::ostringstream x;
      x << std::setprecision(17);
      for (std::size_t i = 0; i < j["x"].size(); ++i) x << (i ? " " : "") << j["x"][i].get<double>();
      csv << j["scheme"].get<std::string>() << ',' << x.str() << ',' << j["t"].get<double>() << ','
          << j["dt"].get<double>() << ',' << (j.contains("n") ? std::to_string(j["n"].get<double>()) : "") << ','
          << j["paths"].get<std::uint64_t>() << ',' << j["seed"].get<std::uint64_t>() << ','
          << j["u_hat"].get<double>() << ',' << j["u_se"].get<double>();
      for (const auto& v : j["v_hat"]) csv << ',' << v.get<double>();
      for (const auto& v : j["v_se"]) csv << ',' << v.get<double>();
      csv << '\n';
    }
  }
  if (e.write_csv) {
    std::ofstream cmp(e.out_dir / "comparison.csv");
    cmp << "# schema=1\nrule,value,bound,pass,detail\n" << std::setprecision(17);
    for (const auto& rule : r.rules) {
      std::string detail = rule.detail;
      std::replace(detail.begin(), detail.end(), ',', ';');
      cmp << rule.name << ',' << rule.value << ',' << rule.bound << ',' << (rule.pass ? 1 : 0) << ',' << detail << '\n';
    }
  }
  std::ofstream(e.out_dir / "summary.json") << r.summary().dump(2) << '\n';

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  Json meta = {{"command", command}, {"finished_utc", stamp.str()}, {"wall_seconds", wall_seconds},
               {"workers", e.workers}};
  std::ofstream(e.out_dir / "metadata.json") << meta.dump(2) << '\n';
}

}  // namespace refjac
