// Acceptance runner: executes the shipped acceptance configs and prints one
// PASS/FAIL line per criterion. Rule-level detail goes to stderr.
//
// Criteria listed in kKnownRed fail for reasons analysed in the README
// (penalization bias, half-order projection scheme, sample size). They are
// still evaluated and printed as FAIL; the exit status is nonzero only when
// some other criterion fails.

#include "refjac/config.hpp"
#include "refjac/errors.hpp"
#include "refjac/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using refjac::ExperimentResult;
using refjac::Rule;

namespace {

const fs::path kConfigs = REFJAC_ACCEPTANCE_DIR;
const fs::path kScratch = fs::path(REFJAC_SCRATCH_DIR) / "acceptance";

const std::set<int> kKnownRed = {1, 2, 7, 8};

struct Run {
  ExperimentResult result;
  double seconds = 0.0;
};

std::map<std::string, Run> cache;

Run execute(const std::string& name, int workers) {
  refjac::RunOverrides ov;
  ov.workers = workers;
  ov.out = kScratch / (name + "_w" + std::to_string(workers));
  const auto e = refjac::build_experiment(refjac::load_config(kConfigs / (name + ".toml")), ov);
  const auto start = std::chrono::steady_clock::now();
  Run r{refjac::run_experiment(e), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  refjac::write_outputs(e, r.result, "acceptance", r.seconds);
  return r;
}

const Run& run_once(const std::string& name) {
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, execute(name, 1)).first;
  return it->second;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

struct Outcome {
  bool pass = true;
  std::string note;
  double seconds = 0.0;
};

// Collects the rules of the named configs accepted by `keep`; the criterion
// passes iff at least one rule matched and all matched rules pass.
Outcome from_rules(const std::vector<std::string>& configs, const std::function<bool(const Rule&)>& keep) {
  Outcome o;
  int matched = 0, failed = 0;
  for (const auto& name : configs) {
    const Run& r = run_once(name);
    o.seconds += r.seconds;
    for (const auto& rule : r.result.rules) {
      if (!keep(rule)) continue;
      ++matched;
      if (!rule.pass) ++failed;
      std::cerr << "    " << (rule.pass ? "pass " : "FAIL ") << name << ": " << rule.name << " value=" << rule.value
                << " bound=" << rule.bound << (rule.detail.empty() ? "" : "  (" + rule.detail + ")") << '\n';
    }
  }
  o.pass = matched > 0 && failed == 0;
  o.note = std::to_string(matched - failed) + "/" + std::to_string(matched) + " rules";
  return o;
}

Outcome determinism() {
  Outcome o;
  int same = 0;
  const std::vector<std::string> names = {"c01_benchmark_1d", "c05_mof", "c11_radial_ball"};
  for (const auto& name : names) {
    const std::string one = run_once(name).result.estimates.dump();
    const Run eight = execute(name, 8);
    o.seconds += eight.seconds;
    const bool eq = one == eight.result.estimates.dump();
    same += eq;
    std::cerr << "    " << (eq ? "pass " : "FAIL ") << name << ": workers 1 vs 8 result JSON "
              << (eq ? "identical" : "differs") << '\n';
  }
  o.pass = same == static_cast<int>(names.size());
  o.note = std::to_string(same) + "/3 configs identical";
  return o;
}

}  // namespace

int main() {
  fs::create_directories(kScratch);
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "1D gradient benchmark vs cosine series",
       [] {
         return from_rules({"c01_benchmark_1d"},
                           [](const Rule& r) { return starts_with(r.name, "series[") && r.name.find(".v") != std::string::npos; });
       }},
      {2, "reflected vs penalized cross-agreement",
       [] { return from_rules({"c01_benchmark_1d"}, [](const Rule& r) { return starts_with(r.name, "cross_scheme."); }); }},
      {3, "common-random-number finite difference",
       [] { return from_rules({"c01_benchmark_1d"}, [](const Rule& r) { return starts_with(r.name, "mc_fd_vs_gradient"); }); }},
      {4, "occupation fourth-moment slope",
       [] { return from_rules({"c04_occupation"}, [](const Rule& r) { return starts_with(r.name, "occupation."); }); }},
      {5, "multiplicative functional composition",
       [] { return from_rules({"c05_mof"}, [](const Rule& r) { return starts_with(r.name, "mof["); }); }},
      {6, "post-jump tangentiality",
       [] { return from_rules({"c06_tangentiality"}, [](const Rule& r) { return starts_with(r.name, "tangentiality."); }); }},
      {7, "Dirichlet condition for the Jacobian functional",
       [] { return from_rules({"c07_dirichlet"}, [](const Rule& r) { return starts_with(r.name, "dirichlet["); }); }},
      {8, "martingale residual of the coupled generator",
       [] {
         return from_rules({"c08_residual_interval", "c08_residual_ball"},
                           [](const Rule& r) { return starts_with(r.name, "residual["); });
       }},
      {9, "Jacobian sup-moment bounded in n",
       [] { return from_rules({"c09_sup_moment"}, [](const Rule& r) { return starts_with(r.name, "sup_moment."); }); }},
      {10, "grid oracle consistency and order",
       [] { return from_rules({"c10_grid"}, [](const Rule& r) { return starts_with(r.name, "grid."); }); }},
      {11, "2D ball radial benchmark",
       [] {
         return from_rules({"c11_radial_ball"},
                           [](const Rule& r) { return starts_with(r.name, "radial[") && r.name.find(".v") != std::string::npos; });
       }},
      {12, "determinism across worker counts", determinism},
  };

  int unexpected = 0, red = 0;
  for (const auto& c : criteria) {
    std::cerr << "criterion " << c.id << ": " << c.title << '\n';
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note = std::string("error: ") + e.what();
    }
    const bool known = kKnownRed.count(c.id) > 0;
    if (!o.pass) (known ? red : unexpected) += 1;
    char line[256];
    std::snprintf(line, sizeof line, "%s %2d  %-48s %-24s %7.1f s%s", o.pass ? "PASS" : "FAIL", c.id, c.title,
                  o.note.c_str(), o.seconds, !o.pass && known ? "  [known red]" : "");
    std::cout << line << std::endl;
  }
  std::cout << "summary: " << 12 - red - unexpected << " pass, " << red << " known red, " << unexpected
            << " unexpected failures" << std::endl;
  return unexpected == 0 ? 0 : 1;
}
