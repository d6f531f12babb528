// refjac: config-driven runner for the reflected-Jacobian gradient estimators.
//
// Exit codes: 0 all comparisons pass, 1 some comparison failed, 2 config or
// validation error, 3 precondition violated, 4 numerical failure.

#include "refjac/errors.hpp"
#include "refjac/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>

namespace {

enum ExitCode { kPass = 0, kFail = 1, kConfig = 2, kPrecondition = 3, kNumerical = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::uint64_t excursion_paths = 10;
  double epsilon = 0.0;
};

refjac::Experiment load(const Options& o) {
  refjac::RunOverrides ov;
  ov.seed = o.seed;
  ov.workers = o.workers;
  if (o.out) ov.out = *o.out;
  ov.format = o.format;
  const refjac::Json cfg = refjac::load_config(o.config);
  try {
    return refjac::build_experiment(cfg, ov);
  } catch (const refjac::InvalidInputError& e) {
    throw refjac::ConfigError(e.what());
  }
}

void print_rules(const refjac::ExperimentResult& r) {
  for (const auto& rule : r.rules) {
    std::cout << (rule.pass ? "PASS " : "FAIL ") << rule.name << "  value=" << std::setprecision(6) << rule.value
              << " bound=" << rule.bound;
    if (!rule.detail.empty()) std::cout << "  (" << rule.detail << ")";
    std::cout << '\n';
  }
}

int cmd_validate(const Options& o) {
  const auto e = load(o);
  const auto rows = refjac::validate_experiment(e);
  bool ok = true;
  std::cout << std::left << std::setw(30) << "check" << std::setw(8) << "result" << std::setw(16) << "value"
            << "threshold\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(30) << r.check << std::setw(8) << (r.pass ? "pass" : "FAIL") << std::setw(16)
              << r.value << r.threshold << '\n';
    ok = ok && r.pass;
  }
  return ok ? kPass : kConfig;
}

template <class Fn>
int run_and_write(const Options& o, const std::string& command, Fn&& fn) {
  const auto e = load(o);
  const auto start = std::chrono::steady_clock::now();
  const refjac::ExperimentResult r = fn(e);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  refjac::write_outputs(e, r, command, wall);
  print_rules(r);
  std::cout << "outputs written to " << e.out_dir.string() << '\n';
  return r.pass() ? kPass : kFail;
}

int dispatch(const std::string& command, const Options& o) {
  if (command == "validate") return cmd_validate(o);
  if (command == "estimate") {
    return run_and_write(o, command, [](const refjac::Experiment& e) {
      auto r = refjac::run_estimates(e);
      for (const auto& est : r.estimates["estimates"]) {
        std::cout << est["scheme"].get<std::string>() << ": u=" << est["u_hat"] << " (se " << est["u_se"]
                  << ") v=" << est["v_hat"].dump() << " (se " << est["v_se"].dump() << ")\n";
      }
      return r;
    });
  }
  if (command == "compare") return run_and_write(o, command, refjac::run_experiment);
  if (command == "convergence") return run_and_write(o, command, refjac::run_convergence);
  if (command == "excursions") {
    return run_and_write(o, command, [&](const refjac::Experiment& e) {
      return refjac::run_excursions(e, o.excursion_paths, o.epsilon);
    });
  }
  return kConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo gradients of Neumann parabolic problems via reflected diffusions"};
  app.require_subcommand(1);
  Options o;
  std::string chosen;
  for (const char* name : {"validate", "estimate", "compare", "convergence", "excursions"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config, "experiment config (sectioned key = value, or .json)")->required();
    sub->add_option("--seed", o.seed, "overrides estimate.seed");
    sub->add_option("--workers", o.workers, "worker threads; never changes results")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--format", o.format, "csv, json or both")->check(CLI::IsMember({"csv", "json", "both"}));
    if (std::string(name) == "excursions") {
      sub->add_option("--paths", o.excursion_paths, "number of paths to dump");
      sub->add_option("--epsilon", o.epsilon, "minimum excursion duration");
    }
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfig;
  }

  try {
    return dispatch(chosen, o);
  } catch (const refjac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const refjac::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return kPrecondition;
  } catch (const refjac::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const refjac::DegenerateDataError& e) {
    std::cerr << "degenerate data: " << e.what() << '\n';
    return kNumerical;
  } catch (const refjac::InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
