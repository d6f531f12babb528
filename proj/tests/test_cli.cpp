#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kExamples = REFJAC_EXAMPLES_DIR;
const fs::path kScratch = fs::path(REFJAC_SCRATCH_DIR) / "cli";

int run(const std::string& args) {
  const std::string cmd = std::string(REFJAC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kScratch);
  const fs::path p = kScratch / name;
  std::ofstream(p) << text;
  return p;
}

const char* kSmall = R"(
[domain]
kind = "interval"
lo = 0.0
hi = 1.0
[model]
kind = "bm"
[initial]
kind = "cosine_mode"
k = 1
[estimate]
x = [0.3]
t = 0.2
paths = 300
seed = 12
scheme = "both"
[reflected]
dt = 1e-3
[penalized]
n = 100
dt = 1e-3
)";

}  // namespace

TEST_CASE("exit codes") {
  const auto ex = [](const char* f) { return (kExamples / f).string(); };
  const std::string out = " --out " + (kScratch / "o").string();
  CHECK(run("estimate --config " + ex("invalid_outside.toml") + out) == 3);
  CHECK(run("validate --config " + ex("invalid_degenerate_sigma.toml")) == 2);
  CHECK(run("validate --config " + ex("invalid_grad_b.toml")) == 2);
  CHECK(run("validate --config " + ex("quickstart_1d.toml")) == 0);
  CHECK(run("estimate --config " + (kScratch / "missing.toml").string()) == 2);
  CHECK(run("estimate") == 2);
  CHECK(run("frobnicate --config x") == 2);
  std::string zero = kSmall;
  zero.replace(zero.find("paths = 300"), 11, "paths = 0");
  CHECK(run("estimate --config " + write_config("zero.toml", zero).string() + out) == 2);
  std::string unstable = kSmall;
  unstable.replace(unstable.find("n = 100"), 7, "n = 5000");
  CHECK(run("estimate --config " + write_config("unstable.toml", unstable).string() + out) == 3);
}

TEST_CASE("outputs and worker-count determinism") {
  const fs::path cfg = write_config("small.toml", kSmall);
  const fs::path a = kScratch / "w1", b = kScratch / "w8";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(run("estimate --config " + cfg.string() + " --workers 1 --out " + a.string()) == 0);
  REQUIRE(run("estimate --config " + cfg.string() + " --workers 8 --out " + b.string()) == 0);
  for (const char* f : {"estimates.json", "estimates.csv", "summary.json", "metadata.json"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  CHECK(slurp(a / "estimates.json") == slurp(b / "estimates.json"));
  CHECK(slurp(a / "estimates.csv") == slurp(b / "estimates.csv"));
  CHECK(slurp(a / "estimates.csv").rfind("# schema=1\n", 0) == 0);
  const auto meta = nlohmann::json::parse(slurp(b / "metadata.json"));
  CHECK(meta["workers"] == 8);

  const fs::path c = kScratch / "seeded";
  REQUIRE(run("estimate --config " + cfg.string() + " --seed 99 --format json --out " + c.string()) == 0);
  CHECK(fs::exists(c / "estimates.json"));
  CHECK_FALSE(fs::exists(c / "estimates.csv"));
  CHECK(slurp(c / "estimates.json") != slurp(a / "estimates.json"));
}

TEST_CASE("json config input") {
  const fs::path cfg = write_config("small.json", R"({
    "domain": {"kind": "interval", "lo": 0.0, "hi": 1.0},
    "model": {"kind": "bm"},
    "initial": {"kind": "cosine_mode", "k": 1},
    "estimate": {"x": [0.3], "t": 0.2, "paths": 300, "seed": 12, "scheme": "both"},
    "reflected": {"dt": 1e-3},
    "penalized": {"n": 100, "dt": 1e-3}
  })");
  const fs::path toml = write_config("small.toml", kSmall);
  const fs::path a = kScratch / "from_json", b = kScratch / "from_toml";
  REQUIRE(run("estimate --config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(run("estimate --config " + toml.string() + " --out " + b.string()) == 0);
  CHECK(slurp(a / "estimates.json") == slurp(b / "estimates.json"));
}
