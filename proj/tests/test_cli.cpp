#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kExe = NHMC_EXE;
const std::string kFixtures = NHMC_FIXTURES;

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nhmc_cli_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + kExe + "\" " + args +
                          " 2>" + scratch("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture(const std::string& name) { return "\"" + kFixtures + "/" + name + "\""; }

}  // namespace

TEST_CASE("successful runs exit 0") {
  const auto out = scratch("swap.json");
  CHECK(run("validate --config " + fixture("swap_validate.json") + " --out " + out) == 0);
  const auto doc = nlohmann::json::parse(slurp(out));
  CHECK(doc["verdict"] == "PASS");
  CHECK(doc["results"]["limit_matrix"]["period"] == 2);

  const auto csv = scratch("oracle.csv");
  CHECK(run("oracle --config " + fixture("iid_oracle.json") + " --format csv --out " + csv) == 0);
  CHECK(slurp(csv).find("# exact_law\nvalue,probability\n") != std::string::npos);

  CHECK(run("mdp --config " + fixture("iid_mdp.json") + " --out " + scratch("mdp.json")) == 0);
  CHECK(run("diagnose --config " + fixture("perturbed_diagnose.json") + " --format csv --out " +
            scratch("diag.csv")) == 0);
}

TEST_CASE("a failed verdict exits 1") {
  CHECK(run("validate --config " + fixture("reducible_validate.json") + " --out " +
            scratch("reducible.json")) == 1);
}

TEST_CASE("config errors exit 2") {
  CHECK(run("validate --config " + fixture("bad_row_sum.json")) == 2);
  CHECK(run("validate --config " + fixture("bad_syntax.json")) == 2);
  CHECK(run("mdp --config " + fixture("bad_alpha.json")) == 2);
  CHECK(run("oracle --config " + fixture("swap_validate.json")) == 2);
  CHECK(run("validate --config " + fixture("swap_validate.json") + " --format xml") == 2);
  CHECK(run("simulate --config " + fixture("swap_validate.json")) == 2);
  CHECK(slurp(scratch("stderr.txt")).size() > 0);
}

TEST_CASE("numeric errors exit 3") {
  CHECK(run("clt --config " + fixture("constant_clt.json")) == 3);
  CHECK(slurp(scratch("stderr.txt")).find("theta") != std::string::npos);
}

TEST_CASE("IO errors exit 4") {
  CHECK(run("validate --config " + fixture("does_not_exist.json")) == 4);
  CHECK(run("validate --config " + fixture("swap_validate.json") +
            " --out /nonexistent_dir/report.json") == 4);
}

TEST_CASE("--seed overrides the config and output is thread independent") {
  const auto a = scratch("seed_a.json");
  const auto b = scratch("seed_b.json");
  const auto c = scratch("seed_c.json");
  CHECK(run("mdp --config " + fixture("iid_mdp.json") + " --seed 5 --out " + a, "NHMC_THREADS=1") == 0);
  CHECK(run("mdp --config " + fixture("iid_mdp.json") + " --seed 5 --out " + b, "NHMC_THREADS=4") == 0);
  CHECK(run("mdp --config " + fixture("iid_mdp.json") + " --seed 6 --out " + c, "NHMC_THREADS=1") == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(nlohmann::json::parse(slurp(a))["config"]["params"]["seed"] == 5);
}
