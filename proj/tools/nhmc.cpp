// nhmc: analyses of nonhomogeneous Markov chains from a JSON config.
//
//   nhmc validate|diagnose|clt|mdp|oracle --config <file>
//        [--format json|csv] [--out <path>] [--seed <u64>] [--spill <path>]
//
// NHMC_THREADS caps the worker count; it never changes the output.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "nhmc/cli_reports.hpp"
#include "nhmc/error.hpp"

namespace {

unsigned threads_from_env() {
  const char* env = std::getenv("NHMC_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    const unsigned long v = std::stoul(env);
    return static_cast<unsigned>(v);
  } catch (const std::exception&) {
    throw nhmc::SchemaError("NHMC_THREADS", "must be a non-negative integer");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nhmc::Error(nhmc::ErrorKind::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code_for(const nhmc::Error& e) {
  switch (e.error_class()) {
    case nhmc::ErrorClass::Config: return nhmc::kExitConfigError;
    case nhmc::ErrorClass::Numeric: return nhmc::kExitNumericError;
    case nhmc::ErrorClass::Io: return nhmc::kExitIoError;
  }
  return nhmc::kExitNumericError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonhomogeneous Markov chain analyses"};
  app.require_subcommand(1);

  std::string config_path;
  std::string format = "json";
  std::string out_path;
  std::string spill_path;
  std::uint64_t seed = 0;

  for (const char* verb : {"validate", "diagnose", "clt", "mdp", "oracle"}) {
    CLI::App* sub = app.add_subcommand(verb);
    sub->add_option("--config", config_path, "JSON experiment config")->required();
    sub->add_option("--format", format, "json or csv");
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    sub->add_option("--seed", seed, "override params.seed");
    if (std::string(verb) == "clt") {
      sub->add_option("--spill", spill_path,
                      "write standardized samples to a binary column file");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : nhmc::kExitConfigError;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const auto analysis = nhmc::parse_analysis(sub->get_name());
    const auto report_format = nhmc::parse_format(format);
    nhmc::ExperimentConfig config =
        nhmc::parse_config(read_file(config_path), analysis);
    if (sub->count("--seed") > 0) config.params.seed = seed;

    nhmc::RunOptions options;
    options.threads = threads_from_env();
    if (!spill_path.empty()) options.spill_path = spill_path;

    const nhmc::ReportEnvelope env = nhmc::run_experiment(config, options);
    const std::string bytes = nhmc::emit_report(env, report_format);
    if (out_path.empty()) {
      std::cout << bytes;
    } else {
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      out << bytes;
      if (!out) throw nhmc::Error(nhmc::ErrorKind::IoError, "cannot write " + out_path);
    }
    for (const auto& w : env.warnings) std::cerr << "warning: " << w << "\n";
    if (env.passed && !*env.passed) {
      std::cerr << "verdict: FAIL\n";
      return nhmc::kExitVerdictFail;
    }
    return nhmc::kExitOk;
  } catch (const nhmc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nhmc::kExitNumericError;
  }
}
