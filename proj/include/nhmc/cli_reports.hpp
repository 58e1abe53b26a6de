#pragma once

// Experiment configs, dispatch to the analyses, and byte-stable reports.

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nhmc/chain_model.hpp"
#include "nhmc/ergodic_analysis.hpp"

namespace nhmc {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Analysis { Validate, Diagnose, Clt, Mdp, Oracle };

const char* to_string(Analysis a) noexcept;
std::optional<Analysis> parse_analysis(std::string_view name) noexcept;

enum class ReportFormat { Json, Csv };

/// Throws UnsupportedFormat.
ReportFormat parse_format(std::string_view name);

using MatrixRows = std::vector<std::vector<double>>;

struct EpsilonConfig {
  std::string form;  // power | geometric | explicit
  double c = 1.0;
  double p = 1.0;
  double r = 0.5;
  std::vector<double> values;
};

struct ScheduleConfig {
  std::string kind;  // explicit | homogeneous | perturbed
  std::vector<MatrixRows> matrices;  // explicit list, or the single matrix
  MatrixRows base;
  MatrixRows alt;
  EpsilonConfig epsilon;
};

struct Tolerances {
  double matrix = 1e-12;       // row-sum check on input matrices
  double stationary = 1e-10;   // ||pi P - pi||_1
  double ergodicity = 1e-10;   // strong-ergodicity certification residual
  double oracle = 1e-12;       // expected_sum vs exact-law mean
};

struct ExperimentParams {
  std::optional<std::size_t> n;
  std::optional<std::size_t> path_count;  // "N"
  std::uint64_t seed = 42;
  std::optional<double> alpha;
  std::vector<double> x_grid;
  std::vector<std::size_t> n_grid;
  std::size_t m_max = 64;
  std::size_t horizon = 4096;
  Tolerances tolerances;
  std::optional<double> ks_threshold;
  std::optional<double> occupation_tolerance;
};

struct ExperimentConfig {
  std::size_t state_count = 0;
  std::vector<double> initial;
  ScheduleConfig schedule;
  std::vector<double> observable_values;
  double observable_bound = 0.0;
  Analysis analysis = Analysis::Validate;
  ExperimentParams params;

  ChainSpec build_spec() const;
  Observable build_observable() const;
};

/// Parses and validates a JSON config, filling defaults. `selected`
/// supplies the analysis when the document omits it and must agree with it
/// otherwise. Throws SyntaxError, SchemaError, DimensionMismatch, or the
/// matrix validation errors.
ExperimentConfig parse_config(std::string_view text,
                              std::optional<Analysis> selected = std::nullopt);

/// Canonical JSON form of a config, defaults included.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical config text, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

/// A CSV block: "# label", the header row, then the rows.
struct Table {
  std::string label;
  std::vector<std::string> header;
  std::vector<std::vector<nlohmann::json>> rows;
};

Table curve_table(const DiagnosticCurve& curve);

struct ReportEnvelope {
  std::string config_digest;
  std::string tool_version = kToolVersion;
  Analysis analysis = Analysis::Validate;
  nlohmann::json config;
  nlohmann::json results;
  std::vector<std::string> warnings;
  /// Empty for analyses without a pass/fail criterion.
  std::optional<bool> passed;
  std::vector<Table> tables;
};

struct RunOptions {
  unsigned threads = 0;
  /// When set, clt writes its standardized samples here.
  std::optional<std::string> spill_path;
};

ReportEnvelope run_experiment(const ExperimentConfig& config,
                              const RunOptions& options = {});

std::string emit_report(const ReportEnvelope& envelope, ReportFormat format);

/// Sorted keys, two-space indentation, reals as %.17g, non-finite as null.
std::string canonical_json(const nlohmann::json& value);

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerdictFail = 1,
  kExitConfigError = 2,
  kExitNumericError = 3,
  kExitIoError = 4,
};

}  // namespace nhmc
