#include "nhmc/cli_reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "nhmc/error.hpp"
#include "nhmc/limit_quantities.hpp"
#include "nhmc/monte_carlo.hpp"

namespace nhmc {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return item.key() == a; });
    if (!known) {
      throw SchemaError(path.empty() ? item.key() : path + "." + item.key(),
                        "unknown key");
    }
  }
}

const json& require(const json& obj, const char* key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path, "missing");
  return *it;
}

const json& require_object(const json& obj, const char* key,
                           const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_object()) throw SchemaError(path, "must be an object");
  return v;
}

double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(path, "must be finite");
  return d;
}

std::uint64_t as_uint(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw SchemaError(path, "must be a non-negative integer");
}

std::vector<double> as_real_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "must be an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_real(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

MatrixRows as_matrix(const json& v, const std::string& path,
                     std::size_t k_states) {
  if (!v.is_array()) throw SchemaError(path, "must be an array of rows");
  MatrixRows rows;
  for (std::size_t i = 0; i < v.size(); ++i) {
    rows.push_back(as_real_vector(v[i], path + "[" + std::to_string(i) + "]"));
  }
  bool square = rows.size() == k_states;
  for (const auto& r : rows) square = square && r.size() == k_states;
  if (!square) {
    throw Error(ErrorKind::DimensionMismatch,
                path + " must be " + std::to_string(k_states) + "x" +
                    std::to_string(k_states));
  }
  return rows;
}

Matrix to_matrix(const MatrixRows& rows) {
  const auto k = static_cast<Eigen::Index>(rows.size());
  Matrix m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

StochasticMatrix validated(const MatrixRows& rows, double tol) {
  return StochasticMatrix::validate(to_matrix(rows), tol);
}

EpsilonSchedule build_epsilon(const EpsilonConfig& e) {
  if (e.form == "power") return EpsilonSchedule::power(e.c, e.p);
  if (e.form == "geometric") return EpsilonSchedule::geometric(e.c, e.r);
  return EpsilonSchedule::explicit_values(e.values);
}

void parse_schedule(const json& node, ExperimentConfig& cfg) {
  ScheduleConfig& s = cfg.schedule;
  const std::size_t k = cfg.state_count;
  const json& kind = require(node, "kind", "schedule.kind");
  if (!kind.is_string()) throw SchemaError("schedule.kind", "must be a string");
  s.kind = kind.get<std::string>();
  if (s.kind == "homogeneous") {
    check_keys(node, "schedule", {"kind", "matrix"});
    s.matrices.push_back(
        as_matrix(require(node, "matrix", "schedule.matrix"), "schedule.matrix", k));
  } else if (s.kind == "explicit") {
    check_keys(node, "schedule", {"kind", "matrices"});
    const json& list = require(node, "matrices", "schedule.matrices");
    if (!list.is_array() || list.empty()) {
      throw SchemaError("schedule.matrices", "must be a non-empty array");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      s.matrices.push_back(
          as_matrix(list[i], "schedule.matrices[" + std::to_string(i) + "]", k));
    }
  } else if (s.kind == "perturbed") {
    check_keys(node, "schedule", {"kind", "base", "alt", "epsilon"});
    s.base = as_matrix(require(node, "base", "schedule.base"), "schedule.base", k);
    s.alt = as_matrix(require(node, "alt", "schedule.alt"), "schedule.alt", k);
    const json& eps = require_object(node, "epsilon", "schedule.epsilon");
    const json& form = require(eps, "form", "schedule.epsilon.form");
    if (!form.is_string()) {
      throw SchemaError("schedule.epsilon.form", "must be a string");
    }
    EpsilonConfig& e = s.epsilon;
    e.form = form.get<std::string>();
    if (e.form == "power") {
      check_keys(eps, "schedule.epsilon", {"form", "c", "p"});
      e.c = as_real(require(eps, "c", "schedule.epsilon.c"), "schedule.epsilon.c");
      e.p = as_real(require(eps, "p", "schedule.epsilon.p"), "schedule.epsilon.p");
      if (!(e.c > 0.0 && e.c <= 1.0)) {
        throw SchemaError("schedule.epsilon.c", "must lie in (0,1]");
      }
      if (!(e.p > 0.0)) throw SchemaError("schedule.epsilon.p", "must be positive");
    } else if (e.form == "geometric") {
      check_keys(eps, "schedule.epsilon", {"form", "c", "r"});
      e.c = as_real(require(eps, "c", "schedule.epsilon.c"), "schedule.epsilon.c");
      e.r = as_real(require(eps, "r", "schedule.epsilon.r"), "schedule.epsilon.r");
      if (!(e.r > 0.0 && e.r < 1.0)) {
        throw SchemaError("schedule.epsilon.r", "must lie in (0,1)");
      }
      if (!(e.c > 0.0 && e.c * e.r <= 1.0)) {
        throw SchemaError("schedule.epsilon.c", "must satisfy 0 < c*r <= 1");
      }
    } else if (e.form == "explicit") {
      check_keys(eps, "schedule.epsilon", {"form", "values"});
      e.values = as_real_vector(require(eps, "values", "schedule.epsilon.values"),
                                "schedule.epsilon.values");
      for (double v : e.values) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw SchemaError("schedule.epsilon.values", "entries must lie in [0,1]");
        }
      }
    } else {
      throw SchemaError("schedule.epsilon.form",
                        "must be one of power, geometric, explicit");
    }
  } else {
    throw SchemaError("schedule.kind",
                      "must be one of explicit, homogeneous, perturbed");
  }
}

void parse_params(const json& node, ExperimentParams& p) {
  check_keys(node, "params",
             {"n", "N", "seed", "alpha", "x_grid", "n_grid", "m_max", "horizon",
              "tolerances", "ks_threshold", "occupation_tolerance"});
  if (auto it = node.find("n"); it != node.end()) {
    p.n = as_uint(*it, "params.n");
    if (*p.n == 0) throw SchemaError("params.n", "must be at least 1");
  }
  if (auto it = node.find("N"); it != node.end()) {
    p.path_count = as_uint(*it, "params.N");
  }
  if (auto it = node.find("seed"); it != node.end()) {
    p.seed = as_uint(*it, "params.seed");
  }
  if (auto it = node.find("alpha"); it != node.end()) {
    p.alpha = as_real(*it, "params.alpha");
    if (!(*p.alpha > 0.5 && *p.alpha < 1.0)) {
      throw SchemaError("params.alpha", "must lie in (0.5,1)");
    }
  }
  if (auto it = node.find("x_grid"); it != node.end()) {
    p.x_grid = as_real_vector(*it, "params.x_grid");
    for (double x : p.x_grid) {
      if (!(x >= 0.0)) throw SchemaError("params.x_grid", "entries must be >= 0");
    }
  }
  if (auto it = node.find("n_grid"); it != node.end()) {
    if (!it->is_array()) throw SchemaError("params.n_grid", "must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto v = as_uint((*it)[i], "params.n_grid[" + std::to_string(i) + "]");
      if (v == 0) throw SchemaError("params.n_grid", "entries must be >= 1");
      p.n_grid.push_back(v);
    }
  }
  if (auto it = node.find("m_max"); it != node.end()) {
    p.m_max = as_uint(*it, "params.m_max");
  }
  if (auto it = node.find("horizon"); it != node.end()) {
    p.horizon = as_uint(*it, "params.horizon");
    if (p.horizon == 0) throw SchemaError("params.horizon", "must be at least 1");
  }
  if (auto it = node.find("tolerances"); it != node.end()) {
    if (!it->is_object()) throw SchemaError("params.tolerances", "must be an object");
    check_keys(*it, "params.tolerances",
               {"matrix", "stationary", "ergodicity", "oracle"});
    auto read_tol = [&](const char* key, double& slot) {
      if (auto t = it->find(key); t != it->end()) {
        const std::string path = std::string("params.tolerances.") + key;
        slot = as_real(*t, path);
        if (!(slot > 0.0)) throw SchemaError(path, "must be positive");
      }
    };
    read_tol("matrix", p.tolerances.matrix);
    read_tol("stationary", p.tolerances.stationary);
    read_tol("ergodicity", p.tolerances.ergodicity);
    read_tol("oracle", p.tolerances.oracle);
  }
  if (auto it = node.find("ks_threshold"); it != node.end()) {
    p.ks_threshold = as_real(*it, "params.ks_threshold");
    if (!(*p.ks_threshold > 0.0)) {
      throw SchemaError("params.ks_threshold", "must be positive");
    }
  }
  if (auto it = node.find("occupation_tolerance"); it != node.end()) {
    p.occupation_tolerance = as_real(*it, "params.occupation_tolerance");
    if (!(*p.occupation_tolerance > 0.0)) {
      throw SchemaError("params.occupation_tolerance", "must be positive");
    }
  }
}

void require_params(const ExperimentConfig& cfg) {
  const ExperimentParams& p = cfg.params;
  auto need_n = [&] {
    if (!p.n) throw SchemaError("params.n", "required for " + std::string(to_string(cfg.analysis)));
  };
  switch (cfg.analysis) {
    case Analysis::Validate:
      break;
    case Analysis::Diagnose:
    case Analysis::Oracle:
      need_n();
      break;
    case Analysis::Clt:
      need_n();
      if (!p.path_count) throw SchemaError("params.N", "required for clt");
      if (*p.path_count < 100) throw SchemaError("params.N", "must be at least 100");
      if (!p.ks_threshold) throw SchemaError("params.ks_threshold", "required for clt");
      break;
    case Analysis::Mdp:
      if (!p.alpha) throw SchemaError("params.alpha", "required for mdp");
      if (!p.path_count || *p.path_count == 0) {
        throw SchemaError("params.N", "required for mdp");
      }
      if (p.n_grid.empty()) throw SchemaError("params.n_grid", "required for mdp");
      if (p.x_grid.empty()) throw SchemaError("params.x_grid", "required for mdp");
      break;
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON

void format_real(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
  // Keep reals recognisable as reals.
  if (std::string_view(buf).find_first_of(".eEn") == std::string_view::npos) {
    out += ".0";
  }
}

void format_scalar(std::string& out, const json& v) {
  if (v.is_number_float()) {
    format_real(out, v.get<double>());
  } else {
    out += v.dump();
  }
}

bool is_flat(const json& v) {
  return std::none_of(v.begin(), v.end(),
                      [](const json& e) { return e.is_structured(); });
}

void write_json(std::string& out, const json& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent), ' ');
  if (v.is_object()) {
    if (v.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (const auto& item : v.items()) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      out += json(item.key()).dump();
      out += ": ";
      write_json(out, item.value(), indent + 2);
    }
    out += "\n" + close_pad + "}";
  } else if (v.is_array()) {
    if (v.empty()) {
      out += "[]";
      return;
    }
    if (is_flat(v)) {
      out += "[";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        format_scalar(out, v[i]);
      }
      out += "]";
      return;
    }
    out += "[\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",\n";
      out += pad;
      write_json(out, v[i], indent + 2);
    }
    out += "\n" + close_pad + "]";
  } else {
    format_scalar(out, v);
  }
}

json rows_json(const MatrixRows& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Analyses

json curve_json(const DiagnosticCurve& c) {
  json pts = json::array();
  for (const auto& [n, v] : c.points) pts.push_back(json::array({n, v}));
  return json{{"label", c.label}, {"points", pts}};
}

json one_based(const std::vector<std::vector<std::size_t>>& classes) {
  json out = json::array();
  for (const auto& cls : classes) {
    json c = json::array();
    for (std::size_t s : cls) c.push_back(s + 1);
    out.push_back(c);
  }
  return out;
}

json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void run_validate(const ExperimentConfig& cfg, const ChainSpec& spec,
                  ReportEnvelope& env) {
  const auto& p = cfg.params;
  const TransitionSchedule& sched = spec.schedule();
  json matrices = json::array();
  if (const auto* e = std::get_if<TransitionSchedule::Explicit>(&sched.kind())) {
    for (std::size_t i = 0; i < e->matrices.size(); ++i) {
      matrices.push_back({{"index", i + 1},
                          {"delta", dobrushin_delta(e->matrices[i])},
                          {"norm", matrix_norm(e->matrices[i].matrix())}});
    }
  }
  const StochasticMatrix& limit = sched.limit();
  json lim;
  lim["delta"] = dobrushin_delta(limit);
  lim["norm"] = matrix_norm(limit.matrix());
  const bool irreducible = is_irreducible(limit.matrix());
  lim["irreducible"] = irreducible;
  bool certified = false;
  if (irreducible) {
    const ErgodicReport rep =
        analyze_periodic_strong_ergodicity(limit, p.horizon, p.tolerances.ergodicity);
    const Vector pi = stationary_distribution(limit, p.tolerances.stationary);
    certified = rep.certified;
    lim["period"] = rep.decomposition.period;
    lim["classes"] = one_based(rep.decomposition.classes);
    lim["stationary"] = vector_json(pi);
    lim["stationary_residual_l1"] =
        (limit.matrix().transpose() * pi - pi).cwiseAbs().sum();
    lim["periodic_strongly_ergodic"] = certified;
    lim["horizon"] = rep.horizon;
    lim["tolerance"] = rep.tolerance;
    json finals = json::array();
    for (const auto& c : rep.strong_ergodicity_residuals) {
      finals.push_back(json{{"label", c.label},
                            {"powers", c.points.back().first},
                            {"residual", c.last_value()}});
      env.tables.push_back(curve_table(c));
    }
    lim["class_residuals"] = finals;
    if (!certified) {
      env.warnings.push_back("strong ergodicity not certified within horizon " +
                             std::to_string(p.horizon));
    }
  } else {
    env.warnings.push_back("limit matrix is not irreducible");
  }
  env.results = json{{"schedule_kind", cfg.schedule.kind},
                     {"state_count", cfg.state_count},
                     {"matrices", matrices},
                     {"limit_matrix", lim}};
  env.passed = irreducible && certified;
}

void run_diagnose(const ExperimentConfig& cfg, const ChainSpec& spec,
                  const Observable& f, ReportEnvelope& env) {
  const auto& p = cfg.params;
  const std::size_t n = *p.n;
  const StochasticMatrix& limit = spec.schedule().limit();
  const Vector pi = stationary_distribution(limit, p.tolerances.stationary);
  const Matrix r = constant_matrix(pi);
  std::vector<DiagnosticCurve> curves;
  curves.push_back(cesaro_uniform_diagnostic(spec.schedule(), r, n, p.m_max));
  curves.push_back(condition4_diagnostic(spec.schedule(), limit, n, p.m_max));
  curves.push_back(condition6_diagnostic(spec.schedule(), n));
  curves.push_back(strong_ergodicity_curve(spec.schedule(), r, 0, n));
  curves.push_back(drift_bound_check(spec, f, n));
  json arr = json::array();
  json finals = json::object();
  for (const auto& c : curves) {
    arr.push_back(curve_json(c));
    finals[c.label] = c.empty() ? json(nullptr) : json(c.last_value());
    env.tables.push_back(curve_table(c));
  }
  env.warnings.push_back("supremum over m truncated at m_max = " +
                         std::to_string(p.m_max));
  env.results = json{{"n", n},
                     {"m_max", p.m_max},
                     {"stationary", vector_json(pi)},
                     {"final_values", finals},
                     {"curves", arr}};
}

double limit_theta(const ChainSpec& spec, const Observable& f, double tol) {
  const StochasticMatrix& limit = spec.schedule().limit();
  return theta(limit, stationary_distribution(limit, tol), f);
}

void run_clt(const ExperimentConfig& cfg, const ChainSpec& spec,
             const Observable& f, const RunOptions& opts, ReportEnvelope& env) {
  const auto& p = cfg.params;
  const StochasticMatrix& limit = spec.schedule().limit();
  const Vector pi = stationary_distribution(limit, p.tolerances.stationary);
  const double th = theta(limit, pi, f);
  const SimulationSummary s =
      simulate_batch(spec, f, *p.n, *p.path_count, p.seed, th, opts.threads);

  bool pass = s.ks_distance <= *p.ks_threshold;
  double occ_gap = 0.0;
  for (std::size_t i = 0; i < s.occupation.size(); ++i) {
    occ_gap = std::max(occ_gap, std::abs(s.occupation[i] - pi(static_cast<Eigen::Index>(i))));
  }
  json res{{"n", s.n},
           {"N", s.path_count},
           {"seed", s.seed},
           {"theta_used", s.theta_used},
           {"e_sn_used", s.e_sn_used},
           {"ks_distance", s.ks_distance},
           {"ks_threshold", *p.ks_threshold},
           {"occupation", s.occupation},
           {"stationary", vector_json(pi)},
           {"occupation_max_gap", occ_gap},
           {"v_over_n_mean", s.v_over_n_mean},
           {"w_sq_over_n_mean", s.w_sq_over_n_mean},
           {"z_mean", s.z_mean},
           {"z_variance", s.z_variance}};
  if (p.occupation_tolerance) {
    res["occupation_tolerance"] = *p.occupation_tolerance;
    pass = pass && occ_gap <= *p.occupation_tolerance;
  }
  if (opts.spill_path) {
    write_sample_spill(*opts.spill_path, s.standardized_samples);
    res["sample_spill"] = json{
        {"path", *opts.spill_path},
        {"count", s.standardized_samples.size()},
        {"format", "u64 little-endian count, then count IEEE-754 f64 "
                   "little-endian standardized samples"}};
  }
  env.results = res;
  env.passed = pass;

  Table summary{"clt_summary", {"key", "value"}, {}};
  for (const char* key : {"n", "N", "seed", "theta_used", "e_sn_used",
                          "ks_distance", "ks_threshold", "v_over_n_mean",
                          "w_sq_over_n_mean", "z_mean", "z_variance",
                          "occupation_max_gap"}) {
    summary.rows.push_back({json(key), res[key]});
  }
  env.tables.push_back(std::move(summary));
  Table occ{"occupation", {"state", "occupation", "stationary"}, {}};
  for (std::size_t i = 0; i < s.occupation.size(); ++i) {
    occ.rows.push_back({json(i + 1), json(s.occupation[i]),
                        json(pi(static_cast<Eigen::Index>(i)))});
  }
  env.tables.push_back(std::move(occ));
}

void run_mdp(const ExperimentConfig& cfg, const ChainSpec& spec,
             const Observable& f, const RunOptions& opts, ReportEnvelope& env) {
  const auto& p = cfg.params;
  const double th = limit_theta(spec, f, p.tolerances.stationary);
  const MdpEstimate est = mdp_estimate(spec, f, p.n_grid, *p.alpha, p.x_grid,
                                       *p.path_count, p.seed, th, opts.threads);
  json cells = json::array();
  Table grid{"mdp_grid", {"n", "x", "p_hat", "normalized_log", "reference"}, {}};
  for (const MdpCell& c : est.cells) {
    const json nl = c.normalized_log ? json(*c.normalized_log) : json(nullptr);
    cells.push_back(json{{"n", c.n},
                         {"x", c.x},
                         {"a_n", c.a_n},
                         {"hits", c.hits},
                         {"p_hat", c.p_hat},
                         {"normalized_log", nl},
                         {"reference", c.reference},
                         {"gaussian_tail", c.gaussian_tail},
                         {"flagged", c.flagged}});
    grid.rows.push_back({json(c.n), json(c.x), json(c.p_hat), nl, json(c.reference)});
  }
  env.tables.push_back(std::move(grid));
  for (const auto& w : est.warnings) env.warnings.push_back(w);
  env.results = json{{"alpha", est.alpha},
                     {"N", est.path_count},
                     {"seed", est.seed},
                     {"theta_used", est.theta_used},
                     {"n_grid", est.n_grid},
                     {"x_grid", est.x_grid},
                     {"cells", cells}};
}

void run_oracle(const ExperimentConfig& cfg, const ChainSpec& spec,
                const Observable& f, ReportEnvelope& env) {
  const std::size_t n = *cfg.params.n;
  const ExactDistribution dist = enumerate_exact(spec, f, n);
  const double e_sn = expected_sum(spec, f, n);
  const double gap = std::abs(e_sn - dist.mean);
  const bool pass =
      gap <= cfg.params.tolerances.oracle * std::max(1.0, std::abs(dist.mean));
  Table law{"exact_law", {"value", "probability"}, {}};
  for (std::size_t a = 0; a < dist.support.size(); ++a) {
    law.rows.push_back({json(dist.support[a]), json(dist.probabilities[a])});
  }
  env.tables.push_back(std::move(law));
  env.results = json{{"n", n},
                     {"support", dist.support},
                     {"probabilities", dist.probabilities},
                     {"mean", dist.mean},
                     {"variance", dist.variance},
                     {"expected_sum", e_sn},
                     {"mean_gap", gap}};
  env.passed = pass;
}

std::string csv_cell(const json& v) {
  std::string out;
  if (v.is_null()) return out;
  if (v.is_string()) return v.get<std::string>();
  format_scalar(out, v);
  return out;
}

}  // namespace

const char* to_string(Analysis a) noexcept {
  switch (a) {
    case Analysis::Validate: return "validate";
    case Analysis::Diagnose: return "diagnose";
    case Analysis::Clt: return "clt";
    case Analysis::Mdp: return "mdp";
    case Analysis::Oracle: return "oracle";
  }
  return "unknown";
}

std::optional<Analysis> parse_analysis(std::string_view name) noexcept {
  for (Analysis a : {Analysis::Validate, Analysis::Diagnose, Analysis::Clt,
                     Analysis::Mdp, Analysis::Oracle}) {
    if (name == to_string(a)) return a;
  }
  return std::nullopt;
}

ReportFormat parse_format(std::string_view name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  throw Error(ErrorKind::UnsupportedFormat,
              "unknown report format '" + std::string(name) + "'");
}

ChainSpec ExperimentConfig::build_spec() const {
  const double tol = params.tolerances.matrix;
  auto initial_law = Distribution::validate(to_vector(initial), tol);
  if (schedule.kind == "perturbed") {
    return ChainSpec(StateSpace(state_count), std::move(initial_law),
                     make_perturbed_schedule(validated(schedule.base, tol),
                                             validated(schedule.alt, tol),
                                             build_epsilon(schedule.epsilon)));
  }
  std::vector<StochasticMatrix> ms;
  for (const auto& rows : schedule.matrices) ms.push_back(validated(rows, tol));
  auto sched = schedule.kind == "homogeneous"
                   ? TransitionSchedule::homogeneous(std::move(ms.front()))
                   : TransitionSchedule::explicit_list(std::move(ms));
  return ChainSpec(StateSpace(state_count), std::move(initial_law),
                   std::move(sched));
}

Observable ExperimentConfig::build_observable() const {
  return Observable(to_vector(observable_values), observable_bound);
}

ExperimentConfig parse_config(std::string_view text,
                              std::optional<Analysis> selected) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SyntaxError(line_of(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  if (!root.is_object()) throw SchemaError("(root)", "must be an object");
  check_keys(root, "", {"state_count", "initial", "schedule", "observable",
                        "analysis", "params"});

  ExperimentConfig cfg;
  const auto k = as_uint(require(root, "state_count", "state_count"), "state_count");
  if (k < 2) throw SchemaError("state_count", "must be at least 2");
  cfg.state_count = k;

  cfg.initial = as_real_vector(require(root, "initial", "initial"), "initial");
  if (cfg.initial.size() != k) throw SchemaError("initial", "length mismatch");

  const json& sched = require_object(root, "schedule", "schedule");
  parse_schedule(sched, cfg);

  const json& obs = require_object(root, "observable", "observable");
  check_keys(obs, "observable", {"values", "bound"});
  cfg.observable_values =
      as_real_vector(require(obs, "values", "observable.values"), "observable.values");
  if (cfg.observable_values.size() != k) {
    throw SchemaError("observable.values", "length mismatch");
  }
  double sup = 0.0;
  for (double v : cfg.observable_values) sup = std::max(sup, std::abs(v));
  cfg.observable_bound = sup;
  if (auto it = obs.find("bound"); it != obs.end()) {
    cfg.observable_bound = as_real(*it, "observable.bound");
    if (!(cfg.observable_bound >= sup)) {
      throw SchemaError("observable.bound", "smaller than max |f|");
    }
  }

  std::optional<Analysis> named;
  if (auto it = root.find("analysis"); it != root.end()) {
    if (!it->is_string()) throw SchemaError("analysis", "must be a string");
    named = parse_analysis(it->get<std::string>());
    if (!named) {
      throw SchemaError("analysis",
                        "must be one of validate, diagnose, clt, mdp, oracle");
    }
  }
  if (named && selected && *named != *selected) {
    throw SchemaError("analysis", "conflicts with the selected subcommand");
  }
  if (!named && !selected) throw SchemaError("analysis", "missing");
  cfg.analysis = named ? *named : *selected;

  if (auto it = root.find("params"); it != root.end()) {
    if (!it->is_object()) throw SchemaError("params", "must be an object");
    parse_params(*it, cfg.params);
  }
  require_params(cfg);

  // Builds every matrix and vector once so numeric validation errors
  // surface at parse time.
  (void)cfg.build_spec();
  (void)cfg.build_observable();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json sched{{"kind", cfg.schedule.kind}};
  if (cfg.schedule.kind == "homogeneous") {
    sched["matrix"] = rows_json(cfg.schedule.matrices.front());
  } else if (cfg.schedule.kind == "explicit") {
    json list = json::array();
    for (const auto& m : cfg.schedule.matrices) list.push_back(rows_json(m));
    sched["matrices"] = list;
  } else {
    sched["base"] = rows_json(cfg.schedule.base);
    sched["alt"] = rows_json(cfg.schedule.alt);
    const EpsilonConfig& e = cfg.schedule.epsilon;
    json eps{{"form", e.form}};
    if (e.form == "power") {
      eps["c"] = e.c;
      eps["p"] = e.p;
    } else if (e.form == "geometric") {
      eps["c"] = e.c;
      eps["r"] = e.r;
    } else {
      eps["values"] = e.values;
    }
    sched["epsilon"] = eps;
  }

  const ExperimentParams& p = cfg.params;
  json params{{"seed", p.seed},
              {"m_max", p.m_max},
              {"horizon", p.horizon},
              {"tolerances",
               {{"matrix", p.tolerances.matrix},
                {"stationary", p.tolerances.stationary},
                {"ergodicity", p.tolerances.ergodicity},
                {"oracle", p.tolerances.oracle}}}};
  if (p.n) params["n"] = *p.n;
  if (p.path_count) params["N"] = *p.path_count;
  if (p.alpha) params["alpha"] = *p.alpha;
  if (!p.x_grid.empty()) params["x_grid"] = p.x_grid;
  if (!p.n_grid.empty()) params["n_grid"] = p.n_grid;
  if (p.ks_threshold) params["ks_threshold"] = *p.ks_threshold;
  if (p.occupation_tolerance) params["occupation_tolerance"] = *p.occupation_tolerance;

  return json{{"state_count", cfg.state_count},
              {"initial", cfg.initial},
              {"schedule", sched},
              {"observable",
               {{"values", cfg.observable_values}, {"bound", cfg.observable_bound}}},
              {"analysis", to_string(cfg.analysis)},
              {"params", params}};
}

std::string config_digest(const ExperimentConfig& config) {
  const std::string text = canonical_json(config_to_json(config));
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string canonical_json(const json& value) {
  std::string out;
  write_json(out, value, 0);
  out += "\n";
  return out;
}

Table curve_table(const DiagnosticCurve& curve) {
  Table t{curve.label, {"n", "value"}, {}};
  for (const auto& [n, v] : curve.points) t.rows.push_back({json(n), json(v)});
  return t;
}

ReportEnvelope run_experiment(const ExperimentConfig& config,
                              const RunOptions& options) {
  ReportEnvelope env;
  env.analysis = config.analysis;
  env.config = config_to_json(config);
  env.config_digest = config_digest(config);
  const ChainSpec spec = config.build_spec();
  const Observable f = config.build_observable();
  switch (config.analysis) {
    case Analysis::Validate:
      run_validate(config, spec, env);
      break;
    case Analysis::Diagnose:
      run_diagnose(config, spec, f, env);
      break;
    case Analysis::Clt:
      run_clt(config, spec, f, options, env);
      break;
    case Analysis::Mdp:
      run_mdp(config, spec, f, options, env);
      break;
    case Analysis::Oracle:
      run_oracle(config, spec, f, env);
      break;
  }
  return env;
}

std::string emit_report(const ReportEnvelope& env, ReportFormat format) {
  if (format == ReportFormat::Json) {
    json verdict = env.passed ? json(*env.passed ? "PASS" : "FAIL") : json(nullptr);
    return canonical_json(json{{"analysis", to_string(env.analysis)},
                               {"config", env.config},
                               {"config_digest", env.config_digest},
                               {"tool_version", env.tool_version},
                               {"results", env.results},
                               {"verdict", verdict},
                               {"warnings", env.warnings}});
  }
  std::ostringstream os;
  os << "# config_digest=" << env.config_digest
     << " tool_version=" << env.tool_version
     << " analysis=" << to_string(env.analysis);
  if (env.passed) os << " verdict=" << (*env.passed ? "PASS" : "FAIL");
  os << "\n";
  for (const auto& w : env.warnings) os << "# warning: " << w << "\n";
  for (const Table& t : env.tables) {
    os << "\n# " << t.label << "\n";
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      os << (i ? "," : "") << t.header[i];
    }
    os << "\n";
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        os << (i ? "," : "") << csv_cell(row[i]);
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace nhmc
