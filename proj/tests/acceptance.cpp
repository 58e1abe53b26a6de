// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nhmc/chain_model.hpp"
#include "nhmc/cli_reports.hpp"
#include "nhmc/ergodic_analysis.hpp"
#include "nhmc/limit_quantities.hpp"
#include "nhmc/monte_carlo.hpp"
#include "test_support.hpp"

using namespace nhmc;
using namespace nhmc::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

StochasticMatrix fixture_b() { return two_state_matrix(); }
StochasticMatrix fixture_q() { return stoch({{0.3, 0.7}, {0.6, 0.4}}); }

// Closed forms for fixture (b): P = [[1-a, a], [b, 1-b]] with a = 0.1, b = 0.2.
constexpr double kPiB0 = 0.2 / 0.3;
constexpr double kPiB1 = 0.1 / 0.3;
// pi(1) (0 - 0.1^2) + pi(2) (1 - 0.8^2)
constexpr double kThetaB = kPiB0 * (0.0 - 0.01) + kPiB1 * (1.0 - 0.64);
constexpr double kThetaIid = 0.25;

// Atom frequencies of S_n recovered from standardized samples.
std::map<long long, double> atom_frequencies(const SimulationSummary& s) {
  std::map<long long, double> freq;
  const double scale = std::sqrt(static_cast<double>(s.n) * s.theta_used);
  const double w = 1.0 / static_cast<double>(s.path_count);
  for (double z : s.standardized_samples) freq[std::llround(z * scale + s.e_sn_used)] += w;
  return freq;
}

Outcome criterion1() {
  const int n = 12;
  const auto spec = homogeneous_spec(iid_matrix(), vec({0.5, 0.5}));
  const auto f = indicator_of_second();
  const auto law = enumerate_exact(spec, f, n);
  bool exact = law.support.size() == static_cast<std::size_t>(n + 1);
  for (int k = 0; exact && k <= n; ++k) {
    exact = law.support[static_cast<std::size_t>(k)] == k &&
            law.probabilities[static_cast<std::size_t>(k)] == binomial_half(n, k);
  }
  const double mean_gap = std::abs(expected_sum(spec, f, n) - 6.0);

  const std::size_t big_n = 100000;
  const auto sim = simulate_batch(spec, f, n, big_n, 1, kThetaIid);
  const auto freq = atom_frequencies(sim);
  double worst = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double p = binomial_half(n, k);
    const double tol = 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(big_n));
    const auto it = freq.find(k);
    const double got = it == freq.end() ? 0.0 : it->second;
    worst = std::max(worst, std::abs(got - p) / tol);
  }
  return {exact && mean_gap <= 1e-12 && worst <= 1.0,
          fmt("exact_law=%s mean_gap=%.3g worst_atom_gap/tol=%.3f", exact ? "binomial" : "MISMATCH",
              mean_gap, worst)};
}

Outcome criterion2() {
  const std::size_t n = 2000, big_n = 50000;
  const auto f = indicator_of_second();

  const auto iid = homogeneous_spec(iid_matrix(), vec({0.5, 0.5}));
  const double theta_a = theta(iid_matrix(), stationary_distribution(iid_matrix()), f);
  const auto sim_a = simulate_batch(iid, f, n, big_n, 2, theta_a);

  const auto spec_b = homogeneous_spec(fixture_b(), vec({1, 0}));
  const double theta_b = theta(fixture_b(), stationary_distribution(fixture_b()), f);
  const auto sim_b = simulate_batch(spec_b, f, n, big_n, 2, theta_b);
  const double var_w_gap = std::abs(sim_b.w_sq_over_n_mean - theta_b) / theta_b;

  const bool theta_ok = std::abs(theta_a - kThetaIid) <= 1e-14 &&
                        std::abs(theta_b - kThetaB) <= 1e-14 && var_w_gap <= 0.02;
  const bool ks_ok = sim_a.ks_distance <= 0.02 && sim_b.ks_distance <= 0.02;
  return {theta_ok && ks_ok,
          fmt("(a) theta=%.6g ks=%.4f; (b) theta=%.6g hand=%.6g Var(W_n)/n gap=%.4f "
              "ks=%.4f z_var=%.4f",
              theta_a, sim_a.ks_distance, theta_b, kThetaB, var_w_gap, sim_b.ks_distance,
              sim_b.z_variance)};
}

Outcome criterion3() {
  const auto sched = make_perturbed_schedule(fixture_b(), fixture_q(), EpsilonSchedule::power(1.0, 1.0));
  const auto curve = condition4_diagnostic(sched, fixture_b(), 10000, 64);
  bool decreasing = true;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    decreasing = decreasing && curve.points[i].second <= curve.points[i - 1].second;
  }
  const double final_value = curve.last_value();

  const std::string config = R"({
    "state_count": 2, "initial": [1, 0],
    "schedule": {"kind": "perturbed",
                 "base": [[0.9, 0.1], [0.2, 0.8]],
                 "alt": [[0.3, 0.7], [0.6, 0.4]],
                 "epsilon": {"form": "power", "c": 1.0, "p": 1.0}},
    "observable": {"values": [0, 1]},
    "analysis": "clt",
    "params": {"n": 2000, "N": 50000, "seed": 3, "ks_threshold": 0.025}})";
  const auto env = run_experiment(parse_config(config));
  const bool verdict = env.passed.value_or(false);
  const double ks = env.results["ks_distance"].get<double>();
  return {final_value < 0.05 && decreasing && verdict && ks <= 0.025,
          fmt("cond4(n=1e4)=%.3g decreasing=%s clt verdict=%s ks=%.4f", final_value,
              decreasing ? "yes" : "no", verdict ? "PASS" : "FAIL", ks)};
}

Outcome criterion4() {
  const auto spec = homogeneous_spec(fixture_b(), vec({1, 0}));
  const auto occ = occupation_frequencies(sample_path(spec, 1000000, 4), 2);
  const double g0 = std::abs(occ[0] - kPiB0);
  const double g1 = std::abs(occ[1] - kPiB1);
  return {g0 <= 0.01 && g1 <= 0.01,
          fmt("L_n/n=(%.5f, %.5f) gaps=(%.2g, %.2g)", occ[0], occ[1], g0, g1)};
}

Outcome criterion5() {
  const auto spec = homogeneous_spec(fixture_b(), vec({1, 0}));
  const std::size_t n = 1000000;
  const auto tr = martingale_decompose(sample_path(spec, n, 5), spec, indicator_of_second());
  const double ratio = tr.v_values.back() / static_cast<double>(n);
  const double gap = std::abs(ratio - kThetaB);
  return {gap <= 0.02 * kThetaB, fmt("V(W_n)/n=%.6f theta=%.6f rel_gap=%.4f", ratio, kThetaB,
                                     gap / kThetaB)};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  double worst_mean = 0.0, worst_var = 0.0;
  const std::size_t n = 10;
  for (int trial = 0; trial < 20; ++trial) {
    ChainSpec spec = homogeneous_spec(fixture_b(), vec({1, 0}));
    Observable f = indicator_of_second();
    if (trial > 0) {
      std::vector<StochasticMatrix> ms;
      for (std::size_t k = 0; k < n; ++k) ms.push_back(random_stochastic(rng, 2, true));
      spec = ChainSpec(StateSpace(2), Distribution::validate(random_distribution(rng, 2)),
                       TransitionSchedule::explicit_list(ms));
      f = Observable(random_values(rng, 2, -1.0, 1.0), 1.0);
    }
    double ew = 0.0, ew2 = 0.0, ev = 0.0;
    for_each_path(spec, n, [&](const Path& p, double prob) {
      const auto tr = martingale_decompose(p, spec, f);
      ew += prob * tr.w_values.back();
      ew2 += prob * tr.w_values.back() * tr.w_values.back();
      ev += prob * tr.v_values.back();
    });
    worst_mean = std::max(worst_mean, std::abs(ew));
    worst_var = std::max(worst_var, std::abs(ew2 - ev));
  }
  return {worst_mean <= 1e-12 && worst_var <= 1e-12,
          fmt("20 chains: max|E W_n|=%.3g max|E W_n^2 - E V|=%.3g", worst_mean, worst_var)};
}

Outcome criterion7() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(2, 5);
  std::size_t violations = 0, steps = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = dim(rng);
    std::vector<StochasticMatrix> ms;
    for (int j = 0; j < 100; ++j) ms.push_back(random_stochastic(rng, k, trial % 2 == 0));
    const ChainSpec spec(StateSpace(k), Distribution::validate(random_distribution(rng, k)),
                         TransitionSchedule::explicit_list(ms));
    const Observable f(random_values(rng, k, -3.0, 3.0), 3.0);
    for (const auto& step : drift_profile(spec, f, 100)) {
      ++steps;
      if (step.realized > step.bound + 1e-12) ++violations;
      if (step.bound > 0.0) worst_ratio = std::max(worst_ratio, step.realized / step.bound);
    }
  }
  return {violations == 0, fmt("%zu steps, %zu violations, max realized/bound=%.4f", steps,
                               violations, worst_ratio)};
}

double half_l1_delta(const Matrix& p) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.rows(); ++k) {
      best = std::max(best, 0.5 * (p.row(i) - p.row(k)).cwiseAbs().sum());
    }
  }
  return best;
}

Outcome criterion9() {
  std::mt19937_64 rng(9);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_stochastic(rng, 5, trial % 3 == 0);
    const auto b = random_stochastic(rng, 5, trial % 3 == 1);
    const auto ab = a * b;
    const double da = dobrushin_delta(a), db = dobrushin_delta(b), dab = dobrushin_delta(ab);
    bool ok = matrix_norm(ab.matrix()) <= matrix_norm(a.matrix()) * matrix_norm(b.matrix());
    ok = ok && matrix_norm(a.matrix()) == 1.0 && matrix_norm(b.matrix()) == 1.0 &&
         matrix_norm(ab.matrix()) == 1.0;
    ok = ok && da >= 0.0 && da <= 1.0 && db >= 0.0 && db <= 1.0;
    ok = ok && std::abs(da - half_l1_delta(a.matrix())) <= 1e-12;
    ok = ok && dab <= da * db + 1e-12;
    if (!ok) ++violations;
  }
  return {violations == 0, fmt("1000 pairs, %zu violations", violations)};
}

double gaussian_two_sided_tail(double y) { return std::erfc(y / std::sqrt(2.0)); }

Outcome criterion8() {
  const std::vector<std::size_t> grid{2048, 8192, 32768};
  const double alpha = 0.75;
  // x puts the two-sided Gaussian tail at the largest n at 1.2e-3.
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double y = 0.5 * (lo + hi);
    if (gaussian_two_sided_tail(y) > 1.2e-3) lo = y; else hi = y;
  }
  const double n_max = static_cast<double>(grid.back());
  const double x = 0.5 * (lo + hi) * std::sqrt(kThetaIid * n_max) / std::pow(n_max, alpha);

  const auto spec = homogeneous_spec(iid_matrix(), vec({0.5, 0.5}));
  const auto est = mdp_estimate(spec, indicator_of_second(), grid, alpha, {x}, 200000, 8, kThetaIid);
  const auto gaps = mdp_relative_gaps(est, 0);
  bool all = true;
  for (const auto& g : gaps) all = all && g.has_value();
  bool non_increasing = all;
  for (std::size_t i = 1; all && i < gaps.size(); ++i) non_increasing = non_increasing && *gaps[i] <= *gaps[i - 1];
  const bool last_ok = all && *gaps.back() <= 0.35;
  std::string detail = fmt("x=%.5f", x);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& c = est.cell(g, 0);
    detail += fmt(" | n=%zu tail=%.3g p_hat=%.3g gap=%s", c.n, c.gaussian_tail, c.p_hat,
                  gaps[g] ? fmt("%.4f", *gaps[g]).c_str() : "n/a");
  }
  return {last_ok && non_increasing, detail};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion10() {
  const auto dir = std::filesystem::temp_directory_path() / "nhmc_acceptance";
  std::filesystem::create_directories(dir);
  const std::string config = std::string(NHMC_FIXTURES) + "/iid_clt.json";
  std::vector<std::string> reports;
  for (const char* threads : {"1", "8"}) {
    const std::string out = (dir / (std::string("clt_") + threads + ".json")).string();
    std::filesystem::remove(out);
    const std::string cmd = std::string("NHMC_THREADS=") + threads + " \"" + NHMC_EXE +
                            "\" clt --config \"" + config + "\" --out \"" + out + "\" 2>/dev/null";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) > 1) {
      return {false, fmt("nhmc clt failed with status %d", status)};
    }
    reports.push_back(slurp(out));
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, fmt("report bytes %zu vs %zu, identical=%s", reports[0].size(), reports[1].size(),
                    same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 oracle equivalence", criterion1},
      {"2 CLT homogeneous fixtures", criterion2},
      {"3 nonhomogeneous CLT", criterion3},
      {"4 occupation law", criterion4},
      {"5 predictable variation", criterion5},
      {"6 martingale identities", criterion6},
      {"7 drift bound", criterion7},
      {"8 moderate deviations", criterion8},
      {"9 delta and norm properties", criterion9},
      {"10 determinism", criterion10},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
