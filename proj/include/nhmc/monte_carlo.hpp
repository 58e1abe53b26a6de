#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nhmc/chain_model.hpp"

namespace nhmc {

struct SimulationSummary {
  std::size_t n = 0;
  std::size_t path_count = 0;
  std::uint64_t seed = 0;
  /// z_r = (S_n - E S_n) / sqrt(n theta), one per path.
  std::vector<double> standardized_samples;
  /// Mean over paths of L_n(i)/n.
  std::vector<double> occupation;
  double v_over_n_mean = 0.0;
  double ks_distance = 0.0;
  double theta_used = 0.0;
  double e_sn_used = 0.0;

  // Empirical companions to the analytic theta.
  double z_mean = 0.0;
  double z_variance = 0.0;
  /// Mean over paths of W_n^2 / n.
  double w_sq_over_n_mean = 0.0;
};

struct MdpCell {
  std::size_t n = 0;
  double x = 0.0;
  double a_n = 0.0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  /// (n / a(n)^2) log p_hat; empty when p_hat == 0 (flagged cell).
  std::optional<double> normalized_log;
  /// -x^2 / (2 theta)
  double reference = 0.0;
  /// Two-sided Gaussian tail at the same threshold, for the estimability
  /// guard.
  double gaussian_tail = 0.0;
  bool flagged = false;
};

struct MdpEstimate {
  double alpha = 0.0;
  std::size_t path_count = 0;
  std::uint64_t seed = 0;
  double theta_used = 0.0;
  std::vector<std::size_t> n_grid;
  std::vector<double> x_grid;
  /// Row-major over (n_grid, x_grid).
  std::vector<MdpCell> cells;
  std::vector<std::string> warnings;

  const MdpCell& cell(std::size_t n_index, std::size_t x_index) const {
    return cells[n_index * x_grid.size() + x_index];
  }
};

/// One path X_0..X_n. Draw t of path `path_index` uses the counter
/// (seed, path_index, t), with X_0 drawn at t = 0.
Path sample_path(const ChainSpec& spec, std::size_t n, std::uint64_t seed,
                 std::uint64_t path_index = 0);

/// L_n(i)/n with n = path.length(), counting X_0..X_{n-1}.
std::vector<double> occupation_frequencies(const Path& path,
                                           std::size_t state_count);

/// Standard normal CDF via erfc.
double normal_cdf(double z);

/// sup_x |F_N(x) - Phi(x)|. Throws EmptyInput.
double ks_statistic(std::span<const double> samples);

/// Sum by a fixed-shape pairwise tree; the result depends only on the
/// values and their order.
double pairwise_sum(std::span<const double> values);

/// threads == 0 picks the hardware concurrency. Results are bit-identical
/// for every thread count.
SimulationSummary simulate_batch(const ChainSpec& spec, const Observable& f,
                                 std::size_t n, std::size_t path_count,
                                 std::uint64_t seed, double theta_ref,
                                 unsigned threads = 0);

MdpEstimate mdp_estimate(const ChainSpec& spec, const Observable& f,
                         std::vector<std::size_t> n_grid, double alpha,
                         std::vector<double> x_grid, std::size_t path_count,
                         std::uint64_t seed, double theta_ref,
                         unsigned threads = 0);

/// |normalized_log - reference| / |reference| at one x for each n, empty
/// where the cell is flagged or the reference is 0.
std::vector<std::optional<double>> mdp_relative_gaps(const MdpEstimate& est,
                                                     std::size_t x_index);

/// Binary column file: u64 count, then count f64 values, little-endian.
void write_sample_spill(const std::string& file,
                        std::span<const double> samples);
std::vector<double> read_sample_spill(const std::string& file);

}  // namespace nhmc
