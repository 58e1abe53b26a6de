#include "nhmc/monte_carlo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "nhmc/counter_rng.hpp"
#include "nhmc/error.hpp"
#include "nhmc/limit_quantities.hpp"

namespace nhmc {

namespace {

using Index = Eigen::Index;

constexpr double kMaxTableEntries = 1e8;

// Per-step sampling tables: cumulative row sums of P_k and, when an
// observable is supplied, the conditional mean and variance of f under
// each row. Homogeneous schedules store a single step.
class StepTables {
 public:
  StepTables(const ChainSpec& spec, const Observable* f, std::size_t n)
      : k_(spec.size()), fixed_(spec.schedule().is_homogeneous()) {
    const std::size_t steps = fixed_ ? 1 : n;
    if (static_cast<double>(steps) * static_cast<double>(k_ * k_) >
        kMaxTableEntries) {
      throw Error(ErrorKind::InstanceTooLarge,
                  "sampling tables for " + std::to_string(n) + " steps over " +
                      std::to_string(k_) + " states");
    }
    initial_.resize(k_);
    double acc = 0.0;
    for (std::size_t j = 0; j < k_; ++j) {
      acc += spec.initial()[j];
      initial_[j] = acc;
    }
    cum_.resize(steps * k_ * k_);
    if (f != nullptr) {
      mean_.resize(steps * k_);
      cvar_.resize(steps * k_);
    }
    for (std::size_t s = 0; s < steps; ++s) {
      const StochasticMatrix p = spec.schedule().at(s + 1);
      double* cum = &cum_[s * k_ * k_];
      for (std::size_t i = 0; i < k_; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k_; ++j) {
          row += p(i, j);
          cum[i * k_ + j] = row;
        }
      }
      if (f != nullptr) {
        const KernelMoments km = KernelMoments::of(p, *f);
        for (std::size_t i = 0; i < k_; ++i) {
          mean_[s * k_ + i] = km.mean(static_cast<Index>(i));
          cvar_[s * k_ + i] = km.conditional_variance(i);
        }
      }
    }
  }

  std::size_t states() const noexcept { return k_; }

  std::uint32_t draw_initial(double u) const noexcept {
    return pick(initial_.data(), u);
  }

  std::uint32_t draw(std::size_t k, std::uint32_t prev, double u) const noexcept {
    return pick(&cum_[slot(k) * k_ * k_ + prev * k_], u);
  }

  double cond_mean(std::size_t k, std::uint32_t prev) const noexcept {
    return mean_[slot(k) * k_ + prev];
  }
  double cond_var(std::size_t k, std::uint32_t prev) const noexcept {
    return cvar_[slot(k) * k_ + prev];
  }

 private:
  std::size_t slot(std::size_t k) const noexcept { return fixed_ ? 0 : k - 1; }

  // Inverse CDF on cumulative sums; the last state absorbs rounding.
  std::uint32_t pick(const double* cum, double u) const noexcept {
    std::uint32_t j = 0;
    const auto last = static_cast<std::uint32_t>(k_ - 1);
    while (j < last && u >= cum[j]) ++j;
    return j;
  }

  std::size_t k_;
  bool fixed_;
  std::vector<double> initial_;
  std::vector<double> cum_;
  std::vector<double> mean_;
  std::vector<double> cvar_;
};

unsigned resolve_threads(unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return threads;
}

// Runs body(i) for i in [0, count) over contiguous blocks.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  threads = static_cast<unsigned>(
      std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = count * t / threads;
    const std::size_t end = count * (t + 1) / threads;
    workers.emplace_back([begin, end, &body] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
}

double pairwise_sum_impl(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(v, half) + pairwise_sum_impl(v + half, n - half);
}

double mean_of(std::span<const double> v) {
  return pairwise_sum(v) / static_cast<double>(v.size());
}

void require_theta(double theta_ref) {
  if (!(theta_ref > 1e-12)) {
    throw Error(ErrorKind::NonpositiveTheta,
                "theta must exceed 1e-12, got " + std::to_string(theta_ref));
  }
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise_sum_impl(values.data(), values.size());
}

Path sample_path(const ChainSpec& spec, std::size_t n, std::uint64_t seed,
                 std::uint64_t path_index) {
  const StepTables tables(spec, nullptr, n);
  const CounterRng rng(seed, path_index);
  Path path;
  path.seed = seed;
  path.states.resize(n + 1);
  path.states[0] = tables.draw_initial(rng.uniform(0));
  for (std::size_t k = 1; k <= n; ++k) {
    path.states[k] = tables.draw(k, path.states[k - 1], rng.uniform(k));
  }
  return path;
}

std::vector<double> occupation_frequencies(const Path& path,
                                           std::size_t state_count) {
  const std::size_t n = path.length();
  if (n == 0) {
    throw Error(ErrorKind::InvalidArgument,
                "occupation frequencies need at least one transition");
  }
  std::vector<std::size_t> counts(state_count, 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (path.states[k] >= state_count) {
      throw Error(ErrorKind::LengthMismatch, "path state outside state space");
    }
    ++counts[path.states[k]];
  }
  std::vector<double> out(state_count);
  for (std::size_t i = 0; i < state_count; ++i) {
    out[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_statistic(std::span<const double> samples) {
  if (samples.empty()) {
    throw Error(ErrorKind::EmptyInput, "ks_statistic needs samples");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double phi = normal_cdf(sorted[i]);
    const double above = static_cast<double>(i + 1) / n - phi;
    const double below = phi - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  return d;
}

SimulationSummary simulate_batch(const ChainSpec& spec, const Observable& f,
                                 std::size_t n, std::size_t path_count,
                                 std::uint64_t seed, double theta_ref,
                                 unsigned threads) {
  require_theta(theta_ref);
  if (path_count < 100) {
    throw Error(ErrorKind::InvalidN,
                "simulate_batch needs at least 100 paths, got " +
                    std::to_string(path_count));
  }
  if (n == 0) {
    throw Error(ErrorKind::InvalidN, "simulate_batch needs n >= 1");
  }
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }

  const StepTables tables(spec, &f, n);
  const std::size_t k_states = spec.size();
  const double e_sn = expected_sum(spec, f, n);
  const double dn = static_cast<double>(n);
  const double scale = std::sqrt(dn * theta_ref);

  std::vector<double> z(path_count);
  std::vector<double> v_over_n(path_count);
  std::vector<double> w_sq_over_n(path_count);
  std::vector<double> occupation(path_count * k_states);

  parallel_for(path_count, threads, [&](std::size_t r) {
    const CounterRng rng(seed, r);
    std::vector<std::size_t> counts(k_states, 0);
    std::uint32_t state = tables.draw_initial(rng.uniform(0));
    double s = 0.0;
    double w = 0.0;
    double v = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      ++counts[state];
      const std::uint32_t prev = state;
      state = tables.draw(k, prev, rng.uniform(k));
      const double fx = f[state];
      s += fx;
      w += fx - tables.cond_mean(k, prev);
      v += tables.cond_var(k, prev);
    }
    z[r] = (s - e_sn) / scale;
    v_over_n[r] = v / dn;
    w_sq_over_n[r] = w * w / dn;
    for (std::size_t i = 0; i < k_states; ++i) {
      occupation[r * k_states + i] = static_cast<double>(counts[i]) / dn;
    }
  });

  SimulationSummary out;
  out.n = n;
  out.path_count = path_count;
  out.seed = seed;
  out.theta_used = theta_ref;
  out.e_sn_used = e_sn;
  out.v_over_n_mean = mean_of(v_over_n);
  out.w_sq_over_n_mean = mean_of(w_sq_over_n);
  out.z_mean = mean_of(z);
  {
    std::vector<double> sq(path_count);
    for (std::size_t r = 0; r < path_count; ++r) {
      sq[r] = (z[r] - out.z_mean) * (z[r] - out.z_mean);
    }
    out.z_variance = pairwise_sum(sq) / static_cast<double>(path_count - 1);
  }
  out.occupation.resize(k_states);
  std::vector<double> column(path_count);
  for (std::size_t i = 0; i < k_states; ++i) {
    for (std::size_t r = 0; r < path_count; ++r) {
      column[r] = occupation[r * k_states + i];
    }
    out.occupation[i] = mean_of(column);
  }
  out.ks_distance = ks_statistic(z);
  out.standardized_samples = std::move(z);
  return out;
}

MdpEstimate mdp_estimate(const ChainSpec& spec, const Observable& f,
                         std::vector<std::size_t> n_grid, double alpha,
                         std::vector<double> x_grid, std::size_t path_count,
                         std::uint64_t seed, double theta_ref,
                         unsigned threads) {
  if (!(alpha > 0.5 && alpha < 1.0)) {
    throw Error(ErrorKind::InvalidAlpha,
                "alpha must lie in (0.5,1), got " + std::to_string(alpha));
  }
  require_theta(theta_ref);
  if (path_count == 0) {
    throw Error(ErrorKind::InvalidN, "mdp_estimate needs at least one path");
  }
  if (n_grid.empty() || x_grid.empty()) {
    throw Error(ErrorKind::InvalidArgument, "mdp grids must be non-empty");
  }
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }
  std::sort(n_grid.begin(), n_grid.end());
  n_grid.erase(std::unique(n_grid.begin(), n_grid.end()), n_grid.end());
  std::sort(x_grid.begin(), x_grid.end());
  x_grid.erase(std::unique(x_grid.begin(), x_grid.end()), x_grid.end());
  if (n_grid.front() == 0 || x_grid.front() < 0.0) {
    throw Error(ErrorKind::InvalidArgument,
                "mdp grids need n >= 1 and x >= 0");
  }

  const std::size_t n_max = n_grid.back();
  const std::size_t g_count = n_grid.size();
  const StepTables tables(spec, nullptr, n_max);

  std::vector<double> centre(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    centre[g] = expected_sum(spec, f, n_grid[g]);
  }

  // deviation[r * g_count + g] = |S_{n_g} - E S_{n_g}| on path r
  std::vector<double> deviation(path_count * g_count);
  parallel_for(path_count, threads, [&](std::size_t r) {
    const CounterRng rng(seed, r);
    std::uint32_t state = tables.draw_initial(rng.uniform(0));
    double s = 0.0;
    std::size_t g = 0;
    for (std::size_t k = 1; k <= n_max; ++k) {
      state = tables.draw(k, state, rng.uniform(k));
      s += f[state];
      if (k == n_grid[g]) {
        deviation[r * g_count + g] = std::abs(s - centre[g]);
        ++g;
      }
    }
  });

  MdpEstimate est;
  est.alpha = alpha;
  est.path_count = path_count;
  est.seed = seed;
  est.theta_used = theta_ref;
  est.n_grid = n_grid;
  est.x_grid = x_grid;
  const auto big_n = static_cast<double>(path_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    const auto dn = static_cast<double>(n_grid[g]);
    const double a_n = std::pow(dn, alpha);
    for (double x : x_grid) {
      MdpCell cell;
      cell.n = n_grid[g];
      cell.x = x;
      cell.a_n = a_n;
      const double threshold = x * a_n;
      for (std::size_t r = 0; r < path_count; ++r) {
        if (deviation[r * g_count + g] >= threshold) ++cell.hits;
      }
      cell.p_hat = static_cast<double>(cell.hits) / big_n;
      cell.reference = -x * x / (2.0 * theta_ref);
      cell.gaussian_tail =
          std::erfc(threshold / std::sqrt(dn * theta_ref) / std::sqrt(2.0));
      if (cell.hits == 0) {
        cell.flagged = true;
      } else {
        cell.normalized_log = dn / (a_n * a_n) * std::log(cell.p_hat);
      }
      if (cell.gaussian_tail * big_n < 10.0) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "cell n=%zu x=%.6g: targeted probability %.3g is below "
                      "10/N; estimate unreliable",
                      cell.n, x, cell.gaussian_tail);
        est.warnings.emplace_back(buf);
      }
      if (cell.flagged) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "cell n=%zu x=%.6g: no exceedances",
                      cell.n, x);
        est.warnings.emplace_back(buf);
      }
      est.cells.push_back(cell);
    }
  }
  return est;
}

std::vector<std::optional<double>> mdp_relative_gaps(const MdpEstimate& est,
                                                     std::size_t x_index) {
  std::vector<std::optional<double>> gaps;
  for (std::size_t g = 0; g < est.n_grid.size(); ++g) {
    const MdpCell& c = est.cell(g, x_index);
    if (c.flagged || !c.normalized_log || c.reference == 0.0) {
      gaps.emplace_back();
    } else {
      gaps.emplace_back(std::abs(*c.normalized_log - c.reference) /
                        std::abs(c.reference));
    }
  }
  return gaps;
}

namespace {

void put_u64_le(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  os.write(bytes, 8);
}

std::uint64_t get_u64_le(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw Error(ErrorKind::IoError, "truncated sample spill file");
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[b];
  return v;
}

}  // namespace

void write_sample_spill(const std::string& file,
                        std::span<const double> samples) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + file);
  put_u64_le(os, samples.size());
  for (double v : samples) put_u64_le(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + file);
}

std::vector<double> read_sample_spill(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + file);
  const std::uint64_t count = get_u64_le(is);
  std::vector<double> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    out.push_back(std::bit_cast<double>(get_u64_le(is)));
  }
  return out;
}

}  // namespace nhmc
