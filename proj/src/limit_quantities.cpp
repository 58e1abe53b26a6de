#include "nhmc/limit_quantities.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>

#include "nhmc/error.hpp"

namespace nhmc {

namespace {

using Index = Eigen::Index;

constexpr double kLatticeTolerance = 1e-9;

// Kernel moments for P_1..P_n, sharing one entry when the schedule is
// homogeneous.
class MomentTable {
 public:
  MomentTable(const TransitionSchedule& schedule, const Observable& f,
              std::size_t n)
      : fixed_(schedule.is_homogeneous()) {
    if (fixed_) {
      table_.push_back(KernelMoments::of(schedule.at(1), f));
    } else {
      table_.reserve(n);
      for (std::size_t k = 1; k <= n; ++k) {
        table_.push_back(KernelMoments::of(schedule.at(k), f));
      }
    }
  }

  const KernelMoments& at(std::size_t k) const {
    return fixed_ ? table_.front() : table_[k - 1];
  }

 private:
  bool fixed_;
  std::vector<KernelMoments> table_;
};

struct Lattice {
  double offset = 0.0;   // min_i f(i)
  double quantum = 1.0;  // f(i) = offset + quantum * steps[i]
  std::vector<std::size_t> steps;
  std::size_t max_step = 0;
};

double real_gcd(double a, double b, double eps) {
  if (a < b) std::swap(a, b);
  for (int it = 0; it < 200 && b > eps; ++it) {
    double r = std::fmod(a, b);
    if (b - r <= eps) r = 0.0;
    a = b;
    b = r;
  }
  return a;
}

std::optional<Lattice> detect_lattice(const Observable& f) {
  Lattice lat;
  const Vector& v = f.values();
  lat.offset = v.minCoeff();
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  const double eps = kLatticeTolerance * scale;

  double q = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double d = v(i) - lat.offset;
    if (d <= eps) continue;
    q = (q == 0.0) ? d : real_gcd(q, d, eps);
  }
  if (q == 0.0) {
    lat.quantum = 1.0;
    lat.steps.assign(static_cast<std::size_t>(v.size()), 0);
    return lat;
  }
  lat.quantum = q;
  for (Index i = 0; i < v.size(); ++i) {
    const double ratio = (v(i) - lat.offset) / q;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > kLatticeTolerance * std::max(1.0, ratio) ||
        rounded > 1e7) {
      return std::nullopt;
    }
    lat.steps.push_back(static_cast<std::size_t>(rounded));
    lat.max_step = std::max(lat.max_step, lat.steps.back());
  }
  return lat;
}

void finalize_moments(ExactDistribution& dist) {
  double mean = 0.0;
  for (std::size_t a = 0; a < dist.support.size(); ++a) {
    mean += dist.support[a] * dist.probabilities[a];
  }
  double var = 0.0;
  for (std::size_t a = 0; a < dist.support.size(); ++a) {
    const double c = dist.support[a] - mean;
    var += c * c * dist.probabilities[a];
  }
  dist.mean = mean;
  dist.variance = var;
}

ExactDistribution lattice_dp(const ChainSpec& spec, const Lattice& lat,
                             std::size_t n) {
  const std::size_t k_states = spec.size();
  const std::size_t buckets = n * lat.max_step + 1;
  // layer[s * buckets + b] = P(X_t = s, sum of steps so far = b)
  std::vector<double> layer(k_states * buckets, 0.0);
  std::vector<double> next(k_states * buckets, 0.0);
  for (std::size_t s = 0; s < k_states; ++s) layer[s * buckets] = spec.initial()[s];

  std::size_t reach = 0;  // largest bucket index reachable so far
  const bool fixed = spec.schedule().is_homogeneous();
  const StochasticMatrix p_fixed = spec.schedule().at(1);
  for (std::size_t t = 1; t <= n; ++t) {
    const StochasticMatrix p_t = fixed ? p_fixed : spec.schedule().at(t);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < k_states; ++i) {
      const double* row = &layer[i * buckets];
      for (std::size_t j = 0; j < k_states; ++j) {
        const double pij = p_t(i, j);
        if (pij == 0.0) continue;
        double* out = &next[j * buckets + lat.steps[j]];
        for (std::size_t b = 0; b <= reach; ++b) {
          if (row[b] != 0.0) out[b] += row[b] * pij;
        }
      }
    }
    reach += lat.max_step;
    layer.swap(next);
  }

  ExactDistribution dist;
  for (std::size_t b = 0; b < buckets; ++b) {
    double prob = 0.0;
    for (std::size_t s = 0; s < k_states; ++s) prob += layer[s * buckets + b];
    if (prob == 0.0) continue;
    dist.support.push_back(static_cast<double>(n) * lat.offset +
                           static_cast<double>(b) * lat.quantum);
    dist.probabilities.push_back(prob);
  }
  finalize_moments(dist);
  return dist;
}

ExactDistribution enumerate_paths_law(const ChainSpec& spec,
                                      const Observable& f, std::size_t n) {
  std::vector<std::pair<double, double>> atoms;
  for_each_path(spec, n, [&](const Path& path, double prob) {
    double s = 0.0;
    for (std::size_t k = 1; k < path.states.size(); ++k) s += f[path.states[k]];
    atoms.emplace_back(s, prob);
  });
  std::sort(atoms.begin(), atoms.end());
  ExactDistribution dist;
  for (const auto& [value, prob] : atoms) {
    if (!dist.support.empty() &&
        std::abs(value - dist.support.back()) <=
            kLatticeTolerance * std::max(1.0, std::abs(value))) {
      dist.probabilities.back() += prob;
    } else {
      dist.support.push_back(value);
      dist.probabilities.push_back(prob);
    }
  }
  finalize_moments(dist);
  return dist;
}

}  // namespace

KernelMoments KernelMoments::of(const StochasticMatrix& p,
                                const Observable& f) {
  if (p.dim() != f.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/matrix size");
  }
  KernelMoments km;
  km.mean = p.matrix() * f.values();
  km.second = p.matrix() * f.values().cwiseProduct(f.values());
  return km;
}

double KernelMoments::conditional_variance(std::size_t i) const {
  const auto idx = static_cast<Index>(i);
  return std::max(0.0, second(idx) - mean(idx) * mean(idx));
}

double theta(const StochasticMatrix& p, const Vector& pi, const Observable& f) {
  if (pi.size() != static_cast<Index>(p.dim()) || f.size() != p.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "theta inputs disagree in size");
  }
  const Vector cond_mean = p.matrix() * f.values();
  double total = 0.0;
  for (Index i = 0; i < pi.size(); ++i) {
    total += pi(i) * (f.values()(i) * f.values()(i) - cond_mean(i) * cond_mean(i));
  }
  return total;
}

double rate_function(double x, double theta_value) {
  if (!(theta_value > 0.0)) {
    throw Error(ErrorKind::NonpositiveTheta,
                "rate function needs theta > 0, got " + std::to_string(theta_value));
  }
  return x * x / (2.0 * theta_value);
}

MartingaleTrace martingale_decompose(const Path& path, const ChainSpec& spec,
                                     const Observable& f) {
  if (path.states.empty()) {
    throw Error(ErrorKind::LengthMismatch, "path has no states");
  }
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }
  for (auto s : path.states) {
    if (s >= spec.size()) {
      throw Error(ErrorKind::LengthMismatch,
                  "path visits state " + std::to_string(s + 1) +
                      " outside 1.." + std::to_string(spec.size()));
    }
  }
  const std::size_t n = path.length();
  const MomentTable moments(spec.schedule(), f, n);

  MartingaleTrace trace;
  trace.d_values.reserve(n);
  trace.w_values.reserve(n);
  trace.v_values.reserve(n);
  double w = 0.0;
  double v = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const KernelMoments& km = moments.at(k);
    const std::size_t prev = path.states[k - 1];
    const double d = f[path.states[k]] - km.mean(static_cast<Index>(prev));
    w += d;
    v += km.conditional_variance(prev);
    trace.d_values.push_back(d);
    trace.w_values.push_back(w);
    trace.v_values.push_back(v);
  }
  return trace;
}

double lindeberg_diagnostic(const std::vector<MartingaleTrace>& traces,
                            double epsilon, double v_n) {
  if (traces.empty()) {
    throw Error(ErrorKind::EmptyInput, "no martingale traces");
  }
  if (!(v_n > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "v_n must be positive");
  }
  const std::size_t n = traces.front().length();
  const double cut = epsilon * std::sqrt(v_n);
  double total = 0.0;
  for (const auto& tr : traces) {
    if (tr.length() != n) {
      throw Error(ErrorKind::LengthMismatch, "traces differ in length");
    }
    double s = 0.0;
    for (double d : tr.d_values) {
      if (std::abs(d) >= cut) s += d * d;
    }
    total += s;
  }
  return total / static_cast<double>(traces.size()) / v_n;
}

std::vector<DriftStep> drift_profile(const ChainSpec& spec,
                                     const Observable& f, std::size_t n) {
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }
  std::vector<DriftStep> out;
  out.reserve(n);
  Distribution mu = spec.initial();
  for (std::size_t k = 1; k <= n; ++k) {
    const StochasticMatrix p_k = spec.schedule().at(k);
    mu = advance(mu, p_k);
    const double mean_k = mu.weights().dot(f.values());
    const Vector cond_mean = p_k.matrix() * f.values();
    DriftStep step;
    step.k = k;
    step.bound = 2.0 * f.bound() * dobrushin_delta(p_k);
    step.realized = (cond_mean.array() - mean_k).abs().maxCoeff();
    out.push_back(step);
  }
  return out;
}

DiagnosticCurve drift_bound_check(const ChainSpec& spec, const Observable& f,
                                  std::size_t n) {
  if (n == 0) {
    throw Error(ErrorKind::InvalidArgument, "drift_bound_check needs n >= 1");
  }
  DiagnosticCurve curve;
  curve.label = "drift_bound";
  double total = 0.0;
  for (const DriftStep& step : drift_profile(spec, f, n)) {
    if (step.realized > step.bound + 1e-12) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "step %zu: realized drift %.17g exceeds 2M*delta = %.17g",
                    step.k, step.realized, step.bound);
      throw Error(ErrorKind::DriftBoundViolated, buf);
    }
    total += step.bound;
    curve.points.emplace_back(step.k,
                              total / std::sqrt(static_cast<double>(step.k)));
  }
  return curve;
}

ExactDistribution enumerate_exact(const ChainSpec& spec, const Observable& f,
                                  std::size_t n) {
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }
  if (const auto lat = detect_lattice(f)) {
    const double cells = static_cast<double>(spec.size()) *
                         (static_cast<double>(n) *
                              static_cast<double>(lat->max_step) +
                          1.0);
    if (cells <= kMaxLatticeCells) return lattice_dp(spec, *lat, n);
  }
  return enumerate_paths_law(spec, f, n);
}

void for_each_path(const ChainSpec& spec, std::size_t n,
                   const std::function<void(const Path&, double)>& visit) {
  const std::size_t k_states = spec.size();
  const double count = std::pow(static_cast<double>(k_states),
                                static_cast<double>(n) + 1.0);
  if (count > kMaxEnumeratedPaths) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "K^(n+1) = %.3g paths exceeds %.0e", count,
                  kMaxEnumeratedPaths);
    throw Error(ErrorKind::InstanceTooLarge, buf);
  }
  std::vector<StochasticMatrix> kernels;
  kernels.reserve(n);
  for (std::size_t k = 1; k <= n; ++k) kernels.push_back(spec.schedule().at(k));

  Path path;
  path.states.assign(n + 1, 0);
  std::vector<double> prob(n + 1, 0.0);
  // Iterative depth-first walk; choice[t] is the next candidate for X_t.
  std::vector<std::size_t> choice(n + 1, 0);
  std::size_t t = 0;
  while (true) {
    if (choice[t] == k_states) {
      if (t == 0) break;
      choice[t] = 0;
      --t;
      continue;
    }
    const std::size_t s = choice[t]++;
    const double p = (t == 0) ? spec.initial()[s]
                              : prob[t - 1] * kernels[t - 1](path.states[t - 1], s);
    if (p == 0.0) continue;
    path.states[t] = static_cast<std::uint32_t>(s);
    prob[t] = p;
    if (t == n) {
      visit(path, p);
    } else {
      ++t;
    }
  }
}

}  // namespace nhmc
