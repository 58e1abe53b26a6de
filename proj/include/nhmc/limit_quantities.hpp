#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "nhmc/chain_model.hpp"
#include "nhmc/ergodic_analysis.hpp"

namespace nhmc {

/// Martingale decomposition of S_n along one path:
///   D_k = f(X_k) - E[f(X_k) | X_{k-1}],  W_k = D_1 + ... + D_k,
///   V(W_k) = sum_{j<=k} E[D_j^2 | F_{j-1}].
struct MartingaleTrace {
  std::vector<double> d_values;
  std::vector<double> w_values;
  std::vector<double> v_values;

  std::size_t length() const noexcept { return d_values.size(); }
};

/// Exact law of S_n = f(X_1) + ... + f(X_n).
struct ExactDistribution {
  std::vector<double> support;
  std::vector<double> probabilities;
  double mean = 0.0;
  double variance = 0.0;
};

/// Conditional first and second moments of f under each row of P_k:
/// mean[i] = sum_j p_k(i,j) f(j), second[i] = sum_j p_k(i,j) f(j)^2.
struct KernelMoments {
  Vector mean;
  Vector second;

  static KernelMoments of(const StochasticMatrix& p, const Observable& f);
  double conditional_variance(std::size_t i) const;
};

/// sum_i pi(i) [f(i)^2 - (sum_j f(j) p(i,j))^2]. Not clamped: degenerate
/// observables give 0.
double theta(const StochasticMatrix& p, const Vector& pi, const Observable& f);

/// x^2 / (2 theta). Throws NonpositiveTheta for theta <= 0.
double rate_function(double x, double theta);

/// Throws LengthMismatch if the path is empty or its states fall outside
/// the spec's state space, DimensionMismatch on observable size.
MartingaleTrace martingale_decompose(const Path& path, const ChainSpec& spec,
                                     const Observable& f);

/// Monte Carlo estimate of
///   sum_{j<=n} E[D_j^2 1{|D_j| >= eps sqrt(v_n)}] / v_n.
/// Throws EmptyInput, LengthMismatch, InvalidArgument (v_n <= 0).
double lindeberg_diagnostic(const std::vector<MartingaleTrace>& traces,
                            double epsilon, double v_n);

struct DriftStep {
  std::size_t k = 0;
  double bound = 0.0;     ///< 2 M delta(P_k)
  double realized = 0.0;  ///< max_i |(P_k f)(i) - E f(X_k)|
};

/// Per-step drift bound and worst-case realized drift for k = 1..n.
std::vector<DriftStep> drift_profile(const ChainSpec& spec,
                                     const Observable& f, std::size_t n);

/// Curve (n', sum_{k<=n'} 2 M delta(P_k) / sqrt(n')). Throws
/// DriftBoundViolated if any realized drift exceeds its bound + 1e-12.
DiagnosticCurve drift_bound_check(const ChainSpec& spec, const Observable& f,
                                  std::size_t n);

/// Largest instance admitted by path enumeration: K^(n+1) paths.
inline constexpr double kMaxEnumeratedPaths = 1e8;
/// Largest states x sum-buckets table for the lattice dynamic program.
inline constexpr double kMaxLatticeCells = 1e8;

/// Exact law of S_n. Uses a step x state x lattice-sum dynamic program
/// when f takes values on a common lattice, otherwise enumerates every
/// path. Throws InstanceTooLarge.
ExactDistribution enumerate_exact(const ChainSpec& spec, const Observable& f,
                                  std::size_t n);

/// Calls visit(path, probability) for every path X_0..X_n of positive
/// probability. Throws InstanceTooLarge beyond kMaxEnumeratedPaths.
void for_each_path(const ChainSpec& spec, std::size_t n,
                   const std::function<void(const Path&, double)>& visit);

}  // namespace nhmc
