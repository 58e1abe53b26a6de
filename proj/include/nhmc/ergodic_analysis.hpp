#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nhmc/chain_model.hpp"

namespace nhmc {

/// A tracked quantity as a function of n. n is strictly increasing.
struct DiagnosticCurve {
  std::string label;
  std::vector<std::pair<std::size_t, double>> points;

  bool empty() const noexcept { return points.empty(); }
  double last_value() const { return points.back().second; }
};

struct PeriodicDecomposition {
  std::size_t period = 1;
  /// classes[l] holds the 0-based states of C_l; C_0 contains state 0.
  std::vector<std::vector<std::size_t>> classes;

  /// Class index of each state.
  std::vector<std::size_t> class_of() const;
};

struct ErgodicReport {
  PeriodicDecomposition decomposition;
  Vector pi;
  /// One curve per cyclic class: ||T_l^n - R_l|| until it drops below tol.
  std::vector<DiagnosticCurve> strong_ergodicity_residuals;
  Matrix constant_matrix_r;
  std::size_t horizon = 0;
  double tolerance = 0.0;
  /// Every class residual fell below tolerance within the horizon.
  bool certified = false;
};

/// max over row pairs (i,k) of sum_j [p(i,j) - p(k,j)]^+
double dobrushin_delta(const StochasticMatrix& p);

/// Strong connectivity of the digraph i -> j for p(i,j) > 0.
bool is_irreducible(const Matrix& p);

/// Solves pi (P - I) = 0, sum pi = 1 with a direct LU factorization;
/// power iteration on the lazy chain (I + P)/2 when the factorization is
/// singular. Throws NotIrreducible or NoConvergence.
Vector stationary_distribution(const StochasticMatrix& p, double tol = 1e-10);

/// Period and cyclic classes by BFS levels: d = gcd over edges (u,v) of
/// level(u) + 1 - level(v). Throws NotIrreducible.
PeriodicDecomposition period_and_classes(const StochasticMatrix& p);

/// Builds the decomposition and residual curves without throwing on an
/// uncertified class; see `certified`. Throws NotIrreducible.
ErgodicReport analyze_periodic_strong_ergodicity(const StochasticMatrix& p,
                                                 std::size_t horizon,
                                                 double tol);

/// Certifies that every restriction T_l of P^d to C_l x C_l is strongly
/// ergodic within `horizon` powers. Throws NotIrreducible, or
/// HorizonExceeded when some residual is still >= tol at the horizon.
ErgodicReport check_periodic_strong_ergodicity(const StochasticMatrix& p,
                                               std::size_t horizon,
                                               double tol);

/// Matrix whose rows all equal pi.
Matrix constant_matrix(const Vector& pi);

/// (n, ||P^(m,m+n) - R||) for n = 1..n_max.
DiagnosticCurve strong_ergodicity_curve(const TransitionSchedule& schedule,
                                        const Matrix& r, std::size_t m,
                                        std::size_t n_max);

/// Roughly ten points per decade from 1 to n_max, always ending at n_max.
std::vector<std::size_t> log_grid(std::size_t n_max);

/// (n, max_{0<=m<=m_max} ||(1/n) sum_{t=1..n} P^(m,m+t) - R||) on log_grid.
DiagnosticCurve cesaro_uniform_diagnostic(const TransitionSchedule& schedule,
                                          const Matrix& r, std::size_t n_max,
                                          std::size_t m_max);

/// (n, max_{0<=m<=m_max} (1/n) sum_{k=1..n} ||P_{k+m} - P||), n = 1..n_max.
DiagnosticCurve condition4_diagnostic(const TransitionSchedule& schedule,
                                      const StochasticMatrix& p,
                                      std::size_t n_max, std::size_t m_max);

/// (n, sum_{k=1..n} delta(P_k) / sqrt(n)), n = 1..n_max.
DiagnosticCurve condition6_diagnostic(const TransitionSchedule& schedule,
                                      std::size_t n_max);

}  // namespace nhmc
