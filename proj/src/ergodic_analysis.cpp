#include "nhmc/ergodic_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <string>

#include "nhmc/error.hpp"

namespace nhmc {

namespace {

using Index = Eigen::Index;

std::vector<std::vector<std::size_t>> adjacency(const Matrix& p,
                                                bool transpose) {
  const auto k = static_cast<std::size_t>(p.rows());
  std::vector<std::vector<std::size_t>> adj(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (p(static_cast<Index>(i), static_cast<Index>(j)) > 0.0) {
        if (transpose) {
          adj[j].push_back(i);
        } else {
          adj[i].push_back(j);
        }
      }
    }
  }
  return adj;
}

std::size_t reachable_count(const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<bool> seen(adj.size(), false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        queue.push_back(v);
      }
    }
  }
  return count;
}

void require_irreducible(const Matrix& p) {
  if (!is_irreducible(p)) {
    throw Error(ErrorKind::NotIrreducible,
                "positive-entry digraph is not strongly connected");
  }
}

double residual_l1(const Vector& pi, const Matrix& p) {
  return (p.transpose() * pi - pi).cwiseAbs().sum();
}

Vector clean_probability(Vector v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) < 0.0) v(i) = 0.0;
  }
  return v / v.sum();
}

Vector power_iteration(const Matrix& p, double tol) {
  const Index k = p.rows();
  const Matrix lazy = 0.5 * (Matrix::Identity(k, k) + p);
  Vector pi = Vector::Constant(k, 1.0 / static_cast<double>(k));
  constexpr std::size_t kMaxIterations = 1'000'000;
  for (std::size_t it = 0; it < kMaxIterations; ++it) {
    Vector next = lazy.transpose() * pi;
    next /= next.sum();
    const double change = (next - pi).cwiseAbs().sum();
    pi = std::move(next);
    if (change <= 0.1 * tol && residual_l1(pi, p) <= tol) return pi;
  }
  throw Error(ErrorKind::NoConvergence,
              "power iteration did not converge in " +
                  std::to_string(kMaxIterations) + " iterations");
}

// Stationary vector of any irreducible stochastic block, including 1x1.
Vector solve_stationary(const Matrix& p, double tol) {
  const Index k = p.rows();
  if (k == 1) return Vector::Ones(1);
  Matrix a = p.transpose() - Matrix::Identity(k, k);
  a.row(k - 1).setOnes();
  Vector b = Vector::Zero(k);
  b(k - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(a);
  if (lu.isInvertible()) {
    Vector pi = clean_probability(lu.solve(b));
    if (residual_l1(pi, p) <= tol) return pi;
  }
  return clean_probability(power_iteration(p, tol));
}

}  // namespace

std::vector<std::size_t> PeriodicDecomposition::class_of() const {
  std::size_t k = 0;
  for (const auto& c : classes) k += c.size();
  std::vector<std::size_t> out(k, 0);
  for (std::size_t l = 0; l < classes.size(); ++l) {
    for (std::size_t s : classes[l]) out[s] = l;
  }
  return out;
}

double dobrushin_delta(const StochasticMatrix& p) {
  const Matrix& m = p.matrix();
  double best = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index k = 0; k < m.rows(); ++k) {
      if (i == k) continue;
      const double s = (m.row(i) - m.row(k)).cwiseMax(0.0).sum();
      best = std::max(best, s);
    }
  }
  return std::min(best, 1.0);
}

bool is_irreducible(const Matrix& p) {
  if (p.rows() == 0) return false;
  const auto k = static_cast<std::size_t>(p.rows());
  return reachable_count(adjacency(p, false)) == k &&
         reachable_count(adjacency(p, true)) == k;
}

Vector stationary_distribution(const StochasticMatrix& p, double tol) {
  require_irreducible(p.matrix());
  return solve_stationary(p.matrix(), tol);
}

PeriodicDecomposition period_and_classes(const StochasticMatrix& p) {
  require_irreducible(p.matrix());
  const auto adj = adjacency(p.matrix(), false);
  const std::size_t k = adj.size();

  constexpr auto kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> level(k, kUnset);
  level[0] = 0;
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (level[v] == kUnset) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      }
    }
  }

  // BFS levels satisfy level(v) <= level(u) + 1 along every edge.
  std::size_t d = 0;
  for (std::size_t u = 0; u < k; ++u) {
    for (std::size_t v : adj[u]) {
      d = std::gcd(d, level[u] + 1 - level[v]);
    }
  }

  PeriodicDecomposition out;
  out.period = d;
  out.classes.resize(d);
  for (std::size_t s = 0; s < k; ++s) {
    out.classes[level[s] % d].push_back(s);
  }
  return out;
}

Matrix constant_matrix(const Vector& pi) {
  return Vector::Ones(pi.size()) * pi.transpose();
}

ErgodicReport analyze_periodic_strong_ergodicity(const StochasticMatrix& p,
                                                 std::size_t horizon,
                                                 double tol) {
  ErgodicReport report;
  report.certified = true;
  report.decomposition = period_and_classes(p);
  report.pi = stationary_distribution(p, 1e-10);
  report.constant_matrix_r = constant_matrix(report.pi);
  report.horizon = horizon;
  report.tolerance = tol;

  const std::size_t d = report.decomposition.period;
  Matrix pd = Matrix::Identity(p.matrix().rows(), p.matrix().rows());
  for (std::size_t t = 0; t < d; ++t) pd = pd * p.matrix();

  for (std::size_t l = 0; l < d; ++l) {
    const auto& cls = report.decomposition.classes[l];
    const auto sz = static_cast<Index>(cls.size());
    Matrix t_l(sz, sz);
    for (Index a = 0; a < sz; ++a) {
      for (Index b = 0; b < sz; ++b) {
        t_l(a, b) = pd(static_cast<Index>(cls[static_cast<std::size_t>(a)]),
                       static_cast<Index>(cls[static_cast<std::size_t>(b)]));
      }
      t_l.row(a) /= t_l.row(a).sum();
    }
    const Matrix r_l = constant_matrix(solve_stationary(t_l, 1e-12));

    DiagnosticCurve curve;
    curve.label = "strong_ergodicity_class_" + std::to_string(l);
    Matrix power = t_l;
    double residual = matrix_norm(power - r_l);
    curve.points.emplace_back(1, residual);
    for (std::size_t n = 2; n <= horizon && residual >= tol; ++n) {
      power = power * t_l;
      residual = matrix_norm(power - r_l);
      curve.points.emplace_back(n, residual);
    }
    report.strong_ergodicity_residuals.push_back(std::move(curve));
    if (residual >= tol) report.certified = false;
  }
  return report;
}

ErgodicReport check_periodic_strong_ergodicity(const StochasticMatrix& p,
                                               std::size_t horizon,
                                               double tol) {
  ErgodicReport report = analyze_periodic_strong_ergodicity(p, horizon, tol);
  if (report.certified) return report;
  for (std::size_t l = 0; l < report.strong_ergodicity_residuals.size(); ++l) {
    const double last = report.strong_ergodicity_residuals[l].last_value();
    if (last >= tol) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "class %zu residual %.6g still >= %.3g after %zu powers",
                    l, last, tol, horizon);
      throw Error(ErrorKind::HorizonExceeded, buf);
    }
  }
  return report;
}

DiagnosticCurve strong_ergodicity_curve(const TransitionSchedule& schedule,
                                        const Matrix& r, std::size_t m,
                                        std::size_t n_max) {
  DiagnosticCurve curve;
  curve.label = "strong_ergodicity";
  auto block = StochasticMatrix::identity(schedule.dim());
  for (std::size_t n = 1; n <= n_max; ++n) {
    block = block * schedule.at(m + n);
    curve.points.emplace_back(n, matrix_norm(block.matrix() - r));
  }
  return curve;
}

std::vector<std::size_t> log_grid(std::size_t n_max) {
  std::vector<std::size_t> grid;
  for (int j = 0;; ++j) {
    const auto n = static_cast<std::size_t>(std::llround(std::pow(10.0, j / 10.0)));
    if (n >= n_max) break;
    if (grid.empty() || grid.back() != n) grid.push_back(n);
  }
  if (n_max >= 1) grid.push_back(n_max);
  return grid;
}

DiagnosticCurve cesaro_uniform_diagnostic(const TransitionSchedule& schedule,
                                          const Matrix& r, std::size_t n_max,
                                          std::size_t m_max) {
  const auto grid = log_grid(n_max);
  std::vector<double> worst(grid.size(), 0.0);
  const bool fixed = schedule.is_homogeneous();
  // The homogeneous sup over m is attained at every m, so m = 0 suffices.
  const std::size_t m_last = fixed ? 0 : m_max;
  for (std::size_t m = 0; m <= m_last; ++m) {
    auto block = StochasticMatrix::identity(schedule.dim());
    Matrix sum = Matrix::Zero(r.rows(), r.cols());
    std::size_t g = 0;
    for (std::size_t t = 1; t <= n_max && g < grid.size(); ++t) {
      block = block * schedule.at(m + t);
      sum += block.matrix();
      if (t == grid[g]) {
        const double v =
            matrix_norm(sum / static_cast<double>(t) - r);
        worst[g] = std::max(worst[g], v);
        ++g;
      }
    }
  }
  DiagnosticCurve curve;
  curve.label = "cesaro_eq3";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    curve.points.emplace_back(grid[g], worst[g]);
  }
  return curve;
}

DiagnosticCurve condition4_diagnostic(const TransitionSchedule& schedule,
                                      const StochasticMatrix& p,
                                      std::size_t n_max, std::size_t m_max) {
  const std::size_t len = n_max + m_max;
  std::vector<double> dist(len + 1, 0.0);
  for (std::size_t k = 1; k <= len; ++k) {
    dist[k] = matrix_norm(schedule.at(k).matrix() - p.matrix());
  }
  // running[m] = sum_{k=1..n} dist[k+m], advanced in lockstep with n.
  std::vector<double> running(m_max + 1, 0.0);
  DiagnosticCurve curve;
  curve.label = "cond4";
  for (std::size_t n = 1; n <= n_max; ++n) {
    double worst = 0.0;
    for (std::size_t m = 0; m <= m_max; ++m) {
      running[m] += dist[n + m];
      worst = std::max(worst, running[m] / static_cast<double>(n));
    }
    curve.points.emplace_back(n, worst);
  }
  return curve;
}

DiagnosticCurve condition6_diagnostic(const TransitionSchedule& schedule,
                                      std::size_t n_max) {
  DiagnosticCurve curve;
  curve.label = "cond6";
  double total = 0.0;
  const bool fixed = schedule.is_homogeneous();
  const double fixed_delta = fixed ? dobrushin_delta(schedule.at(1)) : 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    total += fixed ? fixed_delta : dobrushin_delta(schedule.at(n));
    curve.points.emplace_back(n, total / std::sqrt(static_cast<double>(n)));
  }
  return curve;
}

}  // namespace nhmc
