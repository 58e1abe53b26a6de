#pragma once

// Finite truncations of countable-state nonhomogeneous Markov chains.
//
// States are labelled 1..K in configs and reports; internally they are
// 0-based indices into dense row-major matrices.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

namespace nhmc {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kDefaultRowTolerance = 1e-12;

class StateSpace {
 public:
  explicit StateSpace(std::size_t size);
  std::size_t size() const noexcept { return size_; }

 private:
  std::size_t size_;
};

/// Row-stochastic matrix. Rows are renormalized to sum exactly to 1 on
/// construction, so products of these matrices do not drift.
class StochasticMatrix {
 public:
  /// Throws MatrixEntryError (NegativeEntry / RowSumOutOfTolerance) or
  /// DimensionMismatch for non-square input.
  static StochasticMatrix validate(const Matrix& m,
                                   double tol = kDefaultRowTolerance);
  static StochasticMatrix identity(std::size_t dim);

  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(m_.rows());
  }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// Product of two stochastic matrices; rows renormalized.
  StochasticMatrix operator*(const StochasticMatrix& rhs) const;

 private:
  explicit StochasticMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// Probability vector over the states. Also used for the marginals mu^(k).
class Distribution {
 public:
  static Distribution validate(const Vector& weights,
                               double tol = kDefaultRowTolerance);

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(w_.size());
  }
  const Vector& weights() const noexcept { return w_; }
  double operator[](std::size_t i) const {
    return w_(static_cast<Eigen::Index>(i));
  }

 private:
  friend Distribution advance(const Distribution&, const StochasticMatrix&);
  explicit Distribution(Vector w) : w_(std::move(w)) {}
  Vector w_;
};

using InitialDistribution = Distribution;

/// One step of the marginal recursion: mu * P.
Distribution advance(const Distribution& mu, const StochasticMatrix& p);

/// eps_k for k >= 1, used to build perturbation schedules.
class EpsilonSchedule {
 public:
  enum class Form { Power, Geometric, Explicit };

  /// eps_k = c * k^(-p)
  static EpsilonSchedule power(double c, double p);
  /// eps_k = c * r^k
  static EpsilonSchedule geometric(double c, double r);
  /// eps_k = values[k-1]; eps_k = 0 beyond the list.
  static EpsilonSchedule explicit_values(std::vector<double> values);

  double at(std::size_t k) const;

  Form form() const noexcept { return form_; }
  double c() const noexcept { return c_; }
  double p() const noexcept { return p_; }
  double r() const noexcept { return r_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  EpsilonSchedule() = default;
  Form form_ = Form::Power;
  double c_ = 0.0;
  double p_ = 0.0;
  double r_ = 0.0;
  std::vector<double> values_;
};

/// Generator of the transition matrices P_1, P_2, ...
class TransitionSchedule {
 public:
  struct Explicit {
    std::vector<StochasticMatrix> matrices;
  };
  struct Homogeneous {
    StochasticMatrix p;
  };
  struct Perturbed {
    StochasticMatrix base;
    StochasticMatrix alt;
    EpsilonSchedule eps;
  };
  using Kind = std::variant<Explicit, Homogeneous, Perturbed>;

  /// An explicit list P_1..P_L; for k > L the last matrix is repeated.
  static TransitionSchedule explicit_list(std::vector<StochasticMatrix> ms);
  static TransitionSchedule homogeneous(StochasticMatrix p);

  const Kind& kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  bool is_homogeneous() const noexcept;

  /// P_k for k >= 1.
  StochasticMatrix at(std::size_t k) const;

  /// The matrix P the schedule settles to: the homogeneous matrix, the
  /// perturbation base, or the last explicit matrix.
  const StochasticMatrix& limit() const noexcept;

 private:
  friend TransitionSchedule make_perturbed_schedule(const StochasticMatrix&,
                                                    const StochasticMatrix&,
                                                    EpsilonSchedule);
  TransitionSchedule(Kind kind, std::size_t dim)
      : kind_(std::move(kind)), dim_(dim) {}
  Kind kind_;
  std::size_t dim_;
};

/// P_k = (1 - eps_k) base + eps_k alt. Throws DimensionMismatch.
TransitionSchedule make_perturbed_schedule(const StochasticMatrix& base,
                                           const StochasticMatrix& alt,
                                           EpsilonSchedule eps);

/// Bounded function f on the states, |f(i)| <= bound.
class Observable {
 public:
  Observable(Vector values, double bound);
  /// Uses max |f(i)| as the bound.
  explicit Observable(Vector values);

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(values_.size());
  }
  const Vector& values() const noexcept { return values_; }
  double operator[](std::size_t i) const {
    return values_(static_cast<Eigen::Index>(i));
  }
  double bound() const noexcept { return bound_; }

 private:
  Vector values_;
  double bound_;
};

class ChainSpec {
 public:
  ChainSpec(StateSpace space, InitialDistribution initial,
            TransitionSchedule schedule);

  const StateSpace& space() const noexcept { return space_; }
  const InitialDistribution& initial() const noexcept { return initial_; }
  const TransitionSchedule& schedule() const noexcept { return schedule_; }
  std::size_t size() const noexcept { return space_.size(); }

 private:
  StateSpace space_;
  InitialDistribution initial_;
  TransitionSchedule schedule_;
};

/// X_0..X_n as 0-based state indices.
struct Path {
  std::vector<std::uint32_t> states;
  std::uint64_t seed = 0;

  /// Number of transitions n.
  std::size_t length() const noexcept {
    return states.empty() ? 0 : states.size() - 1;
  }
};

/// max_i sum_j |a(i,j)|
double matrix_norm(const Matrix& a);

/// P^(m,n) = P_{m+1} ... P_n, identity when n == m.
StochasticMatrix transition_block(const TransitionSchedule& schedule,
                                  std::size_t m, std::size_t n);

/// mu^(k) = mu^(0) P_1 ... P_k
Distribution marginal(const ChainSpec& spec, std::size_t k);

/// E[S_n] = sum_{k=1..n} <mu^(k), f>, computed by a single marginal sweep.
double expected_sum(const ChainSpec& spec, const Observable& f, std::size_t n);

/// E[f(X_k)] for k = 1..n (index k-1).
std::vector<double> expected_values(const ChainSpec& spec, const Observable& f,
                                    std::size_t n);

}  // namespace nhmc
