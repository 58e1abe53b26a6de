#include "nhmc/chain_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <type_traits>

#include "nhmc/error.hpp"

namespace nhmc {

namespace {

// Neumaier-compensated sum of |m(i, j)| over the row.
double sequential_abs_sum(const Matrix& m, Eigen::Index i) {
  double s = 0.0;
  double c = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double x = std::abs(m(i, j));
    const double t = s + x;
    c += std::abs(s) >= x ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

// Scales each row to sum 1, then folds the remaining rounding error into
// the row's largest entry so the compensated row sum is exactly 1.
void renormalize_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    m.row(i) /= sequential_abs_sum(m, i);
    Eigen::Index big = 0;
    m.row(i).maxCoeff(&big);
    m(i, big) += 1.0 - sequential_abs_sum(m, i);
        for (int pass = 0; pass < 16; ++pass) {
      const double s = sequential_abs_sum(m, i);
      if (s == 1.0) break;
      m(i, big) = std::nextafter(m(i, big), s > 1.0 ? 0.0 : 2.0);
    }
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

StateSpace::StateSpace(std::size_t size) : size_(size) {
  if (size < 2) {
    throw Error(ErrorKind::InvalidArgument,
                "state space needs at least 2 states, got " +
                    std::to_string(size));
  }
}

StochasticMatrix StochasticMatrix::validate(const Matrix& m, double tol) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch,
                "transition matrix must be square and non-empty, got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v >= 0.0)) {
        throw MatrixEntryError(
            ErrorKind::NegativeEntry, static_cast<std::size_t>(i + 1),
            static_cast<std::size_t>(j + 1), v,
            "entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                ") = " + fmt_double(v));
      }
    }
    const double s = m.row(i).sum();
    if (!(std::abs(s - 1.0) <= tol)) {
      throw MatrixEntryError(ErrorKind::RowSumOutOfTolerance,
                             static_cast<std::size_t>(i + 1), 0, s,
                             "row " + std::to_string(i + 1) + " sums to " +
                                 fmt_double(s));
    }
  }
  Matrix copy = m;
  renormalize_rows(copy);
  return StochasticMatrix(std::move(copy));
}

StochasticMatrix StochasticMatrix::identity(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return StochasticMatrix(Matrix::Identity(d, d));
}

StochasticMatrix StochasticMatrix::operator*(
    const StochasticMatrix& rhs) const {
  if (dim() != rhs.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "matrix product of " +
                                                  std::to_string(dim()) +
                                                  " and " +
                                                  std::to_string(rhs.dim()));
  }
  Matrix prod = m_ * rhs.m_;
  renormalize_rows(prod);
  return StochasticMatrix(std::move(prod));
}

Distribution Distribution::validate(const Vector& weights, double tol) {
  if (weights.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "empty distribution");
  }
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) >= 0.0)) {
      throw MatrixEntryError(ErrorKind::NegativeEntry,
                             static_cast<std::size_t>(i + 1), 0, weights(i),
                             "weight " + std::to_string(i + 1) + " = " +
                                 fmt_double(weights(i)));
    }
  }
  const double s = weights.sum();
  if (!(std::abs(s - 1.0) <= tol)) {
    throw MatrixEntryError(ErrorKind::RowSumOutOfTolerance, 1, 0, s,
                           "distribution sums to " + fmt_double(s));
  }
  return Distribution(weights / s);
}

Distribution advance(const Distribution& mu, const StochasticMatrix& p) {
  if (mu.size() != p.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "distribution/matrix size");
  }
  Vector next = (mu.weights().transpose() * p.matrix()).transpose();
  return Distribution(std::move(next));
}

EpsilonSchedule EpsilonSchedule::power(double c, double p) {
  if (!(c > 0.0 && c <= 1.0) || !(p > 0.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "power epsilon schedule needs c in (0,1] and p > 0");
  }
  EpsilonSchedule s;
  s.form_ = Form::Power;
  s.c_ = c;
  s.p_ = p;
  return s;
}

EpsilonSchedule EpsilonSchedule::geometric(double c, double r) {
  if (!(c > 0.0) || !(r > 0.0 && r < 1.0) || !(c * r <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "geometric epsilon schedule needs c > 0, r in (0,1), c*r <= 1");
  }
  EpsilonSchedule s;
  s.form_ = Form::Geometric;
  s.c_ = c;
  s.r_ = r;
  return s;
}

EpsilonSchedule EpsilonSchedule::explicit_values(std::vector<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument,
                  "epsilon value " + std::to_string(i + 1) +
                      " outside [0,1]: " + fmt_double(values[i]));
    }
  }
  EpsilonSchedule s;
  s.form_ = Form::Explicit;
  s.values_ = std::move(values);
  return s;
}

double EpsilonSchedule::at(std::size_t k) const {
  switch (form_) {
    case Form::Power:
      return c_ * std::pow(static_cast<double>(k), -p_);
    case Form::Geometric:
      return c_ * std::pow(r_, static_cast<double>(k));
    case Form::Explicit:
      return (k >= 1 && k <= values_.size()) ? values_[k - 1] : 0.0;
  }
  return 0.0;
}

TransitionSchedule TransitionSchedule::explicit_list(
    std::vector<StochasticMatrix> ms) {
  if (ms.empty()) {
    throw Error(ErrorKind::InvalidArgument, "explicit schedule is empty");
  }
  const std::size_t dim = ms.front().dim();
  for (const auto& m : ms) {
    if (m.dim() != dim) {
      throw Error(ErrorKind::DimensionMismatch,
                  "explicit schedule mixes matrix sizes");
    }
  }
  return TransitionSchedule(Explicit{std::move(ms)}, dim);
}

TransitionSchedule TransitionSchedule::homogeneous(StochasticMatrix p) {
  const std::size_t dim = p.dim();
  return TransitionSchedule(Homogeneous{std::move(p)}, dim);
}

bool TransitionSchedule::is_homogeneous() const noexcept {
  if (std::holds_alternative<Homogeneous>(kind_)) return true;
  if (const auto* e = std::get_if<Explicit>(&kind_)) {
    return e->matrices.size() == 1;
  }
  return false;
}

StochasticMatrix TransitionSchedule::at(std::size_t k) const {
  if (k == 0) {
    throw Error(ErrorKind::InvalidArgument, "schedule index starts at 1");
  }
  return std::visit(
      [k](const auto& s) -> StochasticMatrix {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Explicit>) {
          return s.matrices[std::min(k, s.matrices.size()) - 1];
        } else if constexpr (std::is_same_v<T, Homogeneous>) {
          return s.p;
        } else {
          const double e = s.eps.at(k);
          Matrix m = (1.0 - e) * s.base.matrix() + e * s.alt.matrix();
          return StochasticMatrix::validate(m, 1e-9);
        }
      },
      kind_);
}

const StochasticMatrix& TransitionSchedule::limit() const noexcept {
  return std::visit(
      [](const auto& s) -> const StochasticMatrix& {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Explicit>) {
          return s.matrices.back();
        } else if constexpr (std::is_same_v<T, Homogeneous>) {
          return s.p;
        } else {
          return s.base;
        }
      },
      kind_);
}

TransitionSchedule make_perturbed_schedule(const StochasticMatrix& base,
                                           const StochasticMatrix& alt,
                                           EpsilonSchedule eps) {
  if (base.dim() != alt.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "base is " + std::to_string(base.dim()) + "x" +
                    std::to_string(base.dim()) + ", alt is " +
                    std::to_string(alt.dim()) + "x" +
                    std::to_string(alt.dim()));
  }
  return TransitionSchedule(
      TransitionSchedule::Perturbed{base, alt, std::move(eps)}, base.dim());
}

Observable::Observable(Vector values, double bound)
    : values_(std::move(values)), bound_(bound) {
  if (values_.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "observable has no values");
  }
  const double sup = values_.cwiseAbs().maxCoeff();
  if (!std::isfinite(sup) || !(sup <= bound_)) {
    throw Error(ErrorKind::InvalidArgument,
                "observable exceeds its bound: max |f| = " + fmt_double(sup) +
                    " > M = " + fmt_double(bound_));
  }
}

Observable::Observable(Vector values)
    : Observable(values, values.size() ? values.cwiseAbs().maxCoeff() : 0.0) {}

ChainSpec::ChainSpec(StateSpace space, InitialDistribution initial,
                     TransitionSchedule schedule)
    : space_(space),
      initial_(std::move(initial)),
      schedule_(std::move(schedule)) {
  if (initial_.size() != space_.size() || schedule_.dim() != space_.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "state space has " + std::to_string(space_.size()) +
                    " states, initial law " + std::to_string(initial_.size()) +
                    ", schedule " + std::to_string(schedule_.dim()));
  }
}

double matrix_norm(const Matrix& a) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    best = std::max(best, sequential_abs_sum(a, i));
  }
  return best;
}

StochasticMatrix transition_block(const TransitionSchedule& schedule,
                                  std::size_t m, std::size_t n) {
  if (n < m) {
    throw Error(ErrorKind::InvalidArgument, "transition_block needs n >= m");
  }
  auto acc = StochasticMatrix::identity(schedule.dim());
  for (std::size_t k = m + 1; k <= n; ++k) {
    acc = acc * schedule.at(k);
  }
  return acc;
}

Distribution marginal(const ChainSpec& spec, std::size_t k) {
  Distribution mu = spec.initial();
  for (std::size_t t = 1; t <= k; ++t) {
    mu = advance(mu, spec.schedule().at(t));
  }
  return mu;
}

std::vector<double> expected_values(const ChainSpec& spec, const Observable& f,
                                    std::size_t n) {
  if (f.size() != spec.size()) {
    throw Error(ErrorKind::DimensionMismatch, "observable/state space size");
  }
  std::vector<double> out;
  out.reserve(n);
  Distribution mu = spec.initial();
  const bool fixed = spec.schedule().is_homogeneous();
  const StochasticMatrix p1 = spec.schedule().at(1);
  for (std::size_t k = 1; k <= n; ++k) {
    mu = advance(mu, fixed ? p1 : spec.schedule().at(k));
    out.push_back(mu.weights().dot(f.values()));
  }
  return out;
}

double expected_sum(const ChainSpec& spec, const Observable& f,
                    std::size_t n) {
  if (n == 0) {
    throw Error(ErrorKind::InvalidArgument, "expected_sum needs n >= 1");
  }
  // Neumaier summation keeps E[S_n] exact to ~1 ulp for long horizons.
  double sum = 0.0;
  double comp = 0.0;
  for (double v : expected_values(spec, f, n)) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace nhmc
