#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <vector>

#include "nnr/estimator.hpp"

namespace nnr {

//! Strictly increasing positive index values l_1 < ... < l_L driving the
//! per-member neighbor counts k(l) = ⌊l√N⌋.
class IndexSet {
public:
  explicit IndexSet(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("IndexSet: empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0)) throw std::invalid_argument("IndexSet: values must be positive");
      if (i > 0 && !(values_[i] > values_[i - 1]))
        throw std::invalid_argument("IndexSet: values must be strictly increasing");
    }
  }

  //! L evenly spaced values c/L, 2c/L, ..., c. Requires L > d.
  static IndexSet evenly_spaced(std::size_t count, std::size_t d, double cap) {
    if (count <= d)
      throw std::invalid_argument("IndexSet: need more members than the dimension (L > d)");
    if (!(cap > 0.0)) throw std::invalid_argument("IndexSet: cap must be positive");
    std::vector<double> v(count);
    for (std::size_t j = 0; j < count; ++j)
      v[j] = cap * static_cast<double>(j + 1) / static_cast<double>(count);
    return IndexSet(std::move(v));
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  std::string describe() const {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < values_.size(); ++i) os << (i ? ", " : "") << values_[i];
    os << "}";
    return os.str();
  }

private:
  std::vector<double> values_;
};

inline IndexSet default_index_set(std::size_t count, std::size_t d, double cap) {
  return IndexSet::evenly_spaced(count, d, cap);
}

//! Defaults when the caller does not choose: L = d+2 members capped at c = 3.
inline IndexSet default_index_set(std::size_t d) { return default_index_set(d + 2, d, 3.0); }

struct EnsembleWeights {
  std::vector<double> w;
  double sum_residual = 0.0;     // |Σ w − 1|
  double moment_residual = 0.0;  // max_i |Σ w(l) l^{i/d}|
  double norm = 0.0;             // ‖w‖₂
};

//! Constraint matrix of the weight program: an all-ones row followed by the
//! moment rows l^{i/d} for i = 1..d.
inline Eigen::MatrixXd ensemble_constraint_matrix(const IndexSet& ell, std::size_t d) {
  const auto L = static_cast<Eigen::Index>(ell.size());
  Eigen::MatrixXd a(static_cast<Eigen::Index>(d) + 1, L);
  for (Eigen::Index j = 0; j < L; ++j) {
    a(0, j) = 1.0;
    for (std::size_t i = 1; i <= d; ++i)
      a(static_cast<Eigen::Index>(i), j) =
          std::pow(ell[static_cast<std::size_t>(j)], static_cast<double>(i) / static_cast<double>(d));
  }
  return a;
}

namespace detail {

using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

inline MatrixXld ensemble_constraint_matrix_ld(const IndexSet& ell, std::size_t d) {
  const auto L = static_cast<Eigen::Index>(ell.size());
  MatrixXld a(static_cast<Eigen::Index>(d) + 1, L);
  for (Eigen::Index j = 0; j < L; ++j) {
    const auto l = static_cast<long double>(ell[static_cast<std::size_t>(j)]);
    a(0, j) = 1.0L;
    for (std::size_t i = 1; i <= d; ++i)
      a(static_cast<Eigen::Index>(i), j) =
          powl(l, static_cast<long double>(i) / static_cast<long double>(d));
  }
  return a;
}

}  // namespace detail

//! Minimum-Euclidean-norm w with Σ w = 1 and Σ w(l) l^{i/d} = 0 for i = 1..d.
//! Orthogonal-factorization route on Aᵀ: w = Q R⁻ᵀ b plus residual-correction
//! passes. The moment rows l^{i/d} grow severely ill-conditioned with d, so
//! the factorization runs in extended precision and the reported residuals
//! describe the returned double-precision weights. R's diagonal doubles as
//! the rank/conditioning check.
inline EnsembleWeights solve_weights(const IndexSet& ell, std::size_t d) {
  if (ell.size() <= d)
    throw std::invalid_argument("solve_weights: need L > d (got L=" + std::to_string(ell.size()) +
                                ", d=" + std::to_string(d) + ")");
  using detail::MatrixXld;
  using detail::VectorXld;
  const MatrixXld a = detail::ensemble_constraint_matrix_ld(ell, d);
  const Eigen::Index rows = a.rows();

  const Eigen::HouseholderQR<MatrixXld> qr(a.transpose());
  const MatrixXld q = qr.householderQ() * MatrixXld::Identity(a.cols(), rows);
  const MatrixXld r = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>();

  const VectorXld diag = r.diagonal().cwiseAbs();
  if (!(diag.minCoeff() > 0.0L) || diag.maxCoeff() / diag.minCoeff() > 1e15L)
    throw EstimationError("solve_weights: rank-deficient constraint system for index set " +
                          ell.describe() + " with d=" + std::to_string(d));

  VectorXld b = VectorXld::Zero(rows);
  b(0) = 1.0L;
  auto min_norm_solve = [&](const VectorXld& rhs) -> VectorXld {
    return q * r.transpose().triangularView<Eigen::Lower>().solve(rhs);
  };
  VectorXld w = min_norm_solve(b);
  for (int pass = 0; pass < 2; ++pass) w += min_norm_solve(b - a * w);

  EnsembleWeights out;
  out.w.resize(static_cast<std::size_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) out.w[static_cast<std::size_t>(i)] = static_cast<double>(w(i));

  // residuals of the double-precision weights, accumulated in extended precision
  VectorXld wd(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) wd(i) = static_cast<long double>(out.w[static_cast<std::size_t>(i)]);
  const VectorXld residual = a * wd - b;
  out.sum_residual = static_cast<double>(fabsl(residual(0)));
  out.moment_residual = static_cast<double>(residual.tail(rows - 1).cwiseAbs().maxCoeff());
  out.norm = static_cast<double>(wd.norm());
  return out;
}

//! k(l) = ⌊l√N⌋ for every member of the index set.
inline std::vector<int> ensemble_k_values(const IndexSet& ell, std::size_t n) {
  const double root = std::sqrt(static_cast<double>(n));
  std::vector<int> ks;
  ks.reserve(ell.size());
  for (double l : ell.values()) ks.push_back(static_cast<int>(std::floor(l * root)));
  return ks;
}

//! Weighted ensemble estimate Σ w(l) D̃_{k(l)} over one shared pooled index.
//! Sub-estimates enter unclamped; only the combined value is floored at zero,
//! otherwise per-member clamping would break the bias cancellation.
inline DivergenceEstimate ensemble_estimate(const PointSet& x, const PointSet& y,
                                            const IndexSet& ell, const EnsembleWeights& weights,
                                            const EstimatorConfig& config) {
  config.validate();
  if (!config.renyi_mode())
    throw std::invalid_argument("ensemble_estimate: Rényi mode required");
  if (weights.w.size() != ell.size())
    throw std::invalid_argument("ensemble_estimate: weights and index set size mismatch");

  const auto ks = ensemble_k_values(ell, x.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1)
      throw std::invalid_argument("ensemble_estimate: k(l) < 1 for l=" + std::to_string(ell[i]) +
                                  " (N too small)");
    if (i > 0 && ks[i] == ks[i - 1])
      throw std::invalid_argument("ensemble_estimate: duplicate k(l)=" + std::to_string(ks[i]) +
                                  "; enlarge N or respace the index set");
  }
  const std::size_t pool = x.size() + y.size();
  if (static_cast<std::size_t>(ks.back()) > pool - 1)
    throw std::invalid_argument("ensemble_estimate: k(l_max) exceeds N+M-1");

  const PooledIndex index = build_index(x, y, config.metric);
  const NeighborProfile profile(index, ks.back());

  const double alpha = *config.alpha;
  DivergenceEstimate est;
  est.eta = static_cast<double>(y.size()) / static_cast<double>(x.size());

  double combined = 0.0;
  std::vector<double> members;
  members.reserve(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double j = estimate_j_alpha(profile.counts_at(ks[i]), alpha);
    if (j <= 0.0)
      throw EstimationError("ensemble_estimate: sub-estimate at k=" + std::to_string(ks[i]) +
                            " diverged (J_alpha = 0)");
    const double sub = std::log(j) / (alpha - 1.0);
    members.push_back(sub);
    combined += weights.w[i] * sub;
  }

  est.raw_value = combined;
  est.value = std::max(combined, 0.0);
  est.member_estimates = std::move(members);
  return est;
}

}  // namespace nnr
