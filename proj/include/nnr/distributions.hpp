#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <variant>
#include <vector>

#include "nnr/estimator.hpp"
#include "nnr/points.hpp"
#include "nnr/rng.hpp"

namespace nnr {

//! Axis-aligned box, closed on both sides.
struct Box {
  std::vector<double> lo, hi;

  Box() = default;
  Box(std::vector<double> l, std::vector<double> h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("Box: side mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i])) throw std::invalid_argument("Box: needs lo < hi on every axis");
  }

  static Box cube(double lo, double hi, std::size_t d) {
    return Box(std::vector<double>(d, lo), std::vector<double>(d, hi));
  }

  std::size_t dim() const { return lo.size(); }

  bool contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }

  double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
    return v;
  }
};

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

//! Multivariate Gaussian; the Cholesky factor and normalization are fixed at
//! construction so pdf calls stay cheap inside quadrature loops.
class Gaussian {
public:
  Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw std::invalid_argument("Gaussian: mean/covariance shape mismatch");
    llt_.compute(cov_);
    if (llt_.info() != Eigen::Success)
      throw std::invalid_argument("Gaussian: covariance must be positive definite");
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < cov_.rows(); ++i)
      log_det += 2.0 * std::log(llt_.matrixL()(i, i));
    log_norm_ = -0.5 * (static_cast<double>(cov_.rows()) * std::log(2.0 * std::numbers::pi) + log_det);
  }

  static Gaussian isotropic(double mean, double variance, std::size_t d) {
    return Gaussian(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), mean),
                    variance * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                         static_cast<Eigen::Index>(d)));
  }

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  bool diagonal_cov() const {
    for (Eigen::Index i = 0; i < cov_.rows(); ++i)
      for (Eigen::Index j = 0; j < cov_.cols(); ++j)
        if (i != j && cov_(i, j) != 0.0) return false;
    return true;
  }

  double pdf(std::span<const double> x) const {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd centered = xv - mean_;
    const double q = centered.dot(llt_.solve(centered));
    return std::exp(log_norm_ - 0.5 * q);
  }

  void sample_into(Rng& rng, std::span<double> out) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd x = mean_ + llt_.matrixL() * z;
    for (Eigen::Index i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = x(i);
  }

private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_;
};

class TruncatedGaussian;
class Uniform;
using DistributionSpec = std::variant<Gaussian, TruncatedGaussian, Uniform>;

class Uniform {
public:
  explicit Uniform(Box box) : box_(std::move(box)), density_(1.0 / box_.volume()) {}

  std::size_t dim() const { return box_.dim(); }
  const Box& box() const { return box_; }

  double pdf(std::span<const double> x) const { return box_.contains(x) ? density_ : 0.0; }

  void sample_into(Rng& rng, std::span<double> out) const {
    for (std::size_t i = 0; i < box_.dim(); ++i) out[i] = rng.uniform(box_.lo[i], box_.hi[i]);
  }

private:
  Box box_;
  double density_;
};

namespace detail {
double box_mass(const Gaussian& g, const Box& box);  // forward; defined below
}

//! Gaussian restricted to an axis-aligned box. Sampling rejects from the
//! parent; the normalization constant comes from 1-D CDF products for
//! diagonal covariances and from quadrature otherwise.
class TruncatedGaussian {
public:
  TruncatedGaussian(Gaussian parent, Box box) : parent_(std::move(parent)), box_(std::move(box)) {
    if (parent_.dim() != box_.dim())
      throw std::invalid_argument("TruncatedGaussian: box/parent dimension mismatch");
    mass_ = detail::box_mass(parent_, box_);
    if (!(mass_ > 0.0) || mass_ > 1.0 + 1e-9)
      throw std::invalid_argument("TruncatedGaussian: degenerate box probability");
  }

  std::size_t dim() const { return parent_.dim(); }
  const Gaussian& parent() const { return parent_; }
  const Box& box() const { return box_; }
  double normalization() const { return mass_; }

  double pdf(std::span<const double> x) const {
    return box_.contains(x) ? parent_.pdf(x) / mass_ : 0.0;
  }

  void sample_into(Rng& rng, std::span<double> out) const {
    // rejection from the parent; bail out when the acceptance rate collapses
    std::size_t attempts = 0, accepted = 0;
    for (;;) {
      ++attempts;
      parent_.sample_into(rng, out);
      if (box_.contains(out)) {
        ++accepted;
        return;
      }
      if (attempts >= 100000 && static_cast<double>(accepted + 1) / attempts < 1e-4)
        throw EstimationError("TruncatedGaussian: rejection acceptance rate below 1e-4; "
                              "box too improbable under the parent");
    }
  }

private:
  Gaussian parent_;
  Box box_;
  double mass_;
};

inline std::size_t dim(const DistributionSpec& spec) {
  return std::visit([](const auto& s) { return s.dim(); }, spec);
}

inline double pdf(const DistributionSpec& spec, std::span<const double> x) {
  if (x.size() != dim(spec)) throw std::invalid_argument("pdf: point dimension mismatch");
  return std::visit([&](const auto& s) { return s.pdf(x); }, spec);
}

//! n i.i.d. draws; identical (spec, n, seed) produce identical output.
inline PointSet sample(const DistributionSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const std::size_t d = dim(spec);
  PointSet ps(d);
  ps.reserve(n);
  std::vector<double> buf(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::visit([&](const auto& s) { s.sample_into(rng, buf); }, spec);
    ps.add(buf);
  }
  return ps;
}

inline PointSet sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample(spec, n, rng);
}

namespace detail {

//! Probability mass of the box under the Gaussian: exact CDF products for
//! diagonal covariances, tensor Simpson quadrature otherwise (d <= 3).
inline double box_mass(const Gaussian& g, const Box& box) {
  const std::size_t d = g.dim();
  if (g.diagonal_cov()) {
    double mass = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double sigma = std::sqrt(g.cov()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      const double mu = g.mean()(static_cast<Eigen::Index>(i));
      mass *= standard_normal_cdf((box.hi[i] - mu) / sigma) -
              standard_normal_cdf((box.lo[i] - mu) / sigma);
    }
    return mass;
  }
  if (d > 3)
    throw std::invalid_argument("TruncatedGaussian: full-covariance normalization needs d <= 3");

  // composite Simpson per axis, 256 cells
  const int cells = 256;
  std::vector<std::vector<double>> nodes(d), weights(d);
  for (std::size_t a = 0; a < d; ++a) {
    const double h = (box.hi[a] - box.lo[a]) / cells;
    for (int i = 0; i <= cells; ++i) {
      nodes[a].push_back(box.lo[a] + i * h);
      const double w = (i == 0 || i == cells) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      weights[a].push_back(w * h / 3.0);
    }
  }
  double mass = 0.0;
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  for (;;) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      x[a] = nodes[a][idx[a]];
      w *= weights[a][idx[a]];
    }
    mass += w * g.pdf(x);
    std::size_t a = 0;
    while (a < d && ++idx[a] > static_cast<std::size_t>(cells)) idx[a++] = 0;
    if (a == d) break;
  }
  return mass;
}

}  // namespace detail

}  // namespace nnr
