#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nnr/distributions.hpp"
#include "nnr/estimator.hpp"

namespace nnr {

inline EstimatorConfig make_estimator_config(const DivergenceSpec& kind, int k) {
  EstimatorConfig cfg;
  cfg.k = k;
  cfg.alpha = kind.alpha;
  cfg.g = kind.g;
  return cfg;
}

enum class OracleMethod { ClosedForm, Quadrature };

struct OracleValue {
  double value = 0.0;
  OracleMethod method = OracleMethod::ClosedForm;
  int resolution = 0;
  double doubling_delta = 0.0;  // |value(res) - value(res/2)|
  bool infinite = false;
};

//! Rényi divergence between Gaussians:
//! D_α = (α/2)(μ₂−μ₁)ᵀ Σ_α⁻¹ (μ₂−μ₁) − ln(det Σ_α / (det Σ₁^{1−α} det Σ₂^α)) / (2(α−1))
//! with Σ_α = (1−α)Σ₁ + αΣ₂, which must stay positive definite.
inline OracleValue renyi_gaussian_closed_form(const Gaussian& f1, const Gaussian& f2,
                                              double alpha) {
  if (!(alpha > 0.0) || alpha == 1.0)
    throw std::invalid_argument("renyi_gaussian_closed_form: alpha must be positive and != 1");
  if (f1.dim() != f2.dim())
    throw std::invalid_argument("renyi_gaussian_closed_form: dimension mismatch");

  const Eigen::MatrixXd sigma_alpha = (1.0 - alpha) * f1.cov() + alpha * f2.cov();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_alpha);
  if (llt.info() != Eigen::Success)
    throw EstimationError("renyi_gaussian_closed_form: (1-α)Σ₁ + αΣ₂ is not positive definite");

  auto log_det = [](const Eigen::MatrixXd& m) {
    const Eigen::LLT<Eigen::MatrixXd> f(m);
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += 2.0 * std::log(f.matrixL()(i, i));
    return s;
  };

  const Eigen::VectorXd dmu = f2.mean() - f1.mean();
  const double quad = dmu.dot(llt.solve(dmu));
  const double log_ratio =
      log_det(sigma_alpha) - (1.0 - alpha) * log_det(f1.cov()) - alpha * log_det(f2.cov());

  OracleValue out;
  out.method = OracleMethod::ClosedForm;
  out.value = 0.5 * alpha * quad - log_ratio / (2.0 * (alpha - 1.0));
  return out;
}

namespace detail {

struct QuadratureAxis {
  std::vector<double> nodes;
  std::vector<double> weights;
};

//! Support edges of a spec along one axis (uniform and truncation boxes).
inline void collect_breakpoints(const DistributionSpec& spec, std::size_t axis,
                                std::vector<double>& out) {
  if (const auto* u = std::get_if<Uniform>(&spec)) {
    out.push_back(u->box().lo[axis]);
    out.push_back(u->box().hi[axis]);
  } else if (const auto* t = std::get_if<TruncatedGaussian>(&spec)) {
    out.push_back(t->box().lo[axis]);
    out.push_back(t->box().hi[axis]);
  }
}

//! Composite Simpson nodes over [lo, hi], split at interior support edges so
//! each segment sees a smooth integrand. Segment endpoints are nudged a hair
//! inward, which picks the correct one-sided limit of discontinuous pdfs.
inline QuadratureAxis build_axis(double lo, double hi, std::vector<double> breaks, int cells) {
  std::vector<double> cuts{lo, hi};
  for (double b : breaks)
    if (b > lo && b < hi) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  QuadratureAxis axis;
  const double total = hi - lo;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1];
    int m = static_cast<int>(std::lround(cells * (b - a) / total));
    m = std::max(4, m + (m % 2));
    const double h = (b - a) / m;
    const double nudge = (b - a) * 1e-12;
    for (int i = 0; i <= m; ++i) {
      double x = a + i * h;
      if (i == 0) x += nudge;
      if (i == m) x -= nudge;
      axis.nodes.push_back(x);
      const double w = (i == 0 || i == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      axis.weights.push_back(w * h / 3.0);
    }
  }
  return axis;
}

//! Integrand of the ratio-form divergence at one node: pair (term, f2 mass).
inline std::pair<double, double> divergence_term(double p1, double p2,
                                                 const DivergenceSpec& kind) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (kind.renyi_mode()) {
    const double alpha = *kind.alpha;
    if (p2 <= 0.0) return {p1 > 0.0 && alpha > 1.0 ? inf : 0.0, 0.0};
    if (p1 <= 0.0) return {0.0, p2};
    return {p2 * std::pow(p1 / p2, alpha), p2};
  }
  const GFunction& g = *kind.g;
  if (p2 <= 0.0) {
    if (p1 <= 0.0) return {0.0, 0.0};
    const double growth = g.linear_growth_at_inf();
    return {std::isinf(growth) ? inf : p1 * growth, 0.0};
  }
  return {p2 * g(p1 / p2), p2};
}

inline double quadrature_pass(const DistributionSpec& f1, const DistributionSpec& f2,
                              const DivergenceSpec& kind, const Box& domain, int cells) {
  const std::size_t d = domain.dim();
  std::vector<QuadratureAxis> axes(d);
  for (std::size_t a = 0; a < d; ++a) {
    std::vector<double> breaks;
    collect_breakpoints(f1, a, breaks);
    collect_breakpoints(f2, a, breaks);
    axes[a] = build_axis(domain.lo[a], domain.hi[a], std::move(breaks), cells);
  }

  double num = 0.0, mass1 = 0.0, mass2 = 0.0;
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  for (;;) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      x[a] = axes[a].nodes[idx[a]];
      w *= axes[a].weights[idx[a]];
    }
    const double p1 = pdf(f1, x), p2 = pdf(f2, x);
    num += w * divergence_term(p1, p2, kind).first;
    mass1 += w * p1;
    mass2 += w * p2;

    std::size_t a = 0;
    while (a < d && ++idx[a] >= axes[a].nodes.size()) idx[a++] = 0;
    if (a == d) break;
  }

  // the box has to hold essentially all of both masses, otherwise the
  // expectation below is over the wrong measure
  if (std::abs(mass1 - 1.0) > 0.05 || std::abs(mass2 - 1.0) > 0.05)
    throw EstimationError("quadrature_divergence: box does not cover the supports (masses " +
                          std::to_string(mass1) + ", " + std::to_string(mass2) + ")");

  // normalizing by the quadrature masses cancels the shared grid bias and
  // makes identical inputs evaluate to exactly zero
  if (kind.renyi_mode()) {
    const double alpha = *kind.alpha;
    const double j = num / (std::pow(mass1, alpha) * std::pow(mass2, 1.0 - alpha));
    return std::log(j) / (alpha - 1.0);
  }
  return num / mass2;
}

}  // namespace detail

//! Tensor-grid Simpson oracle for Eq.-(1)/(2)-style divergences on a box.
//! Runs at resolution/2 and resolution and reports the doubling delta. An
//! infinite value (support violation in the chosen direction) is flagged
//! rather than thrown.
inline OracleValue quadrature_divergence(const DistributionSpec& f1, const DistributionSpec& f2,
                                         const DivergenceSpec& kind, const Box& domain,
                                         int resolution = 256) {
  kind.validate();
  if (domain.dim() != dim(f1) || domain.dim() != dim(f2))
    throw std::invalid_argument("quadrature_divergence: box/spec dimension mismatch");
  if (domain.dim() > 3)
    throw std::invalid_argument("quadrature_divergence: tensor grid restricted to d <= 3");
  if (resolution < 32)
    throw std::invalid_argument("quadrature_divergence: resolution must be >= 32 per axis");

  const double coarse = detail::quadrature_pass(f1, f2, kind, domain, resolution / 2);
  const double fine = detail::quadrature_pass(f1, f2, kind, domain, resolution);

  OracleValue out;
  out.method = OracleMethod::Quadrature;
  out.resolution = resolution;
  out.value = fine;
  if (std::isinf(fine) && std::isinf(coarse)) {
    out.infinite = true;
    out.doubling_delta = 0.0;
    return out;
  }
  out.doubling_delta = std::abs(fine - coarse);
  if (!(out.doubling_delta < 1e-4))
    throw EstimationError("quadrature_divergence: not converged (doubling delta " +
                          std::to_string(out.doubling_delta) + " at resolution " +
                          std::to_string(resolution) + ")");
  return out;
}

//! Plain Simpson integral of the pdf over the box (no normalization); the
//! sanity check that densities integrate to one.
inline double quadrature_mass(const DistributionSpec& spec, const Box& domain,
                              int resolution = 256) {
  const std::size_t d = domain.dim();
  if (d > 3) throw std::invalid_argument("quadrature_mass: d <= 3");
  std::vector<detail::QuadratureAxis> axes(d);
  for (std::size_t a = 0; a < d; ++a) {
    std::vector<double> breaks;
    detail::collect_breakpoints(spec, a, breaks);
    axes[a] = detail::build_axis(domain.lo[a], domain.hi[a], std::move(breaks), resolution);
  }
  double mass = 0.0;
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  for (;;) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      x[a] = axes[a].nodes[idx[a]];
      w *= axes[a].weights[idx[a]];
    }
    mass += w * pdf(spec, x);
    std::size_t a = 0;
    while (a < d && ++idx[a] >= axes[a].nodes.size()) idx[a++] = 0;
    if (a == d) break;
  }
  return mass;
}

}  // namespace nnr
