#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "nnr/estimator.hpp"
#include "nnr/kdtree.hpp"
#include "nnr/points.hpp"

namespace nnr {

//! Volume of the d-dimensional Euclidean unit ball, π^{d/2} / Γ(d/2 + 1).
inline double unit_ball_volume(std::size_t d) {
  return std::pow(std::numbers::pi, 0.5 * static_cast<double>(d)) /
         std::tgamma(0.5 * static_cast<double>(d) + 1.0);
}

inline constexpr double kDensityFloor = 1e-12;

struct DensityFloorStats {
  std::size_t hits = 0;
  std::size_t queries = 0;
};

//! k-NN density k / (N c_d ρ_k^d) with ρ_k the k-th nearest distance.
//! A collapsed ρ_k (duplicate points) is floored to keep the value finite;
//! occurrences are counted through `stats`.
inline double knn_density(const PointSet& points, std::span<const double> query, int k,
                          std::size_t exclude = npos, DensityFloorStats* stats = nullptr) {
  const std::size_t n_eff = points.size() - (exclude != npos ? 1 : 0);
  if (k < 1 || static_cast<std::size_t>(k) > n_eff)
    throw std::invalid_argument("knn_density: k out of range");
  if (query.size() != points.dim()) throw std::invalid_argument("knn_density: dimension mismatch");

  detail::KBestHeap heap(static_cast<std::size_t>(k));
  const Metric metric = Metric::euclidean();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == exclude) continue;
    heap.offer(metric.reduced(query.data(), points[i].data(), points.dim()), i);
  }
  const auto hits = std::move(heap).sorted();
  double rho = std::sqrt(hits.back().reduced);
  if (stats) ++stats->queries;
  if (rho <= 0.0) {
    if (stats) ++stats->hits;
    rho = kDensityFloor;
  }
  const double d = static_cast<double>(points.dim());
  const double value = static_cast<double>(k) /
                       (static_cast<double>(n_eff) * unit_ball_volume(points.dim()) *
                        std::pow(rho, d));
  return std::min(value, std::numeric_limits<double>::max());
}

//! Gaussian-kernel density (1/(N h^d)) Σ_j K((q − p_j)/h) with
//! K(u) = (2π)^{−d/2} exp(−‖u‖²/2). Kernel terms below e^{-40} are skipped;
//! they are beyond double rounding of any realistic sum.
inline double kde_density(const PointSet& points, std::span<const double> query, double bandwidth,
                          std::size_t exclude = npos) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde_density: bandwidth must be positive");
  if (query.size() != points.dim()) throw std::invalid_argument("kde_density: dimension mismatch");
  const std::size_t d = points.dim();
  const std::size_t n_eff = points.size() - (exclude != npos ? 1 : 0);
  if (n_eff == 0) throw std::invalid_argument("kde_density: no points");

  const double inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  double sum = 0.0;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == exclude) continue;
    const auto p = points[j];
    double r2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double diff = query[a] - p[a];
      r2 += diff * diff;
    }
    const double e = r2 * inv_2h2;
    if (e <= 40.0) sum += std::exp(-e);
  }
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(d)) /
                      (static_cast<double>(n_eff) * std::pow(bandwidth, static_cast<double>(d)));
  return norm * sum;
}

enum class PluginMethod { Knn, Kde };

struct PluginParams {
  PluginMethod method = PluginMethod::Knn;
  int k = 0;              // kNN mode
  double bandwidth = 0.0; // KDE mode
};

//! Combines per-query density estimates into the plug-in divergence:
//! Rényi ln[(1/M) Σ (f̂1/f̂2)^α]/(α−1) or (1/M) Σ g(f̂1/f̂2). Densities are
//! floored at kDensityFloor first; the warning flag trips when more than 10%
//! of the evaluations needed flooring.
inline DivergenceEstimate plugin_divergence_from_densities(std::span<const double> f1,
                                                           std::span<const double> f2,
                                                           const DivergenceSpec& kind,
                                                           double eta = 1.0) {
  kind.validate();
  if (f1.size() != f2.size() || f1.empty())
    throw std::invalid_argument("plugin_divergence: density vectors must match and be nonempty");
  const std::size_t m = f1.size();

  DivergenceEstimate est;
  est.eta = eta;
  std::vector<double> terms;
  terms.reserve(m);
  std::size_t floored = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double a = f1[i], b = f2[i];
    if (a < kDensityFloor) {
      a = kDensityFloor;
      ++floored;
    }
    if (b < kDensityFloor) {
      b = kDensityFloor;
      ++floored;
    }
    const double ratio = a / b;
    const double term = kind.renyi_mode() ? std::pow(ratio, *kind.alpha) : (*kind.g)(ratio);
    terms.push_back(term);
    sum += term;
  }
  const double mean = sum / static_cast<double>(m);
  est.raw_value = kind.renyi_mode() ? std::log(mean) / (*kind.alpha - 1.0) : mean;
  est.value = est.raw_value;
  est.per_point_terms = std::move(terms);
  est.density_floor_hits = floored;
  est.density_floor_warning = floored * 10 > 2 * m;
  return est;
}

//! Plug-in divergence estimate: estimate f̂1 and f̂2 at every Y_i (f̂2 with
//! Y_i left out of its own neighborhood), then apply the divergence formula.
inline DivergenceEstimate plugin_divergence(const PointSet& x, const PointSet& y,
                                            const PluginParams& params,
                                            const DivergenceSpec& kind) {
  kind.validate();
  if (x.empty() || y.empty()) throw std::invalid_argument("plugin_divergence: empty sample");
  if (x.dim() != y.dim()) throw std::invalid_argument("plugin_divergence: dimension mismatch");
  const std::size_t m = y.size();

  std::vector<double> f1(m), f2(m);
  DensityFloorStats stats;
  if (params.method == PluginMethod::Knn) {
    if (params.k < 1 || static_cast<std::size_t>(params.k) > std::min(x.size(), y.size() - 1))
      throw std::invalid_argument("plugin_divergence: k out of range for the samples");
    for (std::size_t i = 0; i < m; ++i) {
      f1[i] = knn_density(x, y[i], params.k, npos, &stats);
      f2[i] = knn_density(y, y[i], params.k, i, &stats);
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      f1[i] = kde_density(x, y[i], params.bandwidth);
      f2[i] = kde_density(y, y[i], params.bandwidth, i);
    }
  }

  auto est = plugin_divergence_from_densities(f1, f2, kind,
                                              static_cast<double>(m) / static_cast<double>(x.size()));
  est.density_floor_hits += stats.hits;
  est.density_floor_warning = est.density_floor_hits * 10 > 2 * m;
  return est;
}

//! Sorted distances to the k_max nearest points for every query; one shared
//! tree pass that k-sweeps and plug-in tuning both derive from.
inline std::vector<std::vector<double>> knn_distance_profile(const PointSet& points,
                                                             const PointSet& queries, int k_max,
                                                             bool leave_one_out) {
  if (points.dim() != queries.dim())
    throw std::invalid_argument("knn_distance_profile: dimension mismatch");
  if (leave_one_out && points.size() != queries.size())
    throw std::invalid_argument("knn_distance_profile: leave-one-out needs queries == points");
  const std::size_t avail = points.size() - (leave_one_out ? 1 : 0);
  if (k_max < 1 || static_cast<std::size_t>(k_max) > avail)
    throw std::invalid_argument("knn_distance_profile: k_max out of range");

  const KdTree tree(points.flat().data(), points.size(), points.dim(), Metric::euclidean());
  std::vector<std::vector<double>> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto hits = tree.query(queries[i], static_cast<std::size_t>(k_max),
                                 leave_one_out ? i : npos);
    out[i].reserve(hits.size());
    for (const auto& h : hits) out[i].push_back(std::sqrt(h.reduced));
  }
  return out;
}

inline double knn_density_from_profile(double rho, int k, std::size_t n_eff, std::size_t d,
                                       DensityFloorStats* stats = nullptr) {
  if (stats) ++stats->queries;
  if (rho <= 0.0) {
    if (stats) ++stats->hits;
    rho = kDensityFloor;
  }
  const double value = static_cast<double>(k) /
                       (static_cast<double>(n_eff) * unit_ball_volume(d) *
                        std::pow(rho, static_cast<double>(d)));
  return std::min(value, std::numeric_limits<double>::max());
}

//! KDE densities for every query at every bandwidth in one pass over the
//! pairwise distances. Row i holds the densities of queries[i].
inline std::vector<std::vector<double>> kde_density_profile(const PointSet& points,
                                                            const PointSet& queries,
                                                            std::span<const double> bandwidths,
                                                            bool leave_one_out) {
  if (points.dim() != queries.dim())
    throw std::invalid_argument("kde_density_profile: dimension mismatch");
  if (leave_one_out && points.size() != queries.size())
    throw std::invalid_argument("kde_density_profile: leave-one-out needs queries == points");
  const std::size_t d = points.dim();
  const std::size_t nh = bandwidths.size();
  const std::size_t n_eff = points.size() - (leave_one_out ? 1 : 0);

  std::vector<double> inv_2h2(nh), norm(nh);
  for (std::size_t h = 0; h < nh; ++h) {
    if (!(bandwidths[h] > 0.0))
      throw std::invalid_argument("kde_density_profile: bandwidths must be positive");
    inv_2h2[h] = 1.0 / (2.0 * bandwidths[h] * bandwidths[h]);
    norm[h] = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(d)) /
              (static_cast<double>(n_eff) * std::pow(bandwidths[h], static_cast<double>(d)));
  }

  std::vector<std::vector<double>> out(queries.size(), std::vector<double>(nh, 0.0));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto q = queries[i];
    auto& row = out[i];
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (leave_one_out && j == i) continue;
      const auto p = points[j];
      double r2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = q[a] - p[a];
        r2 += diff * diff;
      }
      for (std::size_t h = 0; h < nh; ++h) {
        const double e = r2 * inv_2h2[h];
        if (e <= 40.0) row[h] += std::exp(-e);
      }
    }
    for (std::size_t h = 0; h < nh; ++h) row[h] *= norm[h];
  }
  return out;
}

}  // namespace nnr
