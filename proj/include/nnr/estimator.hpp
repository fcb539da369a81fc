#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnr/pooled_index.hpp"

namespace nnr {

//! Estimation failed at runtime (as opposed to a precondition violation,
//! which throws std::invalid_argument).
struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

enum class GKind { KL, TotalVariation, Hellinger, AlphaPower, Custom };

//! Convex integrand g for f-divergences. KL, total variation and Hellinger
//! satisfy g(1)=0; AlphaPower is the plain power moment t^α that turns the
//! f-divergence sum into the Rényi moment J_α.
class GFunction {
public:
  static GFunction kl() { return GFunction(GKind::KL, 0.0); }
  static GFunction total_variation() { return GFunction(GKind::TotalVariation, 0.0); }
  static GFunction hellinger() { return GFunction(GKind::Hellinger, 0.0); }

  static GFunction alpha_power(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("GFunction: alpha must be positive");
    return GFunction(GKind::AlphaPower, alpha);
  }

  static GFunction custom(std::function<double(double)> fn) {
    GFunction g(GKind::Custom, 0.0);
    g.fn_ = std::move(fn);
    return g;
  }

  //! Parses "kl", "tv", "hellinger" or "alpha:<a>".
  static GFunction parse(const std::string& name) {
    if (name == "kl") return kl();
    if (name == "tv") return total_variation();
    if (name == "hellinger") return hellinger();
    if (name.rfind("alpha:", 0) == 0) return alpha_power(std::stod(name.substr(6)));
    throw std::invalid_argument("GFunction: unknown g '" + name + "'");
  }

  GKind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  //! Evaluates g(t) for t >= 0. t=0 uses the continuous limit of each
  //! built-in (0·ln 0 := 0 for KL).
  double operator()(double t) const {
    if (!(t >= 0.0)) throw std::invalid_argument("GFunction: argument must be >= 0");
    switch (kind_) {
      case GKind::KL: return t == 0.0 ? 0.0 : t * std::log(t);
      case GKind::TotalVariation: return std::abs(t - 1.0) / 2.0;
      case GKind::Hellinger: {
        const double s = std::sqrt(t) - 1.0;
        return s * s;
      }
      case GKind::AlphaPower: return std::pow(t, alpha_);
      case GKind::Custom: {
        const double v = fn_(t);
        if (std::isnan(v)) throw EstimationError("GFunction: custom g undefined at t=" + std::to_string(t));
        return v;
      }
    }
    throw std::logic_error("GFunction: unreachable");
  }

  //! lim_{t→∞} g(t)/t; the coefficient of the f2→0 tail in ∫ g(f1/f2) f2.
  double linear_growth_at_inf() const {
    switch (kind_) {
      case GKind::KL: return std::numeric_limits<double>::infinity();
      case GKind::TotalVariation: return 0.5;
      case GKind::Hellinger: return 1.0;
      case GKind::AlphaPower:
        return alpha_ > 1.0 ? std::numeric_limits<double>::infinity()
                            : (alpha_ == 1.0 ? 1.0 : 0.0);
      case GKind::Custom: return std::numeric_limits<double>::infinity();
    }
    throw std::logic_error("GFunction: unreachable");
  }

  std::string name() const {
    switch (kind_) {
      case GKind::KL: return "kl";
      case GKind::TotalVariation: return "tv";
      case GKind::Hellinger: return "hellinger";
      case GKind::AlphaPower: return "alpha:" + std::to_string(alpha_);
      case GKind::Custom: return "custom";
    }
    return "?";
  }

private:
  GFunction(GKind kind, double alpha) : kind_(kind), alpha_(alpha) {}

  GKind kind_;
  double alpha_;
  std::function<double(double)> fn_;
};

//! Density bounds 0 < C_L <= C_U used by the clamping rules.
struct DensityBounds {
  double lower;
  double upper;
};

//! Which divergence is being targeted: Rényi-α or an f-divergence with g.
struct DivergenceSpec {
  std::optional<double> alpha;
  std::optional<GFunction> g;

  static DivergenceSpec renyi(double a) {
    DivergenceSpec s;
    s.alpha = a;
    s.validate();
    return s;
  }

  static DivergenceSpec f_divergence(GFunction fn) {
    DivergenceSpec s;
    s.g = std::move(fn);
    return s;
  }

  bool renyi_mode() const { return alpha.has_value(); }

  void validate() const {
    if (alpha.has_value() == g.has_value())
      throw std::invalid_argument("DivergenceSpec: exactly one of alpha / g must be set");
    if (alpha && (!(*alpha > 0.0) || *alpha == 1.0))
      throw std::invalid_argument("DivergenceSpec: alpha must be positive and != 1");
  }

  std::string name() const {
    if (alpha) return "renyi:" + std::to_string(*alpha);
    return "f:" + g->name();
  }
};

struct EstimatorConfig {
  int k = 1;
  std::optional<double> alpha;     // Rényi mode when set
  std::optional<GFunction> g;      // f-divergence mode when set
  std::optional<DensityBounds> bounds;
  double gamma = 1.0;              // Hölder exponent in (0,1]
  Metric metric = Metric::euclidean();

  bool renyi_mode() const { return alpha.has_value(); }

  void validate() const {
    if (alpha.has_value() == g.has_value())
      throw std::invalid_argument("EstimatorConfig: exactly one of alpha / g must be set");
    if (alpha) {
      if (!(*alpha > 0.0)) throw std::invalid_argument("EstimatorConfig: alpha must be positive");
      if (*alpha == 1.0) throw std::invalid_argument("EstimatorConfig: alpha must differ from 1");
    }
    if (bounds) {
      if (!(bounds->lower > 0.0) || !(bounds->lower <= bounds->upper))
        throw std::invalid_argument("EstimatorConfig: bounds require 0 < C_L <= C_U");
    }
    if (!(gamma > 0.0) || gamma > 1.0)
      throw std::invalid_argument("EstimatorConfig: gamma must lie in (0, 1]");
    if (k < 1) throw std::invalid_argument("EstimatorConfig: k must be >= 1");
  }
};

//! Per-Y-point label counts among the k nearest pooled neighbors
//! (self excluded), plus the sample sizes they were formed from.
struct NeighborCounts {
  struct Row {
    int x_count;  // N_i
    int y_count;  // M_i
  };
  std::vector<Row> rows;
  std::size_t n = 0;  // |X|
  std::size_t m = 0;  // |Y|
  int k = 0;

  double eta() const { return static_cast<double>(m) / static_cast<double>(n); }
};

struct DivergenceEstimate {
  double value = 0.0;
  double raw_value = 0.0;  // pre-clamp
  double eta = 1.0;
  std::optional<std::vector<double>> per_point_terms;
  std::optional<std::vector<double>> member_estimates;  // ensemble sub-estimates
  std::size_t density_floor_hits = 0;                   // plug-in estimators only
  bool density_floor_warning = false;
};

//! Counts X- and Y-labels among the k nearest pooled neighbors of every Y_i.
inline NeighborCounts nnr_counts(const PooledIndex& index, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > index.size() - 1)
    throw std::invalid_argument("nnr_counts: k must satisfy 1 <= k <= N+M-1");
  NeighborCounts counts;
  counts.n = index.x_count();
  counts.m = index.y_count();
  counts.k = k;
  counts.rows.reserve(counts.m);
  for (std::size_t i = 0; i < counts.m; ++i) {
    const std::size_t pos = index.y_position(i);
    const auto neighbors = index.k_nearest(index.point(pos), static_cast<std::size_t>(k), pos);
    int nx = 0;
    for (const Neighbor& nb : neighbors)
      if (nb.label == SampleLabel::X) ++nx;
    counts.rows.push_back({nx, k - nx});
  }
  return counts;
}

//! Cumulative X-label counts along each Y point's ranked neighbor list.
//! One k_max query yields NeighborCounts for every k <= k_max by prefix
//! truncation, which is what the ensemble and k-sweeps rely on.
class NeighborProfile {
public:
  NeighborProfile(const PooledIndex& index, int k_max) : n_(index.x_count()), m_(index.y_count()), k_max_(k_max) {
    if (k_max < 1 || static_cast<std::size_t>(k_max) > index.size() - 1)
      throw std::invalid_argument("NeighborProfile: k_max must satisfy 1 <= k <= N+M-1");
    if (k_max > 65535)
      throw std::invalid_argument("NeighborProfile: k_max exceeds the 16-bit count storage");
    cum_x_.resize(m_ * static_cast<std::size_t>(k_max));
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t pos = index.y_position(i);
      const auto neighbors = index.k_nearest(index.point(pos), static_cast<std::size_t>(k_max), pos);
      std::uint16_t running = 0;
      for (int j = 0; j < k_max; ++j) {
        if (neighbors[static_cast<std::size_t>(j)].label == SampleLabel::X) ++running;
        cum_x_[i * static_cast<std::size_t>(k_max) + static_cast<std::size_t>(j)] = running;
      }
    }
  }

  int k_max() const { return k_max_; }

  NeighborCounts counts_at(int k) const {
    if (k < 1 || k > k_max_)
      throw std::invalid_argument("NeighborProfile: k exceeds the profiled k_max");
    NeighborCounts counts;
    counts.n = n_;
    counts.m = m_;
    counts.k = k;
    counts.rows.reserve(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      const int nx = cum_x_[i * static_cast<std::size_t>(k_max_) + static_cast<std::size_t>(k - 1)];
      counts.rows.push_back({nx, k - nx});
    }
    return counts;
  }

private:
  std::size_t n_;
  std::size_t m_;
  int k_max_;
  std::vector<std::uint16_t> cum_x_;
};

//! Rényi moment Ĵ_α = (η^α / M) Σ_i (N_i / (M_i + 1))^α. Terms with N_i = 0
//! contribute exactly 0. Accumulation runs in ascending Y index.
inline double estimate_j_alpha(const NeighborCounts& counts, double alpha) {
  if (!(alpha > 0.0) || alpha == 1.0)
    throw std::invalid_argument("estimate_j_alpha: alpha must be positive and != 1");
  if (counts.n < 1 || counts.m < 1)
    throw std::invalid_argument("estimate_j_alpha: need N >= 1 and M >= 1");
  double sum = 0.0;
  for (const auto& row : counts.rows) {
    if (row.x_count == 0) continue;
    const double ratio = static_cast<double>(row.x_count) / (static_cast<double>(row.y_count) + 1.0);
    sum += std::pow(ratio, alpha);
  }
  return std::pow(counts.eta(), alpha) * sum / static_cast<double>(counts.m);
}

namespace detail {

inline double renyi_upper_clamp(double alpha, const DensityBounds& b) {
  return std::log(b.upper / b.lower) / std::abs(1.0 - alpha);
}

}  // namespace detail

//! Rényi divergence estimate D̂_α: raw value ln(Ĵ_α)/(α−1), then clamped to
//! [0, ln(C_U/C_L)/|1−α|] when bounds are supplied, and to [0, ∞) otherwise.
inline DivergenceEstimate estimate_renyi(const NeighborCounts& counts,
                                         const EstimatorConfig& config) {
  config.validate();
  if (!config.renyi_mode())
    throw std::invalid_argument("estimate_renyi: config must be in Rényi mode");
  const double alpha = *config.alpha;

  DivergenceEstimate est;
  est.eta = counts.eta();
  const double j = estimate_j_alpha(counts, alpha);

  std::vector<double> terms;
  terms.reserve(counts.rows.size());
  const double eta_pow = std::pow(est.eta, alpha);
  for (const auto& row : counts.rows) {
    const double ratio = static_cast<double>(row.x_count) / (static_cast<double>(row.y_count) + 1.0);
    terms.push_back(row.x_count == 0 ? 0.0 : eta_pow * std::pow(ratio, alpha));
  }
  est.per_point_terms = std::move(terms);

  if (j == 0.0) {
    if (alpha > 1.0) {
      est.raw_value = -std::numeric_limits<double>::infinity();
      est.value = 0.0;
      return est;
    }
    // alpha < 1: the raw estimate diverges to +inf
    est.raw_value = std::numeric_limits<double>::infinity();
    if (!config.bounds)
      throw EstimationError(
          "estimate_renyi: J_alpha = 0 with alpha < 1 and no density bounds; "
          "the estimate diverges (k or sample pathology)");
    est.value = detail::renyi_upper_clamp(alpha, *config.bounds);
    return est;
  }

  est.raw_value = std::log(j) / (alpha - 1.0);
  est.value = std::max(est.raw_value, 0.0);
  if (config.bounds)
    est.value = std::min(est.value, detail::renyi_upper_clamp(alpha, *config.bounds));
  return est;
}

//! f-divergence estimate D̂_g = max{(1/M) Σ_i g̃(η N_i/(M_i+1)), 0} with
//! g̃(t) = max{g(t), g(C_L/C_U)} when bounds are supplied.
inline DivergenceEstimate estimate_f_divergence(const NeighborCounts& counts,
                                                const EstimatorConfig& config) {
  config.validate();
  if (config.renyi_mode())
    throw std::invalid_argument("estimate_f_divergence: config must carry a g function");
  const GFunction& g = *config.g;

  DivergenceEstimate est;
  est.eta = counts.eta();

  const double floor = config.bounds ? g(config.bounds->lower / config.bounds->upper)
                                     : -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(counts.rows.size());
  double sum = 0.0;
  for (const auto& row : counts.rows) {
    const double t = est.eta * static_cast<double>(row.x_count) /
                     (static_cast<double>(row.y_count) + 1.0);
    const double term = std::max(g(t), floor);
    terms.push_back(term);
    sum += term;
  }
  est.per_point_terms = std::move(terms);
  est.raw_value = sum / static_cast<double>(counts.m);
  est.value = std::max(est.raw_value, 0.0);
  return est;
}

//! Bias/variance-balancing k from the optimal-rate exponent γ/(d+γ).
inline int k_opt_heuristic(std::size_t n, std::size_t d, double gamma = 1.0) {
  if (n < 2) throw std::invalid_argument("k_opt_heuristic: n must be >= 2");
  if (d < 1) throw std::invalid_argument("k_opt_heuristic: d must be >= 1");
  if (!(gamma > 0.0) || gamma > 1.0)
    throw std::invalid_argument("k_opt_heuristic: gamma must lie in (0, 1]");
  const double exponent = gamma / (static_cast<double>(d) + gamma);
  const double k = std::round(std::pow(static_cast<double>(n), exponent));
  return std::max(1, static_cast<int>(k));
}

//! One-call convenience: pooled index, counts, then the configured estimator.
inline DivergenceEstimate estimate_divergence(const PointSet& x, const PointSet& y,
                                              const EstimatorConfig& config) {
  config.validate();
  const PooledIndex index = build_index(x, y, config.metric);
  const NeighborCounts counts = nnr_counts(index, config.k);
  return config.renyi_mode() ? estimate_renyi(counts, config)
                             : estimate_f_divergence(counts, config);
}

}  // namespace nnr
