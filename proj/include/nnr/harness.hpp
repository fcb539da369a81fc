#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nnr/csv.hpp"
#include "nnr/density.hpp"
#include "nnr/ensemble.hpp"
#include "nnr/oracle.hpp"

namespace nnr {

using json = nlohmann::json;

namespace detail {

//! Numeric grid from JSON: plain array, {from,to,step} or
//! {from,to,count,scale:"log"|"linear"}.
inline std::vector<double> parse_grid(const json& j) {
  std::vector<double> out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.get<double>());
  } else if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_object() && j.contains("step")) {
    const double from = j.at("from").get<double>(), to = j.at("to").get<double>(),
                 step = j.at("step").get<double>();
    if (!(step > 0.0)) throw std::invalid_argument("grid: step must be positive");
    for (double v = from; v <= to + 1e-9 * step; v += step) out.push_back(v);
  } else if (j.is_object() && j.contains("count")) {
    const double from = j.at("from").get<double>(), to = j.at("to").get<double>();
    const int count = j.at("count").get<int>();
    const bool log_scale = j.value("scale", "linear") == std::string("log");
    if (count < 2 || !(to > from)) throw std::invalid_argument("grid: bad count/range");
    if (log_scale && !(from > 0.0)) throw std::invalid_argument("grid: log scale needs from > 0");
    for (int i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / (count - 1);
      out.push_back(log_scale ? from * std::pow(to / from, t) : from + (to - from) * t);
    }
  } else {
    throw std::invalid_argument("grid: expected array, number, or range object");
  }
  if (out.empty()) throw std::invalid_argument("grid: empty");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1])) throw std::invalid_argument("grid: values must increase");
  return out;
}

inline std::vector<int> parse_int_grid(const json& j) {
  std::vector<int> out;
  for (double v : parse_grid(j)) out.push_back(static_cast<int>(std::lround(v)));
  return out;
}

}  // namespace detail

//! JSON-facing distribution description. Scalar mean/cov/box entries
//! broadcast to any dimension, which is how dimension sweeps are configured.
struct DistConfig {
  std::string kind;  // gaussian | truncated-gaussian | uniform
  std::vector<double> mean;          // empty => scalar_mean broadcast
  double scalar_mean = 0.0;
  Eigen::MatrixXd cov;               // 0x0 => scalar/diag broadcast
  std::vector<double> cov_diag;      // empty unless diagonal list given
  double scalar_cov = 1.0;
  std::optional<Box> box;            // fixed-dimension box
  double box_lo = 0.0, box_hi = 0.0; // scalar box broadcast
  bool scalar_box = false;

  static DistConfig from_json(const json& j) {
    DistConfig c;
    c.kind = j.at("kind").get<std::string>();
    if (c.kind != "gaussian" && c.kind != "truncated-gaussian" && c.kind != "uniform")
      throw std::invalid_argument("dist: unknown kind '" + c.kind + "'");

    if (c.kind != "uniform") {
      const auto& mj = j.at("mean");
      if (mj.is_number())
        c.scalar_mean = mj.get<double>();
      else
        c.mean = mj.get<std::vector<double>>();

      const auto& cj = j.at("cov");
      if (cj.is_number()) {
        c.scalar_cov = cj.get<double>();
      } else if (cj.is_array() && !cj.empty() && cj[0].is_array()) {
        const auto rows = cj.get<std::vector<std::vector<double>>>();
        c.cov.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.size()) throw std::invalid_argument("dist: cov must be square");
          for (std::size_t col = 0; col < rows[r].size(); ++col)
            c.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = rows[r][col];
        }
      } else {
        c.cov_diag = cj.get<std::vector<double>>();
      }
    }

    if (c.kind != "gaussian") {
      const auto& bj = j.at("box");
      if (bj.is_object()) {
        c.scalar_box = true;
        c.box_lo = bj.at("lo").get<double>();
        c.box_hi = bj.at("hi").get<double>();
      } else {
        std::vector<double> lo, hi;
        for (const auto& side : bj) {
          lo.push_back(side.at(0).get<double>());
          hi.push_back(side.at(1).get<double>());
        }
        c.box = Box(std::move(lo), std::move(hi));
      }
    }
    return c;
  }

  //! Dimension fixed by explicit vectors/matrices; 0 when fully scalar.
  std::size_t natural_dim() const {
    if (!mean.empty()) return mean.size();
    if (cov.rows() > 0) return static_cast<std::size_t>(cov.rows());
    if (!cov_diag.empty()) return cov_diag.size();
    if (box) return box->dim();
    return 0;
  }

  DistributionSpec instantiate(std::size_t d) const {
    const std::size_t nat = natural_dim();
    if (nat != 0 && nat != d)
      throw std::invalid_argument("dist: fixed dimension " + std::to_string(nat) +
                                  " cannot broadcast to d=" + std::to_string(d));
    auto make_box = [&]() {
      if (box) return *box;
      if (!scalar_box) throw std::invalid_argument("dist: missing box");
      return Box::cube(box_lo, box_hi, d);
    };
    if (kind == "uniform") return Uniform(make_box());

    Eigen::VectorXd mu(static_cast<Eigen::Index>(d));
    if (mean.empty())
      mu.setConstant(scalar_mean);
    else
      for (std::size_t i = 0; i < d; ++i) mu(static_cast<Eigen::Index>(i)) = mean[i];

    Eigen::MatrixXd sigma;
    if (cov.rows() > 0) {
      sigma = cov;
    } else {
      sigma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < d; ++i)
        sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
            cov_diag.empty() ? scalar_cov : cov_diag[i];
    }
    Gaussian parent(std::move(mu), std::move(sigma));
    if (kind == "gaussian") return parent;
    return TruncatedGaussian(std::move(parent), make_box());
  }
};

enum class EstimatorKind { Nnr, NnrEnsemble, KnnPlugin, KdePlugin };

inline std::string estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Nnr: return "nnr";
    case EstimatorKind::NnrEnsemble: return "nnr-ensemble";
    case EstimatorKind::KnnPlugin: return "knn-plugin";
    case EstimatorKind::KdePlugin: return "kde-plugin";
  }
  return "?";
}

struct EstimatorEntry {
  EstimatorKind kind = EstimatorKind::Nnr;
  std::vector<int> k_grid;          // nnr / knn-plugin
  bool k_auto = false;              // nnr: k from k_opt_heuristic
  double gamma = 1.0;
  std::size_t ensemble_size = 0;    // nnr-ensemble; 0 => d+2
  double ensemble_cap = 3.0;
  std::vector<double> bandwidths;   // kde-plugin

  std::size_t params() const {
    switch (kind) {
      case EstimatorKind::Nnr: return k_auto ? 1 : k_grid.size();
      case EstimatorKind::NnrEnsemble: return 1;
      case EstimatorKind::KnnPlugin: return k_grid.size();
      case EstimatorKind::KdePlugin: return bandwidths.size();
    }
    return 0;
  }

  static EstimatorEntry from_json(const json& j) {
    EstimatorEntry e;
    const std::string type = j.at("type").get<std::string>();
    if (type == "nnr") {
      e.kind = EstimatorKind::Nnr;
      const auto& kj = j.at("k");
      if (kj.is_string() && kj.get<std::string>() == "auto")
        e.k_auto = true;
      else
        e.k_grid = detail::parse_int_grid(kj);
      e.gamma = j.value("gamma", 1.0);
    } else if (type == "nnr-ensemble") {
      e.kind = EstimatorKind::NnrEnsemble;
      e.ensemble_size = j.value("L", 0);
      e.ensemble_cap = j.value("c", 3.0);
    } else if (type == "knn-plugin") {
      e.kind = EstimatorKind::KnnPlugin;
      e.k_grid = detail::parse_int_grid(j.at("k"));
    } else if (type == "kde-plugin") {
      e.kind = EstimatorKind::KdePlugin;
      e.bandwidths = detail::parse_grid(j.at("bandwidth"));
    } else {
      throw std::invalid_argument("estimator: unknown type '" + type + "'");
    }
    return e;
  }
};

struct OracleConfig {
  enum class Method { Auto, ClosedForm, Quadrature, Fixed } method = Method::Auto;
  std::optional<Box> box;
  int resolution = 256;
  double fixed_value = 0.0;

  static OracleConfig from_json(const json& j) {
    OracleConfig c;
    const std::string m = j.value("method", "auto");
    if (m == "auto") c.method = Method::Auto;
    else if (m == "closed-form") c.method = Method::ClosedForm;
    else if (m == "quadrature") c.method = Method::Quadrature;
    else if (m == "value") {
      c.method = Method::Fixed;
      c.fixed_value = j.at("value").get<double>();
    } else {
      throw std::invalid_argument("oracle: unknown method '" + m + "'");
    }
    if (j.contains("box")) {
      std::vector<double> lo, hi;
      for (const auto& side : j.at("box")) {
        lo.push_back(side.at(0).get<double>());
        hi.push_back(side.at(1).get<double>());
      }
      c.box = Box(std::move(lo), std::move(hi));
    }
    c.resolution = j.value("resolution", 256);
    return c;
  }
};

struct PlotHints {
  std::string x = "n";    // n | k
  std::string y = "mse";  // mse | mean
};

struct ExperimentSpec {
  std::string name;
  DistConfig dist1, dist2;
  DivergenceSpec divergence;
  std::vector<std::size_t> d_values;
  std::vector<std::size_t> n_values;
  double m_over_n = 1.0;
  std::vector<EstimatorEntry> estimators;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  OracleConfig oracle;
  PlotHints plot;

  static ExperimentSpec from_json(const json& j) {
    ExperimentSpec s;
    s.name = j.at("name").get<std::string>();
    s.dist1 = DistConfig::from_json(j.at("dist1"));
    s.dist2 = DistConfig::from_json(j.at("dist2"));

    const auto& dj = j.at("divergence");
    const std::string type = dj.at("type").get<std::string>();
    if (type == "renyi")
      s.divergence = DivergenceSpec::renyi(dj.at("alpha").get<double>());
    else if (type == "f")
      s.divergence = DivergenceSpec::f_divergence(GFunction::parse(dj.at("g").get<std::string>()));
    else
      throw std::invalid_argument("divergence: unknown type '" + type + "'");

    if (j.contains("d"))
      for (int v : detail::parse_int_grid(j.at("d"))) s.d_values.push_back(static_cast<std::size_t>(v));
    for (int v : detail::parse_int_grid(j.at("n"))) s.n_values.push_back(static_cast<std::size_t>(v));
    s.m_over_n = j.value("m_over_n", 1.0);
    if (!(s.m_over_n > 0.0)) throw std::invalid_argument("m_over_n must be positive");

    for (const auto& ej : j.at("estimators")) s.estimators.push_back(EstimatorEntry::from_json(ej));
    if (s.estimators.empty()) throw std::invalid_argument("estimators: none configured");

    s.trials = j.at("trials").get<std::size_t>();
    if (s.trials < 1) throw std::invalid_argument("trials must be >= 1");
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("oracle")) s.oracle = OracleConfig::from_json(j.at("oracle"));
    if (j.contains("plot")) {
      s.plot.x = j.at("plot").value("x", "n");
      s.plot.y = j.at("plot").value("y", "mse");
    }

    if (s.d_values.empty()) {
      const std::size_t nat = std::max(s.dist1.natural_dim(), s.dist2.natural_dim());
      if (nat == 0)
        throw std::invalid_argument("config: dimension list \"d\" required with scalar dists");
      s.d_values.push_back(nat);
    }
    return s;
  }

  static ExperimentSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::invalid_argument("config: cannot open '" + path + "'");
    json j = json::parse(in);  // throws nlohmann parse_error on bad JSON
    return from_json(j);
  }
};

struct TrialRecord {
  std::string group;
  std::size_t trial = 0;
  std::size_t n = 0, m = 0;
  double param = 0.0;  // CSV column "k": k, L, or bandwidth
  std::string estimator;
  double estimate = 0.0;
  double truth = 0.0;
  double sq_error = 0.0;
  double wall_ms = 0.0;
  bool failed = false;
  std::string error;
};

struct OracleRecord {
  std::size_t d;
  OracleValue value;
};

struct RunResult {
  std::vector<TrialRecord> records;
  std::vector<OracleRecord> oracles;
  std::size_t failed_rows = 0;
};

namespace detail {

inline std::string format_param(EstimatorKind kind, double param) {
  char buf[48];
  switch (kind) {
    case EstimatorKind::Nnr:
    case EstimatorKind::KnnPlugin:
      std::snprintf(buf, sizeof(buf), "k%d", static_cast<int>(param));
      break;
    case EstimatorKind::NnrEnsemble:
      std::snprintf(buf, sizeof(buf), "L%d", static_cast<int>(param));
      break;
    case EstimatorKind::KdePlugin:
      std::snprintf(buf, sizeof(buf), "h%s", format_double(param).c_str());
      break;
  }
  return buf;
}

struct Scenario {
  std::size_t d, n, m;
  double truth;
};

//! One (scenario, trial) unit: fresh samples, every configured estimator.
//! Rows land in a preallocated window so output is independent of scheduling.
class UnitRunner {
public:
  UnitRunner(const ExperimentSpec& spec, const std::vector<Scenario>& scenarios,
             bool timing)
      : spec_(spec), scenarios_(scenarios), timing_(timing) {
    rows_per_unit_ = 0;
    for (const auto& e : spec.estimators) rows_per_unit_ += e.params();
  }

  std::size_t rows_per_unit() const { return rows_per_unit_; }

  void run(std::size_t scenario_idx, std::size_t trial, std::span<TrialRecord> out) const {
    const Scenario& sc = scenarios_[scenario_idx];
    const DistributionSpec f1 = spec_.dist1.instantiate(sc.d);
    const DistributionSpec f2 = spec_.dist2.instantiate(sc.d);

    Rng rng_x = Rng::stream(spec_.seed, mix_seed(mix_seed(mix_seed(sc.d, sc.n), trial), 1));
    Rng rng_y = Rng::stream(spec_.seed, mix_seed(mix_seed(mix_seed(sc.d, sc.n), trial), 2));
    const PointSet x = sample(f1, sc.n, rng_x);
    const PointSet y = sample(f2, sc.m, rng_y);

    std::size_t slot = 0;
    for (const auto& entry : spec_.estimators) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<TrialRecord> rows = run_entry(entry, sc, trial, x, y);
      const double ms =
          timing_ ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count()
                  : 0.0;
      for (auto& r : rows) {
        r.wall_ms = ms;
        out[slot++] = std::move(r);
      }
    }
  }

private:
  TrialRecord base_record(const Scenario& sc, std::size_t trial, EstimatorKind kind,
                          double param) const {
    TrialRecord r;
    r.group = "d" + std::to_string(sc.d) + "/n" + std::to_string(sc.n) + "/" +
              estimator_name(kind) + "/" + format_param(kind, param);
    r.trial = trial;
    r.n = sc.n;
    r.m = sc.m;
    r.param = param;
    r.estimator = estimator_name(kind);
    r.truth = sc.truth;
    return r;
  }

  void fill_estimate(TrialRecord& r, double estimate) const {
    r.estimate = estimate;
    const double err = estimate - r.truth;
    r.sq_error = err * err;
  }

  void fill_failure(TrialRecord& r, const std::string& what) const {
    r.failed = true;
    r.error = what;
    r.estimate = std::numeric_limits<double>::quiet_NaN();
    r.sq_error = std::numeric_limits<double>::quiet_NaN();
  }

  std::vector<TrialRecord> run_entry(const EstimatorEntry& entry, const Scenario& sc,
                                     std::size_t trial, const PointSet& x,
                                     const PointSet& y) const {
    switch (entry.kind) {
      case EstimatorKind::Nnr: return run_nnr(entry, sc, trial, x, y);
      case EstimatorKind::NnrEnsemble: return run_ensemble(entry, sc, trial, x, y);
      case EstimatorKind::KnnPlugin: return run_knn_plugin(entry, sc, trial, x, y);
      case EstimatorKind::KdePlugin: return run_kde_plugin(entry, sc, trial, x, y);
    }
    return {};
  }

  std::vector<TrialRecord> run_nnr(const EstimatorEntry& entry, const Scenario& sc,
                                   std::size_t trial, const PointSet& x, const PointSet& y) const {
    std::vector<int> ks = entry.k_auto
                              ? std::vector<int>{k_opt_heuristic(sc.n, sc.d, entry.gamma)}
                              : entry.k_grid;
    std::vector<TrialRecord> rows;
    rows.reserve(ks.size());
    const std::size_t pool = x.size() + y.size();

    int k_max = 0;
    for (int k : ks)
      if (static_cast<std::size_t>(k) <= pool - 1) k_max = std::max(k_max, k);

    std::optional<PooledIndex> index;
    std::optional<NeighborProfile> profile;
    std::string build_error;
    if (k_max >= 1) {
      try {
        index.emplace(x, y, Metric::euclidean());
        profile.emplace(*index, k_max);
      } catch (const std::exception& e) {
        build_error = e.what();
      }
    }

    for (int k : ks) {
      TrialRecord r = base_record(sc, trial, entry.kind, k);
      if (static_cast<std::size_t>(k) > pool - 1) {
        fill_failure(r, "k exceeds N+M-1");
      } else if (!profile) {
        fill_failure(r, build_error.empty() ? "index unavailable" : build_error);
      } else {
        try {
          const auto counts = profile->counts_at(k);
          const auto cfg = make_estimator_config(spec_.divergence, k);
          const auto est = spec_.divergence.renyi_mode() ? estimate_renyi(counts, cfg)
                                                         : estimate_f_divergence(counts, cfg);
          fill_estimate(r, est.value);
        } catch (const std::exception& e) {
          fill_failure(r, e.what());
        }
      }
      rows.push_back(std::move(r));
    }
    return rows;
  }

  std::vector<TrialRecord> run_ensemble(const EstimatorEntry& entry, const Scenario& sc,
                                        std::size_t trial, const PointSet& x,
                                        const PointSet& y) const {
    const std::size_t L = entry.ensemble_size == 0 ? sc.d + 2 : entry.ensemble_size;
    TrialRecord r = base_record(sc, trial, entry.kind, static_cast<double>(L));
    try {
      const IndexSet ell = default_index_set(L, sc.d, entry.ensemble_cap);
      const EnsembleWeights weights = solve_weights(ell, sc.d);
      EstimatorConfig cfg = make_estimator_config(spec_.divergence, 1);
      if (!cfg.alpha)
        throw std::invalid_argument("nnr-ensemble requires a Rényi divergence");
      const auto est = ensemble_estimate(x, y, ell, weights, cfg);
      fill_estimate(r, est.value);
    } catch (const std::exception& e) {
      fill_failure(r, e.what());
    }
    return {std::move(r)};
  }

  std::vector<TrialRecord> run_knn_plugin(const EstimatorEntry& entry, const Scenario& sc,
                                          std::size_t trial, const PointSet& x,
                                          const PointSet& y) const {
    std::vector<TrialRecord> rows;
    rows.reserve(entry.k_grid.size());
    const std::size_t cap = std::min(x.size(), y.size() - 1);

    int k_max = 0;
    for (int k : entry.k_grid)
      if (static_cast<std::size_t>(k) <= cap) k_max = std::max(k_max, k);

    std::vector<std::vector<double>> dx, dy;
    std::string build_error;
    if (k_max >= 1) {
      try {
        dx = knn_distance_profile(x, y, k_max, false);
        dy = knn_distance_profile(y, y, k_max, true);
      } catch (const std::exception& e) {
        build_error = e.what();
      }
    }

    std::vector<double> f1(y.size()), f2(y.size());
    for (int k : entry.k_grid) {
      TrialRecord r = base_record(sc, trial, entry.kind, k);
      if (static_cast<std::size_t>(k) > cap) {
        fill_failure(r, "k exceeds min(N, M-1)");
      } else if (dx.empty()) {
        fill_failure(r, build_error.empty() ? "profile unavailable" : build_error);
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) {
          f1[i] = knn_density_from_profile(dx[i][static_cast<std::size_t>(k - 1)], k, x.size(), sc.d);
          f2[i] = knn_density_from_profile(dy[i][static_cast<std::size_t>(k - 1)], k, y.size() - 1, sc.d);
        }
        fill_estimate(r, plugin_divergence_from_densities(f1, f2, spec_.divergence).value);
      }
      rows.push_back(std::move(r));
    }
    return rows;
  }

  std::vector<TrialRecord> run_kde_plugin(const EstimatorEntry& entry, const Scenario& sc,
                                          std::size_t trial, const PointSet& x,
                                          const PointSet& y) const {
    std::vector<TrialRecord> rows;
    rows.reserve(entry.bandwidths.size());
    std::vector<std::vector<double>> f1, f2;
    std::string build_error;
    try {
      f1 = kde_density_profile(x, y, entry.bandwidths, false);
      f2 = kde_density_profile(y, y, entry.bandwidths, true);
    } catch (const std::exception& e) {
      build_error = e.what();
    }

    std::vector<double> g1(y.size()), g2(y.size());
    for (std::size_t h = 0; h < entry.bandwidths.size(); ++h) {
      TrialRecord r = base_record(sc, trial, entry.kind, entry.bandwidths[h]);
      if (f1.empty()) {
        fill_failure(r, build_error);
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) {
          g1[i] = f1[i][h];
          g2[i] = f2[i][h];
        }
        fill_estimate(r, plugin_divergence_from_densities(g1, g2, spec_.divergence).value);
      }
      rows.push_back(std::move(r));
    }
    return rows;
  }

  const ExperimentSpec& spec_;
  const std::vector<Scenario>& scenarios_;
  bool timing_;
  std::size_t rows_per_unit_ = 0;
};

}  // namespace detail

//! Ground truth for one dimension, honoring the oracle config.
inline OracleValue compute_oracle(const ExperimentSpec& spec, std::size_t d) {
  const DistributionSpec f1 = spec.dist1.instantiate(d);
  const DistributionSpec f2 = spec.dist2.instantiate(d);

  using Method = OracleConfig::Method;
  Method method = spec.oracle.method;
  if (method == Method::Fixed) {
    OracleValue v;
    v.method = OracleMethod::ClosedForm;
    v.value = spec.oracle.fixed_value;
    return v;
  }
  const bool both_gaussian =
      std::holds_alternative<Gaussian>(f1) && std::holds_alternative<Gaussian>(f2);
  if (method == Method::Auto) method = both_gaussian ? Method::ClosedForm : Method::Quadrature;

  if (method == Method::ClosedForm) {
    if (!both_gaussian)
      throw std::invalid_argument("oracle: closed form requires Gaussian/Gaussian");
    if (!spec.divergence.renyi_mode())
      throw std::invalid_argument("oracle: closed form implemented for Rényi divergences");
    return renyi_gaussian_closed_form(std::get<Gaussian>(f1), std::get<Gaussian>(f2),
                                      *spec.divergence.alpha);
  }

  Box domain = spec.oracle.box ? *spec.oracle.box : [&] {
    // hull of the bounded supports, Gaussian tails out to 8 sigma
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    auto widen = [&](const DistributionSpec& s) {
      if (const auto* u = std::get_if<Uniform>(&s)) {
        for (std::size_t a = 0; a < d; ++a) {
          lo[a] = std::min(lo[a], u->box().lo[a]);
          hi[a] = std::max(hi[a], u->box().hi[a]);
        }
      } else if (const auto* t = std::get_if<TruncatedGaussian>(&s)) {
        for (std::size_t a = 0; a < d; ++a) {
          lo[a] = std::min(lo[a], t->box().lo[a]);
          hi[a] = std::max(hi[a], t->box().hi[a]);
        }
      } else {
        const auto& g = std::get<Gaussian>(s);
        for (std::size_t a = 0; a < d; ++a) {
          const double s8 = 8.0 * std::sqrt(g.cov()(static_cast<Eigen::Index>(a),
                                                    static_cast<Eigen::Index>(a)));
          lo[a] = std::min(lo[a], g.mean()(static_cast<Eigen::Index>(a)) - s8);
          hi[a] = std::max(hi[a], g.mean()(static_cast<Eigen::Index>(a)) + s8);
        }
      }
    };
    widen(f1);
    widen(f2);
    return Box(std::move(lo), std::move(hi));
  }();
  return quadrature_divergence(f1, f2, spec.divergence, domain, spec.oracle.resolution);
}

//! Runs every (d, n, trial) × estimator × parameter cell. Trials are
//! embarrassingly parallel; per-trial RNG streams derive from (seed, d, n,
//! trial), and rows are written into fixed slots, so the output is identical
//! for any thread count.
inline RunResult run_trials(const ExperimentSpec& spec, unsigned threads = 1,
                            bool timing = false) {
  std::vector<detail::Scenario> scenarios;
  RunResult result;
  for (std::size_t d : spec.d_values) {
    const OracleValue oracle = compute_oracle(spec, d);
    if (oracle.infinite)
      throw EstimationError("run_trials: the oracle is infinite in this direction; swap dist1/dist2");
    result.oracles.push_back({d, oracle});
    for (std::size_t n : spec.n_values) {
      if (n < 2) throw std::invalid_argument("run_trials: n must be >= 2");
      const auto m = static_cast<std::size_t>(std::llround(spec.m_over_n * static_cast<double>(n)));
      if (m < 1) throw std::invalid_argument("run_trials: m_over_n too small");
      scenarios.push_back({d, n, m, oracle.value});
    }
  }

  const detail::UnitRunner runner(spec, scenarios, timing);
  const std::size_t units = scenarios.size() * spec.trials;
  result.records.resize(units * runner.rows_per_unit());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t u = next.fetch_add(1);
      if (u >= units) return;
      const std::size_t scenario_idx = u / spec.trials;
      const std::size_t trial = u % spec.trials;
      runner.run(scenario_idx, trial,
                 {result.records.data() + u * runner.rows_per_unit(), runner.rows_per_unit()});
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& r : result.records)
    if (r.failed) ++result.failed_rows;
  return result;
}

struct SummaryRow {
  std::string group;
  std::size_t n = 0;
  double param = 0.0;
  std::string estimator;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;   // MSE - bias² (the direct form must agree)
  double mse = 0.0;
  double stddev = 0.0;
  std::size_t trials = 0;
};

//! Per-group moments: mean, bias, variance (both as MSE − bias² and directly;
//! they agree to rounding), MSE, std. Failed rows are excluded.
inline std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  struct Acc {
    const TrialRecord* proto = nullptr;
    double sum = 0.0, sum_sq_err = 0.0;
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::map<std::string, Acc> groups;
  std::size_t order = 0;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.group);
    Acc& acc = it->second;
    if (inserted) {
      acc.proto = &r;
      acc.first_seen = order++;
    }
    if (r.failed) continue;
    acc.sum += r.estimate;
    acc.sum_sq_err += r.sq_error;
    ++acc.count;
  }

  std::vector<const std::pair<const std::string, Acc>*> ordered;
  ordered.reserve(groups.size());
  for (const auto& kv : groups) ordered.push_back(&kv);
  std::sort(ordered.begin(), ordered.end(),
            [](auto* a, auto* b) { return a->second.first_seen < b->second.first_seen; });

  std::vector<SummaryRow> out;
  out.reserve(ordered.size());
  for (const auto* kv : ordered) {
    const Acc& acc = kv->second;
    SummaryRow row;
    row.group = kv->first;
    row.n = acc.proto->n;
    row.param = acc.proto->param;
    row.estimator = acc.proto->estimator;
    row.trials = acc.count;
    if (acc.count == 0) {
      row.mean = row.bias = row.variance = row.mse = row.stddev =
          std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto cnt = static_cast<double>(acc.count);
      row.mean = acc.sum / cnt;
      row.bias = row.mean - acc.proto->truth;
      row.mse = acc.sum_sq_err / cnt;
      row.variance = row.mse - row.bias * row.bias;
      if (row.variance < 0.0) row.variance = 0.0;  // rounding guard
      row.stddev = std::sqrt(row.variance);
    }
    out.push_back(std::move(row));
  }
  return out;
}

//! arg min over k of the MSE for each sample size; ties go to the smaller k.
inline std::vector<std::pair<std::size_t, double>> sweep_argmin_k(
    const std::vector<TrialRecord>& records) {
  const auto summaries = summarize(records);
  std::map<std::size_t, std::pair<double, double>> best;  // n -> (param, mse)
  for (const auto& s : summaries) {
    if (s.trials == 0 || std::isnan(s.mse)) continue;
    auto it = best.find(s.n);
    if (it == best.end() || s.mse < it->second.second ||
        (s.mse == it->second.second && s.param < it->second.first))
      best[s.n] = {s.param, s.mse};
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& [n, pk] : best) out.emplace_back(n, pk.first);
  return out;
}

inline void write_raw_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << "group,trial,n,m,k,estimator,estimate,truth,sq_error,wall_ms\n";
  for (const auto& r : records) {
    os << r.group << ',' << r.trial << ',' << r.n << ',' << r.m << ',' << format_double(r.param)
       << ',' << r.estimator << ',' << format_double(r.estimate) << ',' << format_double(r.truth)
       << ',' << format_double(r.sq_error) << ',' << format_double(r.wall_ms) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "group,n,k,estimator,mean,bias,variance,mse,std,trials\n";
  for (const auto& s : rows) {
    os << s.group << ',' << s.n << ',' << format_double(s.param) << ',' << s.estimator << ','
       << format_double(s.mean) << ',' << format_double(s.bias) << ',' << format_double(s.variance)
       << ',' << format_double(s.mse) << ',' << format_double(s.stddev) << ',' << s.trials << '\n';
  }
}

}  // namespace nnr
