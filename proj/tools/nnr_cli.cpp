// nnr — divergence estimation on CSV point sets plus the Monte-Carlo
// benchmark runner. See `nnr --help` and the per-subcommand help text.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <iostream>
#include <thread>

#include "nnr/nnr.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitEstimator = 3;
constexpr int kExitPartialFailure = 4;

struct EstimateOptions {
  std::string x_path, y_path;
  std::string k_arg = "1";
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::string g_name;
  std::string metric = "euclidean";
  std::string bounds;
  double gamma = 1.0;
  bool header = false;
};

nnr::DivergenceSpec divergence_from(const EstimateOptions& opt) {
  const bool has_alpha = !std::isnan(opt.alpha);
  if (has_alpha == !opt.g_name.empty())
    throw std::invalid_argument("exactly one of --alpha / --g is required");
  if (has_alpha) {
    if (opt.alpha == 1.0) throw std::invalid_argument("alpha must differ from 1");
    return nnr::DivergenceSpec::renyi(opt.alpha);
  }
  return nnr::DivergenceSpec::f_divergence(nnr::GFunction::parse(opt.g_name));
}

std::optional<nnr::DensityBounds> bounds_from(const std::string& arg) {
  if (arg.empty()) return std::nullopt;
  const auto comma = arg.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("--bounds expects 'cl,cu'");
  return nnr::DensityBounds{std::stod(arg.substr(0, comma)), std::stod(arg.substr(comma + 1))};
}

int run_estimate(const EstimateOptions& opt) {
  const nnr::PointSet x = nnr::read_points_csv(opt.x_path, opt.header);
  const nnr::PointSet y = nnr::read_points_csv(opt.y_path, opt.header);

  int k;
  if (opt.k_arg == "auto")
    k = nnr::k_opt_heuristic(x.size(), x.dim(), opt.gamma);
  else
    k = std::stoi(opt.k_arg);

  nnr::EstimatorConfig cfg = nnr::make_estimator_config(divergence_from(opt), k);
  cfg.bounds = bounds_from(opt.bounds);
  cfg.gamma = opt.gamma;
  cfg.metric = nnr::Metric::parse(opt.metric);
  cfg.validate();

  const auto est = nnr::estimate_divergence(x, y, cfg);
  std::cout << "estimate=" << nnr::format_double(est.value)
            << " raw=" << nnr::format_double(est.raw_value) << " k=" << k
            << " eta=" << nnr::format_double(est.eta) << "\n";
  return 0;
}

struct EnsembleOptions {
  std::string x_path, y_path;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::size_t members = 0;  // 0 => d+2
  double cap = 3.0;
  std::string metric = "euclidean";
  double gamma = 1.0;
  bool header = false;
};

int run_ensemble(const EnsembleOptions& opt) {
  if (std::isnan(opt.alpha)) throw std::invalid_argument("--alpha is required");
  if (opt.alpha == 1.0) throw std::invalid_argument("alpha must differ from 1");
  const nnr::PointSet x = nnr::read_points_csv(opt.x_path, opt.header);
  const nnr::PointSet y = nnr::read_points_csv(opt.y_path, opt.header);

  const std::size_t d = x.dim();
  const std::size_t members = opt.members == 0 ? d + 2 : opt.members;
  const nnr::IndexSet ell = nnr::default_index_set(members, d, opt.cap);
  const nnr::EnsembleWeights weights = nnr::solve_weights(ell, d);

  nnr::EstimatorConfig cfg;
  cfg.alpha = opt.alpha;
  cfg.gamma = opt.gamma;
  cfg.metric = nnr::Metric::parse(opt.metric);

  const auto est = nnr::ensemble_estimate(x, y, ell, weights, cfg);
  std::cout << "estimate=" << nnr::format_double(est.value)
            << " raw=" << nnr::format_double(est.raw_value) << " L=" << members
            << " c=" << nnr::format_double(opt.cap) << " eta=" << nnr::format_double(est.eta)
            << "\n";
  return 0;
}

struct BenchOptions {
  std::string config_path;
  std::string out_dir;
  bool svg = false;
  bool timing = false;
  unsigned threads = 0;
};

nnr::json oracle_meta(const nnr::ExperimentSpec& spec, const nnr::RunResult& result) {
  nnr::json oracles = nnr::json::array();
  for (const auto& o : result.oracles) {
    nnr::json entry;
    entry["d"] = o.d;
    entry["value"] = o.value.value;
    entry["method"] = o.value.method == nnr::OracleMethod::ClosedForm ? "closed-form" : "quadrature";
    if (o.value.method == nnr::OracleMethod::Quadrature) {
      entry["resolution"] = o.value.resolution;
      entry["doubling_delta"] = o.value.doubling_delta;
    }
    oracles.push_back(entry);
  }
  nnr::json meta;
  meta["name"] = spec.name;
  meta["divergence"] = spec.divergence.name();
  meta["direction"] = "D(dist1 || dist2): X ~ dist1, Y ~ dist2";
  meta["seed"] = spec.seed;
  meta["trials"] = spec.trials;
  meta["oracles"] = oracles;
  meta["failed_rows"] = result.failed_rows;
  return meta;
}

int run_bench(const BenchOptions& opt) {
  const auto spec = nnr::ExperimentSpec::load(opt.config_path);
  const unsigned threads =
      opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;

  std::filesystem::create_directories(opt.out_dir);
  const auto result = nnr::run_trials(spec, threads, opt.timing);
  const auto summaries = nnr::summarize(result.records);

  const auto base = std::filesystem::path(opt.out_dir) / spec.name;
  {
    std::ofstream raw(base.string() + "_raw.csv");
    nnr::write_raw_csv(raw, result.records);
  }
  {
    std::ofstream agg(base.string() + "_agg.csv");
    nnr::write_summary_csv(agg, summaries);
  }
  {
    std::ofstream meta(base.string() + "_meta.json");
    meta << oracle_meta(spec, result).dump(2) << "\n";
  }
  if (opt.svg) {
    std::ofstream svg(base.string() + ".svg");
    nnr::write_figure_svg(svg, spec, summaries);
  }

  if (result.failed_rows > 0) {
    std::cerr << "bench: " << result.failed_rows << " trial rows failed; see the raw CSV\n";
    return kExitPartialFailure;
  }
  return 0;
}

struct OracleOptions {
  std::string config_path;
  bool both = false;
  bool reverse = false;
  std::size_t d_override = 0;
};

int run_oracle(const OracleOptions& opt) {
  auto spec = nnr::ExperimentSpec::load(opt.config_path);
  if (opt.d_override != 0) spec.d_values = {opt.d_override};
  if (opt.reverse) std::swap(spec.dist1, spec.dist2);

  auto print_one = [&](const nnr::ExperimentSpec& s, const std::string& tag) {
    for (std::size_t d : s.d_values) {
      const auto v = nnr::compute_oracle(s, d);
      std::cout << tag << " d=" << d << " truth=" << nnr::format_double(v.value)
                << " method=" << (v.method == nnr::OracleMethod::ClosedForm ? "closed-form" : "quadrature");
      if (v.method == nnr::OracleMethod::Quadrature)
        std::cout << " delta=" << nnr::format_double(v.doubling_delta)
                  << (v.infinite ? " infinite=true" : "");
      std::cout << "\n";
    }
  };

  print_one(spec, opt.reverse ? "reverse" : "forward");
  if (opt.both) {
    auto swapped = spec;
    std::swap(swapped.dist1, swapped.dist2);
    print_one(swapped, "reverse");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearest-neighbor-ratio divergence estimation"};
  app.require_subcommand(1);

  EstimateOptions est;
  auto* cmd_est = app.add_subcommand("estimate", "One-shot NNR estimate on CSV point sets");
  cmd_est->add_option("--x", est.x_path, "CSV with the X sample")->required();
  cmd_est->add_option("--y", est.y_path, "CSV with the Y sample")->required();
  cmd_est->add_option("--k", est.k_arg, "neighbor count, or 'auto'")->required();
  cmd_est->add_option("--alpha", est.alpha, "Rényi order (exclusive with --g)");
  cmd_est->add_option("--g", est.g_name, "f-divergence: kl|tv|hellinger|alpha:<a>");
  cmd_est->add_option("--metric", est.metric, "euclidean|linf|lp:<p>");
  cmd_est->add_option("--bounds", est.bounds, "density bounds 'cl,cu' enabling the clamp");
  cmd_est->add_option("--gamma", est.gamma, "Hölder exponent for --k auto");
  cmd_est->add_flag("--header", est.header, "skip the first CSV row");

  EnsembleOptions ens;
  auto* cmd_ens = app.add_subcommand("ensemble", "Optimally weighted ensemble NNR estimate");
  cmd_ens->add_option("--x", ens.x_path, "CSV with the X sample")->required();
  cmd_ens->add_option("--y", ens.y_path, "CSV with the Y sample")->required();
  cmd_ens->add_option("--alpha", ens.alpha, "Rényi order")->required();
  cmd_ens->add_option("--L", ens.members, "ensemble size (default d+2)");
  cmd_ens->add_option("--c", ens.cap, "index-set cap");
  cmd_ens->add_option("--metric", ens.metric, "euclidean|linf|lp:<p>");
  cmd_ens->add_flag("--header", ens.header, "skip the first CSV row");

  BenchOptions bench;
  auto* cmd_bench = app.add_subcommand("bench", "Run a Monte-Carlo benchmark config");
  cmd_bench->add_option("--config", bench.config_path, "experiment JSON")->required();
  cmd_bench->add_option("--out", bench.out_dir, "output directory")->required();
  cmd_bench->add_flag("--svg", bench.svg, "also emit an SVG chart");
  cmd_bench->add_flag("--timing", bench.timing, "record wall times (breaks byte-reproducibility)");
  cmd_bench->add_option("--threads", bench.threads, "worker threads (default: cores)");

  OracleOptions oracle;
  auto* cmd_oracle = app.add_subcommand("oracle", "Ground-truth divergence for a config's pair");
  cmd_oracle->add_option("--config", oracle.config_path, "experiment JSON")->required();
  cmd_oracle->add_flag("--both", oracle.both, "print both directions");
  cmd_oracle->add_flag("--reverse", oracle.reverse, "swap dist1/dist2");
  cmd_oracle->add_option("--d", oracle.d_override, "override the dimension list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (cmd_est->parsed()) return run_estimate(est);
    if (cmd_ens->parsed()) return run_ensemble(ens);
    if (cmd_bench->parsed()) return run_bench(bench);
    if (cmd_oracle->parsed()) return run_oracle(oracle);
  } catch (const nnr::json::exception& e) {
    std::cerr << "nnr: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "nnr: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "nnr: " << e.what() << "\n";
    return kExitEstimator;
  }
  return 0;
}
