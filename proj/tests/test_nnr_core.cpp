#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "nnr/estimator.hpp"
#include "test_support.hpp"

using namespace nnr;
using nnr::test::random_points;

namespace {

PointSet one_d(std::initializer_list<double> xs) {
  PointSet ps(1);
  for (double x : xs) ps.add(std::vector<double>{x});
  return ps;
}

NeighborCounts make_counts(std::vector<NeighborCounts::Row> rows, std::size_t n, std::size_t m,
                           int k) {
  NeighborCounts c;
  c.rows = std::move(rows);
  c.n = n;
  c.m = m;
  c.k = k;
  return c;
}

// Count labels with a plain scan over the full distance table; no tree, no heap.
NeighborCounts counts_oracle(const PooledIndex& index, int k) {
  NeighborCounts c;
  c.n = index.x_count();
  c.m = index.y_count();
  c.k = k;
  for (std::size_t i = 0; i < c.m; ++i) {
    const auto nb = nnr::test::scan_oracle(index, index.point(index.y_position(i)),
                                           static_cast<std::size_t>(k), index.y_position(i));
    int nx = 0;
    for (const auto& h : nb)
      if (h.label == SampleLabel::X) ++nx;
    c.rows.push_back({nx, k - nx});
  }
  return c;
}

EstimatorConfig renyi_config(int k, double alpha) {
  EstimatorConfig cfg;
  cfg.k = k;
  cfg.alpha = alpha;
  return cfg;
}

EstimatorConfig g_config(int k, GFunction g) {
  EstimatorConfig cfg;
  cfg.k = k;
  cfg.g = std::move(g);
  return cfg;
}

}  // namespace

TEST_CASE("nnr_counts hand examples") {
  SECTION("X={0,2}, Y={1,5}, k=2") {
    const auto index = build_index(one_d({0, 2}), one_d({1, 5}));
    const auto counts = nnr_counts(index, 2);
    REQUIRE(counts.rows.size() == 2);
    CHECK(counts.rows[0].x_count == 2);
    CHECK(counts.rows[0].y_count == 0);
    CHECK(counts.rows[1].x_count == 1);
    CHECK(counts.rows[1].y_count == 1);
    CHECK(counts.eta() == 1.0);
  }

  SECTION("X={0}, Y={10,10.5}, k=1") {
    const auto index = build_index(one_d({0}), one_d({10, 10.5}));
    const auto counts = nnr_counts(index, 1);
    REQUIRE(counts.rows.size() == 2);
    CHECK(counts.rows[0].x_count == 0);
    CHECK(counts.rows[0].y_count == 1);
    CHECK(counts.rows[1].x_count == 0);
    CHECK(counts.rows[1].y_count == 1);
  }

  SECTION("k out of range") {
    const auto index = build_index(one_d({0, 2}), one_d({1, 5}));
    REQUIRE_THROWS_AS(nnr_counts(index, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(nnr_counts(index, 0), std::invalid_argument);
  }
}

TEST_CASE("counts partition identity and oracle agreement on random data") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> nd(2, 40), dd(1, 4);
  std::uniform_int_distribution<int> kd(1, 10);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t d = dd(rng);
    const auto x = random_points(rng, nd(rng), d);
    const auto y = random_points(rng, nd(rng), d);
    const auto index = build_index(x, y);
    const int k = std::min<int>(kd(rng), static_cast<int>(index.size() - 1));
    const auto counts = nnr_counts(index, k);
    const auto oracle = counts_oracle(index, k);

    long total = 0;
    for (std::size_t i = 0; i < counts.rows.size(); ++i) {
      CHECK(counts.rows[i].x_count == oracle.rows[i].x_count);
      REQUIRE(counts.rows[i].x_count + counts.rows[i].y_count == k);
      total += counts.rows[i].x_count + counts.rows[i].y_count;
    }
    REQUIRE(total == static_cast<long>(counts.m) * k);
  }
}

TEST_CASE("estimate_j_alpha hand values") {
  const auto counts = make_counts({{2, 0}, {1, 1}}, 2, 2, 2);
  CHECK(estimate_j_alpha(counts, 2.0) == Catch::Approx(2.125).epsilon(1e-14));

  // all ratios equal to one
  const auto identity = make_counts({{1, 0}, {1, 0}, {1, 0}}, 3, 3, 1);
  for (double alpha : {0.3, 0.5, 2.0, 3.5})
    CHECK(estimate_j_alpha(identity, alpha) == Catch::Approx(1.0).epsilon(1e-14));

  // every numerator zero
  const auto zeros = make_counts({{0, 2}, {0, 2}}, 2, 2, 2);
  CHECK(estimate_j_alpha(zeros, 0.5) == 0.0);

  CHECK_THROWS_AS(estimate_j_alpha(counts, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_j_alpha(counts, -0.5), std::invalid_argument);
}

TEST_CASE("estimate_renyi hand values and edge cases") {
  SECTION("hand example D = ln(2.125)") {
    const auto counts = make_counts({{2, 0}, {1, 1}}, 2, 2, 2);
    const auto est = estimate_renyi(counts, renyi_config(2, 2.0));
    CHECK(est.raw_value == Catch::Approx(std::log(2.125)).epsilon(1e-14));
    CHECK(est.value == est.raw_value);
    CHECK(est.eta == 1.0);
    REQUIRE(est.per_point_terms.has_value());
    CHECK((*est.per_point_terms)[0] == Catch::Approx(4.0));
    CHECK((*est.per_point_terms)[1] == Catch::Approx(0.25));
  }

  SECTION("J = 1 is the identical-distribution fixed point") {
    const auto identity = make_counts({{1, 0}, {1, 0}}, 2, 2, 1);
    const auto est = estimate_renyi(identity, renyi_config(1, 0.5));
    CHECK(est.raw_value == 0.0);
    CHECK(est.value == 0.0);
  }

  SECTION("negative raw clamps to zero; bounds add the upper clamp") {
    const auto counts = make_counts({{1, 1}}, 1, 1, 2);  // ratio 1/2
    auto cfg = renyi_config(2, 2.0);                     // raw = ln(0.25) < 0
    auto est = estimate_renyi(counts, cfg);
    CHECK(est.raw_value == Catch::Approx(std::log(0.25)));
    CHECK(est.value == 0.0);

    cfg.bounds = DensityBounds{1.0, 4.0};
    est = estimate_renyi(counts, cfg);
    CHECK(est.value == 0.0);
    // Eq.-style clamp arithmetic: upper bound ln(4)/|1-α|
    CHECK(nnr::detail::renyi_upper_clamp(0.5, {1.0, 4.0}) ==
          Catch::Approx(std::log(4.0) / 0.5).epsilon(1e-14));
  }

  SECTION("J = 0") {
    const auto zeros = make_counts({{0, 1}, {0, 1}}, 2, 2, 1);
    auto over = estimate_renyi(zeros, renyi_config(1, 2.0));
    CHECK(over.value == 0.0);
    CHECK(std::isinf(over.raw_value));
    CHECK(over.raw_value < 0);

    CHECK_THROWS_AS(estimate_renyi(zeros, renyi_config(1, 0.5)), EstimationError);

    auto cfg = renyi_config(1, 0.5);
    cfg.bounds = DensityBounds{1.0, std::exp(1.0)};
    const auto clamped = estimate_renyi(zeros, cfg);
    CHECK(clamped.value == Catch::Approx(1.0 / 0.5));  // ln(C_U/C_L)/|1-α|
  }

  SECTION("mode mismatch") {
    const auto counts = make_counts({{1, 0}}, 1, 1, 1);
    CHECK_THROWS_AS(estimate_renyi(counts, g_config(1, GFunction::kl())), std::invalid_argument);
  }
}

TEST_CASE("g_eval built-ins") {
  CHECK(GFunction::kl()(1.0) == 0.0);
  CHECK(GFunction::total_variation()(1.0) == 0.0);
  CHECK(GFunction::hellinger()(1.0) == 0.0);
  CHECK(GFunction::total_variation()(3.0) == 1.0);
  CHECK(GFunction::hellinger()(4.0) == 1.0);
  CHECK(GFunction::kl()(0.0) == 0.0);  // continuous limit of t ln t
  CHECK(GFunction::alpha_power(2.0)(3.0) == Catch::Approx(9.0));
  CHECK(GFunction::parse("alpha:0.5")(4.0) == Catch::Approx(2.0));
  CHECK_THROWS_AS(GFunction::kl()(-0.1), std::invalid_argument);
  const auto bad = GFunction::custom([](double) { return std::nan(""); });
  CHECK_THROWS_AS(bad(1.0), EstimationError);
}

TEST_CASE("estimate_f_divergence hand values") {
  SECTION("alpha power reproduces the J moment") {
    const auto counts = make_counts({{2, 0}, {1, 1}}, 2, 2, 2);
    const auto est = estimate_f_divergence(counts, g_config(2, GFunction::alpha_power(2.0)));
    CHECK(est.value == Catch::Approx(2.125).epsilon(1e-14));
  }

  SECTION("identity ratios under KL give zero") {
    const auto identity = make_counts({{1, 0}, {1, 0}}, 2, 2, 1);
    const auto est = estimate_f_divergence(identity, g_config(1, GFunction::kl()));
    CHECK(est.value == 0.0);
  }

  SECTION("zero ratio under KL contributes zero") {
    const auto zeros = make_counts({{0, 1}, {1, 0}}, 2, 2, 1);
    const auto est = estimate_f_divergence(zeros, g_config(1, GFunction::kl()));
    REQUIRE(est.per_point_terms.has_value());
    CHECK((*est.per_point_terms)[0] == 0.0);
  }

  SECTION("bounds floor the integrand at g(C_L/C_U)") {
    auto cfg = g_config(3, GFunction::kl());
    cfg.bounds = DensityBounds{1.0, 2.0};
    // ratio 1/3 puts g below g(C_L/C_U) = 0.5 ln 0.5, so the floor binds
    const auto counts = make_counts({{1, 2}}, 1, 1, 3);
    REQUIRE(GFunction::kl()(1.0 / 3.0) < GFunction::kl()(0.5));
    const auto est = estimate_f_divergence(counts, cfg);
    CHECK(est.raw_value == Catch::Approx(GFunction::kl()(0.5)));
    CHECK(est.value == 0.0);  // lower clamp still applies
  }
}

TEST_CASE("f-divergence with alpha power equals estimate_j_alpha (property)") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> kd(1, 12);
  std::uniform_real_distribution<double> ad(0.2, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = kd(rng);
    std::uniform_int_distribution<int> nx(0, k);
    std::uniform_int_distribution<std::size_t> sizes(1, 50);
    const std::size_t n = sizes(rng), m = sizes(rng);
    std::vector<NeighborCounts::Row> rows(m);
    for (auto& r : rows) {
      r.x_count = nx(rng);
      r.y_count = k - r.x_count;
    }
    const auto counts = make_counts(std::move(rows), n, m, k);
    double alpha = ad(rng);
    if (alpha == 1.0) alpha = 1.1;

    const double j = estimate_j_alpha(counts, alpha);
    const auto f = estimate_f_divergence(counts, g_config(k, GFunction::alpha_power(alpha)));
    CHECK(f.value == Catch::Approx(j).epsilon(1e-12));
  }
}

TEST_CASE("clamp containment with bounds (property)") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> ad(0.2, 3.0), bd(0.1, 8.0);
  std::uniform_int_distribution<int> kd(1, 10);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = kd(rng);
    std::uniform_int_distribution<int> nx(0, k);
    std::vector<NeighborCounts::Row> rows(20);
    for (auto& r : rows) {
      r.x_count = nx(rng);
      r.y_count = k - r.x_count;
    }
    const auto counts = make_counts(std::move(rows), 20, 20, k);
    double alpha = ad(rng);
    if (std::abs(alpha - 1.0) < 1e-3) alpha = 1.2;
    double lo = bd(rng), hi = bd(rng);
    if (lo > hi) std::swap(lo, hi);

    auto cfg = renyi_config(k, alpha);
    cfg.bounds = DensityBounds{lo, hi};
    const auto est = estimate_renyi(counts, cfg);
    const double upper = std::log(hi / lo) / std::abs(1.0 - alpha);
    REQUIRE(est.value >= 0.0);
    REQUIRE(est.value <= upper);
  }
}

TEST_CASE("permutation invariance of estimates") {
  std::mt19937_64 rng(2222);
  const auto x = random_points(rng, 35, 2);
  const auto y = random_points(rng, 41, 2);

  auto shuffled = [&rng](const PointSet& ps) {
    std::vector<std::size_t> perm(ps.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PointSet out(ps.dim());
    for (std::size_t i : perm) out.add(ps[i]);
    return out;
  };

  const auto cfg = renyi_config(7, 0.5);
  const auto base = estimate_divergence(x, y, cfg);
  const auto perm = estimate_divergence(shuffled(x), shuffled(y), cfg);
  CHECK(perm.value == Catch::Approx(base.value).epsilon(1e-12));

  // count multisets agree exactly
  auto rows_of = [&](const PointSet& a, const PointSet& b) {
    auto c = nnr_counts(build_index(a, b), 7);
    std::vector<std::pair<int, int>> v;
    for (auto& r : c.rows) v.emplace_back(r.x_count, r.y_count);
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(rows_of(x, y) == rows_of(shuffled(x), shuffled(y)));
}

TEST_CASE("joint isometry and uniform scaling leave counts unchanged") {
  std::mt19937_64 rng(404);
  const auto x = random_points(rng, 30, 3);
  const auto y = random_points(rng, 30, 3);

  // scaled rotation around axis pairs plus translation
  const double s = 2.75, theta = 1.1;
  auto map = [&](const PointSet& ps) {
    PointSet out(3);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto p = ps[i];
      const double u = std::cos(theta) * p[0] - std::sin(theta) * p[1];
      const double v = std::sin(theta) * p[0] + std::cos(theta) * p[1];
      out.add(std::vector<double>{s * u + 4.0, s * v - 2.0, s * p[2] + 0.5});
    }
    return out;
  };

  const auto c1 = nnr_counts(build_index(x, y), 9);
  const auto c2 = nnr_counts(build_index(map(x), map(y)), 9);
  for (std::size_t i = 0; i < c1.rows.size(); ++i) {
    CHECK(c1.rows[i].x_count == c2.rows[i].x_count);
    CHECK(c1.rows[i].y_count == c2.rows[i].y_count);
  }
}

TEST_CASE("k_opt_heuristic") {
  CHECK(k_opt_heuristic(10000, 2, 1.0) == 22);
  CHECK(k_opt_heuristic(4096, 1, 1.0) == 64);
  CHECK(k_opt_heuristic(2, 5, 0.7) >= 1);
  CHECK_THROWS_AS(k_opt_heuristic(1, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(k_opt_heuristic(100, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(k_opt_heuristic(100, 2, 1.5), std::invalid_argument);
}

TEST_CASE("neighbor profile prefix truncation equals direct counts") {
  std::mt19937_64 rng(909);
  const auto x = random_points(rng, 50, 2);
  const auto y = random_points(rng, 45, 2);
  const auto index = build_index(x, y);
  const NeighborProfile profile(index, 20);
  for (int k : {1, 2, 3, 7, 13, 20}) {
    const auto direct = nnr_counts(index, k);
    const auto derived = profile.counts_at(k);
    REQUIRE(direct.rows.size() == derived.rows.size());
    for (std::size_t i = 0; i < direct.rows.size(); ++i) {
      CHECK(direct.rows[i].x_count == derived.rows[i].x_count);
      CHECK(direct.rows[i].y_count == derived.rows[i].y_count);
    }
  }
  CHECK_THROWS_AS(profile.counts_at(21), std::invalid_argument);
}

TEST_CASE("identical distributions give near-zero Rényi estimates") {
  // N = M = 1000, d = 2, k = 20, 50 trials of standard normal pairs.
  std::mt19937_64 rng(31415);
  auto normal_points = [&rng](std::size_t n) {
    PointSet ps(2);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) ps.add(std::vector<double>{z(rng), z(rng)});
    return ps;
  };

  const auto cfg = renyi_config(20, 0.5);
  double sum = 0.0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const auto est = estimate_divergence(normal_points(1000), normal_points(1000), cfg);
    sum += est.value;
  }
  CHECK(std::abs(sum / trials) < 0.05);
}

TEST_CASE("estimator config validation") {
  EstimatorConfig cfg;
  cfg.k = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // neither alpha nor g
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 0.5;
  CHECK_NOTHROW(cfg.validate());
  cfg.g = GFunction::kl();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // both set
  cfg.alpha.reset();
  CHECK_NOTHROW(cfg.validate());
  cfg.bounds = DensityBounds{2.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.bounds = DensityBounds{1.0, 2.0};
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
