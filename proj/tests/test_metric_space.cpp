#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <thread>

#include "nnr/pooled_index.hpp"
#include "test_support.hpp"

using namespace nnr;
using nnr::test::random_points;
using nnr::test::same_neighbors;
using nnr::test::scan_oracle;

namespace {

PointSet one_d(std::initializer_list<double> xs) {
  PointSet ps(1);
  for (double x : xs) ps.add(std::vector<double>{x});
  return ps;
}

}  // namespace

TEST_CASE("build_index pools labeled points") {
  const auto index = build_index(one_d({0, 2}), one_d({1, 5}));
  REQUIRE(index.size() == 4);
  REQUIRE(index.x_count() == 2);
  REQUIRE(index.y_count() == 2);
  REQUIRE(index.label(0) == SampleLabel::X);
  REQUIRE(index.label(1) == SampleLabel::X);
  REQUIRE(index.label(2) == SampleLabel::Y);
  REQUIRE(index.label(3) == SampleLabel::Y);
  REQUIRE(index.source_index(3) == 1);
  REQUIRE(index.point(2)[0] == 1.0);
}

TEST_CASE("build_index rejects bad inputs") {
  PointSet x2(2), x3(3);
  x2.add(std::vector<double>{0, 0});
  x3.add(std::vector<double>{0, 0, 0});
  REQUIRE_THROWS_AS(build_index(x2, x3), std::invalid_argument);

  PointSet empty(1);
  REQUIRE_THROWS_AS(build_index(empty, one_d({1})), std::invalid_argument);
  REQUIRE_THROWS_AS(build_index(one_d({1}), empty), std::invalid_argument);
}

TEST_CASE("k_nearest hand examples with self-exclusion") {
  const auto index = build_index(one_d({0, 2}), one_d({1, 5}));

  SECTION("query Y_1 = 1, self at pooled position 2") {
    const auto nb = index.k_nearest(index.point(2), 2, 2);
    REQUIRE(nb.size() == 2);
    CHECK(nb[0].position == 0);
    CHECK(nb[0].label == SampleLabel::X);
    CHECK(nb[0].distance == 1.0);
    CHECK(nb[1].position == 1);  // tie at distance 1 resolved by position
    CHECK(nb[1].label == SampleLabel::X);
    CHECK(nb[1].distance == 1.0);
  }

  SECTION("query Y_2 = 5, self at pooled position 3") {
    const auto nb = index.k_nearest(index.point(3), 2, 3);
    REQUIRE(nb.size() == 2);
    CHECK(nb[0].position == 1);
    CHECK(nb[0].label == SampleLabel::X);
    CHECK(nb[0].distance == 3.0);
    CHECK(nb[1].position == 2);
    CHECK(nb[1].label == SampleLabel::Y);
    CHECK(nb[1].distance == 4.0);
  }

  SECTION("k = |Z| without exclusion returns everything sorted") {
    const std::vector<double> q{1.0};
    const auto nb = index.k_nearest(q, 4);
    REQUIRE(nb.size() == 4);
    for (std::size_t i = 1; i < nb.size(); ++i) CHECK(nb[i - 1].distance <= nb[i].distance);
    CHECK(nb[3].position == 3);
  }

  SECTION("k too large") {
    REQUIRE_THROWS_AS(index.k_nearest(index.point(2), 4, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(index.k_nearest(index.point(2), 5), std::invalid_argument);
  }
}

TEST_CASE("duplicate coordinates: exclusion is positional, ties positional") {
  // X has two copies of the Y query point.
  const auto index = build_index(one_d({3, 3, 9}), one_d({3, 4}));
  const auto nb = index.k_nearest(index.point(3), 2, 3);
  REQUIRE(nb.size() == 2);
  CHECK(nb[0].position == 0);
  CHECK(nb[0].distance == 0.0);
  CHECK(nb[1].position == 1);
  CHECK(nb[1].distance == 0.0);
}

TEST_CASE("tree, brute force and scan oracle agree on random configs") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> nd(1, 60), dd(1, 5);

  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t d = dd(rng);
    const auto x = random_points(rng, nd(rng), d);
    const auto y = random_points(rng, nd(rng), d);
    const Metric metric = rep % 3 == 0   ? Metric::euclidean()
                          : rep % 3 == 1 ? Metric::minkowski(1.5)
                                         : Metric::chebyshev();
    const auto index = build_index(x, y, metric);
    std::uniform_int_distribution<std::size_t> kd(1, index.size() - 1);
    const std::size_t k = kd(rng);

    for (std::size_t pos = 0; pos < index.size(); ++pos) {
      const auto tree = index.k_nearest(index.point(pos), k, pos);
      const auto brute = index.brute_force_k_nearest(index.point(pos), k, pos);
      const auto oracle = scan_oracle(index, index.point(pos), k, pos);
      REQUIRE(same_neighbors(tree, brute));
      REQUIRE(same_neighbors(tree, oracle));
    }
  }
}

TEST_CASE("duplicated points stress the tie handling") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> grid(-2, 2);
  for (int rep = 0; rep < 30; ++rep) {
    PointSet x(2), y(2);
    for (int i = 0; i < 25; ++i) x.add(std::vector<double>{double(grid(rng)), double(grid(rng))});
    for (int i = 0; i < 25; ++i) y.add(std::vector<double>{double(grid(rng)), double(grid(rng))});
    const auto index = build_index(x, y);
    for (std::size_t pos = 0; pos < index.size(); pos += 7) {
      const auto tree = index.k_nearest(index.point(pos), 11, pos);
      REQUIRE(same_neighbors(tree, scan_oracle(index, index.point(pos), 11, pos)));
    }
  }
}

TEST_CASE("custom metrics use the linear path and honor the contract") {
  const Metric taxi = Metric::custom([](std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
  });
  std::mt19937_64 rng(7);
  const auto x = random_points(rng, 20, 3);
  const auto y = random_points(rng, 20, 3);
  const auto custom_index = build_index(x, y, taxi);
  const auto l1_index = build_index(x, y, Metric::minkowski(1.0));
  for (std::size_t i = 0; i < custom_index.y_count(); ++i) {
    const std::size_t pos = custom_index.y_position(i);
    const auto a = custom_index.k_nearest(custom_index.point(pos), 5, pos);
    const auto b = l1_index.k_nearest(l1_index.point(pos), 5, pos);
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j].position == b[j].position);
      CHECK(a[j].distance == Catch::Approx(b[j].distance).margin(1e-12));
    }
  }
}

TEST_CASE("joint rigid motion leaves neighbor structure unchanged") {
  std::mt19937_64 rng(2024);
  const auto x = random_points(rng, 40, 2);
  const auto y = random_points(rng, 40, 2);

  const double theta = 0.83;
  const double tx = 2.5, ty = -1.25;
  auto transform = [&](const PointSet& ps) {
    PointSet out(2);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto p = ps[i];
      out.add(std::vector<double>{std::cos(theta) * p[0] - std::sin(theta) * p[1] + tx,
                                  std::sin(theta) * p[0] + std::cos(theta) * p[1] + ty});
    }
    return out;
  };

  const auto index = build_index(x, y);
  const auto moved = build_index(transform(x), transform(y));
  for (std::size_t i = 0; i < index.y_count(); ++i) {
    const std::size_t pos = index.y_position(i);
    const auto a = index.k_nearest(index.point(pos), 9, pos);
    const auto b = moved.k_nearest(moved.point(pos), 9, pos);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j].position == b[j].position);
      CHECK(a[j].label == b[j].label);
    }
  }
}

TEST_CASE("concurrent queries match sequential results") {
  std::mt19937_64 rng(5);
  const auto x = random_points(rng, 120, 3);
  const auto y = random_points(rng, 120, 3);
  const auto index = build_index(x, y);

  std::vector<std::vector<Neighbor>> sequential(index.size());
  for (std::size_t pos = 0; pos < index.size(); ++pos)
    sequential[pos] = index.k_nearest(index.point(pos), 10, pos);

  std::vector<std::vector<Neighbor>> parallel(index.size());
  std::vector<std::thread> workers;
  const std::size_t n_workers = 4;
  for (std::size_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t pos = w; pos < index.size(); pos += n_workers)
        parallel[pos] = index.k_nearest(index.point(pos), 10, pos);
    });
  }
  for (auto& t : workers) t.join();

  for (std::size_t pos = 0; pos < index.size(); ++pos)
    REQUIRE(same_neighbors(sequential[pos], parallel[pos]));
}

TEST_CASE("metric axioms on sampled pairs") {
  std::mt19937_64 rng(11);
  const auto pts = random_points(rng, 30, 4);
  for (const Metric& m : {Metric::euclidean(), Metric::minkowski(3.0), Metric::chebyshev()}) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(m.distance(pts[i], pts[i]) == 0.0);
      for (std::size_t j = i + 1; j < pts.size(); j += 5) {
        const double dij = m.distance(pts[i], pts[j]);
        CHECK(dij >= 0.0);
        CHECK(dij == m.distance(pts[j], pts[i]));
      }
    }
  }
}
