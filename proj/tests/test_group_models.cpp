#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "heatlab/group_model.hpp"
#include "test_util.hpp"

using namespace heatlab;
using Catch::Approx;

TEST_CASE("make_group validates models and dimensions") {
  SECTION("torus n=1, N=64, h=2pi/64 has d=1, D=0") {
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    CHECK(g.local_dim() == 1);
    CHECK(g.global_dim() == 0);
    CHECK(g.total_mass() == 64 * g.axis(0).spacing);
    CHECK(std::isinf(g.fujita_exponent()));
  }
  SECTION("euclidean n=2, L=20, N=256 has d=D=2") {
    const auto g = make_group(euclidean_box(2, 20.0, 256));
    CHECK(g.local_dim() == 2);
    CHECK(g.global_dim() == 2);
    CHECK(g.fujita_exponent() == Approx(2.0));
  }
  SECTION("heisenberg1 16^3 box has n=3, d=D=4") {
    const auto g = make_group(heisenberg_box(8.0, 16, 4.0, 16));
    CHECK(g.topological_dim() == 3);
    CHECK(g.local_dim() == 4);
    CHECK(g.global_dim() == 4);
    CHECK(g.fujita_exponent() == Approx(1.5));
    CHECK(g.total_mass() == Approx(8.0 * 8.0 * 4.0));
  }
  SECTION("invalid lattices are rejected") {
    auto bad_spacing = torus_box(1, 2 * testutil::pi, 64);
    bad_spacing.axes[0].spacing = -1.0;
    CHECK_THROWS_MATCHES(make_group(bad_spacing), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::invalid_lattice;
                         }));
    CHECK_THROWS_AS(make_group(torus_box(1, 1.0, 7)), error);   // N < 8
    CHECK_THROWS_AS(make_group(torus_box(1, 1.0, 9)), error);   // odd periodic
    group_spec h = heisenberg_box(8.0, 16, 4.0, 16);
    h.axes[0].rule = axis_rule::periodic;
    CHECK_THROWS_AS(make_group(h), error);  // fixed boundary layout
    group_spec wrong;
    wrong.kind = group_kind::heisenberg1;
    wrong.axes = {{16, 0.5, axis_rule::dirichlet}};
    try {
      make_group(wrong);
      FAIL("expected unsupported-kind");
    } catch (const error& e) {
      CHECK(e.code() == errc::unsupported_kind);
    }
  }
}

TEST_CASE("quasi_distance on the three models") {
  SECTION("euclidean (3,4) -> 5") {
    const auto g = make_group(euclidean_box(2, 16.0, 32));
    // coord = idx*0.5 - 8
    const int idx[2] = {22, 24};
    CHECK(g.coord(0, idx[0]) == Approx(3.0));
    CHECK(g.coord(1, idx[1]) == Approx(4.0));
    CHECK(g.quasi_distance({idx, 2}) == Approx(5.0));
  }
  SECTION("torus period 2pi wraps 3pi/2 to pi/2") {
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    const int idx[1] = {48};  // coord 3pi/2
    CHECK(g.coord(0, 48) == Approx(3 * testutil::pi / 2));
    CHECK(g.quasi_distance({idx, 1}) == Approx(testutil::pi / 2));
  }
  SECTION("heisenberg (0,0,1) -> 2 under the Koranyi gauge") {
    const auto g = make_group(heisenberg_box(8.0, 16, 8.0, 32));  // h_z = 0.25
    const int idx[3] = {8, 8, 20};                                // z = 20*0.25 - 4 = 1
    CHECK(g.coord(2, idx[2]) == Approx(1.0));
    CHECK(g.quasi_distance({idx, 3}) == Approx(2.0));
    CHECK(koranyi_gauge(0, 0, 1) == Approx(2.0));
  }
}

TEST_CASE("gauge symmetry and quasi-triangle inequality") {
  std::mt19937_64 rng(20250811);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);

  SECTION("gauge is even on all three models") {
    for (int k = 0; k < 1000; ++k) {
      const double x = dist(rng), y = dist(rng), z = dist(rng);
      CHECK(koranyi_gauge(x, y, z) == Approx(koranyi_gauge(-x, -y, -z)));
      CHECK(std::hypot(x, y) == Approx(std::hypot(-x, -y)));
    }
    // lattice version: distance is invariant under index negation
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    for (int i = 1; i < 64; ++i) {
      const int a[1] = {i}, b[1] = {(64 - i) % 64};
      CHECK(g.quasi_distance({a, 1}) == Approx(g.quasi_distance({b, 1})));
    }
  }

  SECTION("Koranyi gauge: triangle inequality up to factor 2 on 1e4 random pairs") {
    for (int k = 0; k < 10000; ++k) {
      const std::array<double, 3> a{dist(rng), dist(rng), dist(rng)};
      const std::array<double, 3> b{dist(rng), dist(rng), dist(rng)};
      const auto ab = heisenberg_multiply(a, b);
      const double lhs = koranyi_gauge(ab[0], ab[1], ab[2]);
      const double rhs = koranyi_gauge(a[0], a[1], a[2]) + koranyi_gauge(b[0], b[1], b[2]);
      REQUIRE(lhs <= 2.0 * rhs);
    }
  }

  SECTION("euclidean/torus triangle inequality is exact") {
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    std::uniform_int_distribution<int> ui(0, 63);
    for (int k = 0; k < 10000; ++k) {
      const int ia = ui(rng), ib = ui(rng);
      const int a[1] = {ia}, b[1] = {ib}, ab[1] = {(ia + ib) % 64};
      REQUIRE(g.quasi_distance({ab, 1}) <=
              g.quasi_distance({a, 1}) + g.quasi_distance({b, 1}) + 1e-12);
    }
  }
}

TEST_CASE("ball_volume") {
  SECTION("euclidean n=1, r=1 -> 2 within h") {
    const auto g = make_group(euclidean_box(1, 16.0, 256));
    CHECK(std::abs(ball_volume(g, 1.0) - 2.0) <= g.axis(0).spacing + 1e-12);
  }
  SECTION("nondecreasing in r, stable doubling ratio") {
    const auto g = make_group(euclidean_box(2, 12.0, 128));
    double prev = 0, ratio_lo = 1e300, ratio_hi = 0;
    for (double r : testutil::logspace(0.4, 1.5, 8)) {
      const double v = ball_volume(g, r);
      REQUIRE(v >= prev);
      prev = v;
      const double ratio = ball_volume(g, 2 * r) / v;
      ratio_lo = std::min(ratio_lo, ratio);
      ratio_hi = std::max(ratio_hi, ratio);
    }
    CHECK(ratio_hi <= 1.5 * ratio_lo);  // polynomial-growth signature
    CHECK(ratio_hi <= 8.0);             // stays near 2^d = 4
  }
  SECTION("heisenberg log V / log r slope is 4 +- 0.3 on [0.5, 2]") {
    const auto g = make_group(heisenberg_box(5.0, 64, 2.6, 64));
    std::vector<double> lx, ly;
    for (double r : testutil::logspace(0.5, 2.0, 6)) {
      lx.push_back(std::log(r));
      ly.push_back(std::log(ball_volume(g, r)));
    }
    const auto fit = detail::fit_line(lx, ly);
    CHECK(fit.slope == Approx(4.0).margin(0.3));
  }
  SECTION("torus saturates beyond its diameter") {
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    CHECK(ball_volume(g, 4.0) == Approx(g.total_mass()));
    CHECK(ball_volume(g, 10.0) == Approx(ball_volume(g, 4.0)));
  }
  SECTION("ball-exceeds-domain") {
    const auto g = make_group(euclidean_box(1, 16.0, 64));
    CHECK_THROWS_AS(ball_volume(g, 9.0), error);
    const auto h = make_group(heisenberg_box(5.0, 16, 2.0, 16));
    CHECK_THROWS_AS(ball_volume(h, 2.4), error);  // z-extent: r^2/4 > L_z/2
  }
}

TEST_CASE("fit_profile") {
  SECTION("euclidean n=1 exact curve gives a = b = 1") {
    const auto g = make_group(euclidean_box(1, 40.0, 512));
    std::vector<curve_point> curve;
    for (double t : testutil::logspace(0.05, 20.0, 14))
      curve.push_back({t, std::pow(4 * testutil::pi * t, -0.5)});
    const auto p = fit_profile(g, curve);
    CHECK(p.fitted);
    CHECK(p.small_exp == Approx(1.0).margin(0.05));
    CHECK(p.large_exp == Approx(1.0).margin(0.05));
    CHECK(p.c_small_low <= p.c_small_up);
    CHECK(p.c_large_low <= p.c_large_up);
  }
  SECTION("torus n=1 analytic curve gives b = 1 +- 0.1, a = 0 +- 0.1") {
    const double big_l = 2 * testutil::pi;
    const auto g = make_group(torus_box(1, big_l, 64));
    std::vector<curve_point> curve;
    for (double t : testutil::logspace(0.01, 2000.0, 24))
      curve.push_back({t, testutil::torus_kernel_at_zero(t, big_l)});
    const auto p = fit_profile(g, curve);
    CHECK(p.small_exp == Approx(1.0).margin(0.1));
    CHECK(p.large_exp == Approx(0.0).margin(0.1));
  }
  SECTION("errors: insufficient samples, bad span, non-monotone") {
    const auto g = make_group(euclidean_box(1, 40.0, 512));
    std::vector<curve_point> tiny = {{0.05, 2.0}, {0.5, 1.0}, {5.0, 0.5}, {50.0, 0.2}};
    CHECK_THROWS_AS(fit_profile(g, tiny), error);
    std::vector<curve_point> narrow;
    for (double t : testutil::logspace(0.5, 5.0, 10))
      narrow.push_back({t, std::pow(t, -0.5)});
    CHECK_THROWS_AS(fit_profile(g, narrow), error);
    std::vector<curve_point> bump;
    for (double t : testutil::logspace(0.05, 20.0, 12)) bump.push_back({t, std::pow(t, -0.5)});
    bump[6].value = bump[5].value * 1.5;
    try {
      fit_profile(g, bump);
      FAIL("expected non-monotone-curve");
    } catch (const error& e) {
      CHECK(e.code() == errc::nonmonotone_curve);
    }
  }
}
