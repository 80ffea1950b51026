#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatlab/mild_solver.hpp"
#include "test_util.hpp"

using namespace heatlab;
using Catch::Approx;

namespace {

volume_profile exact_line_profile(const group_model& g) {
  std::vector<curve_point> curve;
  for (double t : testutil::logspace(0.05, 20.0, 14))
    curve.push_back({t, std::pow(4 * testutil::pi * t, -0.5)});
  return fit_profile(g, curve);
}

volume_profile simulated_profile(const group_model& g) {
  const double t_lo = std::max(1.02 * 4.0 * g.max_spacing() * g.max_spacing(), 1e-3);
  const auto samples = kernel_sup_curve(g, testutil::logspace(t_lo, 100.0, 16));
  std::vector<curve_point> curve;
  for (const auto& s : samples) curve.push_back({s.t, s.sup});
  return fit_profile(g, curve);
}

}  // namespace

TEST_CASE("existence_condition") {
  const auto g = make_group(euclidean_box(1, 200.0, 2048));
  const auto profile = exact_line_profile(g);

  SECTION("zero data: I = 0, satisfied, C = 1") {
    const grid_field zero(g, 0.0);
    const auto cert = existence_condition(g, zero, power_nonlinearity(4.0), 100.0, profile);
    CHECK(cert.integral_total == 0.0);
    CHECK(cert.verdict == certificate_verdict::satisfied);
    CHECK(cert.growth_constant == Approx(1.0));
  }

  SECTION("p = 2 below p_F = 3 on the line: divergent for any positive data") {
    const auto u0 = small_data_generator(g, 1.0, 0.1);
    const auto cert = existence_condition(g, u0, power_nonlinearity(2.0), 100.0, profile);
    CHECK(cert.verdict == certificate_verdict::divergent);
    CHECK(std::isinf(cert.integral_total));
  }

  SECTION("p = 4, u0 = eps h_gamma: quadrature matches the closed form") {
    // oracle: I = eps^3 (4 pi)^{-3/2} * 2 (gamma^{-1/2} - (S+gamma)^{-1/2}) on [0, S]
    const double s_cut = 1500.0;
    for (const auto [eps, gamma] : {std::pair{1.0, 1.0}, std::pair{0.7, 0.5}}) {
      const auto u0 = small_data_generator(g, gamma, eps);
      const auto cert =
          existence_condition(g, u0, power_nonlinearity(4.0), s_cut, profile, 400);
      const double partial_exact = std::pow(eps, 3) * std::pow(4 * testutil::pi, -1.5) * 2.0 *
                                   (std::pow(gamma, -0.5) - std::pow(s_cut + gamma, -0.5));
      const double full_exact =
          std::pow(eps, 3) * std::pow(4 * testutil::pi, -1.5) * 2.0 * std::pow(gamma, -0.5);
      CHECK(cert.integral_numeric == Approx(partial_exact).epsilon(5e-3));
      // the tail bound is inflated by the safety factor (2x on the envelope)
      CHECK(cert.integral_total >= 0.999 * full_exact);
      CHECK(cert.integral_total <= 1.25 * full_exact);
      CHECK(cert.verdict == certificate_verdict::satisfied);
      CHECK(cert.growth_constant > 1.0);
    }
  }

  SECTION("monotone in the data: u0 <= u0' implies I <= I'") {
    const auto small = small_data_generator(g, 1.0, 0.3);
    grid_field big = small;
    const auto extra = small_data_generator(g, 2.0, 0.2);
    for (std::int64_t i = 0; i < big.size(); ++i) big[i] += extra[i];
    const auto nl = power_nonlinearity(4.0);
    const auto ca = existence_condition(g, small, nl, 100.0, profile);
    const auto cb = existence_condition(g, big, nl, 100.0, profile);
    CHECK(ca.integral_numeric <= cb.integral_numeric * (1 + 1e-12));
    CHECK(ca.integral_total <= cb.integral_total * (1 + 1e-12));
  }

  SECTION("preconditions") {
    grid_field bad(g, 1.0);
    bad[3] = -1.0;
    CHECK_THROWS_AS(existence_condition(g, bad, power_nonlinearity(4.0), 100.0, profile), error);
    const auto u0 = small_data_generator(g, 1.0, 0.1);
    CHECK_THROWS_AS(existence_condition(g, u0, power_nonlinearity(4.0), 0.5, profile), error);
    volume_profile unfitted;
    try {
      existence_condition(g, u0, power_nonlinearity(4.0), 100.0, unfitted);
      FAIL("expected profile-unfitted");
    } catch (const error& e) {
      CHECK(e.code() == errc::profile_unfitted);
    }
  }
}

TEST_CASE("epsilon_threshold flips the verdict") {
  const auto g = make_group(euclidean_box(1, 200.0, 2048));
  const auto profile = exact_line_profile(g);
  const auto nl = power_nonlinearity(4.0);
  const double eps_star = epsilon_threshold(g, 1.0, nl, 1500.0, profile);
  REQUIRE(eps_star > 0);
  // closed-form cross-check: I(1) <= exact integral + inflated tail
  const double exact_eps =
      std::pow((1.0 / (nl.k1 * 3.0)) /
                   (std::pow(4 * testutil::pi, -1.5) * 2.0),
               1.0 / 3.0);
  CHECK(eps_star <= exact_eps * 1.001);
  CHECK(eps_star >= 0.9 * exact_eps);
  const auto below = existence_condition(g, small_data_generator(g, 1.0, 0.98 * eps_star), nl,
                                         1500.0, profile);
  const auto above = existence_condition(g, small_data_generator(g, 1.0, 1.02 * eps_star), nl,
                                         1500.0, profile);
  CHECK(below.verdict == certificate_verdict::satisfied);
  CHECK(above.verdict == certificate_verdict::violated);
}

TEST_CASE("omega_curve") {
  existence_certificate cert;
  cert.p = 2.0;
  cert.k1 = 1.0;

  SECTION("omega(0) = 1 and flat partials give omega = 1") {
    const std::vector<curve_point> flat{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
    const auto om = omega_curve(cert, flat);
    for (const auto& pt : om) CHECK(pt.value == Approx(1.0));
  }
  SECTION("constant-data torus closed form") {
    // partial(t) = c^{p-1} t with c = 0.5, p = 2: omega = (1 - K1 * 0.5 t)^{-1}
    std::vector<curve_point> partial;
    for (double t : {0.0, 0.2, 0.5, 1.0, 1.5}) partial.push_back({t, 0.5 * t});
    const auto om = omega_curve(cert, partial);
    for (std::size_t i = 0; i < partial.size(); ++i) {
      CHECK(om[i].value == Approx(1.0 / (1.0 - 0.5 * partial[i].t)).epsilon(1e-12));
      if (i > 0) CHECK(om[i].value >= om[i - 1].value);
    }
  }
  SECTION("barrier blow-up when the bracket closes") {
    const std::vector<curve_point> partial{{0.0, 0.0}, {1.0, 0.5}, {3.0, 1.2}};
    try {
      omega_curve(cert, partial);
      FAIL("expected barrier-blowup");
    } catch (const error& e) {
      CHECK(e.code() == errc::barrier_blowup);
    }
  }
}

TEST_CASE("picard_solve") {
  SECTION("f == 0 reproduces the linear flow in one iteration") {
    const auto g = make_group(euclidean_box(1, 80.0, 512));
    const auto u0 = small_data_generator(g, 1.0, 1.0);
    nonlinearity zero;
    zero.p = 4.0;
    zero.k1 = 0.0;
    const auto sol = picard_solve(g, u0, zero, 5.0, 50, 1e-10, 10);
    CHECK(sol.converged);
    CHECK(sol.iterations == 1);
    CHECK(sol.residual <= 1e-14);
    for (std::size_t j = 0; j < sol.times.size(); ++j)
      for (std::int64_t i = 0; i < sol.u[j].size(); ++i)
        REQUIRE(sol.u[j][i] == sol.linear[j][i]);
    // sandwich is tight at the lower envelope (omega == 1 when K1 = 0)
    existence_certificate cert;
    cert.p = 4.0;
    cert.k1 = 0.0;
    cert.verdict = certificate_verdict::satisfied;
    cert.growth_constant = 1.0;
    const std::vector<curve_point> omega{{0.0, 1.0}, {5.0, 1.0}};
    const auto sand = sandwich_check(sol, cert, omega);
    CHECK(sand.pass);
    CHECK(sand.worst_lower == Approx(0.0).margin(1e-15));
    CHECK(sand.worst_upper == Approx(0.0).margin(1e-15));
  }

  SECTION("constant data on the torus matches the separable ODE oracle") {
    const auto g = make_group(torus_box(1, 2 * testutil::pi, 64));
    const grid_field u0(g, 1.0);
    const auto nl = power_nonlinearity(2.0);  // f(u) = u^2, T* = 1
    const auto sol = picard_solve(g, u0, nl, 0.5, 256, 1e-12, 200);
    REQUIRE(sol.converged);
    for (std::size_t j = 0; j < sol.times.size(); ++j) {
      const double exact = 1.0 / (1.0 - sol.times[j]);
      REQUIRE(sup_norm(sol.u[j]) == Approx(exact).epsilon(0.01));
    }
    // the ODE case saturates the barrier: u = omega * u0 exactly
    existence_certificate cert;
    cert.p = 2.0;
    cert.k1 = 1.0;
    cert.verdict = certificate_verdict::divergent;  // torus: D = 0
    std::vector<curve_point> partial;
    for (double t : sol.times) partial.push_back({t, t});  // c^{p-1} = 1
    const auto om = omega_curve(cert, partial);
    const auto rep = sandwich_check(sol, cert, om);
    CHECK(rep.pass);
    CHECK(rep.worst_upper >= -1e-6);  // tight at the upper envelope
    CHECK(rep.omega_closed_ratio == Approx(1.0).margin(0.01));
  }

  SECTION("monotone iterates and small fixed-point residual (small data, p = 4)") {
    const auto g = make_group(euclidean_box(1, 80.0, 512));
    const auto profile = simulated_profile(g);
    const auto nl = power_nonlinearity(4.0);
    const double eps_star = epsilon_threshold(g, 1.0, nl, 100.0, profile);
    const double eps = 0.6 * eps_star;
    const auto u0 = small_data_generator(g, 1.0, eps);
    const auto cert = existence_condition(g, u0, nl, 100.0, profile);
    REQUIRE(cert.verdict == certificate_verdict::satisfied);

    const auto sol = picard_solve(g, u0, nl, 10.0, 100, 1e-9, 60);
    REQUIRE(sol.converged);
    CHECK(sol.residual < 1e-9);
    CHECK(sol.monotonicity_margin >= -1e-12 * sup_norm(sol.u[0]));
    CHECK(sol.barrier_finite);

    const auto om = omega_curve(cert, cert.partial);
    const auto sand = sandwich_check(sol, cert, om);
    CHECK(sand.pass);
    CHECK(sand.chain_ok);
    CHECK(sand.max_ratio <= cert.growth_constant * (1 + 1e-9));

    const auto env = decay_envelope_check(sol, 1.0, eps * cert.growth_constant);
    CHECK(env.pass);

    // L^q continuity at grid resolution: adjacent snapshot norms stay close
    auto l2 = [&](const grid_field& f) {
      double s = 0;
      for (std::int64_t i = 0; i < f.size(); ++i) s += f[i] * f[i];
      return std::sqrt(s * g.haar_weight());
    };
    double max_jump = 0, max_norm = 0;
    double prev = l2(sol.u[0]);
    for (std::size_t j = 1; j < sol.u.size(); ++j) {
      const double cur = l2(sol.u[j]);
      max_jump = std::max(max_jump, std::abs(cur - prev));
      max_norm = std::max(max_norm, cur);
      prev = cur;
    }
    CHECK(max_jump <= 0.2 * max_norm);
  }

  SECTION("f == 0 is tight at the lower envelope and C_env = 1 suffices") {
    const auto g = make_group(euclidean_box(1, 80.0, 512));
    const auto u0 = small_data_generator(g, 1.0, 1.0);
    nonlinearity zero;
    zero.p = 4.0;
    zero.k1 = 0.0;
    const auto sol = picard_solve(g, u0, zero, 5.0, 50, 1e-10, 10);
    const auto env = decay_envelope_check(sol, 1.0, 1.0);
    CHECK(env.pass);  // u(t) = h_{t+gamma} exactly (semigroup identity)
    CHECK(env.worst_margin >= -1e-6);
  }

  SECTION("diverging iterates report no-convergence instead of failing") {
    // p = 2 below p_F with a long horizon: the Picard sequence has no fixed
    // point and overflows; the solver must return converged = false
    const auto g = make_group(euclidean_box(1, 160.0, 1024));
    const auto u0 = small_data_generator(g, 0.5, 1.0);
    const auto sol = picard_solve(g, u0, power_nonlinearity(2.0), 40.0, 64, 1e-8, 80);
    CHECK_FALSE(sol.converged);
    CHECK(std::isinf(sol.gap));
    CHECK(std::isinf(sol.residual));
    for (const auto& f : sol.u)  // last finite iterate is retained
      REQUIRE(std::isfinite(sup_norm(f)));
  }

  SECTION("envelope violation is reported, not fatal") {
    const auto g = make_group(euclidean_box(1, 80.0, 512));
    const auto u0 = small_data_generator(g, 1.0, 1.0);
    const auto nl = power_nonlinearity(2.0);  // below p_F: f pushes above the kernel envelope
    const auto sol = picard_solve(g, u0, nl, 0.5, 64, 1e-10, 40);
    REQUIRE(sol.converged);
    const auto env = decay_envelope_check(sol, 1.0, 1.0);
    CHECK_FALSE(env.pass);
    CHECK(env.worst_margin > 1e-9);
  }
}

TEST_CASE("small_data_generator") {
  const auto g = make_group(euclidean_box(1, 80.0, 512));
  SECTION("eps = 0 gives the zero field") {
    const auto u = small_data_generator(g, 1.0, 0.0);
    CHECK(sup_norm(u) == 0.0);
  }
  SECTION("mass = eps and sup = eps (4 pi gamma)^{-1/2}") {
    const auto u = small_data_generator(g, 0.5, 0.25);
    CHECK(mass(u) == Approx(0.25).margin(1e-8));
    CHECK(sup_norm(u) == Approx(0.25 * std::pow(4 * testutil::pi * 0.5, -0.5)).margin(1e-6));
  }
  SECTION("under-resolved gamma propagates the kernel error") {
    CHECK_THROWS_AS(small_data_generator(g, 1e-4, 1.0), error);
  }
}
