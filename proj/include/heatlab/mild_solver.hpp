#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "heatlab/detail/numerics.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/grid_field.hpp"
#include "heatlab/group_model.hpp"
#include "heatlab/heat_engine.hpp"
#include "heatlab/nonlinearity.hpp"

namespace heatlab {

enum class certificate_verdict { satisfied, violated, divergent };

inline const char* verdict_name(certificate_verdict v) {
  switch (v) {
    case certificate_verdict::satisfied: return "satisfied";
    case certificate_verdict::violated: return "violated";
    case certificate_verdict::divergent: return "divergent";
  }
  return "unknown";
}

/// Quadrature value (with analytic tail bound) of
/// I = \int_0^inf ||e^{-sL}u0||_inf^{p-1} ds against the threshold
/// 1/(K1(p-1)), plus the growth constant C of the barrier.
struct existence_certificate {
  double p = 0, k1 = 0;
  double integral_numeric = 0;  ///< composite trapezoid on [0, S_cut], geometric grid
  double integral_tail = 0;     ///< fitted-envelope tail bound beyond S_cut (safety factor 2)
  double integral_total = 0;
  double threshold = 0;  ///< 1/(K1(p-1)); +inf when K1 == 0
  certificate_verdict verdict = certificate_verdict::violated;
  double growth_constant = std::numeric_limits<double>::quiet_NaN();  ///< C when satisfied
  double fujita_p = 0;  ///< 1 + 2/D of the model
  double s_cut = 0;
  std::vector<curve_point> partial;  ///< partial integrals at the quadrature nodes
};

inline existence_certificate existence_condition(const group_model& g, const grid_field& u0,
                                                 const nonlinearity& nl, double s_cut,
                                                 const volume_profile& profile,
                                                 int nodes = 240) {
  nl.validate();
  assert_nonnegative(u0, "existence_condition needs nonnegative data");
  require(&u0.model() == &g, errc::validation_error, "field lattice does not match model");
  require(profile.fitted, errc::profile_unfitted,
          "existence_condition needs a fitted volume profile");
  require(s_cut > 1.0, errc::validation_error,
          "S_cut must exceed the profile crossover t = 1");

  existence_certificate cert;
  cert.p = nl.p;
  cert.k1 = nl.k1;
  cert.s_cut = s_cut;
  cert.fujita_p = g.fujita_exponent();
  cert.threshold = nl.k1 > 0 ? 1.0 / (nl.k1 * (nl.p - 1.0)) : std::numeric_limits<double>::infinity();

  const double sup0 = sup_norm(u0);
  if (sup0 == 0.0) {
    cert.verdict = certificate_verdict::satisfied;
    cert.growth_constant = 1.0;
    cert.partial = {{0.0, 0.0}, {s_cut, 0.0}};
    return cert;
  }

  // geometric quadrature grid, dense near 0 where the integrand is largest
  const double s_lo = std::clamp(s_cut * 1e-10, 1e-12, 1e-3);
  const std::vector<double> grid = detail::geometric_grid(s_cut, s_lo, nodes);
  std::vector<double> integrand(grid.size());
  integrand[0] = std::pow(sup0, nl.p - 1.0);
  {
    const std::span<const double> pos_times(grid.data() + 1, grid.size() - 1);
    const auto curve = semigroup_curve(g, u0, pos_times);
    for (std::size_t i = 0; i < curve.size(); ++i)
      integrand[i + 1] = std::pow(curve[i].sup, nl.p - 1.0);
  }
  const auto partial = detail::cumulative_trapezoid(grid, integrand);
  cert.partial.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) cert.partial[i] = {grid[i], partial[i]};
  cert.integral_numeric = partial.back();

  const double expo = 0.5 * g.global_dim() * (nl.p - 1.0);
  if (expo <= 1.0 + 1e-12) {
    // D(p-1)/2 <= 1: the integral diverges for any nontrivial data
    cert.integral_tail = std::numeric_limits<double>::infinity();
    cert.integral_total = std::numeric_limits<double>::infinity();
    cert.verdict = certificate_verdict::divergent;
    return cert;
  }
  cert.integral_tail = std::pow(2.0 * profile.c_large_up * mass(u0), nl.p - 1.0) *
                       std::pow(s_cut, 1.0 - expo) / (expo - 1.0);
  cert.integral_total = cert.integral_numeric + cert.integral_tail;
  if (cert.integral_total < cert.threshold) {
    cert.verdict = certificate_verdict::satisfied;
    cert.growth_constant =
        nl.k1 > 0 ? std::pow(1.0 - nl.k1 * (nl.p - 1.0) * cert.integral_total, -1.0 / (nl.p - 1.0))
                  : 1.0;
  } else {
    cert.verdict = certificate_verdict::violated;
  }
  return cert;
}

/// omega(t) = (1 - K1(p-1) * partial(t))^{-1/(p-1)}; omega(0) = 1, nondecreasing.
inline std::vector<curve_point> omega_curve(const existence_certificate& cert,
                                            std::span<const curve_point> partial_integrals) {
  require(!partial_integrals.empty(), errc::validation_error, "need partial integrals");
  std::vector<curve_point> out;
  out.reserve(partial_integrals.size());
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& pt : partial_integrals) {
    require(pt.value >= prev - 1e-12 * std::abs(prev), errc::validation_error,
            "partial integrals must be nondecreasing");
    prev = pt.value;
    const double bracket = 1.0 - cert.k1 * (cert.p - 1.0) * pt.value;
    require(bracket > 0, errc::barrier_blowup,
            "barrier bracket is nonpositive: certificate inconsistent with partials");
    out.push_back({pt.t, std::pow(bracket, -1.0 / (cert.p - 1.0))});
  }
  return out;
}

/// Epsilon at which the certificate for data eps*h_gamma flips verdict:
/// I(eps) = eps^{p-1} I(1) exactly, so the threshold is closed-form.
/// Returns 0 when no positive epsilon certifies (p <= p_F).
inline double epsilon_threshold(const group_model& g, double gamma, const nonlinearity& nl,
                                double s_cut, const volume_profile& profile) {
  const grid_field unit = heat_kernel(g, gamma);
  const auto cert = existence_condition(g, unit, nl, s_cut, profile);
  if (cert.verdict == certificate_verdict::divergent) return 0.0;
  if (!std::isfinite(cert.threshold)) return std::numeric_limits<double>::infinity();
  return std::pow(cert.threshold / cert.integral_total, 1.0 / (nl.p - 1.0));
}

/// Picard iteration of the Duhamel map on a uniform snapshot grid.
struct mild_solution {
  std::vector<double> times;
  std::vector<grid_field> u;       ///< converged iterate at each snapshot
  std::vector<grid_field> linear;  ///< e^{-tL}u0 (lower envelope)
  std::vector<double> sup_linear;
  std::vector<double> omega_disc;  ///< quadrature-consistent barrier at snapshots
  nonlinearity nl;
  int iterations = 0;
  double gap = 0;       ///< last sup-norm sweep change
  double residual = 0;  ///< change under one extra Duhamel application
  bool converged = false;
  double monotonicity_margin = 0;  ///< most negative pointwise v_{k+1}-v_k (FP-level)
  double barrier_margin = 0;       ///< max over iterates/snapshots of v_k - omega*linear
  bool barrier_finite = true;
};

inline mild_solution picard_solve(const group_model& g, const grid_field& u0,
                                  const nonlinearity& nl, double t_end, int steps, double tol,
                                  int k_max) {
  nl.validate();
  assert_nonnegative(u0, "picard_solve needs nonnegative data");
  require(&u0.model() == &g, errc::validation_error, "field lattice does not match model");
  require(t_end > 0 && steps >= 2 && tol > 0 && k_max >= 1, errc::validation_error,
          "picard_solve needs positive horizon, >= 2 steps, positive tol");

  const double dt = t_end / steps;
  const heat_operator op = build_propagator(g, 0.0, default_scheme(g));
  auto advance = [&](const grid_field& f) { return op.apply_time(f, dt); };

  mild_solution sol;
  sol.nl = nl;
  sol.times.resize(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) sol.times[static_cast<std::size_t>(j)] = dt * j;

  sol.linear.reserve(sol.times.size());
  sol.linear.push_back(u0);
  for (int j = 1; j <= steps; ++j) sol.linear.push_back(advance(sol.linear.back()));
  sol.sup_linear.resize(sol.times.size());
  for (std::size_t j = 0; j < sol.linear.size(); ++j) sol.sup_linear[j] = sup_norm(sol.linear[j]);

  // quadrature-consistent barrier: omega_j = 1 + Trap_j[K1 ||v0||^{p-1} omega^p],
  // the scalar twin of the Duhamel quadrature below (saturated exactly by
  // spatially constant data)
  sol.omega_disc.assign(sol.times.size(), 1.0);
  {
    std::vector<double> gj(sol.times.size());
    for (std::size_t j = 0; j < gj.size(); ++j)
      gj[j] = nl.k1 * std::pow(sol.sup_linear[j], nl.p - 1.0);
    double acc = 0.5 * gj[0];  // running sum of weights g_m omega_m^p, trapezoid interior
    for (std::size_t j = 1; j < sol.times.size(); ++j) {
      if (!sol.barrier_finite) {
        sol.omega_disc[j] = std::numeric_limits<double>::infinity();
        continue;
      }
      const double a_known = 1.0 + dt * acc;
      const double a_coef = 0.5 * dt * gj[j];
      // smallest root of x = a_known + a_coef x^p, reached from below
      double x = a_known;
      bool diverged = false;
      for (int it = 0; it < 400; ++it) {
        const double xn = a_known + a_coef * std::pow(x, nl.p);
        if (!std::isfinite(xn) || xn > 1e14) {
          diverged = true;
          break;
        }
        if (std::abs(xn - x) <= 1e-14 * xn) {
          x = xn;
          break;
        }
        x = xn;
      }
      if (!diverged && a_coef > 0) {
        // Newton polish on F(x) = x - a_coef x^p - a_known
        for (int it = 0; it < 40; ++it) {
          const double fp = 1.0 - a_coef * nl.p * std::pow(x, nl.p - 1.0);
          if (fp <= 1e-12) {
            diverged = std::abs(x - a_known - a_coef * std::pow(x, nl.p)) > 1e-10 * x;
            break;
          }
          const double step = (x - a_coef * std::pow(x, nl.p) - a_known) / fp;
          x -= step;
          if (std::abs(step) <= 1e-15 * x) break;
        }
      }
      if (diverged) {
        sol.barrier_finite = false;
        sol.omega_disc[j] = std::numeric_limits<double>::infinity();
        continue;
      }
      sol.omega_disc[j] = x;
      acc += gj[j] * std::pow(x, nl.p);
    }
  }

  // Picard sweeps: v_{k+1}(t_j) = v0(t_j) + Trap_j[e^{-(t_j-s)L} f(v_k(s))],
  // with the running accumulator A(j) = e^{-dt L}A(j-1) + F_j so each sweep
  // costs one semigroup application per snapshot
  std::vector<grid_field> v = sol.linear;
  std::vector<grid_field> f_of_v(sol.times.size(), grid_field(g));
  sol.monotonicity_margin = 0;
  sol.barrier_margin = -std::numeric_limits<double>::infinity();

  auto eval_f = [&](const grid_field& field, grid_field& out) {
    for (std::int64_t i = 0; i < field.size(); ++i) out[i] = nl.f(field[i]);
  };

  auto sweep = [&](const std::vector<grid_field>& cur, std::vector<grid_field>& next) {
    for (std::size_t j = 0; j < cur.size(); ++j) eval_f(cur[j], f_of_v[j]);
    grid_field acc = f_of_v[0];
    for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] *= 0.5;
    next[0] = sol.linear[0];
    double gap = 0;
    for (std::size_t j = 1; j < cur.size(); ++j) {
      acc = advance(acc);
      for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] += f_of_v[j][i];
      grid_field& nj = next[j];
      nj = sol.linear[j];
      double local_gap = 0;
      for (std::int64_t i = 0; i < nj.size(); ++i) {
        nj[i] += dt * (acc[i] - 0.5 * f_of_v[j][i]);
        local_gap = std::max(local_gap, std::abs(nj[i] - cur[j][i]));
      }
      gap = std::max(gap, local_gap);
    }
    return gap;
  };

  std::vector<grid_field> vnext(sol.times.size(), grid_field(g));
  sol.converged = false;
  bool overflowed = false;
  for (int k = 0; k < k_max; ++k) {
    sol.gap = sweep(v, vnext);
    ++sol.iterations;

    // diverging iterates (violated certificate, long horizon) overflow; that
    // is a no-convergence outcome, not a broken propagator
    for (std::size_t j = 0; j < vnext.size() && !overflowed; ++j)
      for (std::int64_t i = 0; i < vnext[j].size(); ++i)
        if (!std::isfinite(vnext[j][i])) {
          overflowed = true;
          break;
        }
    if (overflowed) {
      sol.gap = std::numeric_limits<double>::infinity();
      break;  // keep the last finite iterate
    }

    double scale = 0;
    for (std::size_t j = 0; j < vnext.size(); ++j) scale = std::max(scale, sup_norm(vnext[j]));
    for (std::size_t j = 0; j < vnext.size(); ++j) {
      for (std::int64_t i = 0; i < vnext[j].size(); ++i)
        sol.monotonicity_margin = std::min(sol.monotonicity_margin, vnext[j][i] - v[j][i]);
      if (std::isfinite(sol.omega_disc[j])) {
        const grid_field& lin = sol.linear[j];
        for (std::int64_t i = 0; i < vnext[j].size(); ++i)
          sol.barrier_margin =
              std::max(sol.barrier_margin, vnext[j][i] - sol.omega_disc[j] * lin[i]);
      }
    }
    require(sol.monotonicity_margin >= -1e-12 * std::max(scale, 1e-300),
            errc::nonmonotone_iterates, "Picard iterates decreased: broken propagator");

    v.swap(vnext);
    if (sol.gap < tol) {
      sol.converged = true;
      break;
    }
  }

  // fixed-point residual under one extra Duhamel application
  sol.residual = overflowed ? std::numeric_limits<double>::infinity() : sweep(v, vnext);
  sol.u = std::move(v);
  return sol;
}

struct sandwich_report {
  bool pass = false;
  bool chain_ok = true;        ///< omega <= C when the certificate is satisfied
  double worst_lower = 0;      ///< min (u - linear)/scale over snapshots (>= -1e-9 required)
  double worst_upper = 0;      ///< max (u - omega*linear)/scale (<= 1e-9 required)
  double max_ratio = 0;        ///< max u/linear observed
  double max_omega = 0;        ///< sup of the discrete barrier
  double omega_closed_ratio = 0;  ///< max omega_disc/omega_closed over snapshots
  double worst_time = 0;
  std::int64_t worst_index = 0;
};

/// Pointwise two-sided check e^{-tL}u0 <= u(t) <= omega(t) e^{-tL}u0 <= C e^{-tL}u0
/// at every snapshot, within 1e-9 * sup scale.  The pointwise comparison uses
/// the quadrature-consistent barrier carried by the solution; the supplied
/// closed-form omega curve is compared against it in the report.
inline sandwich_report sandwich_check(const mild_solution& sol, const existence_certificate& cert,
                                      std::span<const curve_point> omega) {
  require(sol.converged, errc::validation_error, "sandwich_check needs a converged solution");
  require(sol.barrier_finite, errc::barrier_blowup, "barrier diverged on the horizon");
  sandwich_report rep;
  rep.worst_lower = std::numeric_limits<double>::infinity();
  rep.worst_upper = -std::numeric_limits<double>::infinity();

  for (std::size_t j = 0; j < sol.times.size(); ++j) {
    const grid_field& uj = sol.u[j];
    const grid_field& lj = sol.linear[j];
    const double om = sol.omega_disc[j];
    const double scale = std::max({sup_norm(uj), om * sol.sup_linear[j], 1e-300});
    // ratios are only meaningful above the FP noise floor of the far tails
    const double ratio_floor = 1e-12 * sol.sup_linear[j];
    for (std::int64_t i = 0; i < uj.size(); ++i) {
      const double lower = (uj[i] - lj[i]) / scale;
      const double upper = (uj[i] - om * lj[i]) / scale;
      if (lower < rep.worst_lower) {
        rep.worst_lower = lower;
        if (upper <= rep.worst_upper) {
          rep.worst_time = sol.times[j];
          rep.worst_index = i;
        }
      }
      if (upper > rep.worst_upper) {
        rep.worst_upper = upper;
        rep.worst_time = sol.times[j];
        rep.worst_index = i;
      }
      if (lj[i] > ratio_floor) rep.max_ratio = std::max(rep.max_ratio, uj[i] / lj[i]);
    }
    rep.max_omega = std::max(rep.max_omega, om);
  }

  // closed-form omega at snapshot times (interpolated) vs the discrete barrier
  rep.omega_closed_ratio = 0;
  for (std::size_t j = 0; j < sol.times.size(); ++j) {
    const double t = sol.times[j];
    double oc = 1.0;
    for (std::size_t m = 1; m < omega.size(); ++m) {
      if (omega[m].t >= t || m + 1 == omega.size()) {
        const double t0 = omega[m - 1].t, t1 = omega[m].t;
        const double w = t1 > t0 ? std::clamp((t - t0) / (t1 - t0), 0.0, 1.0) : 0.0;
        oc = omega[m - 1].value + w * (omega[m].value - omega[m - 1].value);
        break;
      }
    }
    if (oc > 0) rep.omega_closed_ratio = std::max(rep.omega_closed_ratio, sol.omega_disc[j] / oc);
  }

  if (cert.verdict == certificate_verdict::satisfied && std::isfinite(cert.growth_constant))
    rep.chain_ok = rep.max_omega <= cert.growth_constant * (1.0 + 1e-9);

  rep.pass = rep.worst_lower >= -1e-9 && rep.worst_upper <= 1e-9 && rep.chain_ok;
  return rep;
}

/// eps * h_gamma: the small-data family of the decay theorem.
inline grid_field small_data_generator(const group_model& g, double gamma, double eps) {
  require(eps >= 0, errc::validation_error, "epsilon must be >= 0");
  grid_field u = heat_kernel(g, gamma);
  for (std::int64_t i = 0; i < u.size(); ++i) u[i] *= eps;
  u.time_tag.reset();
  return u;
}

struct envelope_report {
  bool pass = false;
  double c_env = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();  ///< max (u - C h)/sup(C h)
  double worst_time = 0;
  std::int64_t worst_index = 0;
};

/// Checks u(t_j) <= C_env * h_{t_j + gamma} pointwise at every snapshot.
/// Violations are reported, not fatal.
inline envelope_report decay_envelope_check(const mild_solution& sol, double gamma,
                                            double c_env) {
  require(!sol.u.empty(), errc::validation_error, "empty solution");
  require(gamma > 0 && c_env >= 0, errc::validation_error, "need gamma > 0 and C_env >= 0");
  const group_model& g = sol.u.front().model();
  envelope_report rep;
  rep.c_env = c_env;
  for (std::size_t j = 0; j < sol.times.size(); ++j) {
    const grid_field env = heat_kernel(g, sol.times[j] + gamma);
    const double scale = std::max(c_env * sup_norm(env), 1e-300);
    const grid_field& uj = sol.u[j];
    for (std::int64_t i = 0; i < uj.size(); ++i) {
      const double m = (uj[i] - c_env * env[i]) / scale;
      if (m > rep.worst_margin) {
        rep.worst_margin = m;
        rep.worst_time = sol.times[j];
        rep.worst_index = i;
      }
    }
  }
  rep.pass = rep.worst_margin <= 1e-9;
  return rep;
}

}  // namespace heatlab
