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
#include "heatlab/mild_solver.hpp"
#include "heatlab/nonlinearity.hpp"

namespace heatlab {

enum class blowup_class { blowup, global_so_far, inconclusive };
enum class stop_reason { threshold_hit, dt_collapse, horizon_reached };

inline const char* blowup_class_name(blowup_class c) {
  switch (c) {
    case blowup_class::blowup: return "blowup";
    case blowup_class::global_so_far: return "global_so_far";
    case blowup_class::inconclusive: return "inconclusive";
  }
  return "unknown";
}

inline const char* stop_reason_name(stop_reason r) {
  switch (r) {
    case stop_reason::threshold_hit: return "threshold-hit";
    case stop_reason::dt_collapse: return "dt-collapse";
    case stop_reason::horizon_reached: return "horizon-reached";
  }
  return "unknown";
}

struct trace_sample {
  double t = 0, sup = 0, mass_value = 0, dt = 0;
};

struct monitor_report {
  std::vector<double> times;
  std::vector<double> values;  ///< t^{1/(p-1)} ||e^{-tL}theta0||_inf
  double a_p = 0;              ///< (K2(p-1))^{-1/(p-1)}
  double max_ratio = 0;        ///< max value / A_p
  double slack = 0;
  bool violated = false;  ///< max ratio > 1 + slack: no global mild supersolution
  double first_crossing = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

struct tstar_fit {
  double t_star = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  double rate_ratio = std::numeric_limits<double>::quiet_NaN();  ///< fitted rate / K(p-1)
};

struct blowup_controls {
  double dt0 = 1e-2;
  double dt_min = 1e-12;
  double t_max = 100.0;
  double safety = 0.1;  ///< per-step relative sup-norm growth cap
  double m_max = 0;     ///< blow-up threshold; 0 -> 1e8 * sup(u0)
  std::int64_t max_steps = 4'000'000;
  bool with_ap_trace = true;
  int ap_probes = 32;
  double monitor_slack = 0.01;
};

struct blowup_report {
  blowup_class classification = blowup_class::inconclusive;
  stop_reason reason = stop_reason::horizon_reached;
  tstar_fit fit;
  std::vector<trace_sample> trace;
  monitor_report ap;  ///< empty probes when disabled or K2 absent
  double horizon = 0;
  double m_max_used = 0;
};

/// Least-squares fit of sup(t) ~ (K(p-1)(T*-t))^{-1/(p-1)} over the terminal
/// decade of a blow-up trace (>= 10 points required).
inline tstar_fit estimate_blowup_time(std::span<const trace_sample> trace,
                                      const nonlinearity& nl) {
  require(trace.size() >= 2, errc::fit_degenerate, "trace too short");
  double sup_max = 0;
  for (const auto& s : trace) sup_max = std::max(sup_max, s.sup);
  std::vector<double> ts, ys;
  for (const auto& s : trace) {
    if (s.sup >= 0.1 * sup_max) {
      ts.push_back(s.t);
      ys.push_back(std::pow(s.sup, 1.0 - nl.p));
    }
  }
  require(ts.size() >= 10, errc::fit_degenerate,
          "need >= 10 trace points in the terminal decade");
  for (std::size_t i = 1; i < ts.size(); ++i)
    require(ys[i] <= ys[i - 1] * (1.0 + 1e-9), errc::fit_degenerate,
            "terminal trace is not monotone");
  const auto line = detail::fit_line(ts, ys);  // y = intercept + slope * t
  require(line.slope < 0, errc::fit_degenerate, "terminal trace has no blow-up rate");
  tstar_fit fit;
  fit.t_star = -line.intercept / line.slope;
  double ss = 0, scale = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = ys[i] - (line.intercept + line.slope * ts[i]);
    ss += r * r;
    scale += ys[i] * ys[i];
  }
  fit.residual = std::sqrt(ss / std::max(scale, 1e-300));
  fit.rate_ratio = nl.k1 > 0 ? -line.slope / (nl.k1 * (nl.p - 1.0))
                             : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

/// Necessary-condition monitor: checks
/// t^{1/(p-1)} ||e^{-tL}theta0||_inf <= A_p = (K2(p-1))^{-1/(p-1)} at the
/// probe times; a violation certifies that no global mild supersolution with
/// data theta0 exists up to max(times).
inline monitor_report ap_monitor(const group_model& g, const grid_field& theta0,
                                 const nonlinearity& nl, std::span<const double> times,
                                 double slack = 0.01) {
  nl.validate();
  require(nl.k2.has_value(), errc::validation_error, "A_p monitor needs the lower constant K2");
  assert_nonnegative(theta0, "ap_monitor needs nonnegative data");
  require(!times.empty(), errc::validation_error, "need probe times");

  monitor_report rep;
  rep.slack = slack;
  rep.a_p = std::pow(*nl.k2 * (nl.p - 1.0), -1.0 / (nl.p - 1.0));
  rep.times.assign(times.begin(), times.end());
  const auto curve = semigroup_curve(g, theta0, times);
  rep.values.resize(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i)
    rep.values[i] = std::pow(curve[i].t, 1.0 / (nl.p - 1.0)) * curve[i].sup;

  for (std::size_t i = 0; i < rep.values.size(); ++i) {
    rep.max_ratio = std::max(rep.max_ratio, rep.values[i] / rep.a_p);
    if (std::isnan(rep.first_crossing) && rep.values[i] >= rep.a_p) {
      if (i == 0) {
        rep.first_crossing = rep.times[0];
      } else {
        const double d0 = rep.values[i - 1] - rep.a_p, d1 = rep.values[i] - rep.a_p;
        rep.first_crossing =
            rep.times[i - 1] + (rep.times[i] - rep.times[i - 1]) * (-d0) / (d1 - d0);
      }
    }
  }
  rep.violated = rep.max_ratio > 1.0 + slack;
  return rep;
}

/// Shifted monitor: reruns the A_p check with data u(tau);
/// valid because the time-shifted solution solves the same integral equation.
inline monitor_report shifted_ap_monitor(const mild_solution& sol, double tau,
                                         const nonlinearity& nl, std::span<const double> times,
                                         double slack = 0.01) {
  require(!sol.u.empty(), errc::validation_error, "empty solution");
  const double t_end = sol.times.back();
  std::size_t idx = sol.times.size();
  for (std::size_t j = 0; j < sol.times.size(); ++j)
    if (std::abs(sol.times[j] - tau) <= 1e-12 * std::max(1.0, t_end)) {
      idx = j;
      break;
    }
  require(idx < sol.times.size(), errc::tau_not_snapshot, "tau is not a snapshot time");
  monitor_report rep = ap_monitor(sol.u.front().model(), sol.u[idx], nl, times, slack);
  rep.note = "shifted monitor: data u(tau), tau = " + std::to_string(tau);
  return rep;
}

namespace detail {

/// One Strang step: exact pointwise ODE half-flow, full semigroup step,
/// ODE half-flow.  Custom reaction rules take 8 RK4 substeps per half-step.
inline bool strang_step(const heat_operator& op, const nonlinearity& nl, const grid_field& u,
                        double dt, grid_field& out) {
  const auto half_flow = [&](grid_field& f) -> bool {
    if (nl.is_power()) {
      if (nl.k1 == 0.0) return true;
      bool singular = false;
      for (std::int64_t i = 0; i < f.size(); ++i) {
        f[i] = power_ode_flow(f[i], nl.k1, nl.p, 0.5 * dt, singular);
        if (singular) return false;
      }
      return true;
    }
    const int sub = 8;
    const double h = 0.5 * dt / sub;
    for (std::int64_t i = 0; i < f.size(); ++i) {
      double y = f[i];
      for (int s = 0; s < sub; ++s) {
        const double k1 = nl.f(y);
        const double k2 = nl.f(y + 0.5 * h * k1);
        const double k3 = nl.f(y + 0.5 * h * k2);
        const double k4 = nl.f(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!std::isfinite(y)) return false;
      }
      f[i] = y;
    }
    return true;
  };

  out = u;
  if (!half_flow(out)) return false;
  out = op.apply_time(out, dt);
  return half_flow(out);
}

}  // namespace detail

/// Direct nonlinear integration with adaptive Strang splitting and blow-up
/// detection.  Blow-up is declared on the sup-norm threshold or on time-step
/// collapse; "inconclusive" is reserved for runs the detector cannot classify
/// honestly.
inline blowup_report integrate_nonlinear(const group_model& g, const grid_field& u0,
                                         const nonlinearity& nl, const blowup_controls& ctl) {
  nl.validate();
  assert_nonnegative(u0, "integrate_nonlinear needs nonnegative data");
  require(&u0.model() == &g, errc::validation_error, "field lattice does not match model");
  require(ctl.dt0 > 0 && ctl.dt_min > 0 && ctl.t_max > 0 && ctl.safety > 0,
          errc::validation_error, "controls must be positive");

  const double sup0 = sup_norm(u0);
  blowup_report rep;
  rep.horizon = ctl.t_max;
  rep.m_max_used = ctl.m_max > 0 ? ctl.m_max : 1e8 * std::max(sup0, 1e-300);
  if (sup0 > 0)
    require(rep.m_max_used >= 1e3 * sup0, errc::validation_error,
            "M_max must be at least 1e3 * sup(u0)");

  const heat_operator op = build_propagator(g, 0.0, default_scheme(g));

  grid_field u = u0;
  grid_field trial(g);
  double t = 0, dt = std::min(ctl.dt0, ctl.t_max);
  rep.trace.push_back({0.0, sup0, mass(u0), dt});

  bool stopped = false;
  bool hit_horizon = false;
  for (std::int64_t step = 0; step < ctl.max_steps && !stopped; ++step) {
    if (t >= ctl.t_max * (1.0 - 1e-12)) {
      rep.reason = stop_reason::horizon_reached;
      hit_horizon = true;
      break;
    }
    const double dt_eff = std::min(dt, ctl.t_max - t);
    const bool ok = detail::strang_step(op, nl, u, dt_eff, trial);
    const double sup_u = sup_norm(u);
    const double growth = ok && sup_u > 0 ? sup_norm(trial) / sup_u - 1.0 : 0.0;
    if (!ok || growth > ctl.safety) {
      dt *= 0.5;
      if (dt < ctl.dt_min) {
        rep.reason = stop_reason::dt_collapse;
        stopped = true;
      }
      continue;
    }
    u = trial;
    t += dt_eff;
    rep.trace.push_back({t, sup_norm(u), mass(u), dt_eff});
    if (sup_norm(u) >= rep.m_max_used) {
      rep.reason = stop_reason::threshold_hit;
      stopped = true;
      break;
    }
    if (growth < 0.25 * ctl.safety) dt = std::min(dt * 1.25, 1e3 * ctl.dt0);
  }
  require(stopped || hit_horizon, errc::internal_invariant,
          "integrate_nonlinear exhausted max_steps");

  switch (rep.reason) {
    case stop_reason::threshold_hit:
      rep.classification = blowup_class::blowup;
      break;
    case stop_reason::dt_collapse:
      rep.classification = blowup_class::blowup;
      break;
    case stop_reason::horizon_reached:
      rep.classification = blowup_class::global_so_far;
      break;
  }
  if (rep.classification == blowup_class::blowup) {
    try {
      rep.fit = estimate_blowup_time(rep.trace, nl);
    } catch (const error&) {
      // dt collapsed without a credible terminal growth trace
      rep.classification = blowup_class::inconclusive;
    }
  } else if (!rep.trace.empty() && sup0 > 0) {
    // horizon reached while still climbing fast: refuse to call it global
    const double sup_end = rep.trace.back().sup;
    const std::size_t n = rep.trace.size();
    if (sup_end > 1e3 * sup0 && n >= 2 &&
        rep.trace[n - 1].sup > rep.trace[n - 2].sup * (1.0 + 0.5 * ctl.safety))
      rep.classification = blowup_class::inconclusive;
  }

  if (ctl.with_ap_trace && nl.k2.has_value() && sup0 > 0) {
    const double t_end = std::max(rep.trace.back().t, 1e-6);
    std::vector<double> probes;
    const int n = std::max(8, ctl.ap_probes);
    const double t_lo = t_end * 1e-3;
    for (int i = 0; i < n; ++i)
      probes.push_back(t_lo * std::pow(t_end / t_lo, static_cast<double>(i) / (n - 1)));
    probes.back() = t_end;
    rep.ap = ap_monitor(g, u0, nl, probes, ctl.monitor_slack);
  }
  return rep;
}

struct mass_growth_report {
  std::vector<double> s_values;
  std::vector<double> products;  ///< ||h_{s+1}^p||_1 * (s+1)
  double lower_bound = 0;
  double flatness = 0;   ///< max/min - 1 over the probed range
  double log_slope = 0;  ///< slope of log(product) vs log(s+1)
  bool bounded_below = false;
  double slack = 0;
  std::string growth_class;  ///< "logarithmic" (flat product) or "super-logarithmic"
  double divergence_rate = 0;  ///< mean product: lower bound C in C*log(t) when flat
  std::string note = "uses fitted envelope constants, not analytic ones";
};

/// Critical-exponent mass-growth monitor: at p = p_F the product
/// ||h_{s+1}^p||_1 (s+1) must stay bounded below, forcing the logarithmic
/// divergence of the L^1 norm.  Compact models (D = 0) have no critical p;
/// they are probed anyway and classified by the observed growth.
inline mass_growth_report mass_growth_monitor(const group_model& g, const nonlinearity& nl,
                                              std::span<const double> s_range,
                                              double slack = 0.10) {
  nl.validate();
  require(!s_range.empty(), errc::validation_error, "need an s range");
  if (g.global_dim() > 0)
    require(std::abs(0.5 * g.global_dim() * (nl.p - 1.0) - 1.0) <= 1e-9,
            errc::not_critical_exponent, "mass growth monitor needs p = p_F");

  mass_growth_report rep;
  rep.slack = slack;
  std::vector<double> kernel_times;
  for (double s : s_range) {
    require(s >= 0, errc::validation_error, "s must be >= 0");
    kernel_times.push_back(s + 1.0);
  }
  require(std::is_sorted(kernel_times.begin(), kernel_times.end()), errc::validation_error,
          "s range must be increasing");

  // evolve the delta once, sampling ||h^p||_1 at each probe
  const heat_operator op = build_propagator(g, 0.0, default_scheme(g));
  grid_field h = delta_field(g);
  double t_cur = 0;
  for (std::size_t i = 0; i < kernel_times.size(); ++i) {
    require(std::sqrt(kernel_times[i]) >= 2.0 * g.max_spacing(), errc::kernel_unresolved,
            "kernel under-resolved in the s range");
    h = op.apply_time(h, kernel_times[i] - t_cur);
    t_cur = kernel_times[i];
    double lp = 0;
    for (std::int64_t k = 0; k < h.size(); ++k)
      lp += std::pow(std::max(h[k], 0.0), nl.p);
    lp *= g.haar_weight();
    rep.s_values.push_back(s_range[i]);
    rep.products.push_back(lp * kernel_times[i]);
  }

  double lo = std::numeric_limits<double>::infinity(), hi = 0, mean = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < rep.products.size(); ++i) {
    lo = std::min(lo, rep.products[i]);
    hi = std::max(hi, rep.products[i]);
    mean += rep.products[i];
    lx.push_back(std::log(kernel_times[i]));
    ly.push_back(std::log(std::max(rep.products[i], 1e-300)));
  }
  mean /= static_cast<double>(rep.products.size());
  rep.lower_bound = lo;
  rep.flatness = lo > 0 ? hi / lo - 1.0 : std::numeric_limits<double>::infinity();
  rep.log_slope = lx.size() >= 2 ? detail::fit_line(lx, ly).slope : 0.0;
  rep.bounded_below = lo > 0 && rep.flatness <= slack;
  rep.divergence_rate = mean;
  if (rep.log_slope >= 0.5)
    rep.growth_class = "super-logarithmic";
  else if (std::abs(rep.log_slope) <= 0.2)
    rep.growth_class = "logarithmic";
  else
    rep.growth_class = "indeterminate";
  return rep;
}

}  // namespace heatlab
