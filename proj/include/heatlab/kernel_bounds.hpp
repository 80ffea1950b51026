#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "heatlab/detail/numerics.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/grid_field.hpp"
#include "heatlab/group_model.hpp"
#include "heatlab/heat_engine.hpp"

namespace heatlab {

struct bound_report {
  std::vector<double> times, radii;
  double c_low = 0, c_up = 0;  ///< envelope rates; lower envelope decays no slower (c_up <= c_low)
  double big_c_low = 0, big_c_up = 0;  ///< certified prefactors
  double violation_ratio = 0;  ///< worst multiplicative scatter around the per-side fits
  double slack = 0;
  bool pass = false;
  std::int64_t probes = 0;
  std::string note;
};

/// Fits two-sided Gaussian envelopes
///   C_low V(sqrt t)^{-1} e^{-c_low r^2/t} <= h_t(x) <= C_up V(sqrt t)^{-1} e^{-c_up r^2/t}
/// over shells around the probe radii at the probe times.  Constants are
/// fitted, not assumed; pass means the scatter around the per-side fits stays
/// within `slack` and c_up <= c_low.
inline bound_report verify_kernel_bounds(const group_model& g, std::span<const double> times,
                                         std::span<const double> radii, double slack) {
  require(!times.empty() && !radii.empty(), errc::validation_error,
          "need probe times and radii");
  require(slack >= 1.0, errc::validation_error, "slack is a multiplicative ratio >= 1");
  bound_report rep;
  rep.times.assign(times.begin(), times.end());
  rep.radii.assign(radii.begin(), radii.end());
  rep.slack = slack;

  struct probe {
    double xi;  // r^2 / t
    double y;   // log(h * V(sqrt t))
  };
  std::vector<probe> mins, maxs;

  const double shell_half = std::max(g.max_spacing(), 0.0);
  std::vector<double> sorted_times(times.begin(), times.end());
  std::sort(sorted_times.begin(), sorted_times.end());

  // one incremental evolution of the delta across the sorted probe times
  const heat_operator op = build_propagator(g, 0.0, default_scheme(g));
  grid_field h = delta_field(g);
  double t_cur = 0;
  for (double t : sorted_times) {
    require(t > 0, errc::validation_error, "probe times must be positive");
    require(std::sqrt(t) >= 2.0 * g.max_spacing(), errc::kernel_unresolved,
            "kernel under-resolved at a probe time");
    h = op.apply_time(h, t - t_cur);
    t_cur = t;
    const double sup = sup_norm(h);
    const double floor = 1e-13 * sup;
    const double vol = ball_volume(g, std::sqrt(t));
    for (double r : radii) {
      const double half = std::max(shell_half, 0.05 * r);
      double vmin = std::numeric_limits<double>::infinity(), vmax = 0;
      double rho_min = 0, rho_max = 0;
      for (std::int64_t f = 0; f < g.size(); ++f) {
        const double rho = g.quasi_distance_flat(f);
        if (std::abs(rho - r) > half) continue;
        const double v = h[f];
        if (v < -1e-12 * sup)
          fail(errc::fit_failure, "negative kernel value at a probe: discretization artifact");
        if (v < vmin) {
          vmin = v;
          rho_min = rho;
        }
        if (v > vmax) {
          vmax = v;
          rho_max = rho;
        }
      }
      if (vmax <= floor) continue;  // shell below the noise floor (or empty)
      if (vmin <= floor) continue;
      mins.push_back({rho_min * rho_min / t, std::log(vmin * vol)});
      maxs.push_back({rho_max * rho_max / t, std::log(vmax * vol)});
      rep.probes += 2;
    }
  }
  require(mins.size() >= 2 && maxs.size() >= 2, errc::fit_failure,
          "not enough resolvable probes for an envelope fit");

  auto side_fit = [](const std::vector<probe>& pts) {
    std::vector<double> xs, ys;
    for (const auto& p : pts) {
      xs.push_back(p.xi);
      ys.push_back(p.y);
    }
    double spread = *std::max_element(xs.begin(), xs.end()) - *std::min_element(xs.begin(), xs.end());
    if (spread < 1e-9) {
      // degenerate: compact saturation, the bound reduces to constants
      double mean = 0;
      for (double y : ys) mean += y;
      return detail::line_fit{0.0, mean / static_cast<double>(ys.size())};
    }
    return detail::fit_line(xs, ys);
  };

  auto f_min = side_fit(mins);
  auto f_max = side_fit(maxs);
  double c_low = -f_min.slope;
  double c_up = -f_max.slope;
  if (c_up > c_low) {
    // fall back to the pooled slope when the sides cross
    std::vector<probe> all(mins);
    all.insert(all.end(), maxs.begin(), maxs.end());
    auto f_all = side_fit(all);
    c_low = c_up = -f_all.slope;
    f_min.intercept = f_max.intercept = f_all.intercept;
    f_min.slope = f_max.slope = f_all.slope;
  }
  rep.c_low = c_low;
  rep.c_up = c_up;

  // anchor the per-side intercepts with the chosen slopes
  auto intercept_for = [](const std::vector<probe>& pts, double c) {
    double mean = 0;
    for (const auto& p : pts) mean += p.y + c * p.xi;
    return mean / static_cast<double>(pts.size());
  };
  const double a_min = intercept_for(mins, c_low);
  const double a_max = intercept_for(maxs, c_up);

  double worst = 0;
  for (const auto& p : mins) worst = std::max(worst, std::abs(p.y - (a_min - c_low * p.xi)));
  for (const auto& p : maxs) worst = std::max(worst, std::abs(p.y - (a_max - c_up * p.xi)));
  rep.violation_ratio = std::exp(worst);

  // certified envelope constants: shift each side to enclose every probe
  double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
  for (const auto& p : mins) lo = std::min(lo, p.y + c_low * p.xi);
  for (const auto& p : maxs) hi = std::max(hi, p.y + c_up * p.xi);
  rep.big_c_low = std::exp(lo);
  rep.big_c_up = std::exp(hi);

  rep.pass = std::isfinite(rep.big_c_low) && std::isfinite(rep.big_c_up) &&
             rep.big_c_low > 0 && c_up <= c_low + 1e-12 && rep.violation_ratio <= slack;
  if (!rep.pass && rep.violation_ratio > slack) rep.note = "scatter exceeds slack";
  return rep;
}

}  // namespace heatlab
