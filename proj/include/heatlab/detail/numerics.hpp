#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "heatlab/errors.hpp"

namespace heatlab::detail {

struct line_fit {
  double slope = 0;
  double intercept = 0;
};

/// Least-squares line y = intercept + slope*x.
inline line_fit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, errc::insufficient_samples,
          "need at least two samples for a line fit");
  double sx = 0, sy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  line_fit f;
  if (sxx <= 0) {
    f.slope = 0;
    f.intercept = my;
  } else {
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
  }
  return f;
}

/// Nodes 0 = s_0 < s_1 < ... < s_n = s_max with geometric spacing from s_lo up.
inline std::vector<double> geometric_grid(double s_max, double s_lo, int nodes) {
  require(s_max > 0 && s_lo > 0 && s_lo < s_max && nodes >= 8, errc::validation_error,
          "geometric grid needs 0 < s_lo < s_max and >= 8 nodes");
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(nodes) + 2);
  s.push_back(0.0);
  const double ratio = std::pow(s_max / s_lo, 1.0 / (nodes - 1));
  double v = s_lo;
  for (int i = 0; i < nodes; ++i) {
    s.push_back(v);
    v *= ratio;
  }
  s.back() = s_max;
  return s;
}

/// Cumulative trapezoid of samples (x_i, f_i); result[i] = integral over [x_0, x_i].
inline std::vector<double> cumulative_trapezoid(std::span<const double> x,
                                                std::span<const double> f) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]);
  return out;
}

inline bool nearly_equal(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace heatlab::detail
