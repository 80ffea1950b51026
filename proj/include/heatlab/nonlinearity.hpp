#pragma once

#include <cmath>
#include <functional>
#include <optional>

#include "heatlab/errors.hpp"

namespace heatlab {

/// Reaction term with exponent p and the two-sided power bounds
/// K2 u^p <= f(u) <= K1 u^p.  The default evaluation rule is f(u) = K1 u^p;
/// K1 == 0 encodes f == 0.  A custom rule must stay nonnegative and
/// nondecreasing (checked on samples).
struct nonlinearity {
  double p = 2.0;
  double k1 = 1.0;
  std::optional<double> k2;
  std::function<double(double)> custom_f;

  double f(double u) const { return custom_f ? custom_f(u) : k1 * std::pow(u, p); }
  bool is_power() const { return !custom_f; }

  void validate() const {
    require(p > 1.0, errc::validation_error, "nonlinearity exponent p must exceed 1");
    require(k1 >= 0.0, errc::validation_error, "upper constant K1 must be >= 0");
    if (k2) {
      require(*k2 > 0.0, errc::validation_error, "lower constant K2 must be positive");
      require(*k2 <= k1 + 1e-15, errc::validation_error, "K2 must not exceed K1");
    }
    if (custom_f) {
      double prev = custom_f(0.0);
      require(prev >= 0.0, errc::validation_error, "f must be nonnegative");
      for (int i = 1; i <= 64; ++i) {
        const double u = 10.0 * i / 64.0;
        const double v = custom_f(u);
        require(v >= 0.0 && v >= prev - 1e-12, errc::validation_error,
                "f must be nondecreasing on [0,10] (sampled)");
        prev = v;
      }
    }
  }
};

inline nonlinearity power_nonlinearity(double p, double k = 1.0) {
  nonlinearity nl;
  nl.p = p;
  nl.k1 = k;
  nl.k2 = k > 0 ? std::optional<double>(k) : std::nullopt;
  return nl;
}

/// Exact flow of u' = K u^p over time dt: u -> (u^{1-p} - K(p-1)dt)^{-1/(p-1)}.
/// Sets `singular` when the flow blows up inside the step.
inline double power_ode_flow(double u, double k, double p, double dt, bool& singular) {
  if (k == 0.0 || u <= 0.0 || dt == 0.0) return u;
  const double bracket = std::pow(u, 1.0 - p) - k * (p - 1.0) * dt;
  if (bracket <= 0.0) {
    singular = true;
    return u;
  }
  return std::pow(bracket, -1.0 / (p - 1.0));
}

/// Blow-up time of the spatially constant ODE u' = K u^p from u0.
inline double constant_data_blowup_time(double u0, double k, double p) {
  require(u0 > 0 && k > 0 && p > 1, errc::validation_error, "need u0, K > 0 and p > 1");
  return std::pow(u0, 1.0 - p) / (k * (p - 1.0));
}

}  // namespace heatlab
