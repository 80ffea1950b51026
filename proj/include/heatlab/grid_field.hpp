#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/group_model.hpp"

namespace heatlab {

/// A sampled real function on the lattice of a group_model, with the model's
/// Haar weights.  The referenced model must outlive the field.
class grid_field {
 public:
  grid_field() = default;
  explicit grid_field(const group_model& g, double fill = 0.0)
      : model_(&g), v_(static_cast<std::size_t>(g.size()), fill) {}

  const group_model& model() const { return *model_; }
  bool valid() const { return model_ != nullptr; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }
  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  std::span<const double> values() const { return v_; }
  std::span<double> values() { return v_; }

  std::optional<double> time_tag;  ///< diffusion time, when the field is a kernel

 private:
  const group_model* model_ = nullptr;
  std::vector<double> v_;
};

/// Haar-weighted lattice sum of the field (the discrete L^1 pairing with the
/// Haar measure; linear in the field).
inline double mass(const grid_field& u) {
  double s = 0;
  for (double v : u.values()) s += v;
  return s * u.model().haar_weight();
}

inline double sup_norm(const grid_field& u) {
  double m = 0;
  for (double v : u.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double min_value(const grid_field& u) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : u.values()) m = std::min(m, v);
  return m;
}

/// Nonnegativity up to roundoff: min >= -1e-12 * sup.
inline bool is_nonnegative(const grid_field& u) {
  return min_value(u) >= -1e-12 * sup_norm(u);
}

inline void assert_nonnegative(const grid_field& u, const char* what) {
  require(is_nonnegative(u), errc::negative_data, what);
}

/// Discrete delta at the group identity with unit Haar mass.
inline grid_field delta_field(const group_model& g) {
  grid_field d(g, 0.0);
  d[g.flat(g.identity_index())] = 1.0 / g.haar_weight();
  return d;
}

}  // namespace heatlab
