#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "heatlab/detail/numerics.hpp"
#include "heatlab/errors.hpp"

namespace heatlab {

enum class group_kind { euclidean, torus, heisenberg1 };

enum class axis_rule { periodic, dirichlet };

struct axis_spec {
  int points = 0;       ///< N, lattice points along this axis
  double spacing = 0;   ///< h > 0
  axis_rule rule = axis_rule::periodic;
  double extent() const { return points * spacing; }
};

struct group_spec {
  group_kind kind = group_kind::torus;
  std::vector<axis_spec> axes;
};

/// Korányi homogeneous norm on H^1, equivalent to the Carnot-Carathéodory
/// distance up to constants.
inline double koranyi_gauge(double x, double y, double z) {
  const double r2 = x * x + y * y;
  return std::pow(r2 * r2 + 16.0 * z * z, 0.25);
}

/// H^1 group law (x,y,z)*(a,b,c) = (x+a, y+b, z+c+(x*b-y*a)/2).
inline std::array<double, 3> heisenberg_multiply(const std::array<double, 3>& g,
                                                 const std::array<double, 3>& h) {
  return {g[0] + h[0], g[1] + h[1], g[2] + h[2] + 0.5 * (g[0] * h[1] - g[1] * h[0])};
}

/// A concrete group geometry with its uniform lattice and Haar weights.
/// Immutable after construction; all member queries are pure.
class group_model {
 public:
  group_kind kind() const { return kind_; }
  int rank() const { return static_cast<int>(axes_.size()); }
  int topological_dim() const { return rank(); }
  int local_dim() const { return d_; }
  int global_dim() const { return big_d_; }

  const axis_spec& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }
  std::int64_t size() const { return size_; }
  double haar_weight() const { return haar_w_; }
  double total_mass() const { return total_mass_; }
  double max_spacing() const { return max_h_; }
  bool fully_periodic() const { return fully_periodic_; }

  /// coordinate = index*h - offset, exactly
  double offset(int a) const { return offsets_[static_cast<std::size_t>(a)]; }
  double coord(int a, int idx) const { return idx * axes_[static_cast<std::size_t>(a)].spacing - offsets_[static_cast<std::size_t>(a)]; }

  std::span<const int> identity_index() const { return {identity_.data(), axes_.size()}; }

  std::int64_t flat(std::span<const int> idx) const {
    std::int64_t f = 0;
    for (std::size_t a = 0; a < axes_.size(); ++a) f = f * axes_[a].points + idx[a];
    return f;
  }
  void unflat(std::int64_t f, std::span<int> idx) const {
    for (std::size_t a = axes_.size(); a-- > 0;) {
      idx[a] = static_cast<int>(f % axes_[a].points);
      f /= axes_[a].points;
    }
  }

  /// Shortest representative of a periodic coordinate in [-L/2, L/2).
  double wrap(int a, double x) const {
    const double L = axes_[static_cast<std::size_t>(a)].extent();
    x = std::fmod(x, L);
    if (x >= 0.5 * L) x -= L;
    if (x < -0.5 * L) x += L;
    return x;
  }

  /// Quasi-distance from the group identity to the lattice point.
  /// euclidean: plain Euclidean norm; torus: shortest-wrap Euclidean norm;
  /// heisenberg1: Korányi gauge with the periodic z reduced to its shortest
  /// representative.
  double quasi_distance(std::span<const int> idx) const {
    switch (kind_) {
      case group_kind::euclidean: {
        double s = 0;
        for (int a = 0; a < rank(); ++a) {
          const double x = coord(a, idx[static_cast<std::size_t>(a)]);
          s += x * x;
        }
        return std::sqrt(s);
      }
      case group_kind::torus: {
        double s = 0;
        for (int a = 0; a < rank(); ++a) {
          const double x = wrap(a, coord(a, idx[static_cast<std::size_t>(a)]));
          s += x * x;
        }
        return std::sqrt(s);
      }
      case group_kind::heisenberg1: {
        const double x = coord(0, idx[0]);
        const double y = coord(1, idx[1]);
        const double z = wrap(2, coord(2, idx[2]));
        return koranyi_gauge(x, y, z);
      }
    }
    return 0;
  }

  double quasi_distance_flat(std::int64_t f) const {
    std::array<int, 3> idx{};
    unflat(f, {idx.data(), axes_.size()});
    return quasi_distance({idx.data(), axes_.size()});
  }

  /// p_F = 1 + 2/D; +inf for compact groups (D = 0).
  double fujita_exponent() const {
    if (big_d_ == 0) return std::numeric_limits<double>::infinity();
    return 1.0 + 2.0 / big_d_;
  }

  std::string describe() const {
    std::string s;
    switch (kind_) {
      case group_kind::euclidean: s = "euclidean"; break;
      case group_kind::torus: s = "torus"; break;
      case group_kind::heisenberg1: s = "heisenberg1"; break;
    }
    for (const auto& ax : axes_)
      s += " N=" + std::to_string(ax.points) + " h=" + std::to_string(ax.spacing) +
           (ax.rule == axis_rule::periodic ? " periodic" : " dirichlet");
    return s;
  }

  friend group_model make_group(const group_spec& spec);

 private:
  group_model() = default;

  group_kind kind_ = group_kind::torus;
  std::vector<axis_spec> axes_;
  std::vector<double> offsets_;
  std::array<int, 3> identity_{};
  int d_ = 0, big_d_ = 0;
  std::int64_t size_ = 0;
  double haar_w_ = 0, total_mass_ = 0, max_h_ = 0;
  bool fully_periodic_ = false;
};

inline group_model make_group(const group_spec& spec) {
  group_model g;
  g.kind_ = spec.kind;
  g.axes_ = spec.axes;

  const int n = static_cast<int>(spec.axes.size());
  switch (spec.kind) {
    case group_kind::euclidean:
      require(n >= 1, errc::invalid_lattice, "euclidean model needs >= 1 axis");
      g.d_ = g.big_d_ = n;
      break;
    case group_kind::torus:
      require(n >= 1, errc::invalid_lattice, "torus model needs >= 1 axis");
      g.d_ = n;
      g.big_d_ = 0;
      for (const auto& ax : g.axes_)
        require(ax.rule == axis_rule::periodic, errc::invalid_lattice,
                "torus axes must be periodic");
      break;
    case group_kind::heisenberg1:
      require(n == 3, errc::unsupported_kind, "heisenberg1 needs exactly 3 axes");
      g.d_ = g.big_d_ = 4;
      // Operator coefficients depend on x,y but not z: Dirichlet walls in x,y,
      // periodic in z.
      require(g.axes_[0].rule == axis_rule::dirichlet && g.axes_[1].rule == axis_rule::dirichlet &&
                  g.axes_[2].rule == axis_rule::periodic,
              errc::invalid_lattice, "heisenberg1 boundary must be dirichlet,dirichlet,periodic");
      break;
    default:
      fail(errc::unsupported_kind, "unknown group kind");
  }

  g.size_ = 1;
  g.haar_w_ = 1;
  g.total_mass_ = 1;
  g.max_h_ = 0;
  g.fully_periodic_ = true;
  g.offsets_.resize(spec.axes.size());
  for (std::size_t a = 0; a < g.axes_.size(); ++a) {
    const auto& ax = g.axes_[a];
    require(ax.spacing > 0, errc::invalid_lattice, "axis spacing must be positive");
    require(ax.points >= 8, errc::invalid_lattice, "axis needs at least 8 points");
    if (ax.rule == axis_rule::periodic)
      require(ax.points % 2 == 0, errc::invalid_lattice,
              "periodic axes need an even point count");
    else
      g.fully_periodic_ = false;
    g.size_ *= ax.points;
    g.haar_w_ *= ax.spacing;
    g.total_mass_ *= ax.points * ax.spacing;
    g.max_h_ = std::max(g.max_h_, ax.spacing);

    // torus lattice lives on [0, L); boxes are centred with the identity on a
    // lattice point
    if (spec.kind == group_kind::torus) {
      g.offsets_[a] = 0.0;
      g.identity_[a] = 0;
    } else {
      g.identity_[a] = ax.points / 2;
      g.offsets_[a] = (ax.points / 2) * ax.spacing;
    }
  }
  return g;
}

inline group_spec euclidean_box(int n, double extent, int points,
                                axis_rule rule = axis_rule::periodic) {
  group_spec s;
  s.kind = group_kind::euclidean;
  for (int a = 0; a < n; ++a) s.axes.push_back({points, extent / points, rule});
  return s;
}

inline group_spec torus_box(int n, double extent, int points) {
  group_spec s;
  s.kind = group_kind::torus;
  for (int a = 0; a < n; ++a) s.axes.push_back({points, extent / points, axis_rule::periodic});
  return s;
}

inline group_spec heisenberg_box(double extent_xy, int points_xy, double extent_z, int points_z) {
  group_spec s;
  s.kind = group_kind::heisenberg1;
  s.axes.push_back({points_xy, extent_xy / points_xy, axis_rule::dirichlet});
  s.axes.push_back({points_xy, extent_xy / points_xy, axis_rule::dirichlet});
  s.axes.push_back({points_z, extent_z / points_z, axis_rule::periodic});
  return s;
}

/// Haar-weighted count of lattice points with quasi_distance < r.
inline double ball_volume(const group_model& g, double r) {
  require(r > 0, errc::validation_error, "ball radius must be positive");
  switch (g.kind()) {
    case group_kind::euclidean:
      for (int a = 0; a < g.rank(); ++a)
        require(r <= 0.5 * g.axis(a).extent(), errc::ball_exceeds_domain,
                "euclidean ball exceeds box");
      break;
    case group_kind::heisenberg1:
      require(r <= 0.5 * g.axis(0).extent() && r <= 0.5 * g.axis(1).extent(),
              errc::ball_exceeds_domain, "gauge ball exceeds x/y walls");
      require(0.25 * r * r <= 0.5 * g.axis(2).extent(), errc::ball_exceeds_domain,
              "gauge ball exceeds z period");
      break;
    case group_kind::torus:
      break;  // compact: the count saturates at the total mass
  }
  std::int64_t count = 0;
  std::array<int, 3> idx{};
  for (std::int64_t f = 0; f < g.size(); ++f) {
    g.unflat(f, {idx.data(), static_cast<std::size_t>(g.rank())});
    if (g.quasi_distance({idx.data(), static_cast<std::size_t>(g.rank())}) < r) ++count;
  }
  return static_cast<double>(count) * g.haar_weight();
}

struct curve_point {
  double t = 0;
  double value = 0;
};

/// Fitted two-regime profile of ||h_t||_inf ~ t^{-b/2} (t<1), t^{-a/2} (t>=1),
/// with prefactor envelopes per regime.  The exponential variant is only used
/// by the abstract certifier.
struct volume_profile {
  bool fitted = false;
  bool exponential = false;
  int local_dim = 0;
  double small_exp = 0;  ///< b >= 0
  double large_exp = 0;  ///< a >= 0 (absent for exponential profiles)
  double c_small_low = 0, c_small_up = 0;
  double c_large_low = 0, c_large_up = 0;
};

/// Log-log least-squares fit of the sup-norm curve of the heat kernel.
/// The curve must have >= 8 samples spanning at least one decade on each side
/// of t = 1 and be nonincreasing.
inline volume_profile fit_profile(const group_model& g, std::span<const curve_point> sup_curve) {
  require(sup_curve.size() >= 8, errc::insufficient_samples, "need >= 8 curve samples");
  double tmin = std::numeric_limits<double>::infinity(), tmax = 0;
  for (const auto& c : sup_curve) {
    require(c.t > 0 && c.value > 0, errc::insufficient_samples,
            "curve samples must have positive t and value");
    tmin = std::min(tmin, c.t);
    tmax = std::max(tmax, c.t);
  }
  require(tmin <= 0.1 && tmax >= 10.0, errc::insufficient_samples,
          "curve must span one decade on each side of t=1");
  for (std::size_t i = 1; i < sup_curve.size(); ++i) {
    require(sup_curve[i].t > sup_curve[i - 1].t, errc::insufficient_samples,
            "curve times must be strictly increasing");
    require(sup_curve[i].value <= sup_curve[i - 1].value * (1.0 + 1e-9), errc::nonmonotone_curve,
            "kernel sup-norm curve must be nonincreasing");
  }

  std::vector<double> xs, ys, xl, yl;
  for (const auto& c : sup_curve) {
    if (c.t < 1.0) {
      xs.push_back(std::log(c.t));
      ys.push_back(std::log(c.value));
    } else {
      xl.push_back(std::log(c.t));
      yl.push_back(std::log(c.value));
    }
  }
  require(xs.size() >= 2 && xl.size() >= 2, errc::insufficient_samples,
          "need >= 2 samples on each side of t=1");

  volume_profile p;
  p.fitted = true;
  p.local_dim = g.local_dim();
  const auto fs = detail::fit_line(xs, ys);
  const auto fl = detail::fit_line(xl, yl);
  p.small_exp = std::max(0.0, -2.0 * fs.slope);
  p.large_exp = std::max(0.0, -2.0 * fl.slope);

  p.c_small_low = std::numeric_limits<double>::infinity();
  p.c_large_low = std::numeric_limits<double>::infinity();
  for (const auto& c : sup_curve) {
    if (c.t < 1.0) {
      const double pref = c.value * std::pow(c.t, 0.5 * p.small_exp);
      p.c_small_low = std::min(p.c_small_low, pref);
      p.c_small_up = std::max(p.c_small_up, pref);
    } else {
      const double pref = c.value * std::pow(c.t, 0.5 * p.large_exp);
      p.c_large_low = std::min(p.c_large_low, pref);
      p.c_large_up = std::max(p.c_large_up, pref);
    }
  }
  return p;
}

}  // namespace heatlab
