#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "heatlab/detail/fft.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/grid_field.hpp"
#include "heatlab/group_model.hpp"

namespace heatlab {

enum class scheme_kind { spectral, crank_nicolson, explicit_substochastic };

struct substochastic_certificate {
  double min_offdiag_weight = 0;   ///< smallest off-diagonal propagator entry (>= 0)
  double min_diagonal_weight = 0;  ///< smallest diagonal propagator entry (>= 0 under CFL)
  double max_row_sum = 0;          ///< <= 1 + 1e-14
  double min_row_sum = 0;          ///< < 1 at absorbing walls
  double clipped_fraction = 0;     ///< clipped negative off-diagonal mass / kept mass
  double cfl_limit = 0;            ///< largest stable step for the explicit scheme
};

namespace detail {

/// Sparse generator L with nonnegative off-diagonal entries and nonpositive
/// row sums (constants are annihilated away from absorbing walls).  Built as
/// the flux composition of the model's first-order frame differences with
/// coefficients frozen at cell faces; negative off-diagonal weights produced
/// by the mixed terms are clipped to zero and folded into the diagonal, and
/// the clipped mass is recorded.
struct stencil_generator {
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> w;
  std::vector<double> diag;
  double cfl_limit = 0;
  double clipped_fraction = 0;
  double max_row_sum = 0, min_row_sum = 0, min_offdiag = 0;

  void apply(std::span<const double> in, std::span<double> out) const {
    const std::int64_t n = static_cast<std::int64_t>(row_ptr.size()) - 1;
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::int64_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
        s += w[static_cast<std::size_t>(e)] * in[static_cast<std::size_t>(col[static_cast<std::size_t>(e)])];
      out[static_cast<std::size_t>(i)] = s;
    }
  }
};

struct face_family {
  int diff_axis;      // axis of the first-order difference
  int drift_axis;     // axis of the z-drift term (only used when drifted)
  bool drifted;       // heisenberg frame fields carry a drift coefficient
  double drift_sign;  // X1 = d_x - (y/2) d_z -> -1 ; X2 = d_y + (x/2) d_z -> +1
};

inline std::vector<face_family> frame_families(const group_model& g) {
  if (g.kind() == group_kind::heisenberg1)
    return {{0, 2, true, -1.0}, {1, 2, true, +1.0}};
  std::vector<face_family> fams;
  for (int a = 0; a < g.rank(); ++a) fams.push_back({a, 0, false, 0.0});
  return fams;
}

inline std::shared_ptr<const stencil_generator> assemble_generator(const group_model& g) {
  require(g.size() < (std::int64_t{1} << 31), errc::invalid_lattice,
          "lattice too large for the stencil scheme");
  const int rank = g.rank();
  const auto fams = frame_families(g);

  auto gen = std::make_shared<stencil_generator>();
  gen->row_ptr.assign(static_cast<std::size_t>(g.size()) + 1, 0);
  gen->diag.assign(static_cast<std::size_t>(g.size()), 0.0);

  // resolve a multi-index to a flat column, honouring wrap/ghost rules
  auto resolve = [&](const std::array<int, 3>& idx) -> std::int64_t {
    std::array<int, 3> q = idx;
    for (int a = 0; a < rank; ++a) {
      const auto& ax = g.axis(a);
      if (ax.rule == axis_rule::periodic) {
        q[static_cast<std::size_t>(a)] = ((q[static_cast<std::size_t>(a)] % ax.points) + ax.points) % ax.points;
      } else if (q[static_cast<std::size_t>(a)] < 0 || q[static_cast<std::size_t>(a)] >= ax.points) {
        return -1;  // ghost: Dirichlet zero outside
      }
    }
    return g.flat({q.data(), static_cast<std::size_t>(rank)});
  };

  struct entry {
    std::int64_t col;
    double w;
  };
  std::vector<entry> row;
  std::vector<std::pair<std::array<int, 3>, double>> support;

  double clipped_mag = 0, kept_mag = 0;
  double max_rs = -std::numeric_limits<double>::infinity();
  double min_rs = std::numeric_limits<double>::infinity();
  double min_off = std::numeric_limits<double>::infinity();
  double max_diag_mag = 0;

  std::array<int, 3> pidx{};
  std::vector<std::int64_t> tmp_ptr;
  tmp_ptr.reserve(static_cast<std::size_t>(g.size()) + 1);
  tmp_ptr.push_back(0);

  for (std::int64_t p = 0; p < g.size(); ++p) {
    g.unflat(p, {pidx.data(), static_cast<std::size_t>(rank)});
    row.clear();

    auto accumulate = [&](std::int64_t c, double v) {
      for (auto& e : row)
        if (e.col == c) {
          e.w += v;
          return;
        }
      row.push_back({c, v});
    };

    for (const auto& fam : fams) {
      const double ha = g.axis(fam.diff_axis).spacing;
      const double hz = fam.drifted ? g.axis(fam.drift_axis).spacing : 1.0;
      // faces whose support contains p: base offsets along diff/drift axes
      std::array<std::pair<int, int>, 6> bases{{{0, 0}, {-1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}}};
      const std::size_t nbases = fam.drifted ? 6u : 2u;
      for (std::size_t b = 0; b < nbases; ++b) {
        std::array<int, 3> q = pidx;
        q[static_cast<std::size_t>(fam.diff_axis)] += bases[b].first;
        if (fam.drifted) q[static_cast<std::size_t>(fam.drift_axis)] += bases[b].second;

        // drift coefficient frozen at the face: depends on the transverse
        // coordinate only, constant across the face
        double c_face = 0;
        if (fam.drifted) {
          const int coord_axis = fam.diff_axis == 0 ? 1 : 0;
          c_face = fam.drift_sign * 0.5 * g.coord(coord_axis, q[static_cast<std::size_t>(coord_axis)]);
        }

        // support of (Du) on this face
        support.clear();
        auto push = [&](int da, int dz, double v) {
          std::array<int, 3> s = q;
          s[static_cast<std::size_t>(fam.diff_axis)] += da;
          if (fam.drifted) s[static_cast<std::size_t>(fam.drift_axis)] += dz;
          support.emplace_back(s, v);
        };
        push(0, 0, -1.0 / ha);
        push(1, 0, +1.0 / ha);
        if (fam.drifted && c_face != 0.0) {
          const double cz = c_face / (4.0 * hz);
          push(0, +1, +cz);
          push(0, -1, -cz);
          push(1, +1, +cz);
          push(1, -1, -cz);
        }

        // coefficient of p on this face
        double coef_p = 0;
        bool contains_p = false;
        for (const auto& [sidx, v] : support) {
          std::array<int, 3> r = sidx;
          bool same = true;
          for (int a = 0; a < rank; ++a) {
            int ri = r[static_cast<std::size_t>(a)];
            const auto& ax = g.axis(a);
            if (ax.rule == axis_rule::periodic) ri = ((ri % ax.points) + ax.points) % ax.points;
            if (ri != pidx[static_cast<std::size_t>(a)]) {
              same = false;
              break;
            }
          }
          if (same) {
            coef_p += v;
            contains_p = true;
          }
        }
        if (!contains_p || coef_p == 0.0) continue;

        // L = -D^T D: row p gains -coef_p * coef_r for every support point r
        for (const auto& [sidx, v] : support) {
          const std::int64_t c = resolve(sidx);
          accumulate(c, -coef_p * v);  // c == -1 marks a ghost column
        }
      }
    }

    // clip negative off-diagonal weights into the diagonal, drop ghost columns
    double diag_v = 0, row_sum = 0;
    for (const auto& e : row)
      if (e.col == p) diag_v += e.w;
    std::vector<entry> kept;
    kept.reserve(row.size());
    for (const auto& e : row) {
      if (e.col == p) continue;
      if (e.w < 0) {
        diag_v += e.w;
        clipped_mag += -e.w;
        continue;
      }
      if (e.col < 0) continue;  // absorbed through a Dirichlet wall
      kept.push_back(e);
      kept_mag += e.w;
    }
    std::sort(kept.begin(), kept.end(), [](const entry& a, const entry& b) { return a.col < b.col; });

    row_sum = diag_v;
    gen->col.push_back(static_cast<std::int32_t>(p));
    gen->w.push_back(diag_v);
    for (const auto& e : kept) {
      gen->col.push_back(static_cast<std::int32_t>(e.col));
      gen->w.push_back(e.w);
      row_sum += e.w;
      min_off = std::min(min_off, e.w);
    }
    gen->diag[static_cast<std::size_t>(p)] = diag_v;
    tmp_ptr.push_back(static_cast<std::int64_t>(gen->w.size()));
    max_rs = std::max(max_rs, row_sum);
    min_rs = std::min(min_rs, row_sum);
    max_diag_mag = std::max(max_diag_mag, -diag_v);
  }

  gen->row_ptr = std::move(tmp_ptr);
  gen->cfl_limit = max_diag_mag > 0 ? 1.0 / max_diag_mag : std::numeric_limits<double>::infinity();
  gen->clipped_fraction = kept_mag > 0 ? clipped_mag / kept_mag : 0.0;
  gen->max_row_sum = max_rs;
  gen->min_row_sum = min_rs;
  gen->min_offdiag = min_off == std::numeric_limits<double>::infinity() ? 0.0 : min_off;
  return gen;
}

/// Continuum symbol of the periodic Laplacian per r2c mode.
inline std::vector<double> spectral_symbol(const group_model& g) {
  std::vector<int> dims;
  for (int a = 0; a < g.rank(); ++a) dims.push_back(g.axis(a).points);
  const int last = dims.back();
  const int clast = last / 2 + 1;
  std::int64_t n_complex = 1;
  for (std::size_t a = 0; a + 1 < dims.size(); ++a) n_complex *= dims[a];
  n_complex *= clast;

  std::vector<double> lam(static_cast<std::size_t>(n_complex));
  std::vector<int> idx(dims.size(), 0);
  for (std::int64_t m = 0; m < n_complex; ++m) {
    std::int64_t f = m;
    for (std::size_t a = dims.size(); a-- > 0;) {
      const int na = (a + 1 == dims.size()) ? clast : dims[a];
      idx[a] = static_cast<int>(f % na);
      f /= na;
    }
    double s = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) {
      int k = idx[a];
      if (a + 1 != dims.size() && k > dims[a] / 2) k -= dims[a];
      const double freq = 2.0 * std::numbers::pi * k / g.axis(static_cast<int>(a)).extent();
      s += freq * freq;
    }
    lam[static_cast<std::size_t>(m)] = s;
  }
  return lam;
}

}  // namespace detail

/// One-step heat propagator. Immutable; apply_time is pure and safe to call
/// concurrently (FFT executions use per-call scratch).
class heat_operator {
 public:
  scheme_kind scheme() const { return scheme_; }
  double dt() const { return dt_; }
  const group_model& model() const { return *g_; }
  const substochastic_certificate& certificate() const { return cert_; }

  /// e^{-dt lambda_k} per r2c mode (spectral scheme only).
  std::span<const double> spectral_multipliers() const { return step_mult_; }

  const detail::stencil_generator& generator() const {
    require(gen_ != nullptr, errc::scheme_unsupported, "no stencil for the spectral scheme");
    return *gen_;
  }

  /// Materialized propagator row of one explicit step (inspection/testing).
  std::vector<std::pair<std::int64_t, double>> propagator_row(std::int64_t r) const {
    const auto& L = generator();
    std::vector<std::pair<std::int64_t, double>> out;
    for (std::int64_t e = L.row_ptr[static_cast<std::size_t>(r)]; e < L.row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
      const std::int64_t c = L.col[static_cast<std::size_t>(e)];
      const double w = dt_ * L.w[static_cast<std::size_t>(e)] + (c == r ? 1.0 : 0.0);
      out.emplace_back(c, w);
    }
    return out;
  }

  grid_field step(const grid_field& u) const { return apply_time(u, dt_); }

  /// e^{-tL}u: exact per-mode for the spectral scheme, CFL-substepped for the
  /// stencil schemes.
  grid_field apply_time(const grid_field& u, double t) const {
    require(t >= 0, errc::validation_error, "semigroup time must be >= 0");
    require(&u.model() == g_, errc::validation_error, "field lattice does not match operator");
    grid_field out = u;
    out.time_tag.reset();
    if (t == 0) return out;
    switch (scheme_) {
      case scheme_kind::spectral: {
        std::vector<std::complex<double>> spec(static_cast<std::size_t>(fft_->complex_size()));
        fft_->forward(u.values().data(), spec.data());
        const double norm = 1.0 / static_cast<double>(g_->size());
        for (std::size_t m = 0; m < spec.size(); ++m)
          spec[m] *= std::exp(-t * lambda_[m]) * norm;
        fft_->inverse(spec.data(), out.values().data());
        return out;
      }
      case scheme_kind::explicit_substochastic: {
        const double cap = gen_->cfl_limit;
        const std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t / cap - 1e-12)));
        const double sub = t / static_cast<double>(n);
        std::vector<double> work(out.values().begin(), out.values().end());
        std::vector<double> lu(work.size());
        for (std::int64_t s = 0; s < n; ++s) {
          gen_->apply(work, lu);
          for (std::size_t i = 0; i < work.size(); ++i) work[i] += sub * lu[i];
        }
        std::copy(work.begin(), work.end(), out.values().begin());
        return out;
      }
      case scheme_kind::crank_nicolson: {
        const double cap = 2.0 * gen_->cfl_limit;
        const std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t / cap - 1e-12)));
        const double a = 0.5 * t / static_cast<double>(n);
        std::vector<double> x(out.values().begin(), out.values().end());
        std::vector<double> b(x.size()), lx(x.size()), xn(x.size());
        for (std::int64_t s = 0; s < n; ++s) {
          gen_->apply(x, lx);
          for (std::size_t i = 0; i < x.size(); ++i) b[i] = x[i] + a * lx[i];
          // Jacobi iteration on (I - aL)x = b; contraction factor <= 1/2 under
          // the M-matrix cap, monotone from below for b >= 0
          for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = b[i] / (1.0 - a * gen_->diag[i]);
          for (int it = 0; it < 200; ++it) {
            gen_->apply(x, lx);
            double delta = 0, scale = 1e-300;
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double off = lx[i] - gen_->diag[i] * x[i];
              xn[i] = (b[i] + a * off) / (1.0 - a * gen_->diag[i]);
              delta = std::max(delta, std::abs(xn[i] - x[i]));
              scale = std::max(scale, std::abs(xn[i]));
            }
            x.swap(xn);
            if (delta <= 1e-14 * scale) break;
          }
        }
        std::copy(x.begin(), x.end(), out.values().begin());
        return out;
      }
    }
    return out;
  }

  friend heat_operator build_propagator(const group_model& g, double dt, scheme_kind scheme);

 private:
  heat_operator() = default;

  const group_model* g_ = nullptr;
  scheme_kind scheme_ = scheme_kind::spectral;
  double dt_ = 0;
  std::shared_ptr<const detail::rfft> fft_;
  std::vector<double> lambda_;
  std::vector<double> step_mult_;
  std::shared_ptr<const detail::stencil_generator> gen_;
  substochastic_certificate cert_;
};

inline heat_operator build_propagator(const group_model& g, double dt, scheme_kind scheme) {
  require(dt >= 0, errc::validation_error, "time step must be >= 0");
  heat_operator op;
  op.g_ = &g;
  op.scheme_ = scheme;
  op.dt_ = dt;

  if (scheme == scheme_kind::spectral) {
    require(g.fully_periodic(), errc::scheme_unsupported,
            "spectral scheme needs a fully periodic model");
    std::vector<int> dims;
    for (int a = 0; a < g.rank(); ++a) dims.push_back(g.axis(a).points);
    op.fft_ = std::make_shared<detail::rfft>(dims);
    op.lambda_ = detail::spectral_symbol(g);
    op.step_mult_.resize(op.lambda_.size());
    for (std::size_t m = 0; m < op.lambda_.size(); ++m)
      op.step_mult_[m] = std::exp(-dt * op.lambda_[m]);
    return op;
  }

  op.gen_ = detail::assemble_generator(g);
  const double cap = scheme == scheme_kind::crank_nicolson ? 2.0 * op.gen_->cfl_limit
                                                           : op.gen_->cfl_limit;
  require(dt <= cap * (1.0 + 1e-12), errc::cfl_violation,
          "dt exceeds the stability bound of the scheme");
  op.cert_.cfl_limit = op.gen_->cfl_limit;
  op.cert_.clipped_fraction = op.gen_->clipped_fraction;
  op.cert_.min_offdiag_weight = dt * op.gen_->min_offdiag;
  double dmin = 0;
  for (double d : op.gen_->diag) dmin = std::min(dmin, d);
  op.cert_.min_diagonal_weight = 1.0 + dt * dmin;
  op.cert_.max_row_sum = 1.0 + dt * op.gen_->max_row_sum;
  op.cert_.min_row_sum = 1.0 + dt * op.gen_->min_row_sum;
  return op;
}

inline scheme_kind default_scheme(const group_model& g) {
  return g.fully_periodic() ? scheme_kind::spectral : scheme_kind::explicit_substochastic;
}

/// e^{-tL}u0 with the model's default scheme.
inline grid_field apply_semigroup(const group_model& g, const grid_field& u0, double t) {
  require(t >= 0, errc::validation_error, "semigroup time must be >= 0");
  assert_nonnegative(u0, "apply_semigroup needs nonnegative data");
  const scheme_kind s = default_scheme(g);
  heat_operator op = build_propagator(g, s == scheme_kind::spectral ? t : 0.0, s);
  return op.apply_time(u0, t);
}

/// Sampled heat kernel h_t; requires sqrt(t) >= 2 * max spacing.
inline grid_field heat_kernel(const group_model& g, double t) {
  require(t > 0, errc::validation_error, "kernel time must be positive");
  require(std::sqrt(t) >= 2.0 * g.max_spacing(), errc::kernel_unresolved,
          "kernel under-resolved: sqrt(t) < 2 max spacing");
  grid_field k = apply_semigroup(g, delta_field(g), t);
  k.time_tag = t;
  return k;
}

/// Discrete group convolution with Haar weights (abelian, fully periodic
/// models; H^1 convolutions happen only implicitly through apply_semigroup).
inline grid_field group_convolve(const group_model& g, const grid_field& a, const grid_field& b) {
  require(g.kind() != group_kind::heisenberg1, errc::unsupported_model,
          "group_convolve supports abelian models only");
  require(g.fully_periodic(), errc::unsupported_model,
          "group_convolve needs a fully periodic lattice");
  require(&a.model() == &g && &b.model() == &g, errc::validation_error,
          "convolution operands must share the lattice");

  // re-root b so the group identity sits at index 0 on every axis
  grid_field br(g, 0.0);
  const auto id = g.identity_index();
  std::array<int, 3> idx{}, src{};
  for (std::int64_t f = 0; f < g.size(); ++f) {
    g.unflat(f, {idx.data(), static_cast<std::size_t>(g.rank())});
    for (int ax = 0; ax < g.rank(); ++ax)
      src[static_cast<std::size_t>(ax)] =
          (idx[static_cast<std::size_t>(ax)] + id[static_cast<std::size_t>(ax)]) % g.axis(ax).points;
    br[f] = b[g.flat({src.data(), static_cast<std::size_t>(g.rank())})];
  }

  std::vector<int> dims;
  for (int ax = 0; ax < g.rank(); ++ax) dims.push_back(g.axis(ax).points);
  detail::rfft fft(dims);
  std::vector<std::complex<double>> fa(static_cast<std::size_t>(fft.complex_size()));
  std::vector<std::complex<double>> fb(fa.size());
  fft.forward(a.values().data(), fa.data());
  fft.forward(br.values().data(), fb.data());
  const double norm = g.haar_weight() / static_cast<double>(g.size());
  for (std::size_t m = 0; m < fa.size(); ++m) fa[m] *= fb[m] * norm;
  grid_field out(g, 0.0);
  fft.inverse(fa.data(), out.values().data());
  return out;
}

struct kernel_curve_sample {
  double t = 0;
  double sup = 0;
  double mass_value = 0;
};

/// Evolves `u0` through the sorted `times` and reports sup/mass at each one;
/// stencil models advance incrementally with CFL substeps.
inline std::vector<kernel_curve_sample> semigroup_curve(const group_model& g,
                                                        const grid_field& u0,
                                                        std::span<const double> times) {
  require(!times.empty(), errc::validation_error, "need at least one probe time");
  for (std::size_t i = 0; i < times.size(); ++i) {
    require(times[i] >= 0, errc::validation_error, "probe times must be >= 0");
    if (i > 0)
      require(times[i] > times[i - 1], errc::validation_error, "probe times must increase");
  }
  std::vector<kernel_curve_sample> out;
  out.reserve(times.size());
  if (default_scheme(g) == scheme_kind::spectral) {
    heat_operator op = build_propagator(g, 0.0, scheme_kind::spectral);
    for (double t : times) {
      grid_field u = op.apply_time(u0, t);
      out.push_back({t, sup_norm(u), mass(u)});
    }
    return out;
  }
  heat_operator op = build_propagator(g, 0.0, scheme_kind::explicit_substochastic);
  grid_field u = u0;
  double t_cur = 0;
  for (double t : times) {
    u = op.apply_time(u, t - t_cur);
    t_cur = t;
    out.push_back({t, sup_norm(u), mass(u)});
  }
  return out;
}

/// Sup-norm/mass curve of the heat kernel at the given times.
inline std::vector<kernel_curve_sample> kernel_sup_curve(const group_model& g,
                                                         std::span<const double> times) {
  require(!times.empty() && times.front() > 0, errc::validation_error,
          "kernel curve needs positive times");
  require(std::sqrt(times.front()) >= 2.0 * g.max_spacing(), errc::kernel_unresolved,
          "smallest curve time is under-resolved");
  return semigroup_curve(g, delta_field(g), times);
}

}  // namespace heatlab
