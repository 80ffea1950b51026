#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "heatlab/blowup_lab.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/group_model.hpp"
#include "heatlab/mild_solver.hpp"
#include "heatlab/report_io.hpp"

namespace heatlab {

enum class data_family { kernel, constant, file };

struct experiment_config {
  int schema_version = 1;
  std::uint64_t seed = 0;
  int workers = 1;

  group_spec group;
  std::vector<double> p_grid;
  double k1 = 1.0;
  std::optional<double> k2 = 1.0;

  data_family family = data_family::kernel;
  std::vector<double> epsilon_grid{1.0};
  std::vector<double> gamma_grid{1.0};
  std::vector<double> constant_values;
  std::string field_file;

  double t_max = 100.0;
  double tol = 1e-8;
  double dt0 = 1e-2;
  double dt_min = 1e-12;
  double safety = 0.1;
  double m_max_factor = 1e8;
  double s_cut = 200.0;
  double monitor_slack = 0.01;
  double bound_slack = 2.0;
  int picard_steps = 128;
  int picard_k_max = 60;
  int refine_levels = 1;
  int certificate_nodes = 240;
  std::vector<double> kernel_times;  ///< kernel-check probes; defaults per model
  std::vector<double> probe_radii;

  bool has_profile = false;  ///< abstract-profile mode for `certify`
  bool profile_exponential = false;
  double profile_a = 0, profile_b = 0, profile_c = 1.0;
  int profile_d = 0;

  std::string out_dir = "out";
  std::string format = "json";
  bool dump_fields = false;

  std::vector<std::string> warnings;
  std::string echo;  ///< normalized config with defaults filled
};

namespace detail {

inline int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config_error, "field '" + key + "': " + e.what());
  }
}

inline std::vector<double> number_list(const nlohmann::json& j, const std::string& key,
                                       std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(v.get<double>());
    return out;
  }
  require(v.is_array(), errc::config_error, "field '" + key + "' must be a number or array");
  for (const auto& e : v) {
    require(e.is_number(), errc::config_error, "field '" + key + "' must contain numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace detail

inline experiment_config parse_config(const nlohmann::json& j, const std::string& source) {
  experiment_config cfg;
  cfg.schema_version = detail::get_or<int>(j, "schema_version", 1);
  require(cfg.schema_version == 1, errc::config_error, "unsupported schema_version");
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  cfg.workers = detail::get_or<int>(j, "workers", 1);
  require(cfg.workers >= 1, errc::validation_error, "workers must be >= 1 (" + source + ")");

  // --- group ---------------------------------------------------------------
  if (j.contains("group")) {
    const auto& gj = j.at("group");
    const std::string kind = detail::get_or<std::string>(gj, "kind", "torus");
    const auto npts = detail::number_list(gj, "N", {});
    const auto extents = detail::number_list(gj, "extent", {});
    require(!npts.empty() && !extents.empty(), errc::validation_error,
            "group needs N and extent");
    int n = detail::get_or<int>(gj, "n", static_cast<int>(npts.size()));
    auto axis_val = [&](const std::vector<double>& v, int a) {
      return v.size() == 1 ? v[0] : v[static_cast<std::size_t>(a)];
    };
    if (kind == "euclidean" || kind == "torus") {
      require(n >= 1, errc::validation_error, "group.n must be >= 1");
      cfg.group.kind = kind == "torus" ? group_kind::torus : group_kind::euclidean;
      for (int a = 0; a < n; ++a) {
        const int pts = static_cast<int>(axis_val(npts, a));
        const double ext = axis_val(extents, a);
        require(pts > 0 && ext > 0, errc::validation_error, "N and extent must be positive");
        cfg.group.axes.push_back({pts, ext / pts, axis_rule::periodic});
      }
      if (cfg.group.kind == group_kind::euclidean && gj.contains("boundary")) {
        const std::string b = gj.at("boundary").get<std::string>();
        require(b == "periodic" || b == "dirichlet", errc::validation_error,
                "boundary must be periodic or dirichlet");
        if (b == "dirichlet")
          for (auto& ax : cfg.group.axes) ax.rule = axis_rule::dirichlet;
      }
    } else if (kind == "heisenberg1") {
      require(npts.size() == 1 || npts.size() == 3, errc::validation_error,
              "heisenberg1 N must have 1 or 3 entries");
      cfg.group.kind = group_kind::heisenberg1;
      const axis_rule rules[3] = {axis_rule::dirichlet, axis_rule::dirichlet,
                                  axis_rule::periodic};
      for (int a = 0; a < 3; ++a) {
        const int pts = static_cast<int>(axis_val(npts, a));
        const double ext = axis_val(extents, a);
        require(pts > 0 && ext > 0, errc::validation_error, "N and extent must be positive");
        cfg.group.axes.push_back({pts, ext / pts, rules[a]});
      }
    } else {
      fail(errc::unsupported_kind, "group.kind '" + kind + "'");
    }
  }

  // --- abstract profile ------------------------------------------------------
  if (j.contains("profile")) {
    const auto& pj = j.at("profile");
    cfg.has_profile = true;
    const std::string type = detail::get_or<std::string>(pj, "type", "polynomial");
    if (type == "exponential") {
      cfg.profile_exponential = true;
      cfg.profile_d = detail::get_or<int>(pj, "d", 0);
      require(cfg.profile_d >= 1, errc::validation_error, "profile.d must be >= 1");
    } else {
      require(type == "polynomial", errc::config_error, "profile.type must be polynomial or exponential");
      cfg.profile_a = detail::get_or<double>(pj, "a", 0.0);
      cfg.profile_b = detail::get_or<double>(pj, "b", cfg.profile_a);
      require(cfg.profile_a >= 0 && cfg.profile_b >= 0, errc::validation_error,
              "profile exponents a, b must be >= 0");
    }
    cfg.profile_c = detail::get_or<double>(pj, "C", 1.0);
    require(cfg.profile_c > 0, errc::validation_error, "profile.C must be positive");
  }
  require(cfg.has_profile || !cfg.group.axes.empty(), errc::validation_error,
          "config needs a group or an abstract profile");

  // --- nonlinearity ----------------------------------------------------------
  double p_f = std::numeric_limits<double>::infinity();
  if (!cfg.group.axes.empty()) p_f = make_group(cfg.group).fujita_exponent();
  if (j.contains("nonlinearity")) {
    const auto& nj = j.at("nonlinearity");
    cfg.p_grid = detail::number_list(nj, "p", {});
    cfg.k1 = detail::get_or<double>(nj, "K1", 1.0);
    if (nj.contains("K2"))
      cfg.k2 = nj.at("K2").get<double>();
    else
      cfg.k2 = cfg.k1 > 0 ? std::optional<double>(cfg.k1) : std::nullopt;
  }
  if (cfg.p_grid.empty()) {
    if (std::isfinite(p_f))
      cfg.p_grid = {p_f / 1.5, 0.9 * p_f, p_f, 1.1 * p_f, 1.5 * p_f};
    else
      fail(errc::validation_error, "nonlinearity.p grid required (compact group has no default)");
  }
  std::sort(cfg.p_grid.begin(), cfg.p_grid.end());
  require(!cfg.p_grid.empty(), errc::validation_error, "grids nonempty: p grid is empty");
  for (double p : cfg.p_grid)
    require(p > 1.0, errc::validation_error, "every p must exceed 1");
  require(cfg.k1 >= 0, errc::validation_error, "K1 must be >= 0");
  if (std::isfinite(p_f)) {
    const bool below = cfg.p_grid.front() < p_f, above = cfg.p_grid.back() > p_f;
    if (!(below && above))
      cfg.warnings.push_back("p grid does not straddle p_F = " + fmt_g12(p_f));
  }

  // --- data family -----------------------------------------------------------
  if (j.contains("data")) {
    const auto& dj = j.at("data");
    const std::string fam = detail::get_or<std::string>(dj, "family", "kernel");
    if (fam == "kernel") {
      cfg.family = data_family::kernel;
      cfg.epsilon_grid = detail::number_list(dj, "epsilon", {1.0});
      cfg.gamma_grid = detail::number_list(dj, "gamma", {1.0});
    } else if (fam == "constant") {
      cfg.family = data_family::constant;
      cfg.constant_values = detail::number_list(dj, "value", {});
      require(!cfg.constant_values.empty(), errc::validation_error,
              "grids nonempty: constant family needs values");
    } else if (fam == "file") {
      cfg.family = data_family::file;
      cfg.field_file = detail::get_or<std::string>(dj, "path", "");
      require(!cfg.field_file.empty(), errc::validation_error, "file family needs data.path");
      require(std::filesystem::exists(cfg.field_file), errc::validation_error,
              "referenced file does not exist: " + cfg.field_file);
      cfg.epsilon_grid = detail::number_list(dj, "epsilon", {1.0});
      cfg.gamma_grid = {0.0};
    } else {
      fail(errc::config_error, "data.family must be kernel, constant or file");
    }
  }
  require(!cfg.epsilon_grid.empty() && !cfg.gamma_grid.empty(), errc::validation_error,
          "grids nonempty: epsilon/gamma grids are empty");
  std::sort(cfg.epsilon_grid.begin(), cfg.epsilon_grid.end());
  std::sort(cfg.gamma_grid.begin(), cfg.gamma_grid.end());
  std::sort(cfg.constant_values.begin(), cfg.constant_values.end());
  for (double e : cfg.epsilon_grid)
    require(e >= 0, errc::validation_error, "epsilon must be >= 0");
  if (cfg.family == data_family::kernel)
    for (double gm : cfg.gamma_grid)
      require(gm > 0, errc::validation_error, "gamma must be positive");
  for (double v : cfg.constant_values)
    require(v >= 0, errc::validation_error, "constant data must be >= 0");

  // --- controls ----------------------------------------------------------------
  if (j.contains("controls")) {
    const auto& cj = j.at("controls");
    cfg.t_max = detail::get_or<double>(cj, "T_max", cfg.t_max);
    cfg.tol = detail::get_or<double>(cj, "tol", cfg.tol);
    cfg.dt0 = detail::get_or<double>(cj, "dt0", cfg.dt0);
    cfg.dt_min = detail::get_or<double>(cj, "dt_min", cfg.dt_min);
    cfg.safety = detail::get_or<double>(cj, "safety", cfg.safety);
    cfg.m_max_factor = detail::get_or<double>(cj, "M_max_factor", cfg.m_max_factor);
    cfg.s_cut = detail::get_or<double>(cj, "S_cut", cfg.s_cut);
    cfg.monitor_slack = detail::get_or<double>(cj, "monitor_slack", cfg.monitor_slack);
    cfg.bound_slack = detail::get_or<double>(cj, "bound_slack", cfg.bound_slack);
    cfg.picard_steps = detail::get_or<int>(cj, "picard_steps", cfg.picard_steps);
    cfg.picard_k_max = detail::get_or<int>(cj, "picard_k_max", cfg.picard_k_max);
    cfg.refine_levels = detail::get_or<int>(cj, "refine_levels", cfg.refine_levels);
    cfg.certificate_nodes = detail::get_or<int>(cj, "certificate_nodes", cfg.certificate_nodes);
    cfg.kernel_times = detail::number_list(cj, "kernel_times", {});
    cfg.probe_radii = detail::number_list(cj, "probe_radii", {});
  }
  require(cfg.t_max > 0 && cfg.tol > 0 && cfg.dt0 > 0 && cfg.dt_min > 0 && cfg.safety > 0,
          errc::validation_error, "tolerances positive: controls must be positive");
  require(cfg.m_max_factor >= 1e3, errc::validation_error, "M_max_factor must be >= 1e3");
  require(cfg.picard_steps >= 2 && cfg.picard_k_max >= 1 && cfg.refine_levels >= 1,
          errc::validation_error, "picard/refine controls must be positive");
  require(cfg.s_cut > 1.0, errc::validation_error, "S_cut must exceed 1");

  // box-truncation rule for euclidean models: L >= 8 * sqrt(T_max) * 4 keeps
  // the wrapped Gaussian tails below 1e-12 over the horizon
  if (!cfg.group.axes.empty() && cfg.group.kind == group_kind::euclidean) {
    const double l_min = 32.0 * std::sqrt(cfg.t_max);
    for (const auto& ax : cfg.group.axes)
      if (ax.extent() < l_min) {
        cfg.warnings.push_back("euclidean box extent " + fmt_g12(ax.extent()) +
                               " is below the truncation rule 32*sqrt(T_max) = " +
                               fmt_g12(l_min));
        break;
      }
  }

  if (j.contains("output")) {
    const auto& oj = j.at("output");
    cfg.out_dir = detail::get_or<std::string>(oj, "dir", cfg.out_dir);
    cfg.format = detail::get_or<std::string>(oj, "format", cfg.format);
    cfg.dump_fields = detail::get_or<bool>(oj, "dump_fields", cfg.dump_fields);
  }
  require(cfg.format == "csv" || cfg.format == "json", errc::unknown_format,
          "output.format must be csv or json");

  // normalized echo with defaults filled
  {
    json_writer w;
    w.begin_object();
    w.key("schema_version").value(cfg.schema_version);
    w.key("seed").value(cfg.seed);
    w.key("workers").value(cfg.workers);
    if (!cfg.group.axes.empty()) w.key("group").value(make_group(cfg.group).describe());
    w.key("p").values(cfg.p_grid);
    w.key("K1").value(cfg.k1);
    w.key("K2").value(cfg.k2 ? fmt_g12(*cfg.k2) : std::string("none"));
    w.key("family").value(cfg.family == data_family::kernel
                              ? "kernel"
                              : (cfg.family == data_family::constant ? "constant" : "file"));
    w.key("epsilon").values(cfg.epsilon_grid);
    w.key("gamma").values(cfg.gamma_grid);
    w.key("T_max").value(cfg.t_max);
    w.key("tol").value(cfg.tol);
    w.key("dt0").value(cfg.dt0);
    w.key("S_cut").value(cfg.s_cut);
    w.key("picard_steps").value(cfg.picard_steps);
    w.key("refine_levels").value(cfg.refine_levels);
    w.key("warnings");
    w.begin_array();
    for (const auto& s : cfg.warnings) w.value(s);
    w.end_array();
    w.end_object();
    cfg.echo = w.str() + "\n";
  }
  return cfg;
}

inline experiment_config load_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), errc::config_error, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(errc::config_error, path + ":" + std::to_string(detail::line_of_byte(text, e.byte)) +
                                 ": " + e.what());
  }
  return parse_config(j, path);
}

// --- abstract certifier -------------------------------------------------------

struct abstract_profile {
  bool exponential = false;
  int d = 0;       ///< local dimension (exponential profiles)
  double a = 0;    ///< large-time exponent
  double b = 0;    ///< small-time exponent
  double c = 1.0;  ///< upper envelope constant
};

struct abstract_certificate {
  abstract_profile profile;
  double p = 0, gamma = 0, k1 = 0, eps = 0;
  bool divergent = false;
  double integral = std::numeric_limits<double>::infinity();  ///< profile integral (no eps, C)
  double bound = std::numeric_limits<double>::infinity();     ///< eps^{p-1} C integral
  double threshold = 0;
  bool satisfied = false;
  double epsilon_star = 0;  ///< bound == threshold at this eps
};

/// Closed-form evaluation of the small-data integral bound over an abstract
/// volume-growth profile:
///   polynomial: eps^{p-1} C (int_{min(gamma,1)}^1 s^{-b(p-1)/2} ds
///                            + int_1^inf s^{-a(p-1)/2} ds)
///   exponential: eps^{p-1} C int_0^inf (s+gamma)^{-d(p-1)/2} ds
/// against the threshold 1/(K1(p-1)).
inline abstract_certificate certify_abstract(const abstract_profile& prof, double p,
                                             double gamma, double k1, double eps) {
  require(gamma > 0, errc::validation_error, "gamma must be positive");
  require(p > 1, errc::validation_error, "p must exceed 1");
  require(k1 > 0, errc::validation_error, "K1 must be positive");
  require(eps >= 0, errc::validation_error, "epsilon must be >= 0");
  require(prof.c > 0, errc::validation_error, "profile constant must be positive");
  if (prof.exponential)
    require(prof.d >= 1, errc::validation_error, "exponential profile needs d >= 1");
  else
    require(prof.a >= 0 && prof.b >= 0, errc::validation_error, "profile exponents must be >= 0");

  abstract_certificate cert;
  cert.profile = prof;
  cert.p = p;
  cert.gamma = gamma;
  cert.k1 = k1;
  cert.eps = eps;
  cert.threshold = 1.0 / (k1 * (p - 1.0));

  double integral;
  if (prof.exponential) {
    const double alpha = 0.5 * prof.d * (p - 1.0);
    cert.divergent = alpha <= 1.0;
    integral = cert.divergent ? std::numeric_limits<double>::infinity()
                              : std::pow(gamma, 1.0 - alpha) / (alpha - 1.0);
  } else {
    const double alpha = 0.5 * prof.a * (p - 1.0);
    const double beta = 0.5 * prof.b * (p - 1.0);
    cert.divergent = alpha <= 1.0;
    double small = 0;
    if (gamma < 1.0)
      small = beta == 1.0 ? -std::log(gamma)
                          : (1.0 - std::pow(gamma, 1.0 - beta)) / (1.0 - beta);
    const double large = cert.divergent ? std::numeric_limits<double>::infinity()
                                        : 1.0 / (alpha - 1.0);
    integral = small + large;
  }
  cert.integral = integral;
  if (!cert.divergent) {
    cert.bound = std::pow(eps, p - 1.0) * prof.c * integral;
    cert.satisfied = cert.bound < cert.threshold;
    cert.epsilon_star = std::pow(cert.threshold / (prof.c * integral), 1.0 / (p - 1.0));
  }
  return cert;
}

/// Group-attached variant: the profile exponents come from the fitted volume
/// profile and the constant defaults to the fitted upper envelope times a
/// safety factor of 2.
inline abstract_certificate certify_abstract(const group_model& g, const volume_profile& fitted,
                                             double p, double gamma, double k1, double eps) {
  require(fitted.fitted, errc::profile_unfitted, "certify_abstract needs a fitted profile");
  abstract_profile prof;
  prof.a = fitted.large_exp;
  prof.b = fitted.small_exp;
  prof.c = 2.0 * fitted.c_large_up;
  prof.d = g.local_dim();
  return certify_abstract(prof, p, gamma, k1, eps);
}

// --- sweep ---------------------------------------------------------------------

struct sweep_row {
  double p = 0, eps = 0, gamma = 0;
  std::string classification = "n/a";
  double t_star_or_horizon = std::numeric_limits<double>::quiet_NaN();
  std::string terminating = "n/a";
  std::string certificate = "n/a";
  std::string ap_verdict = "n/a";
  std::string status = "ok";
  double refine_delta_pct = std::numeric_limits<double>::quiet_NaN();
};

struct sweep_table {
  int schema_version = 1;
  double p_f = 0;
  std::string group_desc;
  std::uint64_t seed = 0;
  std::vector<sweep_row> rows;
  std::vector<std::string> notes;
};

namespace detail {

/// Cell grids by data family: constant data sweeps its values, kernel data
/// sweeps (epsilon, gamma), file data sweeps its scale.
inline const std::vector<double>& cell_eps_grid(const experiment_config& cfg) {
  return cfg.family == data_family::constant ? cfg.constant_values : cfg.epsilon_grid;
}
inline std::vector<double> cell_gamma_grid(const experiment_config& cfg) {
  return cfg.family == data_family::kernel ? cfg.gamma_grid : std::vector<double>{0.0};
}

inline grid_field build_cell_data(const group_model& g, const experiment_config& cfg,
                                  double eps, double gamma) {
  switch (cfg.family) {
    case data_family::kernel: return small_data_generator(g, gamma, eps);
    case data_family::constant: return grid_field(g, eps);
    case data_family::file: {
      grid_field u = load_field(g, cfg.field_file);
      for (std::int64_t i = 0; i < u.size(); ++i) u[i] *= eps;
      assert_nonnegative(u, "field file must be nonnegative");
      return u;
    }
  }
  fail(errc::internal_invariant, "unknown data family");
}

inline std::vector<double> default_profile_times(const group_model& g) {
  const double t_res = 4.0 * g.max_spacing() * g.max_spacing();
  const double t_lo = std::max(1.02 * t_res, 1e-3);
  require(t_lo <= 0.1, errc::validation_error,
          "lattice too coarse to fit a volume profile (needs sqrt(t)=0.3 resolved)");
  std::vector<double> ts;
  const double t_hi = 100.0;
  const int n = 16;
  for (int i = 0; i < n; ++i)
    ts.push_back(t_lo * std::pow(t_hi / t_lo, static_cast<double>(i) / (n - 1)));
  return ts;
}

}  // namespace detail

/// Full dichotomy sweep over the (p, eps, gamma) grid.  Cells run
/// independently (optionally in parallel); the table order is deterministic.
/// Per-cell failures land in the row status; cross-module incoherence
/// (satisfied certificate with a blow-up classification) is fatal.
inline sweep_table run_sweep(const experiment_config& cfg) {
  require(!cfg.group.axes.empty(), errc::validation_error, "sweep needs a group");
  const group_model g = make_group(cfg.group);

  sweep_table table;
  table.p_f = g.fujita_exponent();
  table.group_desc = g.describe();
  table.seed = cfg.seed;

  // fit the model's volume profile once (shared, immutable)
  const auto prof_times = detail::default_profile_times(g);
  const auto curve_samples = kernel_sup_curve(g, prof_times);
  std::vector<curve_point> curve;
  for (const auto& s : curve_samples) curve.push_back({s.t, s.sup});
  const volume_profile profile = fit_profile(g, curve);

  struct cell {
    double p, eps, gamma;
  };
  std::vector<cell> cells;
  const std::vector<double>& eps_grid = detail::cell_eps_grid(cfg);
  const std::vector<double> gamma_grid = detail::cell_gamma_grid(cfg);
  for (double p : cfg.p_grid)
    for (double e : eps_grid)
      for (double gm : gamma_grid) cells.push_back({p, e, gm});

  table.rows.resize(cells.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> incoherent{false};
  std::string incoherent_msg;
  std::mutex msg_mutex;

  auto run_cell = [&](std::size_t ci) {
    const cell& c = cells[ci];
    sweep_row row;
    row.p = c.p;
    row.eps = c.eps;
    row.gamma = c.gamma;
    try {
      nonlinearity nl;
      nl.p = c.p;
      nl.k1 = cfg.k1;
      nl.k2 = cfg.k2;
      const grid_field u0 = detail::build_cell_data(g, cfg, c.eps, c.gamma);

      const auto cert =
          existence_condition(g, u0, nl, cfg.s_cut, profile, cfg.certificate_nodes);
      row.certificate = verdict_name(cert.verdict);

      if (cert.verdict == certificate_verdict::satisfied && sup_norm(u0) > 0) {
        const auto sol = picard_solve(g, u0, nl, cfg.t_max, cfg.picard_steps, cfg.tol,
                                      cfg.picard_k_max);
        if (sol.converged) {
          const auto omega = omega_curve(cert, cert.partial);
          const auto sand = sandwich_check(sol, cert, omega);
          if (!sand.pass) row.status = "sandwich-violated";
          if (cfg.family == data_family::kernel) {
            const auto env =
                decay_envelope_check(sol, c.gamma, c.eps * cert.growth_constant);
            if (!env.pass && row.status == "ok") row.status = "envelope-violated";
          }
        } else {
          row.status = "picard-no-convergence";
        }
      }

      blowup_controls ctl;
      ctl.dt0 = cfg.dt0;
      ctl.dt_min = cfg.dt_min;
      ctl.t_max = cfg.t_max;
      ctl.safety = cfg.safety;
      ctl.m_max = cfg.m_max_factor * sup_norm(u0);
      ctl.monitor_slack = cfg.monitor_slack;
      ctl.with_ap_trace = cfg.k2.has_value();
      const auto rep = integrate_nonlinear(g, u0, nl, ctl);
      row.classification = blowup_class_name(rep.classification);
      row.terminating = stop_reason_name(rep.reason);
      row.t_star_or_horizon =
          rep.classification == blowup_class::blowup ? rep.fit.t_star : rep.horizon;
      if (!rep.ap.times.empty())
        row.ap_verdict = rep.ap.violated ? "necessary-condition-violated" : "consistent";

      if (cert.verdict == certificate_verdict::satisfied &&
          rep.classification == blowup_class::blowup) {
        std::lock_guard<std::mutex> lock(msg_mutex);
        incoherent = true;
        incoherent_msg = "satisfied certificate with blow-up classification at p=" +
                         fmt_g12(c.p) + " eps=" + fmt_g12(c.eps);
      }

      // grid-refinement stability of the blow-up time
      if (cfg.refine_levels > 1 && rep.classification == blowup_class::blowup &&
          std::isfinite(rep.fit.t_star)) {
        group_spec rs = cfg.group;
        blowup_controls rctl = ctl;
        double worst = 0;
        for (int lvl = 2; lvl <= cfg.refine_levels; ++lvl) {
          for (auto& ax : rs.axes) {
            ax.points *= 2;
            ax.spacing *= 0.5;
          }
          rctl.dt0 *= 0.5;
          const group_model gr = make_group(rs);
          const grid_field ur = detail::build_cell_data(gr, cfg, c.eps, c.gamma);
          rctl.m_max = cfg.m_max_factor * sup_norm(ur);
          const auto rrep = integrate_nonlinear(gr, ur, nl, rctl);
          if (rrep.classification == blowup_class::blowup && std::isfinite(rrep.fit.t_star))
            worst = std::max(worst,
                             100.0 * std::abs(rrep.fit.t_star - rep.fit.t_star) /
                                 std::max(rep.fit.t_star, 1e-300));
          else
            worst = std::numeric_limits<double>::infinity();
        }
        row.refine_delta_pct = worst;
      }
    } catch (const error& e) {
      row.status = std::string("error: ") + e.what();
    }
    table.rows[ci] = row;
  };

  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          run_cell(i);
        }
      });
    for (auto& t : pool) t.join();
  }

  require(!incoherent.load(), errc::internal_invariant, incoherent_msg);
  for (const auto& w : cfg.warnings) table.notes.push_back(w);
  return table;
}

// --- emission -------------------------------------------------------------------

inline std::string sweep_csv(const sweep_table& t) {
  std::string s =
      "p,epsilon,gamma,classification,t_star_or_horizon,terminating,certificate,ap_monitor,"
      "status,refine_delta_pct\n";
  for (const auto& r : t.rows)
    s += fmt_g12(r.p) + "," + fmt_g12(r.eps) + "," + fmt_g12(r.gamma) + "," +
         r.classification + "," + fmt_g12(r.t_star_or_horizon) + "," + r.terminating + "," +
         r.certificate + "," + r.ap_verdict + "," + r.status + "," +
         fmt_g12(r.refine_delta_pct) + "\n";
  return s;
}

inline std::string sweep_json(const sweep_table& t) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(t.schema_version);
  w.key("p_F").value(t.p_f);
  w.key("group").value(t.group_desc);
  w.key("seed").value(t.seed);
  w.key("rows");
  w.begin_array();
  for (const auto& r : t.rows) {
    w.begin_object();
    w.key("p").value(r.p);
    w.key("epsilon").value(r.eps);
    w.key("gamma").value(r.gamma);
    w.key("classification").value(r.classification);
    w.key("t_star_or_horizon").value(r.t_star_or_horizon);
    w.key("terminating").value(r.terminating);
    w.key("certificate").value(r.certificate);
    w.key("ap_monitor").value(r.ap_verdict);
    w.key("status").value(r.status);
    w.key("refine_delta_pct").value(r.refine_delta_pct);
    w.end_object();
  }
  w.end_array();
  w.key("notes");
  w.begin_array();
  for (const auto& n : t.notes) w.value(n);
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

inline double parse_report_number(const nlohmann::json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v.get<double>();
}

/// Round-trip loader for regression tests.
inline sweep_table load_sweep_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.good(), errc::io_error, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  sweep_table t;
  t.schema_version = j.at("schema_version").get<int>();
  t.p_f = parse_report_number(j.at("p_F"));
  t.group_desc = j.at("group").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rj : j.at("rows")) {
    sweep_row r;
    r.p = parse_report_number(rj.at("p"));
    r.eps = parse_report_number(rj.at("epsilon"));
    r.gamma = parse_report_number(rj.at("gamma"));
    r.classification = rj.at("classification").get<std::string>();
    r.t_star_or_horizon = parse_report_number(rj.at("t_star_or_horizon"));
    r.terminating = rj.at("terminating").get<std::string>();
    r.certificate = rj.at("certificate").get<std::string>();
    r.ap_verdict = rj.at("ap_monitor").get<std::string>();
    r.status = rj.at("status").get<std::string>();
    r.refine_delta_pct = parse_report_number(rj.at("refine_delta_pct"));
    t.rows.push_back(r);
  }
  for (const auto& n : j.at("notes")) t.notes.push_back(n.get<std::string>());
  return t;
}

inline std::string abstract_certificates_csv(std::span<const abstract_certificate> certs) {
  std::string s = "type,a,b,d,C,p,gamma,K1,epsilon,verdict,integral,bound,threshold,satisfied,epsilon_star\n";
  for (const auto& c : certs) {
    s += c.profile.exponential ? "exponential" : "polynomial";
    s += "," + fmt_g12(c.profile.a) + "," + fmt_g12(c.profile.b) + "," +
         std::to_string(c.profile.d) + "," + fmt_g12(c.profile.c) + "," + fmt_g12(c.p) + "," +
         fmt_g12(c.gamma) + "," + fmt_g12(c.k1) + "," + fmt_g12(c.eps) + "," +
         (c.divergent ? "divergent" : "finite-bound") + "," + fmt_g12(c.integral) + "," +
         fmt_g12(c.bound) + "," + fmt_g12(c.threshold) + "," +
         (c.satisfied ? "true" : "false") + "," + fmt_g12(c.epsilon_star) + "\n";
  }
  return s;
}

inline std::string abstract_certificates_json(std::span<const abstract_certificate> certs) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("certificates");
  w.begin_array();
  for (const auto& c : certs) {
    w.begin_object();
    w.key("type").value(c.profile.exponential ? "exponential" : "polynomial");
    w.key("a").value(c.profile.a);
    w.key("b").value(c.profile.b);
    w.key("d").value(c.profile.d);
    w.key("C").value(c.profile.c);
    w.key("p").value(c.p);
    w.key("gamma").value(c.gamma);
    w.key("K1").value(c.k1);
    w.key("epsilon").value(c.eps);
    w.key("verdict").value(c.divergent ? "divergent" : "finite-bound");
    w.key("integral").value(c.integral);
    w.key("bound").value(c.bound);
    w.key("threshold").value(c.threshold);
    w.key("satisfied").value(c.satisfied);
    w.key("epsilon_star").value(c.epsilon_star);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

/// Writes the sweep table in the requested format; returns the file path.
/// Identical tables produce byte-identical files.
inline std::filesystem::path emit_report(const sweep_table& t, const std::filesystem::path& dir,
                                         const std::string& format) {
  require(!t.rows.empty(), errc::validation_error, "emit_report needs nonempty results");
  if (format == "csv") {
    const auto p = dir / "sweep.csv";
    write_text_file(p, sweep_csv(t));
    return p;
  }
  if (format == "json") {
    const auto p = dir / "sweep.json";
    write_text_file(p, sweep_json(t));
    return p;
  }
  fail(errc::unknown_format, "format must be csv or json");
}

inline std::filesystem::path emit_report(std::span<const abstract_certificate> certs,
                                         const std::filesystem::path& dir,
                                         const std::string& format) {
  require(!certs.empty(), errc::validation_error, "emit_report needs nonempty results");
  if (format == "csv") {
    const auto p = dir / "certificates.csv";
    write_text_file(p, abstract_certificates_csv(certs));
    return p;
  }
  if (format == "json") {
    const auto p = dir / "certificates.json";
    write_text_file(p, abstract_certificates_json(certs));
    return p;
  }
  fail(errc::unknown_format, "format must be csv or json");
}

}  // namespace heatlab
