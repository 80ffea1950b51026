// Experiment driver: kernel checks, certificates, mild solves, blow-up runs
// and full dichotomy sweeps, all from a JSON config.
//
// Exit codes: 0 success, 1 config/validation error, 2 internal invariant
// violation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "heatlab/blowup_lab.hpp"
#include "heatlab/harness.hpp"
#include "heatlab/heat_engine.hpp"
#include "heatlab/kernel_bounds.hpp"
#include "heatlab/mild_solver.hpp"
#include "heatlab/report_io.hpp"

namespace hl = heatlab;
namespace fs = std::filesystem;

namespace {

struct cli_options {
  std::string config;
  std::string out;
  std::string format;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

hl::experiment_config load_with_overrides(const cli_options& opt) {
  hl::experiment_config cfg = hl::load_config(opt.config);
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (!opt.format.empty()) {
    hl::require(opt.format == "csv" || opt.format == "json", hl::errc::unknown_format,
                "--format must be csv or json");
    cfg.format = opt.format;
  }
  if (opt.workers > 0) cfg.workers = opt.workers;
  if (opt.seed_set) cfg.seed = opt.seed;
  return cfg;
}

void echo_config(const hl::experiment_config& cfg) {
  hl::write_text_file(fs::path(cfg.out_dir) / "config_echo.json", cfg.echo);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
}

std::string cell_tag(double p, double eps, double gamma) {
  return "p" + hl::fmt_g12(p) + "_eps" + hl::fmt_g12(eps) + "_gamma" + hl::fmt_g12(gamma);
}

std::vector<double> kernel_times_for(const hl::experiment_config& cfg, const hl::group_model& g) {
  if (!cfg.kernel_times.empty()) return cfg.kernel_times;
  return hl::detail::default_profile_times(g);
}

std::vector<double> radii_for(const hl::experiment_config& cfg) {
  if (!cfg.probe_radii.empty()) return cfg.probe_radii;
  return {0.5, 1.0, 1.5, 2.0, 2.5};
}

int cmd_kernel_check(const cli_options& opt) {
  const auto cfg = load_with_overrides(opt);
  echo_config(cfg);
  const hl::group_model g = hl::make_group(cfg.group);
  const auto times = kernel_times_for(cfg, g);
  const auto curve = hl::kernel_sup_curve(g, times);
  hl::write_text_file(fs::path(cfg.out_dir) / "kernel_curve.csv", hl::kernel_curve_csv(curve));

  std::vector<hl::curve_point> sup;
  for (const auto& c : curve) sup.push_back({c.t, c.sup});
  // the profile fit needs a decade on each side of t = 1; coarse lattices
  // cannot resolve that, so a failed fit is reported rather than fatal
  hl::volume_profile profile;
  std::string profile_note;
  try {
    profile = hl::fit_profile(g, sup);
  } catch (const hl::error& e) {
    profile_note = e.what();
  }
  {
    hl::json_writer w;
    w.begin_object();
    w.key("schema_version").value(1);
    w.key("fitted").value(profile.fitted);
    w.key("small_exp_b").value(profile.small_exp);
    w.key("large_exp_a").value(profile.large_exp);
    w.key("c_small_low").value(profile.c_small_low);
    w.key("c_small_up").value(profile.c_small_up);
    w.key("c_large_low").value(profile.c_large_low);
    w.key("c_large_up").value(profile.c_large_up);
    w.key("note").value(profile_note);
    w.end_object();
    hl::write_text_file(fs::path(cfg.out_dir) / "profile.json", w.str() + "\n");
  }

  std::vector<double> bound_times;
  for (std::size_t i = 0; i < times.size(); i += std::max<std::size_t>(1, times.size() / 5))
    bound_times.push_back(times[i]);
  const auto rep = hl::verify_kernel_bounds(g, bound_times, radii_for(cfg), cfg.bound_slack);
  hl::write_text_file(fs::path(cfg.out_dir) / "bound_report.json", hl::bound_report_json(rep));
  std::cout << (rep.pass ? "kernel bounds: pass" : "kernel bounds: FAIL")
            << " (violation ratio " << hl::fmt_g12(rep.violation_ratio) << ", slack "
            << hl::fmt_g12(rep.slack) << ")\n";
  return 0;
}

int cmd_certify(const cli_options& opt) {
  const auto cfg = load_with_overrides(opt);
  echo_config(cfg);

  if (cfg.has_profile) {
    hl::abstract_profile prof;
    prof.exponential = cfg.profile_exponential;
    prof.d = cfg.profile_d;
    prof.a = cfg.profile_a;
    prof.b = cfg.profile_b;
    prof.c = cfg.profile_c;
    std::vector<hl::abstract_certificate> certs;
    for (double p : cfg.p_grid)
      for (double eps : cfg.epsilon_grid)
        for (double gamma : cfg.gamma_grid)
          certs.push_back(hl::certify_abstract(prof, p, gamma, cfg.k1, eps));
    const auto path = hl::emit_report(certs, cfg.out_dir, cfg.format);
    std::cout << "wrote " << path.string() << " (" << certs.size() << " certificates)\n";
    return 0;
  }

  const hl::group_model g = hl::make_group(cfg.group);
  const auto times = hl::detail::default_profile_times(g);
  const auto samples = hl::kernel_sup_curve(g, times);
  std::vector<hl::curve_point> sup;
  for (const auto& s : samples) sup.push_back({s.t, s.sup});
  const auto profile = hl::fit_profile(g, sup);

  std::string all;
  for (double p : cfg.p_grid)
    for (double eps : hl::detail::cell_eps_grid(cfg))
      for (double gamma : hl::detail::cell_gamma_grid(cfg)) {
        hl::nonlinearity nl;
        nl.p = p;
        nl.k1 = cfg.k1;
        nl.k2 = cfg.k2;
        const auto u0 = hl::detail::build_cell_data(g, cfg, eps, gamma);
        const auto cert = hl::existence_condition(g, u0, nl, cfg.s_cut, profile,
                                                  cfg.certificate_nodes);
        all += hl::certificate_json(cert);
        std::cout << cell_tag(p, eps, gamma) << ": " << hl::verdict_name(cert.verdict) << "\n";
      }
  hl::write_text_file(fs::path(cfg.out_dir) / "certificates.jsonl", all);
  return 0;
}

int cmd_solve(const cli_options& opt) {
  const auto cfg = load_with_overrides(opt);
  echo_config(cfg);
  const hl::group_model g = hl::make_group(cfg.group);
  const auto times = hl::detail::default_profile_times(g);
  const auto samples = hl::kernel_sup_curve(g, times);
  std::vector<hl::curve_point> sup;
  for (const auto& s : samples) sup.push_back({s.t, s.sup});
  const auto profile = hl::fit_profile(g, sup);

  for (double p : cfg.p_grid)
    for (double eps : hl::detail::cell_eps_grid(cfg))
      for (double gamma : hl::detail::cell_gamma_grid(cfg)) {
        hl::nonlinearity nl;
        nl.p = p;
        nl.k1 = cfg.k1;
        nl.k2 = cfg.k2;
        const auto u0 = hl::detail::build_cell_data(g, cfg, eps, gamma);
        const auto cert = hl::existence_condition(g, u0, nl, cfg.s_cut, profile,
                                                  cfg.certificate_nodes);
        const auto sol = hl::picard_solve(g, u0, nl, cfg.t_max, cfg.picard_steps, cfg.tol,
                                          cfg.picard_k_max);
        const auto tag = cell_tag(p, eps, gamma);
        hl::write_text_file(fs::path(cfg.out_dir) / ("solution_" + tag + ".json"),
                            hl::solution_json(sol));
        hl::write_text_file(fs::path(cfg.out_dir) / ("certificate_" + tag + ".json"),
                            hl::certificate_json(cert));
        if (cfg.dump_fields && !sol.u.empty())
          hl::dump_field(sol.u.back(), fs::path(cfg.out_dir) / ("u_final_" + tag + ".f64"));
        std::cout << tag << ": " << (sol.converged ? "converged" : "no-convergence")
                  << " iterations=" << sol.iterations << " residual="
                  << hl::fmt_g12(sol.residual) << "\n";
      }
  return 0;
}

int cmd_blowup(const cli_options& opt) {
  const auto cfg = load_with_overrides(opt);
  echo_config(cfg);
  const hl::group_model g = hl::make_group(cfg.group);

  for (double p : cfg.p_grid)
    for (double eps : hl::detail::cell_eps_grid(cfg))
      for (double gamma : hl::detail::cell_gamma_grid(cfg)) {
        hl::nonlinearity nl;
        nl.p = p;
        nl.k1 = cfg.k1;
        nl.k2 = cfg.k2;
        const auto u0 = hl::detail::build_cell_data(g, cfg, eps, gamma);
        hl::blowup_controls ctl;
        ctl.dt0 = cfg.dt0;
        ctl.dt_min = cfg.dt_min;
        ctl.t_max = cfg.t_max;
        ctl.safety = cfg.safety;
        ctl.m_max = cfg.m_max_factor * hl::sup_norm(u0);
        ctl.monitor_slack = cfg.monitor_slack;
        ctl.with_ap_trace = cfg.k2.has_value();
        const auto rep = hl::integrate_nonlinear(g, u0, nl, ctl);
        const auto tag = cell_tag(p, eps, gamma);
        hl::write_text_file(fs::path(cfg.out_dir) / ("blowup_" + tag + ".json"),
                            hl::blowup_report_json(rep));
        hl::write_text_file(fs::path(cfg.out_dir) / ("trace_" + tag + ".csv"),
                            hl::trace_csv(rep));
        if (!rep.ap.times.empty())
          hl::write_text_file(fs::path(cfg.out_dir) / ("monitor_" + tag + ".json"),
                              hl::monitor_report_json(rep.ap));
        std::cout << tag << ": " << hl::blowup_class_name(rep.classification);
        if (rep.classification == hl::blowup_class::blowup)
          std::cout << " T*=" << hl::fmt_g12(rep.fit.t_star);
        std::cout << "\n";
      }
  return 0;
}

int cmd_sweep(const cli_options& opt) {
  const auto cfg = load_with_overrides(opt);
  echo_config(cfg);
  const auto table = hl::run_sweep(cfg);
  const auto path = hl::emit_report(table, cfg.out_dir, cfg.format);
  std::cout << "wrote " << path.string() << " (" << table.rows.size() << " rows, p_F="
            << hl::fmt_g12(table.p_f) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heatlab: heat semigroups, mild solutions and blow-up detection on group lattices"};
  app.require_subcommand(1);

  cli_options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
    sub->add_option("--out", opt.out, "output directory (overrides config)");
    sub->add_option("--format", opt.format, "csv|json (overrides config)");
    sub->add_option("--workers", opt.workers, "worker threads (overrides config)");
    sub->add_option("--seed", opt.seed, "seed (overrides config)")
        ->each([&](const std::string&) { opt.seed_set = true; });
  };

  auto* kernel = app.add_subcommand("kernel-check", "kernel curve, profile fit, Gaussian bounds");
  auto* certify = app.add_subcommand("certify", "existence certificates (group data or abstract profile)");
  auto* solve = app.add_subcommand("solve", "Picard mild solutions with barrier checks");
  auto* blowup = app.add_subcommand("blowup", "direct nonlinear integration with monitors");
  auto* sweep = app.add_subcommand("sweep", "full dichotomy sweep over the config grid");
  for (auto* sub : {kernel, certify, solve, blowup, sweep}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (kernel->parsed()) return cmd_kernel_check(opt);
    if (certify->parsed()) return cmd_certify(opt);
    if (solve->parsed()) return cmd_solve(opt);
    if (blowup->parsed()) return cmd_blowup(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
  } catch (const hl::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case hl::errc::config_error:
      case hl::errc::validation_error:
      case hl::errc::io_error:
      case hl::errc::unknown_format:
      case hl::errc::unsupported_kind:
      case hl::errc::invalid_lattice:
        return 1;
      default:
        return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
