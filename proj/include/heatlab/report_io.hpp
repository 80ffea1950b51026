#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "heatlab/blowup_lab.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/grid_field.hpp"
#include "heatlab/kernel_bounds.hpp"
#include "heatlab/mild_solver.hpp"

namespace heatlab {

/// Deterministic float formatting for every report: %.12g, with inf/nan
/// rendered as words.
inline std::string fmt_g12(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// Minimal ordered JSON writer: insertion-ordered keys, fixed float
/// formatting, two-space indentation.  Keeps report bytes reproducible.
class json_writer {
 public:
  std::string str() const { return out_; }

  json_writer& begin_object() {
    comma();
    out_ += "{";
    stack_.push_back('o');
    first_ = true;
    return *this;
  }
  json_writer& end_object() {
    out_ += newline_indent(static_cast<int>(stack_.size()) - 1) + "}";
    stack_.pop_back();
    first_ = false;
    return *this;
  }
  json_writer& begin_array() {
    comma();
    out_ += "[";
    stack_.push_back('a');
    first_ = true;
    return *this;
  }
  json_writer& end_array() {
    out_ += newline_indent(static_cast<int>(stack_.size()) - 1) + "]";
    stack_.pop_back();
    first_ = false;
    return *this;
  }
  json_writer& key(const std::string& k) {
    comma();
    out_ += quote(k) + ": ";
    pending_value_ = true;
    return *this;
  }
  json_writer& value(double v) {
    comma();
    const std::string s = fmt_g12(v);
    // JSON numbers cannot be inf/nan; emit them as strings
    out_ += (std::isfinite(v) ? s : quote(s));
    return *this;
  }
  json_writer& value(std::int64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
  }
  json_writer& value(int v) { return value(static_cast<std::int64_t>(v)); }
  json_writer& value(std::uint64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
  }
  json_writer& value(bool v) {
    comma();
    out_ += v ? "true" : "false";
    return *this;
  }
  json_writer& value(const std::string& v) {
    comma();
    out_ += quote(v);
    return *this;
  }
  json_writer& value(const char* v) { return value(std::string(v)); }
  json_writer& values(std::span<const double> vs) {
    begin_array();
    for (double v : vs) value(v);
    return end_array();
  }

 private:
  static std::string quote(const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      switch (c) {
        case '"': q += "\\\""; break;
        case '\\': q += "\\\\"; break;
        case '\n': q += "\\n"; break;
        case '\t': q += "\\t"; break;
        default: q += c;
      }
    }
    return q + "\"";
  }
  std::string newline_indent(int depth) const {
    std::string s = "\n";
    for (int i = 0; i < depth; ++i) s += "  ";
    return s;
  }
  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (stack_.empty()) return;
    if (!first_) out_ += ",";
    out_ += newline_indent(static_cast<int>(stack_.size()));
    first_ = false;
  }

  std::string out_;
  std::vector<char> stack_;
  bool first_ = true;
  bool pending_value_ = false;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), errc::io_error, "cannot open " + path.string() + " for writing");
  f << content;
  require(f.good(), errc::io_error, "write failed: " + path.string());
}

/// Kernel curves serialize to CSV with columns t, sup_norm, mass.
inline std::string kernel_curve_csv(std::span<const kernel_curve_sample> curve) {
  std::string s = "t,sup_norm,mass\n";
  for (const auto& c : curve)
    s += fmt_g12(c.t) + "," + fmt_g12(c.sup) + "," + fmt_g12(c.mass_value) + "\n";
  return s;
}

inline std::string bound_report_json(const bound_report& rep) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("times").values(rep.times);
  w.key("radii").values(rep.radii);
  w.key("c_low").value(rep.c_low);
  w.key("c_up").value(rep.c_up);
  w.key("C_low").value(rep.big_c_low);
  w.key("C_up").value(rep.big_c_up);
  w.key("violation_ratio").value(rep.violation_ratio);
  w.key("slack").value(rep.slack);
  w.key("pass").value(rep.pass);
  w.key("probes").value(rep.probes);
  w.key("note").value(rep.note);
  w.end_object();
  return w.str() + "\n";
}

inline std::string certificate_json(const existence_certificate& c) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("p").value(c.p);
  w.key("K1").value(c.k1);
  w.key("I_numeric").value(c.integral_numeric);
  w.key("I_tail").value(c.integral_tail);
  w.key("I_total").value(c.integral_total);
  w.key("threshold").value(c.threshold);
  w.key("verdict").value(verdict_name(c.verdict));
  w.key("C").value(c.growth_constant);
  w.key("p_F").value(c.fujita_p);
  w.key("S_cut").value(c.s_cut);
  w.end_object();
  return w.str() + "\n";
}

inline std::string trace_csv(const blowup_report& rep) {
  std::string s = "t,sup_norm,mass,dt,ap_value\n";
  // ap probe times differ from trace times; interpolate the monitor value
  auto ap_at = [&](double t) -> std::string {
    if (rep.ap.times.empty()) return "";
    const auto& ts = rep.ap.times;
    if (t <= ts.front()) return fmt_g12(rep.ap.values.front());
    for (std::size_t i = 1; i < ts.size(); ++i)
      if (t <= ts[i]) {
        const double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
        return fmt_g12(rep.ap.values[i - 1] + w * (rep.ap.values[i] - rep.ap.values[i - 1]));
      }
    return fmt_g12(rep.ap.values.back());
  };
  for (const auto& p : rep.trace)
    s += fmt_g12(p.t) + "," + fmt_g12(p.sup) + "," + fmt_g12(p.mass_value) + "," +
         fmt_g12(p.dt) + "," + ap_at(p.t) + "\n";
  return s;
}

inline std::string blowup_report_json(const blowup_report& rep) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("classification").value(blowup_class_name(rep.classification));
  w.key("terminating").value(stop_reason_name(rep.reason));
  w.key("t_star").value(rep.fit.t_star);
  w.key("t_star_residual").value(rep.fit.residual);
  w.key("rate_ratio").value(rep.fit.rate_ratio);
  w.key("horizon").value(rep.horizon);
  w.key("m_max").value(rep.m_max_used);
  w.key("trace_points").value(static_cast<std::int64_t>(rep.trace.size()));
  w.key("ap_monitor");
  w.begin_object();
  w.key("a_p").value(rep.ap.a_p);
  w.key("max_ratio").value(rep.ap.max_ratio);
  w.key("violated").value(rep.ap.violated);
  w.key("first_crossing").value(rep.ap.first_crossing);
  w.key("slack").value(rep.ap.slack);
  w.end_object();
  w.end_object();
  return w.str() + "\n";
}

inline std::string monitor_report_json(const monitor_report& rep) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("times").values(rep.times);
  w.key("values").values(rep.values);
  w.key("a_p").value(rep.a_p);
  w.key("max_ratio").value(rep.max_ratio);
  w.key("violated").value(rep.violated);
  w.key("first_crossing").value(rep.first_crossing);
  w.key("slack").value(rep.slack);
  w.key("note").value(rep.note);
  w.end_object();
  return w.str() + "\n";
}

/// Snapshot metadata + per-snapshot extrema of a mild solution.
inline std::string solution_json(const mild_solution& sol) {
  json_writer w;
  w.begin_object();
  w.key("schema_version").value(1);
  w.key("converged").value(sol.converged);
  w.key("iterations").value(sol.iterations);
  w.key("gap").value(sol.gap);
  w.key("residual").value(sol.residual);
  w.key("monotonicity_margin").value(sol.monotonicity_margin);
  w.key("barrier_margin").value(sol.barrier_margin);
  w.key("barrier_finite").value(sol.barrier_finite);
  w.key("times").values(sol.times);
  w.key("omega").values(sol.omega_disc);
  std::vector<double> sup_u, mass_u;
  for (const auto& f : sol.u) {
    sup_u.push_back(sup_norm(f));
    mass_u.push_back(mass(f));
  }
  w.key("sup").values(sup_u);
  w.key("mass").values(mass_u);
  w.key("sup_linear").values(sol.sup_linear);
  w.end_object();
  return w.str() + "\n";
}

/// Flat little-endian float64 dump with a JSON sidecar describing the lattice.
inline void dump_field(const grid_field& u, const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), errc::io_error, "cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(u.values().data()),
          static_cast<std::streamsize>(u.values().size() * sizeof(double)));
  require(f.good(), errc::io_error, "field dump failed: " + path.string());

  const group_model& g = u.model();
  json_writer w;
  w.begin_object();
  w.key("dtype").value("float64");
  w.key("order").value("C");
  w.key("count").value(u.size());
  w.key("shape");
  w.begin_array();
  for (int a = 0; a < g.rank(); ++a) w.value(static_cast<std::int64_t>(g.axis(a).points));
  w.end_array();
  w.key("spacing");
  w.begin_array();
  for (int a = 0; a < g.rank(); ++a) w.value(g.axis(a).spacing);
  w.end_array();
  w.key("offset");
  w.begin_array();
  for (int a = 0; a < g.rank(); ++a) w.value(g.offset(a));
  w.end_array();
  w.key("time_tag").value(u.time_tag ? fmt_g12(*u.time_tag) : std::string("none"));
  w.end_object();
  write_text_file(path.string() + ".json", w.str() + "\n");
}

inline grid_field load_field(const group_model& g, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), errc::io_error, "cannot open field file " + path.string());
  grid_field u(g);
  f.read(reinterpret_cast<char*>(u.values().data()),
         static_cast<std::streamsize>(u.values().size() * sizeof(double)));
  require(f.gcount() == static_cast<std::streamsize>(u.values().size() * sizeof(double)),
          errc::io_error, "field file shorter than the lattice: " + path.string());
  return u;
}

}  // namespace heatlab
