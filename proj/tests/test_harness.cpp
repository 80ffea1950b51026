#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "heatlab/harness.hpp"
#include "test_util.hpp"

using namespace heatlab;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream f(p);
  f << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json small_euclid_sweep_config() {
  return nlohmann::json{
      {"group", {{"kind", "euclidean"}, {"n", 1}, {"N", 2048}, {"extent", 320.0}}},
      {"nonlinearity", {{"p", {2.0, 4.0}}, {"K1", 1.0}, {"K2", 1.0}}},
      {"data", {{"family", "kernel"}, {"epsilon", {1.0, 2.0}}, {"gamma", {0.5}}}},
      {"controls",
       {{"T_max", 40.0}, {"picard_steps", 64}, {"picard_k_max", 80}, {"dt0", 0.01}}},
      {"seed", 42}};
}

}  // namespace

TEST_CASE("load_config fills defaults and validates") {
  SECTION("minimal torus config gets the documented defaults") {
    const auto path = write_temp(
        "heatlab_min.json",
        R"({"group": {"kind": "torus", "N": 64, "extent": 6.283185307179586},
            "nonlinearity": {"p": [2]},
            "data": {"family": "constant", "value": [0.5]}})");
    const auto cfg = load_config(path.string());
    CHECK(cfg.t_max == 100.0);
    CHECK(cfg.tol == 1e-8);
    CHECK(cfg.family == data_family::constant);
    CHECK_FALSE(cfg.echo.empty());
    CHECK(cfg.warnings.empty());  // p_F infinite: straddle warning not applicable
  }
  SECTION("p grid {2} on the line warns about the unstraddled p_F") {
    nlohmann::json j = small_euclid_sweep_config();
    j["nonlinearity"]["p"] = {2.0};
    const auto cfg = parse_config(j, "test");
    bool found = false;
    for (const auto& w : cfg.warnings) found = found || w.find("p_F") != std::string::npos;
    CHECK(found);
  }
  SECTION("undersized euclidean boxes trip the truncation-rule warning") {
    nlohmann::json j = small_euclid_sweep_config();
    j["controls"]["T_max"] = 400.0;  // needs L >= 640
    const auto cfg = parse_config(j, "test");
    bool found = false;
    for (const auto& w : cfg.warnings)
      found = found || w.find("truncation") != std::string::npos;
    CHECK(found);
  }
  SECTION("parse errors carry the line") {
    const auto path = write_temp("heatlab_bad.json", "{\n  \"group\": [,]\n}");
    try {
      load_config(path.string());
      FAIL("expected config-error");
    } catch (const error& e) {
      CHECK(e.code() == errc::config_error);
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SECTION("validation errors name the violated invariant") {
    nlohmann::json j = small_euclid_sweep_config();
    j["data"]["epsilon"] = {-1.0};
    try {
      parse_config(j, "test");
      FAIL("expected validation-error");
    } catch (const error& e) {
      CHECK(e.code() == errc::validation_error);
      CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
    }
    j = small_euclid_sweep_config();
    j["data"] = {{"family", "kernel"}, {"epsilon", nlohmann::json::array()}};
    CHECK_THROWS_AS(parse_config(j, "test"), error);
    j = small_euclid_sweep_config();
    j["data"] = {{"family", "file"}, {"path", "/nonexistent/u0.f64"}};
    CHECK_THROWS_AS(parse_config(j, "test"), error);
  }
}

TEST_CASE("certify_abstract closed forms") {
  abstract_profile poly;
  poly.a = 4.0;
  poly.b = 4.0;
  poly.c = 1.0;

  SECTION("(a=4, p=3/2) is the critical case: divergent") {
    const auto cert = certify_abstract(poly, 1.5, 1.0, 1.0, 0.1);
    CHECK(cert.divergent);
    CHECK(std::isinf(cert.bound));
  }
  SECTION("(a=4, p=1.6, gamma=1): bound = 5 eps^{0.6} C to 1e-12") {
    for (double eps : {0.01, 0.1, 0.5}) {
      const auto cert = certify_abstract(poly, 1.6, 1.0, 1.0, eps);
      REQUIRE_FALSE(cert.divergent);
      CHECK(cert.integral == Approx(5.0).margin(1e-12));
      CHECK(cert.bound == Approx(5.0 * std::pow(eps, 0.6)).margin(1e-12));
      CHECK(cert.threshold == Approx(1.0 / 0.6).margin(1e-12));
      CHECK(cert.satisfied == (cert.bound < cert.threshold));
    }
    // independent quadrature oracle for the truncated profile integral
    double quad = 0;
    const int n = 4'000'000;
    const double s_hi = 4e6;
    double prev_s = 1.0, prev_f = 1.0;
    for (int i = 1; i <= n; ++i) {
      const double s = std::pow(s_hi, static_cast<double>(i) / n);
      const double f = std::pow(s, -0.5 * 4.0 * 0.6);
      quad += 0.5 * (s - prev_s) * (f + prev_f);
      prev_s = s;
      prev_f = f;
    }
    const double truncated = 5.0 * (1.0 - std::pow(s_hi, -0.2));
    CHECK(quad == Approx(truncated).epsilon(1e-5));
    CHECK(5.0 - truncated <= 0.25);  // remainder accounted for analytically
  }
  SECTION("gamma >= 1 removes the small-time part even when b(p-1)/2 >= 1") {
    abstract_profile steep = poly;
    steep.b = 10.0;  // b(p-1)/2 = 3 >= 1, harmless for gamma >= 1
    const auto cert = certify_abstract(steep, 1.6, 1.0, 1.0, 0.1);
    CHECK(cert.integral == Approx(5.0).margin(1e-12));
    // and gamma < 1 includes the finite closed-form small-time piece
    const auto with_small = certify_abstract(steep, 1.6, 0.25, 1.0, 0.1);
    const double small_part = (1.0 - std::pow(0.25, 1.0 - 3.0)) / (1.0 - 3.0);
    CHECK(with_small.integral == Approx(5.0 + small_part).margin(1e-12));
  }
  SECTION("exponential profile: finite iff d(p-1)/2 > 1") {
    abstract_profile expo;
    expo.exponential = true;
    expo.d = 3;
    expo.c = 1.0;
    const auto fin = certify_abstract(expo, 2.0, 1.0, 1.0, 0.1);
    REQUIRE_FALSE(fin.divergent);  // d(p-1)/2 = 1.5 > 1
    CHECK(fin.integral == Approx(2.0).margin(1e-12));  // gamma^{1-alpha}/(alpha-1)
    const auto div = certify_abstract(expo, 1.5, 1.0, 1.0, 0.1);
    CHECK(div.divergent);  // d(p-1)/2 = 0.75
  }
  SECTION("validation") {
    CHECK_THROWS_AS(certify_abstract(poly, 1.6, -1.0, 1.0, 0.1), error);
    CHECK_THROWS_AS(certify_abstract(poly, 1.6, 1.0, 0.0, 0.1), error);
  }
}

TEST_CASE("run_sweep: dichotomy rows, coherence, determinism") {
  const auto cfg = parse_config(small_euclid_sweep_config(), "test");
  const auto table = run_sweep(cfg);
  REQUIRE(table.rows.size() == 4);  // p in {2,4} x eps in {1,2}
  CHECK(table.p_f == Approx(3.0));

  auto row_of = [&](double p, double eps) -> const sweep_row& {
    for (const auto& r : table.rows)
      if (r.p == Approx(p) && r.eps == Approx(eps)) return r;
    FAIL("row not found");
    return table.rows[0];
  };

  SECTION("p = 2 (below p_F) blows up; p = 4 small data is global and certified") {
    CHECK(row_of(2.0, 1.0).certificate == "divergent");
    CHECK(row_of(2.0, 1.0).classification == "blowup");
    CHECK(row_of(2.0, 2.0).classification == "blowup");
    CHECK(row_of(4.0, 1.0).certificate == "satisfied");
    CHECK(row_of(4.0, 1.0).classification == "global_so_far");
    CHECK(row_of(4.0, 1.0).status == "ok");
  }
  SECTION("rows are sorted by (p, eps, gamma) and statuses are recorded") {
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      const auto& a = table.rows[i - 1];
      const auto& b = table.rows[i];
      REQUIRE((a.p < b.p || (a.p == b.p && a.eps <= b.eps)));
    }
  }
  SECTION("decreasing epsilon never flips global to blowup") {
    for (double p : {2.0, 4.0}) {
      const bool big_global = row_of(p, 2.0).classification == "global_so_far";
      const bool small_blow = row_of(p, 1.0).classification == "blowup";
      REQUIRE_FALSE((big_global && small_blow));
    }
  }
  SECTION("serialization is deterministic and worker-count independent") {
    const std::string bytes1 = sweep_json(table);
    const std::string bytes2 = sweep_json(run_sweep(cfg));
    CHECK(bytes1 == bytes2);
    auto cfg_mt = cfg;
    cfg_mt.workers = 3;
    const std::string bytes3 = sweep_json(run_sweep(cfg_mt));
    CHECK(bytes1 == bytes3);
  }
  SECTION("json round-trips through load") {
    const fs::path dir = fs::temp_directory_path() / "heatlab_roundtrip";
    const auto path = emit_report(table, dir, "json");
    const auto loaded = load_sweep_json(path);
    const fs::path dir2 = dir / "again";
    const auto path2 = emit_report(loaded, dir2, "json");
    CHECK(slurp(path) == slurp(path2));
  }
  SECTION("csv: header plus one line per row, emitted bytes stable") {
    sweep_table one;
    one.p_f = 3.0;
    one.group_desc = "test";
    one.rows.push_back(table.rows[0]);
    const std::string csv = sweep_csv(one);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.rfind("p,epsilon,gamma,", 0) == 0);
  }
}

TEST_CASE("run_sweep captures per-cell failures without aborting") {
  nlohmann::json j = small_euclid_sweep_config();
  j["data"]["gamma"] = {0.01};  // under-resolved kernel: the cell must fail, not the sweep
  j["nonlinearity"]["p"] = {4.0};
  j["data"]["epsilon"] = {1.0};
  const auto cfg = parse_config(j, "test");
  const auto table = run_sweep(cfg);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].status.rfind("error:", 0) == 0);
  CHECK(table.rows[0].status.find("t-too-small") != std::string::npos);
}

TEST_CASE("torus sweep: every exponent blows up (D = 0), ODE oracle times") {
  nlohmann::json j{
      {"group", {{"kind", "torus"}, {"N", 64}, {"extent", 6.283185307179586}}},
      {"nonlinearity", {{"p", {2.0, 3.0, 4.0}}, {"K1", 1.0}, {"K2", 1.0}}},
      {"data", {{"family", "constant"}, {"value", {0.5}}}},
      {"controls", {{"T_max", 5.0}, {"dt0", 0.001}}},
      {"seed", 1}};
  const auto cfg = parse_config(j, "test");
  const auto table = run_sweep(cfg);
  REQUIRE(table.rows.size() == 3);
  for (const auto& r : table.rows) {
    CHECK(r.classification == "blowup");
    CHECK(r.certificate == "divergent");
    const double oracle = std::pow(0.5, 1.0 - r.p) / (r.p - 1.0);
    CHECK(r.t_star_or_horizon == Approx(oracle).epsilon(0.02));
  }
}

TEST_CASE("grid refinement column") {
  nlohmann::json j{
      {"group", {{"kind", "torus"}, {"N", 64}, {"extent", 6.283185307179586}}},
      {"nonlinearity", {{"p", {2.0}}, {"K1", 1.0}, {"K2", 1.0}}},
      {"data", {{"family", "constant"}, {"value", {1.0}}}},
      {"controls", {{"T_max", 3.0}, {"dt0", 0.001}, {"refine_levels", 2}}},
      {"seed", 1}};
  const auto table = run_sweep(parse_config(j, "test"));
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].refine_delta_pct == Approx(0.0).margin(5.0));
}

TEST_CASE("emit_report rejects unknown formats and empty results") {
  sweep_table t;
  t.rows.push_back(sweep_row{});
  const fs::path dir = fs::temp_directory_path() / "heatlab_emit";
  try {
    emit_report(t, dir, "xml");
    FAIL("expected unknown-format");
  } catch (const error& e) {
    CHECK(e.code() == errc::unknown_format);
  }
  sweep_table empty;
  CHECK_THROWS_AS(emit_report(empty, dir, "csv"), error);
}

TEST_CASE("field dumps round-trip through the binary format") {
  const auto g = make_group(euclidean_box(1, 20.0, 64));
  const auto u = heat_kernel(g, 0.5);
  const fs::path path = fs::temp_directory_path() / "heatlab_field.f64";
  dump_field(u, path);
  const auto back = load_field(g, path);
  for (std::int64_t i = 0; i < u.size(); ++i) REQUIRE(back[i] == u[i]);
  CHECK(fs::exists(path.string() + ".json"));
}

TEST_CASE("abstract certifier agrees with the concrete certificate on the line") {
  // fitted euclidean profile has a = b = n = 1; verdicts must agree across
  // the (p, gamma, eps) probes once eps is clear of both thresholds
  const auto g = make_group(euclidean_box(1, 160.0, 1024));
  const double t_lo = std::max(1.02 * 4.0 * g.max_spacing() * g.max_spacing(), 1e-3);
  const auto samples = kernel_sup_curve(g, testutil::logspace(t_lo, 100.0, 16));
  std::vector<curve_point> curve;
  for (const auto& s : samples) curve.push_back({s.t, s.sup});
  const auto profile = fit_profile(g, curve);
  REQUIRE(profile.large_exp == Approx(1.0).margin(0.1));

  const auto nl4 = power_nonlinearity(4.0);
  for (double gamma : {1.0, 2.0}) {
    for (double eps : {0.2, 4.0}) {
      const auto abs_cert = certify_abstract(g, profile, 4.0, gamma, 1.0, eps);
      const auto conc = existence_condition(g, small_data_generator(g, gamma, eps), nl4,
                                            200.0, profile);
      REQUIRE_FALSE(abs_cert.divergent);
      REQUIRE(conc.verdict != certificate_verdict::divergent);
      CHECK(abs_cert.satisfied == (conc.verdict == certificate_verdict::satisfied));
    }
    // below p_F both certify divergence for any positive data
    const auto abs_div = certify_abstract(g, profile, 2.0, gamma, 1.0, 0.5);
    const auto conc_div = existence_condition(g, small_data_generator(g, gamma, 0.5),
                                              power_nonlinearity(2.0), 200.0, profile);
    CHECK(abs_div.divergent);
    CHECK(conc_div.verdict == certificate_verdict::divergent);
  }
}

#ifdef HEATLAB_CLI_PATH
TEST_CASE("cli exit codes: 0 ok, 1 config error") {
  const std::string cli = HEATLAB_CLI_PATH;
  const int bad = std::system((cli + " sweep --config /nonexistent.json > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad) == 1);
  const fs::path cfg = write_temp("heatlab_badval.json",
                                  R"({"group": {"kind": "torus", "N": 64, "extent": 6.28},
                                      "nonlinearity": {"p": [2]},
                                      "data": {"family": "constant", "value": [-3]}})");
  const int invalid = std::system(
      (cli + " sweep --config " + cfg.string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(invalid) == 1);
}
#endif
