#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qcurv/cli.hpp"

using namespace qcurv;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::cout << id << (pass ? " PASS " : " FAIL ") << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Run {
  bool pass = true;
  std::string detail;
};

// All checks of a runner must pass; the detail lists the failing ones.
Run run_checks(cli::Outcome (*runner)(const cli::Config&, const QuadratureSpec&), const nlohmann::json& cfg,
               const QuadratureSpec& spec = {}) {
  Run r;
  const cli::Outcome o = runner(cli::Config(cfg), spec);
  int n = 0;
  for (const auto& c : o.checks) {
    ++n;
    if (!c.pass) {
      r.pass = false;
      r.detail += c.name + " (" + c.detail + ") ";
    }
  }
  if (r.pass) r.detail = std::to_string(n) + (n == 1 ? " check" : " checks");
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  const cli::Outcome o = cli::run_residual(cli::Config({{"n", 1}, {"lambda", 1.0}}), QuadratureSpec{});
  const double t = seconds_since(t0);
  const double worst = o.report.at("worst_scaled_residual");
  report("AC1", worst <= 1e-4 && t <= 10.0, "n=1 max residual " + cli::fmt(worst) + " in " + cli::fmt(t) + " s");
}

void ac2() {
  const auto t0 = std::chrono::steady_clock::now();
  const cli::Outcome o = cli::run_residual(cli::Config({{"n", 3}, {"lambda", 1.0}}), QuadratureSpec{});
  const double t = seconds_since(t0);
  const double worst = o.report.at("worst_scaled_residual");
  report("AC2", worst <= 1e-3 && t <= 120.0, "n=3 max residual/max(1,rhs) " + cli::fmt(worst) + " in " + cli::fmt(t) + " s");
}

void ac3() {
  double worst = 0.0;
  for (int n : {1, 3}) {
    const double target = n == 1 ? 2.0 * kPi : 2.0 * kPi * kPi;
    for (double lambda : {0.5, 1.0, 2.0}) {
      const VolumeAlpha va = volume_and_alpha(SphericalSolution(n, lambda), QuadratureSpec{});
      worst = std::max({worst, std::abs(va.V / target - 1.0), std::abs(va.alpha / 2.0 - 1.0)});
    }
  }
  report("AC3", worst <= 1e-4, "max relative error of V and alpha " + cli::fmt(worst));
}

struct Shared {
  Decomposition n1, n3;
  GrowthReport n3_growth;
};

Shared decompose() {
  Shared s;
  const SphericalSolution s1(1, 1.0), s3(3, 1.0);
  DecompositionOptions o1;
  o1.exp_nu_decay = s1.exp_nu_decay();
  s.n1 = asymptotic_decomposition(s1.field(), QuadratureSpec{}, o1);
  QuadratureSpec spec;
  spec.rel_tol = 1e-8;
  DecompositionOptions o3;
  o3.exp_nu_decay = s3.exp_nu_decay();
  o3.derivatives = false;
  s.n3 = asymptotic_decomposition(s3.field(), spec, o3);
  s.n3_growth = growth_criteria(s3.field(), s.n3);
  return s;
}

void ac4(const Shared& s) {
  bool pass = true;
  std::string detail;
  for (const auto* d : {&s.n1, &s.n3}) {
    const AsymptoticFit& f = d->fit;
    pass = pass && f.alpha_hat >= 1.9 && f.alpha_hat <= 2.1 && f.lower_holds && f.upper_holds;
    detail += "alpha_hat " + cli::fmt(f.alpha_hat) + (f.lower_holds && f.upper_holds ? " sandwich holds; " : " sandwich fails; ");
  }
  report("AC4", pass, detail + "window [1e2, 1e4]");
}

void ac5() {
  bool pass = true;
  std::string detail;
  for (int j : {1, 0, 2}) {
    const Run r = run_checks(cli::run_scaling, {{"n", 3}, {"j", j}, {"sigma", 0.5}, {"radii", {1.0, 2.0, 4.0}}});
    pass = pass && r.pass;
    if (!r.pass) detail += "j=" + std::to_string(j) + ": " + r.detail;
  }
  report("AC5", pass, pass ? "spread <= 2% for j = 0, 1, 2" : detail);
}

void ac6() {
  bool pass = true;
  std::string detail;
  for (const char* kind : {"schwartz", "moment", "support"}) {
    const Run r = run_checks(cli::run_estimates, {{"kind", kind}});
    pass = pass && r.pass;
    detail += std::string(kind) + ": " + r.detail + "; ";
  }
  report("AC6", pass, detail);
}

void ac7() {
  const Run r = run_checks(cli::run_green, {{"suite", "all"}});
  report("AC7", r.pass, "green suites: " + r.detail);
}

void ac8() {
  const cli::Outcome o = cli::run_bm(cli::Config(nlohmann::json::object()), QuadratureSpec{});
  const bool pass = o.all_pass();
  std::string detail;
  for (const auto& c : o.checks) detail += c.name + " " + (c.pass ? "ok" : "FAILED") + " (" + c.detail + "); ";
  report("AC8", pass, detail);
}

void ac9() {
  const Run r = run_checks(cli::run_estimates, {{"kind", "riesz"}, {"n", 3}, {"p", 2.0}, {"q", 2.0}});
  report("AC9", r.pass, "riesz full space and ball: " + r.detail);
}

void ac10(const Shared& s) {
  const Run syn = run_checks(cli::run_asymptotics, {{"field", "synthetic"}, {"n", 3}, {"quadrature", {{"rel_tol", 1e-8}}}});
  const double lim = s.n3_growth.laplacian_limits.at(0).limit;
  const bool sph = s.n3.deg_P == 0 && std::abs(lim) <= 1e-3;
  report("AC10", syn.pass && sph,
         "synthetic: " + syn.detail + "; n=3 spherical deg_P " + std::to_string(s.n3.deg_P) + ", laplacian limit " + cli::fmt(lim));
}

// Each command runs twice, with one and two worker threads, into separate
// directories. Outputs must match byte for byte; manifests must match apart
// from the wall time and the output directory.
void ac11() {
  const std::vector<std::pair<std::string, nlohmann::json>> runs{
      {"residual", {{"n", 1}}},
      {"potential", {{"n", 3}, {"radii", {0.0, 2.0}}}},
      {"asymptotics", {{"n", 1}}},
      {"scaling", {{"n", 3}, {"j", 1}}},
      {"green", {{"suite", "maxprinciple"}, {"samples", 50}}},
      {"green", {{"suite", "kernels"}}},
      {"estimates", {{"kind", "moment"}}},
      {"bm", {{"ps", {1.0, 3.0}}}},
      {"constants", nlohmann::json::object()},
  };
  const fs::path root = fs::temp_directory_path() / "qcurv_acceptance_determinism";
  fs::remove_all(root);
  bool pass = true;
  std::string detail;
  int files = 0;
  std::ostringstream sink;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::vector<fs::path> dirs;
    std::vector<nlohmann::json> manifests;
    for (const char* threads : {"1", "2"}) {
      ::setenv("QCURV_THREADS", threads, 1);
      nlohmann::json cfg = runs[i].second;
      const fs::path d = root / (std::to_string(i) + "_" + threads);
      cfg["output_dir"] = d.string();
      const int code = cli::execute(runs[i].first, cfg, false, sink, sink);
      if (code != cli::kOk) {
        pass = false;
        detail += runs[i].first + " exited " + std::to_string(code) + "; ";
      }
      dirs.push_back(d);
      auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
      m.erase("wall_time");
      m["config"].erase("output_dir");
      m.erase("config_digest");
      manifests.push_back(m);
    }
    ::unsetenv("QCURV_THREADS");
    if (manifests[0] != manifests[1]) {
      pass = false;
      detail += runs[i].first + " manifest differs; ";
    }
    for (const auto& [file, digest] : manifests[0].at("outputs").items()) {
      ++files;
      if (slurp(dirs[0] / file) != slurp(dirs[1] / file)) {
        pass = false;
        detail += runs[i].first + "/" + file + " differs; ";
      }
    }
  }
  fs::remove_all(root);
  report("AC11", pass, pass ? std::to_string(files) + " output files identical across reruns" : detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  ac1();
  ac2();
  ac3();
  const Shared shared = decompose();
  ac4(shared);
  ac5();
  ac6();
  ac7();
  ac8();
  ac9();
  ac10(shared);
  ac11();
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << " in "
            << cli::fmt(seconds_since(t0)) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
