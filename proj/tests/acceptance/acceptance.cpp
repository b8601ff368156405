// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cle/cli.hpp"
#include "cle/fokker_planck.hpp"
#include "cle/hodge.hpp"
#include "cle/kramers.hpp"

using namespace cle;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CLE_TEST_DATA;
const fs::path kOut = CLE_ACCEPT_OUT;

// criterion 1
constexpr double kReconstructionTol = 1e-12;
constexpr double kCrossTol = 1e-8;
constexpr double kPurityTol = 1e-6;
constexpr double kHodgeSeconds = 30.0;
// criterion 2
constexpr double kPhiSlope = 1.9;
constexpr double kEps = 0.1;
// criterion 3
constexpr double kDefectTol = 1e-10;
// criterion 4
constexpr double kBoltzmannL1 = 1e-3;
constexpr double kBoltzmannSlope = 1.9;
constexpr double kBoltzmannSeconds = 10.0;
// criterion 5
constexpr double kTiltAgreement = 1e-10;
constexpr double kTiltInteriorL1 = 5e-3;
constexpr double kTilt = 0.5;
constexpr double kInteriorRadius = 4.0;
// criterion 6
constexpr double kIdentityDefect = 1e-3;
constexpr double kIdentitySlope = 1.9;
constexpr double kIdentitySeconds = 5.0;
// criterion 7
constexpr double kTerminalL1 = 0.08;
constexpr double kMomentumTol = 0.05;
constexpr double kMomentumMass = 0.01;
constexpr double kLimitSeconds = 300.0;
// criteria 7 and 8
constexpr std::size_t kEffectiveSamples = 100000;
// criterion 8
constexpr double kMeanSe = 3.0;
constexpr double kPipelineL1 = 0.1;
constexpr std::size_t kPipelineCells = 64;
constexpr double kPipelineSeconds = 600.0;

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, const char* name, bool pass, const std::string& detail, double secs) {
  std::printf("criterion %d: %s  %s  %s  [%.2f s]\n", id, pass ? "PASS" : "FAIL", name, detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double slope(double h0, double h1, double e0, double e1) { return std::log(e0 / e1) / std::log(h0 / h1); }

double min_pairwise_slope(const std::vector<double>& h, const std::vector<double>& e) {
  double s = INFINITY;
  for (std::size_t i = 1; i < h.size(); ++i) s = std::min(s, slope(h[i - 1], h[i], e[i - 1], e[i]));
  return s;
}

double scalar_norm(const ScalarFieldGrid& f) {
  double s = 0.0;
  for (std::size_t p = 0; p < f.grid.size(); ++p) s += f.grid.weight(p) * f.values[p] * f.values[p];
  return std::sqrt(s);
}

VectorFieldGrid make_field(const GridSpec& g, const std::function<void(const double*, double*)>& f) {
  VectorFieldGrid v(g);
  double x[2], y[2];
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, x);
    f(x, y);
    v.components[0][p] = y[0];
    v.components[1][p] = y[1];
  }
  return v;
}

GridSpec square(std::size_t n) { return GridSpec({{-1, 1, n}, {-1, 1, n}}); }

// ---------------------------------------------------------------- 1
void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec g = square(128);
  struct Case {
    const char* name;
    VectorFieldGrid field;
  };
  std::vector<Case> cases{
      {"gradient", make_field(g, [](const double* x, double* y) { y[0] = -x[0], y[1] = -x[1]; })},
      {"rotation", make_field(g, [](const double* x, double* y) { y[0] = -x[1], y[1] = x[0]; })},
      {"constant", make_field(g, [](const double*, double* y) { y[0] = 0.3, y[1] = -0.7; })},
  };
  bool ok = true;
  std::string detail;
  for (const Case& c : cases) {
    const HodgeParts parts = decompose(c.field);
    const VectorFieldGrid grad = gradient_part(parts), sol = solenoidal_part(parts);
    const double nf = l2_norm(c.field), nf2 = nf * nf;
    const double rec = l2_norm(reconstruct(parts) - c.field) / nf;
    const double cross = std::max({std::abs(inner_product(grad, sol)), std::abs(inner_product(grad, parts.harmonic)),
                                   std::abs(inner_product(sol, parts.harmonic))}) /
                         nf2;
    double purity = 0.0;
    if (std::string(c.name) == "gradient") purity = (scalar_norm(parts.stream[0]) + l2_norm(parts.harmonic)) / nf;
    if (std::string(c.name) == "rotation") purity = l2_norm(grad) / nf;
    // a constant field is entirely harmonic
    if (std::string(c.name) == "constant") purity = (l2_norm(grad) + l2_norm(sol)) / nf;
    ok = ok && rec < kReconstructionTol && cross < kCrossTol && purity < kPurityTol && parts.diagnostics.quality_ok;
    detail += fmt("%s rec=%.1e cross=%.1e purity=%.1e; ", c.name, rec, cross, purity);
  }
  const double secs = seconds_since(t0);
  report(1, "hodge closure and orthogonality", ok && secs < kHodgeSeconds, detail, secs);
}

// ---------------------------------------------------------------- 2
void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const double pi = std::numbers::pi;
  auto phi_exact = [&](const double* x) {
    return 0.5 * (x[0] * x[0] + x[1] * x[1]) + kEps * std::cos(pi * x[0]) * std::cos(pi * x[1]);
  };
  std::vector<double> h, err;
  for (std::size_t n : {32, 64, 128}) {
    const GridSpec g = square(n);
    const VectorFieldGrid w = make_field(g, [&](const double* x, double* y) {
      y[0] = -(x[0] - kEps * pi * std::sin(pi * x[0]) * std::cos(pi * x[1]));
      y[1] = -(x[1] - kEps * pi * std::cos(pi * x[0]) * std::sin(pi * x[1]));
    });
    const HodgeParts parts = decompose(w);
    ScalarFieldGrid d(g);
    double x[2], mean = 0.0, wsum = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      g.point(p, x);
      d.values[p] = parts.phi.values[p] - phi_exact(x);
      mean += g.weight(p) * d.values[p];
      wsum += g.weight(p);
    }
    for (double& v : d.values) v -= mean / wsum;
    h.push_back(g.spacing(0));
    err.push_back(scalar_norm(d));
  }
  const double s = min_pairwise_slope(h, err);
  report(2, "decomposition convergence", s >= kPhiSlope,
         fmt("phi L2 error %.3e %.3e %.3e, min slope %.3f", err[0], err[1], err[2], s), seconds_since(t0));
}

// ---------------------------------------------------------------- 3
void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec g = square(65);
  double lin = 0.0;
  for (const auto& f : std::vector<std::function<void(const double*, double*)>>{
           [](const double* x, double* y) { y[0] = -x[0], y[1] = -x[1]; },
           [](const double* x, double* y) { y[0] = 0.2 - x[0] - 0.3 * x[1], y[1] = -0.5 - 0.3 * x[0] - 2.0 * x[1]; },
       }) {
    const ScalarFieldGrid d = jacobian_symmetry_defect(make_field(g, f));
    lin = std::max(lin, *std::max_element(d.values.begin(), d.values.end()));
  }
  const ScalarFieldGrid r =
      jacobian_symmetry_defect(make_field(g, [](const double* x, double* y) { y[0] = -x[1], y[1] = x[0]; }));
  double dev = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p)
    if (!g.on_boundary(p)) dev = std::max(dev, std::abs(r.values[p] - 2.0));
  report(3, "integrability checker", lin <= kDefectTol && dev <= kDefectTol,
         fmt("linear gradients max %.1e, rotation max |defect-2| %.1e", lin, dev), seconds_since(t0));
}

// ---------------------------------------------------------------- 4
FPCoefficients quadratic(const GridSpec& g, const Eigen::MatrixXd& D) {
  FPCoefficients c(g, D);
  std::vector<double> x(g.dimension());
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, x.data());
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    c.phi.values[p] = 0.5 * r2;
  }
  return c;
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> h, err;
  for (std::size_t n : {64, 128, 256}) {
    GridSpec g({{-6, 6, n}}, Centering::cell);
    const FPSolution s = steady_state(assemble(quadratic(g, Eigen::MatrixXd::Identity(1, 1))));
    h.push_back(g.spacing(0));
    err.push_back(l1_distance(g, s.density,
                              gaussian_cell_averages(g, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1))));
  }
  const double s = min_pairwise_slope(h, err), secs = seconds_since(t0);
  report(4, "boltzmann oracle", err.back() < kBoltzmannL1 && s >= kBoltzmannSlope && secs < kBoltzmannSeconds,
         fmt("L1 at 64/128/256 cells %.3e %.3e %.3e, min slope %.3f", err[0], err[1], err[2], s), secs);
}

// ---------------------------------------------------------------- 5
void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  GridSpec g({{-8, 8, 128}, {-8, 8, 128}}, Centering::cell);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd a(2);
  a << kTilt, 0.0;

  FPCoefficients tilted = quadratic(g, I);
  for (std::size_t p = 0; p < g.size(); ++p) tilted.A.components[0][p] = kTilt;
  FPCoefficients folded = quadratic(g, I);
  folded.phi = effective_potential(folded.phi, a);

  const FPSolution s1 = steady_state(assemble(tilted));
  const FPSolution s2 = steady_state(assemble(folded));
  const double agree = l1_distance(g, s1.density, s2.density);

  // exp(-phibar) is the unit normal centred at -a
  Eigen::VectorXd mu = -a;
  const std::vector<double> exact = gaussian_cell_averages(g, mu, Eigen::VectorXd::Ones(2));
  auto interior_l1 = [&](const std::vector<double>& rho) {
    double s = 0.0, x[2];
    for (std::size_t p = 0; p < g.size(); ++p) {
      g.point(p, x);
      if (std::hypot(x[0] - mu(0), x[1] - mu(1)) <= kInteriorRadius) s += std::abs(rho[p] - exact[p]);
    }
    return s * g.cell_volume();
  };
  const double e1 = interior_l1(s1.density), e2 = interior_l1(s2.density);
  report(5, "liouville tilt", agree < kTiltAgreement && e1 < kTiltInteriorL1 && e2 < kTiltInteriorL1,
         fmt("forms agree to %.1e, interior L1 %.3e / %.3e", agree, e1, e2), seconds_since(t0));
}

// ---------------------------------------------------------------- 6
void criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const GaussianKernel k = make_kernel(1.0, Eigen::MatrixXd::Identity(1, 1));
  const Eigen::VectorXd c = Eigen::VectorXd::Ones(1);
  std::vector<double> h, ann, eig;
  for (std::size_t n : {256, 512, 1024}) {
    const GridSpec g = momentum_grid(k, n);
    h.push_back(g.spacing(0));
    ann.push_back(l1_annihilation_defect(k, g).defect);
    eig.push_back(l1_eigencheck(c, k, g).defect);
  }
  const double sa = min_pairwise_slope(h, ann), se = min_pairwise_slope(h, eig), secs = seconds_since(t0);
  const bool ok = ann[0] < kIdentityDefect && eig[0] < kIdentityDefect && sa >= kIdentitySlope &&
                  se >= kIdentitySlope && secs < kIdentitySeconds;
  report(6, "projection identities", ok,
         fmt("annihilation %.2e (slope %.3f), eigen %.2e (slope %.3f) at 256 points", ann[0], sa, eig[0], se), secs);
}

// ---------------------------------------------------------------- 7-9
nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

cli::RunResult run_cli(const std::string& command, const std::string& config, const fs::path& out) {
  cli::RunOptions o;
  o.command = command;
  o.config = kData / config;
  o.out = out;
  return cli::run(o);
}

void criterion7(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const cli::RunResult r = run_cli("validate-limit", "validate_ou.json", out);
  const double secs = seconds_since(t0);
  if (r.exit_code != cli::kOk && r.exit_code != cli::kValidationFailed) {
    report(7, "zero-mass limit", false, "run failed: " + r.message, secs);
    return;
  }
  const nlohmann::json rep = read_json(out / "limit_report.json");
  const auto& sw = rep["mass_sweep"];
  const auto& rows = sw["rows"];
  bool monotone = true;
  std::string table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double d = rows[i]["distance"], se = rows[i]["standard_error"];
    if (i > 0) monotone = monotone && d <= rows[i - 1]["distance"].get<double>() + se;
    table += fmt("m=%g %.4f+-%.4f ", rows[i]["mass"].get<double>(), d, se);
  }
  const double terminal = rows.back()["distance"];
  const auto& mc = rep["momentum_check"];
  const double dev = mc["max_relative_deviation"];
  const bool samples = sw["effective_samples"].get<std::size_t>() >= kEffectiveSamples;
  const bool ok = monotone && terminal < kTerminalL1 && mc["mass"].get<double>() == kMomentumMass &&
                  dev <= kMomentumTol && samples && secs < kLimitSeconds;
  report(7, "zero-mass limit", ok, table + fmt("| var p deviation %.2f%% at m=%g", 100 * dev, kMomentumMass), secs);
}

void criterion8(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const cli::RunResult r = run_cli("pipeline", "pipeline_chain.json", out);
  const double secs = seconds_since(t0);
  if (r.exit_code != cli::kOk && r.exit_code != cli::kValidationFailed) {
    report(8, "chain reaction end to end", false, "run failed: " + r.message, secs);
    return;
  }
  nlohmann::json sim, grid;
  for (const auto& s : r.manifest["stages"]) {
    if (s["name"] == "simulate") sim = s["metrics"];
    if (s["name"] == "grid") grid = s["metrics"];
  }
  const nlohmann::json rep = read_json(out / "pipeline_report.json");
  const auto& mean = sim["moments"]["mean"];
  const auto& z = sim["mean_deviation_in_se"];
  const double mean_err =
      std::max(std::abs(mean[0].get<double>() - 0.5), std::abs(mean[1].get<double>() - 0.25)) /
      std::max(sim["moments"]["mean_se"][0].get<double>(), sim["moments"]["mean_se"][1].get<double>());
  bool cells = true;
  for (const auto& ax : grid["grid"]) cells = cells && ax[2].get<std::size_t>() == kPipelineCells;
  const double l1 = rep["distance"];
  const bool ok = z[0].get<double>() <= kMeanSe && z[1].get<double>() <= kMeanSe && l1 < kPipelineL1 && cells &&
                  rep["hodge_quality_ok"].get<bool>() && sim["effective_samples"].get<std::size_t>() >= kEffectiveSamples &&
                  secs < kPipelineSeconds;
  report(8, "chain reaction end to end", ok,
         fmt("mean (%.5f, %.5f), deviation %.2f/%.2f SE (max vs (0.5,0.25) %.2f SE), L1 %.4f", mean[0].get<double>(),
             mean[1].get<double>(), z[0].get<double>(), z[1].get<double>(), mean_err, l1),
         secs);
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> v;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) v.push_back(fs::relative(e.path(), root));
  std::sort(v.begin(), v.end());
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void criterion9(const fs::path& a, const fs::path& b) {
  const auto t0 = std::chrono::steady_clock::now();
  run_cli("validate-limit", "validate_ou.json", b / "limit");
  run_cli("pipeline", "pipeline_chain.json", b / "pipeline");
  const auto fa = files_under(a), fb = files_under(b);
  bool ok = fa == fb && !fa.empty();
  std::size_t compared = 0;
  std::string diff;
  for (const fs::path& f : fa) {
    // wall-clock timings are the one declared non-deterministic file
    if (f.filename() == "timings.json") continue;
    ++compared;
    if (slurp(a / f) != slurp(b / f)) {
      ok = false;
      diff += " " + f.string();
    }
  }
  report(9, "determinism", ok, fmt("%zu files byte-identical%s", compared, diff.empty() ? "" : (", differ:" + diff).c_str()),
         seconds_since(t0));
}

}  // namespace

int main() {
  fs::remove_all(kOut);
  const fs::path a = kOut / "a", b = kOut / "b";
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7(a / "limit");
  criterion8(a / "pipeline");
  criterion9(a, b);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
