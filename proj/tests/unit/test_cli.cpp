#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "cle/cli.hpp"
#include "cle/errors.hpp"
#include "cle/field_io.hpp"

using namespace cle;
using namespace cle::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = CLE_TEST_DATA;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "cle_unit_cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch("configs_" + name) / (name + ".json");
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunResult run_cmd(const std::string& cmd, const fs::path& config, const std::string& out) {
  RunOptions o;
  o.command = cmd;
  o.config = config;
  o.out = scratch(out);
  return run(o);
}

json manifest_of(const std::string& out) {
  return json::parse(slurp(fs::temp_directory_path() / "cle_unit_cli" / out / "manifest.json"));
}

}  // namespace

TEST_CASE("config echo re-parses to the same config") {
  for (const char* name : {"simulate_chain", "decompose_gradient", "decompose_constant", "fpsolve_ou", "fpsolve_tilt",
                           "validate_ou", "validate_single", "pipeline_chain", "pipeline_gradient"}) {
    CAPTURE(name);
    const RunConfig c = load_config(kData / (std::string(name) + ".json"));
    const json echo = json::parse(to_json(c).dump());
    const RunConfig back = parse_config(echo);
    CHECK(back == c);
    CHECK(to_json(back).dump() == to_json(c).dump());
  }
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"sed": 1})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seed": -1})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seed": 1.5})")), ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"fokker_planck": {"grid": {"axes": [[-1, 1, 16]]}, "diffusion": [[1]],
        "potential": {"type": "quadratic", "matrix": [[1]]}, "tol": -1}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"fokker_planck": {"grid": {"axes": [[-1, 1, 16]], "centring": "cell"},
        "diffusion": [[1]], "potential": {"type": "quadratic", "matrix": [[1]]}}})")),
      ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"model": {"type": "network", "file": "no_such_file.json"}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"kramers": {"masses": [0.1, 0.5]}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"hodge": {"field": "spiral", "grid": {"axes": [[0,1,8],[0,1,8]]}}})")),
                  ConfigError);
}

TEST_CASE("network file parses to the chain network") {
  const RunConfig c = load_config(kData / "pipeline_chain.json");
  REQUIRE(c.model);
  CHECK(*c.model->network == chain_network(1, 2, 4, 1e4));
}

TEST_CASE("stage seeds are deterministic and distinct") {
  CHECK(derive_seed(7, "simulate") == derive_seed(7, "simulate"));
  CHECK(derive_seed(7, "simulate") != derive_seed(7, "pipeline/simulate"));
  CHECK(derive_seed(7, "simulate") != derive_seed(8, "simulate"));
}

TEST_CASE("simulate: one trajectory block per trajectory, byte-identical reruns") {
  const RunResult a = run_cmd("simulate", kData / "simulate_chain.json", "sim_a");
  const RunResult b = run_cmd("simulate", kData / "simulate_chain.json", "sim_b");
  REQUIRE(a.exit_code == kOk);
  REQUIRE(b.exit_code == kOk);
  const fs::path da = fs::temp_directory_path() / "cle_unit_cli" / "sim_a";
  const fs::path db = fs::temp_directory_path() / "cle_unit_cli" / "sim_b";
  std::set<std::string> traj;
  std::istringstream in(slurp(da / "ensemble.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) traj.insert(line.substr(0, line.find(',')));
  CHECK(traj.size() == 1000);
  for (const auto& e : fs::directory_iterator(da)) {
    const std::string f = e.path().filename().string();
    if (f != "timings.json") CHECK_MESSAGE(slurp(e.path()) == slurp(db / f), f);
  }
  CHECK(a.manifest["config"]["seed"] == 7);
  CHECK(a.manifest["seeds"].contains("simulate"));
}

TEST_CASE("manifest lists every file written") {
  run_cmd("fpsolve", kData / "fpsolve_tilt.json", "fp_tilt");
  const fs::path d = fs::temp_directory_path() / "cle_unit_cli" / "fp_tilt";
  const json m = manifest_of("fp_tilt");
  std::set<std::string> listed;
  for (const auto& f : m["files"]) listed.insert(f.get<std::string>());
  for (const auto& e : fs::directory_iterator(d)) {
    const std::string f = e.path().filename().string();
    if (f != "manifest.json") CHECK_MESSAGE(listed.count(f) == 1, f);
  }
  const FieldTable t = read_field(d / "steady_state");
  CHECK(std::find(t.names.begin(), t.names.end(), "phibar") != t.names.end());
}

TEST_CASE("fpsolve OU records a residual below 1e-10") {
  const RunResult r = run_cmd("fpsolve", kData / "fpsolve_ou.json", "fp_ou");
  CHECK(r.exit_code == kOk);
  const json m = manifest_of("fp_ou");
  CHECK(m["stages"][0]["metrics"]["residual"].get<double>() < 1e-10);
  CHECK(m["stages"][0]["metrics"]["method_agreement_l1"].get<double>() < 1e-8);
}

TEST_CASE("decompose flags") {
  run_cmd("decompose", kData / "decompose_gradient.json", "dg");
  run_cmd("decompose", kData / "decompose_rotation.json", "dr");
  run_cmd("decompose", kData / "decompose_constant.json", "dc");
  CHECK(manifest_of("dg")["stages"][0]["metrics"]["pure_gradient"] == true);
  CHECK(manifest_of("dr")["stages"][0]["metrics"]["dominant_solenoidal"] == true);
  CHECK(manifest_of("dc")["stages"][0]["metrics"]["harmonic_constancy_deviation"].get<double>() < 1e-12);
}

TEST_CASE("exit codes are distinct per failure class") {
  // config: missing model file
  CHECK(run_cmd("simulate", write_config("missing", R"({"model": {"type": "network", "file": "nope.json"},
    "sde": {"initial": {"q": [1]}}})"), "e_cfg").exit_code == kConfigError);
  // config: section missing for the command
  CHECK(run_cmd("pipeline", kData / "fpsolve_ou.json", "e_sec").exit_code == kConfigError);
  // non-convergence, with the residual in the manifest
  CHECK(run_cmd("fpsolve", kData / "fpsolve_capped.json", "e_conv").exit_code == kNonConvergence);
  CHECK(manifest_of("e_conv")["error"]["residual"].get<double>() > 1e-10);
  // domain: concentration chart sampled at negative concentrations
  const std::string net = slurp(kData / "chain.json");
  CHECK(run_cmd("decompose", write_config("domain", R"({"model": {"type": "network", "chart": "concentration", "network": )" +
                                                        net + R"(}, "hodge": {"field": "model",
    "grid": {"axes": [[-1, 1, 16], [-1, 1, 16]]}}})"),
                "e_dom")
            .exit_code == kDomainError);
  // every trajectory diverges
  CHECK(run_cmd("simulate", write_config("blowup", R"({"model": {"type": "linear", "drift_matrix": [[-1e6]],
    "noise": [[1]]}, "sde": {"dt": 1, "steps": 200, "n_traj": 3, "initial": {"q": [1]}}})"),
                "e_sim")
            .exit_code == kSimulationError);
}

TEST_CASE("dry run writes only the manifest skeleton") {
  RunOptions o;
  o.command = "pipeline";
  o.config = kData / "pipeline_chain.json";
  o.out = scratch("dry");
  o.dry_run = true;
  const RunResult r = run(o);
  CHECK(r.exit_code == kOk);
  CHECK(r.manifest["status"] == "dry_run");
  CHECK(r.manifest["stages"].empty());
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(o.out)) ++files;
  CHECK(files == 2);
}

TEST_CASE("validate-limit with a single mass gives a one-row table") {
  const RunResult r = run_cmd("validate-limit", kData / "validate_single.json", "vl1");
  CHECK(r.exit_code == kOk);
  const std::string table = slurp(fs::temp_directory_path() / "cle_unit_cli" / "vl1" / "mass_table.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
}

TEST_CASE("identity checks report two defects with slopes") {
  RunOptions o;
  o.command = "validate-limit";
  o.config = kData / "validate_single.json";
  o.out = scratch("ids");
  o.identities = true;
  const RunResult r = run(o);
  CHECK(r.exit_code == kOk);
  const auto& m = r.manifest["stages"][0]["metrics"];
  CHECK(m["annihilation_defect"][0].get<double>() < 1e-3);
  CHECK(m["eigen_defect"][0].get<double>() < 1e-3);
  CHECK(m["annihilation_slope"].get<double>() > 1.9);
  CHECK(m["eigen_slope"].get<double>() > 1.9);
}

TEST_CASE("gradient-only pipeline matches the Boltzmann density") {
  const RunResult r = run_cmd("pipeline", kData / "pipeline_gradient.json", "pg");
  CHECK(r.exit_code == kOk);
  for (const auto& s : r.manifest["stages"])
    if (s["name"] == "fpsolve") CHECK(s["metrics"]["boltzmann_l1"].get<double>() < 1e-8);
}

TEST_CASE("the executable maps errors to exit codes") {
  const std::string exe = CLEKIT_PATH;
  const std::string out = scratch("exe").string();
  auto code = [](int status) { return WEXITSTATUS(status); };
  CHECK(code(std::system((exe + " fpsolve --config " + (kData / "fpsolve_ou.json").string() + " --out " + out +
                          " > /dev/null").c_str())) == 0);
  CHECK(code(std::system((exe + " fpsolve --config /no/such/file.json --out " + out + " > /dev/null 2>&1").c_str())) ==
        kConfigError);
  CHECK(code(std::system((exe + " fpsolve --config " + (kData / "fpsolve_capped.json").string() + " --out " + out +
                          " > /dev/null 2>&1").c_str())) == kNonConvergence);
  CHECK(code(std::system((exe + " bogus > /dev/null 2>&1").c_str())) == kConfigError);
}
