#include <iostream>

#include <CLI11.hpp>

#include "cle/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Chemical Langevin toolkit: simulate, decompose, solve and validate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cle::cli::kToolVersion));

  cle::cli::RunOptions opt;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Simulate an ensemble of trajectories"},
      {"decompose", "Hodge decomposition of a drift field"},
      {"fpsolve", "Fokker-Planck steady state"},
      {"validate-limit", "Zero-mass limit and projection identities"},
      {"pipeline", "Simulate, decompose, solve and compare"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the top-level seed");
    sub->add_option("--threads", threads, "Worker threads (0: hardware concurrency)");
    sub->add_flag("--dry-run", opt.dry_run, "Validate the config and write a manifest skeleton");
    if (std::string(name) == "validate-limit")
      sub->add_flag("--identities", opt.identities, "Run only the projection-operator identity checks");
    sub->callback([&, sub, name = std::string(name)] {
      opt.command = name;
      if (sub->count("--seed")) opt.seed = seed;
      if (sub->count("--threads")) opt.threads = threads;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // Usage errors share the config-error code.
    return code == 0 ? 0 : cle::cli::kConfigError;
  }

  const cle::cli::RunResult r = cle::cli::run(opt);
  for (const auto& s : r.manifest["stages"]) {
    std::cout << s["name"].get<std::string>() << ": " << (s["pass"].get<bool>() ? "pass" : "FAIL") << '\n';
  }
  for (const auto& w : r.manifest["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
  if (r.exit_code != 0) std::cerr << "error: " << r.message << '\n';
  std::cout << "status: " << r.manifest["status"].get<std::string>() << " (exit " << r.exit_code << ")\n";
  return r.exit_code;
}
