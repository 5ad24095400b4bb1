#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "sgflow/commands.hpp"

using namespace sgflow;

int main(int argc, char** argv) {
  CLI::App app{"Sobolev gradient flows, comparison tests and plane-like minimizers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
  bool json = false;
  app.add_option("--config", config_path, "config file (sectioned key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "random seed (overrides run.seed)");
  app.add_option("--out", out, "output directory (overrides run.out)");
  app.add_option("--set", overrides, "override a config entry, section.key=value")->take_all();
  app.add_flag("--json", json, "print the summary as JSON");

  auto* verify = app.add_subcommand("verify", "operator identities, quadrature oracles, smoothing and positivity");
  std::vector<std::string> only;
  verify->add_option("--only", only, "run only these suites")->check(CLI::IsMember(verify_suites()));

  auto* flow = app.add_subcommand("flow", "evolve one initial field");
  std::optional<std::string> u0;
  double t0 = 0.0;
  flow->add_option("--u0", u0, "random | zero | const:<c> | file:<csv>");
  flow->add_option("--t0", t0, "time label of the initial field (restarts)");

  auto* compare = app.add_subcommand("compare", "comparison principle on seeded ordered pairs");
  std::optional<int> pairs, shift;
  std::optional<double> horizon;
  bool exploratory = false;
  compare->add_option("--pairs", pairs, "number of pairs")->check(CLI::NonNegativeNumber);
  compare->add_option("--horizon", horizon, "evolution time per pair");
  compare->add_option("--shift", shift, "use u0 = v0 + shift and check the gap stays equal to it");
  compare->add_flag("--exploratory", exploratory, "allow gamma <= sup|V22| and report without failing");

  auto* minimize = app.add_subcommand("minimize", "plane-like minimizer at a rational rotation vector");
  std::optional<std::string> omega;
  minimize->add_option("--omega", omega, "q1[,q2]/N");

  auto* sweep_cmd = app.add_subcommand("sweep", "minimizers over a list of rotation vectors");
  bool golden = false;
  std::optional<int> levels;
  std::optional<std::string> omegas;
  sweep_cmd->add_flag("--golden", golden, "golden-mean convergents 1/2, 2/3, 3/5, ...");
  sweep_cmd->add_option("--levels", levels, "number of golden convergents")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--omegas", omegas, "rotation vectors: a file (one per line) or a list '1/2 1/3'");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (!only.empty()) cfg.verify_only = only;
    if (u0) cfg.u0 = *u0;
    if (pairs) cfg.pairs = *pairs;
    if (horizon) cfg.horizon = *horizon;
    if (exploratory) cfg.exploratory = true;
    if (omega) cfg.omega = *omega;
    if (levels) cfg.golden_levels = *levels;
    if (omegas) cfg.omegas = *omegas;
    if (golden) cfg.omegas.clear();
    cfg.resolve();

    const CommandIo io{std::cout, std::cerr, json};
    if (*verify) return cmd_verify(cfg, io);
    if (*flow) return cmd_flow(cfg, cfg.u0, t0, io);
    if (*compare) return cmd_compare(cfg, shift, io);
    if (*minimize) return cmd_minimize(cfg, cfg.omega, io);
    if (*sweep_cmd) {
      const auto list = cfg.omegas.empty() ? golden_convergents(cfg.golden_levels, cfg.dim) : parse_omega_list(cfg.omegas);
      return cmd_sweep(cfg, list, io);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFlowError;
  }
  return kExitUsage;
}
