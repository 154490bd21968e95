#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using brpsync::cli::CommandOptions;

  CLI::App app{"Block-rotated preamble design, CRB evaluation and CFO estimation sweeps"};
  app.require_subcommand(1);

  CommandOptions options;
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int trials = 0;
  std::string snr;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed for this subcommand");
    sub->add_option("--trials", trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
    sub->add_option("--snr", snr, "SNR in dB: list a,b,c or range start:step:stop");
    sub->add_option("--set", options.overrides, "override a config value, e.g. system.num_blocks=4");
  };
  add_common(app.add_subcommand("design", "emit the BRP design for the configured L and M"));
  add_common(app.add_subcommand("bounds", "GCRB, ACRB, MCRB and EMCB for one configuration"));
  add_common(app.add_subcommand("sweep", "MSE and bound sweep over SNR (CSV)"));
  add_common(app.add_subcommand("tables", "degradation and heuristic-angle tables (CSV)"));
  add_common(app.add_subcommand("gamma", "near-diagonality report for E[R^-1]"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << brpsync::cli::error_record("usage", e.what()).dump() << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  options.subcommand = sub->get_name();
  options.out_dir = out_dir;
  if (!config_path.empty()) options.config_path = config_path;
  if (sub->count("--seed") > 0) options.seed = seed;
  if (sub->count("--trials") > 0) options.trials = trials;
  if (sub->count("--snr") > 0) options.snr = snr;
  return brpsync::cli::run(options, std::cout, std::cerr);
}
