#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "brpsync/rng.hpp"

namespace brpsync::cli {
namespace {

namespace fs = std::filesystem;


void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::config, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorCode::config, "failed writing '" + path.string() + "'");
}

// Bounds that legitimately diverge are reported as +inf rather than failing
// the whole report.
template <typename F>
double bound_or_inf(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::degenerate_fim || e.code() == ErrorCode::invalid_regime) return kInf;
    throw;
  }
}

const char* seed_section(const std::string& subcommand) {
  if (subcommand == "gamma") return "gamma";
  if (subcommand == "bounds") return "bounds";
  return "sweep";
}

}  // namespace

Json error_record(std::string_view code, std::string_view message) {
  return Json{{"error", std::string(code)}, {"message", std::string(message)}};
}

Json effective_config(const CommandOptions& options) {
  Json config = load_config(options.config_path);
  for (const auto& o : options.overrides) apply_override(config, o);
  if (options.seed) {
    config[seed_section(options.subcommand)]["seed"] = *options.seed;
  }
  if (options.trials) {
    if (options.subcommand == "bounds") {
      config["bounds"]["emcb_trials"] = *options.trials;
    } else {
      config["sweep"]["trials"] = *options.trials;
    }
  }
  if (options.snr) {
    const auto grid = parse_snr_grid(*options.snr);
    if (options.subcommand == "sweep") {
      config["sweep"]["snr_db"] = grid;
    } else {
      if (grid.size() != 1) {
        throw Error(ErrorCode::config, "--snr takes a single value for this subcommand");
      }
      config["system"]["snr_db"] = grid.front();
    }
  }
  return config;
}

Json cmd_design(const Json& config) {
  const auto sys = system_from(config);
  if (sys.block_length < 1 || sys.num_blocks < 3) {
    throw Error(ErrorCode::invalid_argument, "design needs block_length >= 1 and num_blocks >= 3");
  }
  const auto policy = config.at("preamble").at("theta_policy").get<std::string>();
  double theta2 = 0.0;
  std::string method;
  if (policy == "optimal") {
    const auto sol = preamble::optimal_delta(sys.num_blocks);
    theta2 = sol.delta;
    method = preamble::to_string(sol.method);
  } else if (policy == "heuristic") {
    theta2 = preamble::heuristic_delta(sys.num_blocks);
    method = preamble::to_string(preamble::AngleMethod::heuristic);
  } else if (policy == "zero") {
    method = "periodic";
  } else {
    throw Error(ErrorCode::config,
                "preamble.theta_policy must be 'optimal', 'heuristic' or 'zero'");
  }
  const auto basis =
      preamble::generalize_cazac(preamble::generate_cazac(sys.block_length), theta2);
  Json re = Json::array();
  Json im = Json::array();
  for (Eigen::Index n = 0; n < basis.length(); ++n) {
    re.push_back(number(basis.samples[n].real()));
    im.push_back(number(basis.samples[n].imag()));
  }
  return Json{{"block_length", sys.block_length},
              {"num_blocks", sys.num_blocks},
              {"theta1", number(0.0)},
              {"theta2", number(theta2)},
              {"method", method},
              {"lambda", number(preamble::degradation(theta2, sys.num_blocks))},
              {"basis_re", re},
              {"basis_im", im}};
}

Json cmd_bounds(const Json& config) {
  const auto sys = system_from(config);
  sys.validate();
  const auto mode =
      experiments::parse_preamble_mode(config.at("preamble").at("mode").get<std::string>());
  const Json& b = config.at("bounds");
  const auto seed = b.at("seed").get<std::uint64_t>();
  const int gamma_samples = b.at("gamma_samples").get<int>();
  const int emcb_trials = b.at("emcb_trials").get<int>();

  const auto pre = experiments::make_preambles(sys, mode);
  const auto channels = channel::sample_channel(sys, derive_seed(seed, 0));
  const auto inputs =
      crb::CrbInputs::from(channel::build_block_model(sys, channels, pre.brp1, pre.brp2));
  const double gcrb = crb::gcrb(inputs);

  const auto gamma = crb::estimate_gamma(sys, gamma_samples, derive_seed(seed, 1));
  const auto& model = inputs.model;
  const double energy = model.r21.squaredNorm();
  const double oneway = crb::acrb_oneway(energy, sys.num_blocks, gamma.k);
  const double acrb =
      model.one_way()
          ? oneway
          : bound_or_inf([&] {
              return crb::acrb(model.phi21, model.phi11, energy, sys.num_blocks, gamma.k);
            });
  const double mcrb = bound_or_inf([&] { return crb::mcrb_numeric(inputs, gamma.gamma); });
  const auto emcb = crb::emcb(sys, pre.brp1, pre.brp2, emcb_trials, derive_seed(seed, 2));

  return Json{{"mode", std::string(experiments::to_string(mode))},
              {"snr_db", number(sys.snr_db)},
              {"phi21", number(model.phi21)},
              {"phi11", number(model.phi11)},
              {"gcrb", number(gcrb)},
              {"acrb", number(acrb)},
              {"acrb_oneway", number(oneway)},
              {"mcrb_numeric", number(mcrb)},
              {"emcb", number(emcb.value)},
              {"emcb_trials", emcb.trials},
              {"emcb_infinite_trials", emcb.infinite_trials},
              {"k_gamma", number(gamma.k)}};
}

experiments::SweepResult cmd_sweep(const Json& config) {
  return experiments::run_sweep(experiment_from(config));
}

Json cmd_gamma(const Json& config) {
  const auto sys = system_from(config);
  const Json& g = config.at("gamma");
  const auto report = experiments::run_gamma_diagnostic(sys, g.at("samples").get<int>(),
                                                        g.at("seed").get<std::uint64_t>());
  Json rows = Json::array();
  for (std::size_t i = 0; i < report.profile_rows.size(); ++i) {
    Json mags = Json::array();
    for (Eigen::Index c = 0; c < report.row_profiles[i].size(); ++c) {
      mags.push_back(number(report.row_profiles[i][c]));
    }
    rows.push_back(Json{{"row", report.profile_rows[i]}, {"magnitudes", mags}});
  }
  const auto& e = report.estimate;
  return Json{{"samples", e.samples},          {"k", number(e.k)},
              {"k_std_error", number(e.k_std_error)}, {"leakage", number(e.leakage)},
              {"diag_spread", number(e.diag_spread)}, {"row_profiles", rows}};
}

int run(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const Json config = effective_config(options);
    fs::create_directories(options.out_dir);
    Json written = Json::array();
    auto emit = [&](const std::string& name, const std::string& text) {
      const fs::path path = options.out_dir / name;
      write_file(path, text);
      written.push_back(path.string());
    };

    const std::string& sub = options.subcommand;
    if (sub == "design") {
      emit("design.json", cmd_design(config).dump(2) + "\n");
    } else if (sub == "bounds") {
      emit("bounds.json", cmd_bounds(config).dump(2) + "\n");
    } else if (sub == "sweep") {
      const auto result = cmd_sweep(config);
      emit(config.at("sweep").at("output_prefix").get<std::string>() + ".csv",
           experiments::format_sweep_csv(result));
    } else if (sub == "tables") {
      const Json& t = config.at("tables");
      emit("degradation.csv",
           experiments::format_degradation_csv(experiments::run_degradation_table(
               t.at("block_counts").get<std::vector<int>>(), t.at("grid_points").get<int>())));
      emit("heuristic_angles.csv",
           experiments::format_heuristic_csv(experiments::run_heuristic_angle_table(
               t.at("heuristic_block_counts").get<std::vector<int>>())));
    } else if (sub == "gamma") {
      emit("gamma.json", cmd_gamma(config).dump(2) + "\n");
    } else {
      throw Error(ErrorCode::config, "unknown subcommand '" + sub + "'");
    }
    emit("effective_config.json", config.dump(2) + "\n");
    out << Json{{"command", sub}, {"outputs", written}}.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    err << error_record(to_string(e.code()), e.what()).dump() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << error_record("config", e.what()).dump() << "\n";
  } catch (const std::exception& e) {
    err << error_record("internal", e.what()).dump() << "\n";
  }
  return 1;
}

}  // namespace brpsync::cli
