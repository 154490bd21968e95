#include "brpsync/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>

#include "brpsync/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace brpsync::experiments {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kGammaStream = 0x9a44a;

channel::SystemConfig at_snr(const channel::SystemConfig& system, double snr_db) {
  channel::SystemConfig s = system;
  s.snr_db = snr_db;
  return s;
}

double mean_or_inf(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) {
    if (std::isinf(v)) return kInf;
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

SweepRow reduce_row(double snr_db, const std::vector<TrialOutcome>& outcomes, bool estimators) {
  SweepRow row;
  row.snr_db = snr_db;
  std::vector<double> gcrbs;
  std::vector<double> acrbs;
  std::vector<double> oneways;
  double se_cor = 0.0;
  double se_mle = 0.0;
  double bias = 0.0;
  int used = 0;
  for (const auto& o : outcomes) {
    gcrbs.push_back(o.gcrb);
    acrbs.push_back(o.acrb);
    oneways.push_back(o.acrb_oneway);
    if (o.excluded) {
      ++row.excluded;
      continue;
    }
    if (o.estimated) {
      se_cor += o.err_cor * o.err_cor;
      se_mle += o.err_mle * o.err_mle;
      bias += o.err_cor;
      ++used;
    }
  }
  row.emcb = mean_or_inf(gcrbs);
  row.acrb = mean_or_inf(acrbs);
  row.acrb_oneway = mean_or_inf(oneways);
  if (estimators && used > 0) {
    row.mse_cor = se_cor / used;
    row.mse_mle = se_mle / used;
    row.bias_cor = bias / used;
  } else {
    row.mse_cor = row.mse_mle = row.bias_cor = kNaN;
  }
  return row;
}

SweepResult sweep_impl(const ExperimentConfig& config, bool parallel) {
  config.validate();
  SweepResult result;
  result.mode = config.mode;
#ifdef _OPENMP
  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
#endif
  for (int s = 0; s < static_cast<int>(config.snr_grid_db.size()); ++s) {
    const auto system = at_snr(config.system, config.snr_grid_db[s]);
    const std::uint64_t gamma_seed = derive_seed(config.master_seed, kGammaStream, s);
    const double k = parallel
                         ? crb::estimate_gamma(system, config.gamma_samples, gamma_seed).k
                         : crb::estimate_gamma_serial(system, config.gamma_samples, gamma_seed).k;

    std::vector<TrialOutcome> outcomes(config.trials);
    if (parallel) {
      std::vector<std::exception_ptr> errors(config.trials);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
      for (int t = 0; t < config.trials; ++t) {
        try {
          outcomes[t] = run_trial(config, s, t, k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      }
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (int t = 0; t < config.trials; ++t) outcomes[t] = run_trial(config, s, t, k);
    }
    result.rows.push_back(reduce_row(config.snr_grid_db[s], outcomes, config.run_estimators));
  }
  return result;
}

}  // namespace

std::string_view to_string(PreambleMode mode) {
  switch (mode) {
    case PreambleMode::periodic: return "periodic";
    case PreambleMode::optimized_brp: return "optimized-brp";
    case PreambleMode::one_way: return "one-way";
  }
  return "unknown";
}

PreambleMode parse_preamble_mode(std::string_view text) {
  if (text == "periodic") return PreambleMode::periodic;
  if (text == "optimized-brp") return PreambleMode::optimized_brp;
  if (text == "one-way") return PreambleMode::one_way;
  throw Error(ErrorCode::config, "unknown preamble mode '" + std::string(text) +
                                     "' (expected periodic, optimized-brp or one-way)");
}

std::vector<double> ExperimentConfig::default_snr_grid() {
  std::vector<double> grid;
  for (int s = 0; s <= 30; s += 2) grid.push_back(s);
  return grid;
}

void ExperimentConfig::validate() const {
  system.validate();
  if (system.num_blocks < 3) {
    throw Error(ErrorCode::invalid_argument, "sweeps need at least three retained blocks");
  }
  if (snr_grid_db.empty()) throw Error(ErrorCode::invalid_argument, "SNR grid is empty");
  for (double s : snr_grid_db) {
    if (!std::isfinite(s)) throw Error(ErrorCode::invalid_argument, "SNR grid must be finite");
  }
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "trials must be at least 1");
  if (threads < 0) throw Error(ErrorCode::invalid_argument, "threads must be nonnegative");
  if (mle_grid_points < 8) {
    throw Error(ErrorCode::invalid_argument, "mle_grid_points must be at least 8");
  }
  if (gamma_samples < 1) {
    throw Error(ErrorCode::invalid_argument, "gamma_samples must be at least 1");
  }
}

Preambles make_preambles(const channel::SystemConfig& system, PreambleMode mode) {
  const double amplitude = std::sqrt(system.power());
  const auto base = preamble::scaled(preamble::generate_cazac(system.block_length), amplitude);
  Preambles p;
  switch (mode) {
    case PreambleMode::periodic:
      p.brp1 = preamble::BrpSpec{base, 0.0, system.num_blocks};
      p.brp2 = preamble::BrpSpec{base, 0.0, system.num_blocks};
      break;
    case PreambleMode::optimized_brp: {
      // With two blocks no rotation helps; pi keeps the design well defined so
      // the bound itself can report the degeneracy.
      const double delta =
          system.num_blocks >= 3 ? preamble::optimal_delta(system.num_blocks).delta : kPi;
      p.brp1 = preamble::BrpSpec{base, 0.0, system.num_blocks};
      p.brp2 = preamble::BrpSpec{preamble::generalize_cazac(base, delta), delta, system.num_blocks};
      break;
    }
    case PreambleMode::one_way:
      p.brp2 = preamble::BrpSpec{base, 0.0, system.num_blocks};
      break;
  }
  return p;
}

TrialOutcome run_trial(const ExperimentConfig& config, int snr_index, int trial_index, double k) {
  const auto system = at_snr(config.system, config.snr_grid_db.at(snr_index));
  const std::uint64_t base = derive_seed(config.master_seed, static_cast<std::uint64_t>(snr_index),
                                         static_cast<std::uint64_t>(trial_index));
  const auto channels = channel::sample_channel(system, derive_seed(base, 1));
  const Preambles pre = make_preambles(system, config.mode);
  const auto model = channel::build_block_model(system, channels, pre.brp1, pre.brp2);
  const int m = system.num_blocks;
  const int l = system.block_length;

  TrialOutcome out;
  out.phi_true = model.phi21;
  out.gcrb = crb::gcrb(crb::CrbInputs::from(model));
  const double energy = model.r21.squaredNorm();
  out.acrb_oneway = crb::acrb_oneway(energy, m, k);
  if (model.one_way()) {
    out.acrb = out.acrb_oneway;
  } else {
    try {
      out.acrb = crb::acrb(model.phi21, model.phi11, energy, m, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::invalid_regime) throw;
      out.acrb = kInf;
    }
  }
  if (!config.run_estimators) return out;

  const CVec x1 = pre.brp1 ? preamble::assemble_brp(*pre.brp1)
                           : CVec(CVec::Zero(static_cast<Eigen::Index>(m + 1) * l));
  const CVec x2 = preamble::assemble_brp(pre.brp2);
  const CVec r0 = channel::simulate_phase1(system, channels, x1, x2, derive_seed(base, 2));
  const CVec r1 = channel::simulate_phase2(system, channels, r0, derive_seed(base, 3));
  const CVec y = channel::retained_samples(r1, l, m);

  try {
    double phi_cor = 0.0;
    if (model.one_way()) {
      phi_cor = estimation::block_correlation_phase(y, l);
    } else {
      const CVec z = estimation::apply_blockwise_filter(y, m, l, model.phi11);
      phi_cor = estimation::correlator_estimate(z, m, l).phi_hat;
    }
    estimation::GaMleOptions options;
    options.domain = config.mle_domain;
    options.grid_points = config.mle_grid_points;
    const double phi_mle =
        estimation::gamle_estimate(y, estimation::GaMleKnowledge::from(model), options).phi_hat;
    out.err_cor = wrap_angle(phi_cor - model.phi21);
    out.err_mle = wrap_angle(phi_mle - model.phi21);
    out.estimated = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_angle) throw;
    out.excluded = true;
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& config) { return sweep_impl(config, true); }

SweepResult run_sweep_serial(const ExperimentConfig& config) { return sweep_impl(config, false); }

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8e", value);
  return buf;
}

std::string format_sweep_csv(const SweepResult& result) {
  std::string out = "snr_db,mse_cor,mse_mle,emcb,acrb,acrb_1way,bias_cor,excluded\n";
  for (const auto& r : result.rows) {
    out += format_number(r.snr_db) + ',' + format_number(r.mse_cor) + ',' +
           format_number(r.mse_mle) + ',' + format_number(r.emcb) + ',' + format_number(r.acrb) +
           ',' + format_number(r.acrb_oneway) + ',' + format_number(r.bias_cor) + ',' +
           std::to_string(r.excluded) + '\n';
  }
  return out;
}

std::vector<DegradationRow> run_degradation_table(const std::vector<int>& block_counts,
                                                  int grid_points) {
  if (grid_points < 2) {
    throw Error(ErrorCode::invalid_argument, "degradation table needs at least two grid points");
  }
  std::vector<DegradationRow> rows;
  for (int m : block_counts) {
    for (int i = 0; i < grid_points; ++i) {
      const double x = kTwoPi * i / (grid_points - 1);
      rows.push_back({m, x, preamble::degradation(x, m)});
    }
  }
  return rows;
}

std::string format_degradation_csv(const std::vector<DegradationRow>& rows) {
  std::string out = "M,x_rad,lambda\n";
  for (const auto& r : rows) {
    out += std::to_string(r.num_blocks) + ',' + format_number(r.x) + ',' +
           format_number(r.lambda) + '\n';
  }
  return out;
}

std::vector<HeuristicAngleRow> run_heuristic_angle_table(const std::vector<int>& block_counts) {
  std::vector<HeuristicAngleRow> rows;
  for (int m : block_counts) {
    const double delta = preamble::heuristic_delta(m);
    rows.push_back({m, delta, preamble::degradation(delta, m), preamble::degradation(kPi, m)});
  }
  return rows;
}

std::string format_heuristic_csv(const std::vector<HeuristicAngleRow>& rows) {
  std::string out = "M,delta_rad,lambda,lambda_pi\n";
  for (const auto& r : rows) {
    out += std::to_string(r.num_blocks) + ',' + format_number(r.delta) + ',' +
           format_number(r.lambda) + ',' + format_number(r.lambda_at_pi) + '\n';
  }
  return out;
}

GammaReport run_gamma_diagnostic(const channel::SystemConfig& system, int samples,
                                 std::uint64_t seed) {
  if (samples < 100) {
    throw Error(ErrorCode::invalid_argument, "gamma diagnostic needs at least 100 samples");
  }
  GammaReport report;
  report.estimate = crb::estimate_gamma(system, samples, seed);
  const int n = static_cast<int>(report.estimate.gamma.rows());
  report.profile_rows = {0, n / 2, n - 1};
  for (int r : report.profile_rows) {
    report.row_profiles.push_back(report.estimate.gamma.row(r).cwiseAbs().transpose());
  }
  return report;
}

}  // namespace brpsync::experiments
