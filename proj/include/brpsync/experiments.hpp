#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "brpsync/channel.hpp"
#include "brpsync/crb.hpp"
#include "brpsync/estimation.hpp"

// Monte Carlo harness: MSE and bound sweeps over SNR plus the tables behind
// the preamble-design plots.
namespace brpsync::experiments {

enum class PreambleMode { periodic, optimized_brp, one_way };

std::string_view to_string(PreambleMode mode);
PreambleMode parse_preamble_mode(std::string_view text);

struct ExperimentConfig {
  channel::SystemConfig system;
  PreambleMode mode = PreambleMode::optimized_brp;
  std::vector<double> snr_grid_db = default_snr_grid();
  int trials = 1000;
  std::uint64_t master_seed = 1;
  std::string output_prefix = "sweep";
  int threads = 0;  // 0 lets OpenMP decide
  int mle_grid_points = 4096;
  estimation::MleDomain mle_domain = estimation::MleDomain::filtered;
  int gamma_samples = 500;
  bool run_estimators = true;

  static std::vector<double> default_snr_grid();
  void validate() const;
};

struct Preambles {
  std::optional<preamble::BrpSpec> brp1;  // absent in one-way mode
  preamble::BrpSpec brp2;
};

// Source samples carry amplitude sqrt(P). The optimized design rotates source
// 2 by the optimal angle and keeps source 1 unrotated.
Preambles make_preambles(const channel::SystemConfig& system, PreambleMode mode);

struct TrialOutcome {
  double phi_true = 0.0;
  double gcrb = 0.0;
  double acrb = 0.0;
  double acrb_oneway = 0.0;
  double err_cor = 0.0;  // wrapped phi_hat - phi_true
  double err_mle = 0.0;
  bool estimated = false;
  bool excluded = false;
};

TrialOutcome run_trial(const ExperimentConfig& config, int snr_index, int trial_index, double k);

struct SweepRow {
  double snr_db = 0.0;
  double mse_cor = 0.0;
  double mse_mle = 0.0;
  double emcb = 0.0;
  double acrb = 0.0;
  double acrb_oneway = 0.0;
  double bias_cor = 0.0;
  int excluded = 0;
};

struct SweepResult {
  PreambleMode mode = PreambleMode::optimized_brp;
  std::vector<SweepRow> rows;
};

SweepResult run_sweep(const ExperimentConfig& config);
SweepResult run_sweep_serial(const ExperimentConfig& config);

std::string format_sweep_csv(const SweepResult& result);

// %.8e, with "inf"/"nan" for non-finite values.
std::string format_number(double value);

struct DegradationRow {
  int num_blocks = 0;
  double x = 0.0;
  double lambda = 0.0;
};

// x_i = 2 pi i / (grid_points - 1), i = 0..grid_points-1.
std::vector<DegradationRow> run_degradation_table(const std::vector<int>& block_counts,
                                                  int grid_points);
std::string format_degradation_csv(const std::vector<DegradationRow>& rows);

struct HeuristicAngleRow {
  int num_blocks = 0;
  double delta = 0.0;
  double lambda = 0.0;
  double lambda_at_pi = 0.0;
};

std::vector<HeuristicAngleRow> run_heuristic_angle_table(const std::vector<int>& block_counts);
std::string format_heuristic_csv(const std::vector<HeuristicAngleRow>& rows);

struct GammaReport {
  crb::GammaEstimate estimate;
  std::vector<int> profile_rows;
  std::vector<RVec> row_profiles;  // |Gamma(row, :)|
};

GammaReport run_gamma_diagnostic(const channel::SystemConfig& system, int samples,
                                 std::uint64_t seed);

}  // namespace brpsync::experiments
