#pragma once

#include <string_view>
#include <vector>

#include "brpsync/crb.hpp"

// Self-interference cancelling filter and CFO estimators at source S1.
namespace brpsync::estimation {

struct FilterSpec {
  CMat Q;  // N x m; the filter output is Q^H r1
  int block_length = 0;

  Eigen::Index output_size() const { return Q.cols(); }
};

// Blockwise two-tap filter {rho11, -1}: z_m = rho11 r_m - r_{m+1}.
FilterSpec build_preserving_filter(int num_blocks, int block_length, double theta1);

CVec apply_filter(const FilterSpec& spec, const CVec& r1);

// Same as apply_filter for the preserving filter, without forming Q.
CVec apply_blockwise_filter(const CVec& r1, int num_blocks, int block_length, double theta1);

// Q^H R Q for the preserving filter, computed blockwise from R.
CMat filtered_covariance(const CMat& R, int num_blocks, int block_length, double theta1);

struct FilteredGcrb {
  double gcrb_r = 0.0;
  double gcrb_z = 0.0;
};

// Bounds from r1 and from Q^H r1. One-way models carry no self-interference,
// so the filter is bypassed and both values are the plain bound.
FilteredGcrb filtered_gcrb_check(const crb::CrbInputs& inputs, const FilterSpec& spec);

enum class EstimatorKind { correlator, ga_mle };

std::string_view to_string(EstimatorKind kind);

struct EstimateResult {
  double phi_hat = 0.0;  // [-pi, pi)
  EstimatorKind method = EstimatorKind::correlator;
  double diagnostic = 0.0;  // correlation magnitude or concentrated log-likelihood
};

// Angle of sum_m z_m^H z_{m+1} over consecutive length-L blocks of z.
double block_correlation_phase(const CVec& z, int block_length, double* magnitude = nullptr);

// z holds the (M-1) L filter outputs.
EstimateResult correlator_estimate(const CVec& z1, int num_blocks, int block_length);

enum class MleDomain { filtered, received };

std::string_view to_string(MleDomain domain);

struct GaMleOptions {
  MleDomain domain = MleDomain::filtered;
  int grid_points = 4096;
  double tolerance = 1e-8;
};

// What the genie-aided receiver knows: the noise covariance (through h01) and
// its own rotation. one_way drops the self-interference term.
struct GaMleKnowledge {
  CMat R;
  double phi11 = 0.0;
  int num_blocks = 0;
  int block_length = 0;
  bool one_way = false;

  static GaMleKnowledge from(const channel::BlockModel& model);
};

// Concentrated log-likelihood of phi21 (up to a constant) with the nuisance
// vectors profiled out by generalized least squares. Evaluation reuses
// internal workspace, so one instance must not be shared between threads.
class ConcentratedLikelihood {
 public:
  ConcentratedLikelihood(const CVec& r1, const GaMleKnowledge& knowledge, MleDomain domain);

  double operator()(double phi) const;

 private:
  double filtered(double phi) const;
  double received(double phi) const;

  MleDomain domain_;
  int block_length_ = 0;
  int blocks_ = 0;
  // filtered domain
  std::vector<CMat> lag_sums_;  // S_d for d = 0..blocks-1; S_{-d} = S_d^H
  std::vector<CMat> lag_adjoints_;
  CVec weighted_;               // C^{-1} z
  mutable CMat work_;
  mutable CVec rhs_;
  // received domain
  CMat rinv_;
  CVec rinv_r_;
  CMat g11_;
  double phi11_ = 0.0;
  int num_blocks_ = 0;
};

EstimateResult gamle_estimate(const CVec& r1, const GaMleKnowledge& knowledge,
                              const GaMleOptions& options = {});

// Weighted residual energy (r1 - G21 r21 - G11 r11)^H R^{-1} (...) at phi21
// with GLS nuisance estimates; its mean is N - 2L for a two-way model.
double gls_residual_energy(const CVec& r1, const channel::BlockModel& model, double phi21);

}  // namespace brpsync::estimation
