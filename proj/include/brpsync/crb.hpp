#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "brpsync/channel.hpp"
#include "brpsync/preamble.hpp"

// Cramer-Rao bounds on the cross-link phase increment phi21.
namespace brpsync::crb {

// Diagonal of T = diag(0, 1, ..., M-1) kron I_L.
RVec block_index_weights(int num_blocks, int block_length);

struct CrbInputs {
  channel::BlockModel model;
  RVec block_weights;

  static CrbInputs from(channel::BlockModel model);
};

// Cholesky factor of a Hermitian positive definite covariance. The band of
// nonzeros is detected so the banded relay-noise covariance factors in
// O(N b^2); dense inputs are handled the same way with b = N - 1.
class NoiseWhitener {
 public:
  explicit NoiseWhitener(const CMat& covariance);

  // L^{-1} x
  CMat whiten(const CMat& x) const;
  CVec whiten(const CVec& x) const;
  // R^{-1} x
  CMat solve(const CMat& x) const;
  CMat inverse() const;

  const CMat& factor() const { return l_; }
  Eigen::Index bandwidth() const { return band_; }

 private:
  void forward(Complex* x) const;
  void backward(Complex* x) const;

  CMat l_;
  Eigen::Index band_ = 0;
};

struct GcrbTerms {
  double value = 0.0;  // +inf when degenerate
  double signal_term = 0.0;
  double interference_term = 0.0;
  double denominator = 0.0;
  bool degenerate = false;
};

// Genie-aided bound with h01 known. Throws degenerate_fim for M = 2 two-way
// models, where the bound does not exist.
GcrbTerms gcrb_terms(const CrbInputs& inputs, const NoiseWhitener& whitener);
double gcrb(const CrbInputs& inputs);
double gcrb(const CrbInputs& inputs, const NoiseWhitener& whitener);

// R^{-1} - R^{-1} G21 (G21^H R^{-1} G21)^{-1} G21^H R^{-1}
CMat phi1_matrix(const CrbInputs& inputs);

// Inverts the full real FIM over [phi21, Re/Im r21, Re/Im r11].
double brute_force_crb(const CrbInputs& inputs);

// Closed-form approximate bound for Gamma = k I.
double acrb(double phi21, double phi11, double r21_energy, int num_blocks, double k);
double acrb_oneway(double r21_energy, int num_blocks, double k);

struct GammaEstimate {
  CMat gamma;  // Monte Carlo mean of R^{-1}(h01)
  double k = 0.0;
  double leakage = 0.0;      // max |off-diagonal| / k
  double diag_spread = 0.0;  // (max diag - min diag) / k
  double k_std_error = 0.0;
  int samples = 0;
};

GammaEstimate estimate_gamma(const channel::SystemConfig& config, int num_samples,
                             std::uint64_t seed);
GammaEstimate estimate_gamma_serial(const channel::SystemConfig& config, int num_samples,
                                    std::uint64_t seed);
// Same statistics over caller-supplied channels (only h01 and alpha are used).
GammaEstimate gamma_from_channels(const channel::SystemConfig& config,
                                  const std::vector<channel::ChannelRealization>& channels);

// Modified bound: the FIM with E[R^{-1}] in place of R^{-1}.
double mcrb_numeric(const CrbInputs& inputs, const CMat& gamma);

struct EmcbResult {
  double value = 0.0;
  int trials = 0;
  int infinite_trials = 0;
};

EmcbResult emcb(const channel::SystemConfig& config,
                const std::optional<preamble::BrpSpec>& brp1, const preamble::BrpSpec& brp2,
                int num_trials, std::uint64_t seed);
EmcbResult emcb_serial(const channel::SystemConfig& config,
                       const std::optional<preamble::BrpSpec>& brp1,
                       const preamble::BrpSpec& brp2, int num_trials, std::uint64_t seed);
EmcbResult emcb_from_channels(const channel::SystemConfig& config,
                              const std::optional<preamble::BrpSpec>& brp1,
                              const preamble::BrpSpec& brp2,
                              const std::vector<channel::ChannelRealization>& channels);

// Twisted circulant: entry (i, p) is b[i-p] for p <= i, else b[L+i-p] e^{-j theta}.
CMat build_rcso(const preamble::BasisBlock& basis, double theta);

namespace detail {

// Real FIM D^T W D over [phi21, Re/Im r21, Re/Im r11], where D is the
// Jacobian of the stacked [Re; Im] mean and W the real inverse covariance.
RMat real_fim(const CrbInputs& inputs, const RMat& real_weight);
// [[Re A, -Im A], [Im A, Re A]]
RMat real_representation(const CMat& a);
// Bound on phi from an already whitened problem: 1 / (2 |P_perp(nuisance) t|^2),
// +inf if the projected energy vanishes.
double projected_bound(const CMat& nuisance, const CVec& t);

}  // namespace detail

}  // namespace brpsync::crb
