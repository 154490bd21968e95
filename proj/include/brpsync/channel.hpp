#pragma once

#include <cstdint>
#include <optional>

#include "brpsync/common.hpp"
#include "brpsync/preamble.hpp"

// Two-phase amplify-and-forward exchange and its equivalent block model.
namespace brpsync::channel {

struct SystemConfig {
  int block_length = 16;  // L
  int num_blocks = 5;     // M, retained blocks
  int num_taps = 8;
  double tau_rms = 1.0;
  double f0 = 0.0;  // carrier offsets in cycles per sample
  double f1 = 0.001;
  double f2 = -0.002;
  double snr_db = 20.0;

  // Per-source transmit power; noise variances are fixed at one.
  double power() const;
  int observation_length() const { return block_length * num_blocks; }
  void validate() const;
};

struct ChannelRealization {
  CVec h10;  // S1 -> relay
  CVec h20;  // S2 -> relay
  CVec h01;  // relay -> S1
  double alpha = 1.0;
};

struct BlockModel {
  int num_blocks = 0;
  int block_length = 0;
  CMat G11;  // N x L, or N x 0 for one-way relaying
  CMat G21;  // N x L
  CVec r11;
  CVec r21;
  double phi11 = 0.0;
  double phi21 = 0.0;
  CMat K;  // N x (N + L - 1)
  CMat R;  // K K^H + I
  CVec h11;  // equivalent self channel, length L
  CVec h21;  // equivalent cross channel, length L
  CVec noise_taps;

  bool one_way() const { return G11.cols() == 0; }
  Eigen::Index size() const { return G21.rows(); }
};

// Normalized exponential profile exp(-n / tau_rms).
RVec power_delay_profile(int num_taps, double tau_rms);

// Scales the relay so its expected transmit power equals 2P.
double relay_gain(const SystemConfig& config);

ChannelRealization sample_channel(const SystemConfig& config, std::uint64_t seed);

// Relay input for one frame; pass no seed for a noiseless run.
CVec simulate_phase1(const SystemConfig& config, const ChannelRealization& channels,
                     const CVec& x1, const CVec& x2,
                     std::optional<std::uint64_t> noise_seed = std::nullopt);

CVec simulate_phase2(const SystemConfig& config, const ChannelRealization& channels,
                     const CVec& r0, std::optional<std::uint64_t> noise_seed = std::nullopt);

// Drops the guard block, keeping the M*L samples the receiver uses.
CVec retained_samples(const CVec& received, int block_length, int num_blocks);

// Stacked blocks exp(j*(m+1)*phi) * I_L for m = 0..M-1.
CMat block_rotation_matrix(double phi, int num_blocks, int block_length);

// Linear convolution of a noise vector of length rows + L - 1 with taps,
// keeping the last `rows` outputs.
CMat convolution_matrix(const CVec& taps, Eigen::Index rows, int block_length);

// K K^H + I for the convolution matrix of `taps`, built from the tap
// autocorrelation (the product is banded Toeplitz).
CMat noise_covariance(const CVec& taps, Eigen::Index rows);

// Causal full-length linear convolution truncated to the length of x.
CVec convolve(const CVec& h, const CVec& x);

// Cascade of two FIR channels, zero-padded to `length` taps.
CVec cascade(const CVec& a, const CVec& b, Eigen::Index length);

// brp1 absent models one-way relaying (S1 silent).
BlockModel build_block_model(const SystemConfig& config, const ChannelRealization& channels,
                             const std::optional<preamble::BrpSpec>& brp1,
                             const preamble::BrpSpec& brp2);

}  // namespace brpsync::channel
