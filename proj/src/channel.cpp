#include "brpsync/channel.hpp"

#include <cmath>
#include <string>

#include "brpsync/crb.hpp"
#include "brpsync/rng.hpp"

namespace brpsync::channel {
namespace {

CVec modulate(const CVec& x, double f) {
  CVec out(x.size());
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    out[n] = x[n] * unit_phasor(kTwoPi * f * static_cast<double>(n));
  }
  return out;
}

CVec equivalent_channel(const CVec& relay_hop, const CVec& source_hop, double alpha, double f,
                        Eigen::Index length) {
  CVec h = cascade(relay_hop, source_hop, length);
  for (Eigen::Index p = 0; p < h.size(); ++p) {
    h[p] *= alpha * unit_phasor(-kTwoPi * f * static_cast<double>(p));
  }
  return h;
}

}  // namespace

double SystemConfig::power() const { return std::pow(10.0, snr_db / 10.0); }

void SystemConfig::validate() const {
  if (block_length < 1) {
    throw Error(ErrorCode::invalid_argument, "block_length must be at least 1");
  }
  if (num_blocks < 2) {
    throw Error(ErrorCode::invalid_argument, "num_blocks must be at least 2");
  }
  if (num_taps < 1) {
    throw Error(ErrorCode::invalid_argument, "num_taps must be at least 1");
  }
  if (2 * num_taps - 1 > block_length) {
    throw Error(ErrorCode::invalid_argument,
                "cascaded relay channel (2*num_taps-1 = " + std::to_string(2 * num_taps - 1) +
                    " taps) exceeds block_length " + std::to_string(block_length));
  }
  if (!(tau_rms > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "tau_rms must be positive");
  }
  if (!std::isfinite(snr_db) || !std::isfinite(f0) || !std::isfinite(f1) || !std::isfinite(f2)) {
    throw Error(ErrorCode::invalid_argument, "snr_db and carrier offsets must be finite");
  }
}

RVec power_delay_profile(int num_taps, double tau_rms) {
  if (num_taps < 1 || !(tau_rms > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "power_delay_profile needs num_taps >= 1, tau_rms > 0");
  }
  RVec p(num_taps);
  for (int n = 0; n < num_taps; ++n) p[n] = std::exp(-n / tau_rms);
  return p / p.sum();
}

double relay_gain(const SystemConfig& config) {
  const double p = config.power();
  return std::sqrt(2.0 * p / (2.0 * p + 1.0));
}

ChannelRealization sample_channel(const SystemConfig& config, std::uint64_t seed) {
  config.validate();
  const RVec profile = power_delay_profile(config.num_taps, config.tau_rms);
  Rng rng(seed);
  auto draw = [&] {
    CVec h(config.num_taps);
    for (int n = 0; n < config.num_taps; ++n) h[n] = rng.complex_normal(profile[n]);
    return h;
  };
  ChannelRealization ch;
  ch.h10 = draw();
  ch.h20 = draw();
  ch.h01 = draw();
  ch.alpha = relay_gain(config);
  return ch;
}

CVec convolve(const CVec& h, const CVec& x) {
  CVec y = CVec::Zero(x.size());
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    const Eigen::Index kmax = std::min<Eigen::Index>(h.size() - 1, n);
    Complex acc(0.0, 0.0);
    for (Eigen::Index k = 0; k <= kmax; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

CVec cascade(const CVec& a, const CVec& b, Eigen::Index length) {
  const Eigen::Index full = a.size() + b.size() - 1;
  if (full > length) {
    throw Error(ErrorCode::dimension_mismatch, "cascaded channel longer than block length");
  }
  CVec c = CVec::Zero(length);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

CVec simulate_phase1(const SystemConfig& config, const ChannelRealization& channels,
                     const CVec& x1, const CVec& x2, std::optional<std::uint64_t> noise_seed) {
  if (x1.size() != x2.size()) {
    throw Error(ErrorCode::dimension_mismatch, "preambles x1 and x2 differ in length");
  }
  CVec r0 = convolve(channels.h10, modulate(x1, config.f1)) +
            convolve(channels.h20, modulate(x2, config.f2));
  r0 = modulate(r0, -config.f0);
  if (noise_seed) {
    Rng rng(*noise_seed);
    r0 += complex_normal_vector(rng, r0.size(), 1.0);
  }
  return r0;
}

CVec simulate_phase2(const SystemConfig& config, const ChannelRealization& channels,
                     const CVec& r0, std::optional<std::uint64_t> noise_seed) {
  CVec r1 = modulate(convolve(channels.h01, modulate(channels.alpha * r0, config.f0)), -config.f1);
  if (noise_seed) {
    Rng rng(*noise_seed);
    r1 += complex_normal_vector(rng, r1.size(), 1.0);
  }
  return r1;
}

CVec retained_samples(const CVec& received, int block_length, int num_blocks) {
  const Eigen::Index n = static_cast<Eigen::Index>(block_length) * num_blocks;
  if (received.size() < n + block_length) {
    throw Error(ErrorCode::dimension_mismatch, "received frame shorter than (M+1)*L samples");
  }
  return received.segment(block_length, n);
}

CMat block_rotation_matrix(double phi, int num_blocks, int block_length) {
  const Eigen::Index l = block_length;
  CMat g = CMat::Zero(l * num_blocks, l);
  for (int m = 0; m < num_blocks; ++m) {
    g.block(m * l, 0, l, l).diagonal().setConstant(unit_phasor((m + 1) * phi));
  }
  return g;
}

CMat convolution_matrix(const CVec& taps, Eigen::Index rows, int block_length) {
  if (taps.size() > block_length) {
    throw Error(ErrorCode::dimension_mismatch, "noise taps longer than block length");
  }
  const Eigen::Index offset = block_length - 1;
  CMat k = CMat::Zero(rows, rows + offset);
  for (Eigen::Index n = 0; n < rows; ++n) {
    for (Eigen::Index t = 0; t < taps.size(); ++t) k(n, n - t + offset) = taps[t];
  }
  return k;
}

CMat noise_covariance(const CVec& taps, Eigen::Index rows) {
  const Eigen::Index nt = taps.size();
  CVec acf = CVec::Zero(nt);
  for (Eigen::Index d = 0; d < nt; ++d) {
    for (Eigen::Index t = d; t < nt; ++t) acf[d] += taps[t] * std::conj(taps[t - d]);
  }
  CMat r = CMat::Zero(rows, rows);
  for (Eigen::Index n = 0; n < rows; ++n) {
    r(n, n) = acf[0] + 1.0;
    for (Eigen::Index d = 1; d < nt && n - d >= 0; ++d) {
      r(n, n - d) = acf[d];
      r(n - d, n) = std::conj(acf[d]);
    }
  }
  return r;
}

BlockModel build_block_model(const SystemConfig& config, const ChannelRealization& channels,
                             const std::optional<preamble::BrpSpec>& brp1,
                             const preamble::BrpSpec& brp2) {
  config.validate();
  brp2.validate();
  const int m = config.num_blocks;
  const int l = config.block_length;
  if (brp2.num_blocks != m || brp2.basis.length() != l ||
      (brp1 && (brp1->num_blocks != m || brp1->basis.length() != l))) {
    throw Error(ErrorCode::dimension_mismatch, "preamble shape does not match the system config");
  }

  BlockModel model;
  model.num_blocks = m;
  model.block_length = l;
  const double df = config.f2 - config.f1;

  model.h21 = equivalent_channel(channels.h01, channels.h20, channels.alpha, config.f2, l);
  model.phi21 = wrap_angle(kTwoPi * df * l + brp2.theta);
  model.G21 = block_rotation_matrix(model.phi21, m, l);
  model.r21 = crb::build_rcso(brp2.basis, brp2.theta) * model.h21;
  for (int i = 0; i < l; ++i) model.r21[i] *= unit_phasor(kTwoPi * df * i);

  model.h11 = equivalent_channel(channels.h01, channels.h10, channels.alpha, config.f1, l);
  if (brp1) {
    model.phi11 = wrap_angle(brp1->theta);
    model.G11 = block_rotation_matrix(model.phi11, m, l);
    model.r11 = crb::build_rcso(brp1->basis, brp1->theta) * model.h11;
  } else {
    model.G11 = CMat::Zero(static_cast<Eigen::Index>(m) * l, 0);
    model.r11 = CVec::Zero(0);
  }

  model.noise_taps = channels.h01;
  for (Eigen::Index k = 0; k < model.noise_taps.size(); ++k) {
    model.noise_taps[k] *= channels.alpha * unit_phasor(-kTwoPi * config.f1 * static_cast<double>(k));
  }
  model.K = convolution_matrix(model.noise_taps, static_cast<Eigen::Index>(m) * l, l);
  model.R = noise_covariance(model.noise_taps, static_cast<Eigen::Index>(m) * l);
  return model;
}

}  // namespace brpsync::channel
