#include "brpsync/crb.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include "brpsync/rng.hpp"

namespace brpsync::crb {
namespace {

constexpr double kRankTolerance = 1e-9;
constexpr double kDenominatorTolerance = 1e-12;
constexpr int kGammaChunk = 64;

CMat thin_q(const CMat& a) {
  Eigen::HouseholderQR<CMat> qr(a);
  return qr.householderQ() * CMat::Identity(a.rows(), a.cols());
}

// x - Q Q^H x for orthonormal Q.
template <typename Derived>
Derived residual(const CMat& q, const Derived& x) {
  if (q.cols() == 0) return x;
  return x - q * (q.adjoint() * x);
}

double max_column_norm(const CMat& a) {
  double best = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) best = std::max(best, a.col(c).norm());
  return best;
}

// Orthonormal basis of the column space of b, or nothing if b is rank
// deficient relative to `scale`.
std::optional<CMat> full_rank_basis(const CMat& b, double scale) {
  if (b.cols() == 0) return CMat(b.rows(), 0);
  Eigen::ColPivHouseholderQR<CMat> qr(b);
  const auto r = qr.matrixR().topLeftCorner(b.cols(), b.cols());
  double smallest = kInf;
  for (Eigen::Index i = 0; i < b.cols(); ++i) smallest = std::min(smallest, std::abs(r(i, i)));
  if (!(smallest > kRankTolerance * scale)) return std::nullopt;
  return CMat(qr.householderQ() * CMat::Identity(b.rows(), b.cols()));
}

CVec phase_derivative(const CrbInputs& inputs) {
  const auto& m = inputs.model;
  return inputs.block_weights.cast<Complex>().cwiseProduct(m.G21 * m.r21);
}

void check_inputs(const CrbInputs& inputs) {
  const auto& m = inputs.model;
  const Eigen::Index n = m.G21.rows();
  if (m.R.rows() != n || m.R.cols() != n || inputs.block_weights.size() != n ||
      m.r21.size() != m.G21.cols() || m.G11.rows() != n || m.r11.size() != m.G11.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "inconsistent block model dimensions");
  }
}

// Column-wise real stacking [Re; Im].
RMat stack_real(const CMat& d) {
  RMat out(2 * d.rows(), d.cols());
  out.topRows(d.rows()) = d.real();
  out.bottomRows(d.rows()) = d.imag();
  return out;
}

RMat fim_jacobian(const CrbInputs& inputs) {
  const auto& m = inputs.model;
  const Eigen::Index l21 = m.G21.cols();
  const Eigen::Index l11 = m.G11.cols();
  const Complex j(0.0, 1.0);
  // Exact derivative of exp(j(m+1)phi) blocks; the extra identity part lies
  // in the nuisance span.
  const RVec weights = inputs.block_weights.array() + 1.0;
  CMat d(m.G21.rows(), 1 + 2 * l21 + 2 * l11);
  d.col(0) = j * weights.cast<Complex>().cwiseProduct(m.G21 * m.r21);
  d.middleCols(1, l21) = m.G21;
  d.middleCols(1 + l21, l21) = j * m.G21;
  d.middleCols(1 + 2 * l21, l11) = m.G11;
  d.middleCols(1 + 2 * l21 + l11, l11) = j * m.G11;
  return stack_real(d);
}

double invert_first_entry(const RMat& fim) {
  Eigen::SelfAdjointEigenSolver<RMat> eig(fim, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  if (!(top > 0.0) || bottom <= 1e-13 * top) {
    throw Error(ErrorCode::degenerate_fim, "Fisher information matrix is singular");
  }
  Eigen::FullPivLU<RMat> lu(fim);
  RVec e = RVec::Zero(fim.rows());
  e[0] = 1.0;
  return lu.solve(e)[0];
}

struct GammaAccumulator {
  CMat sum;
  double diag_mean_sum = 0.0;
  double diag_mean_sq_sum = 0.0;
};

void accumulate_gamma(const channel::SystemConfig& config, const channel::ChannelRealization& ch,
                      GammaAccumulator& acc) {
  const Eigen::Index n = config.observation_length();
  CVec taps = ch.h01;
  for (Eigen::Index k = 0; k < taps.size(); ++k) {
    taps[k] *= ch.alpha * unit_phasor(-kTwoPi * config.f1 * static_cast<double>(k));
  }
  const CMat inv = NoiseWhitener(channel::noise_covariance(taps, n)).inverse();
  acc.sum += inv;
  const double dm = inv.diagonal().real().mean();
  acc.diag_mean_sum += dm;
  acc.diag_mean_sq_sum += dm * dm;
}

GammaAccumulator gamma_chunk(const channel::SystemConfig& config, std::uint64_t seed, int begin,
                             int end) {
  const Eigen::Index n = config.observation_length();
  GammaAccumulator acc;
  acc.sum = CMat::Zero(n, n);
  for (int i = begin; i < end; ++i) {
    accumulate_gamma(
        config, channel::sample_channel(config, derive_seed(seed, static_cast<std::uint64_t>(i))),
        acc);
  }
  return acc;
}

GammaEstimate finish_gamma(const std::vector<GammaAccumulator>& chunks, Eigen::Index n,
                           int samples) {
  CMat sum = CMat::Zero(n, n);
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& c : chunks) {
    sum += c.sum;
    s1 += c.diag_mean_sum;
    s2 += c.diag_mean_sq_sum;
  }
  GammaEstimate est;
  est.samples = samples;
  est.gamma = sum / static_cast<double>(samples);
  const RVec diag = est.gamma.diagonal().real();
  est.k = diag.mean();
  double off = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (r != c) off = std::max(off, std::abs(est.gamma(r, c)));
    }
  }
  est.leakage = off / est.k;
  est.diag_spread = (diag.maxCoeff() - diag.minCoeff()) / est.k;
  const double mean = s1 / samples;
  const double var = samples > 1 ? std::max(0.0, (s2 - samples * mean * mean) / (samples - 1)) : 0.0;
  est.k_std_error = std::sqrt(var / samples);
  return est;
}

GammaEstimate estimate_gamma_impl(const channel::SystemConfig& config, int num_samples,
                                  std::uint64_t seed, bool parallel) {
  config.validate();
  if (num_samples < 1) {
    throw Error(ErrorCode::invalid_argument, "estimate_gamma needs at least one sample");
  }
  const int num_chunks = (num_samples + kGammaChunk - 1) / kGammaChunk;
  std::vector<GammaAccumulator> chunks(num_chunks);
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < num_chunks; ++c) {
      chunks[c] = gamma_chunk(config, seed, c * kGammaChunk,
                              std::min(num_samples, (c + 1) * kGammaChunk));
    }
  } else {
    for (int c = 0; c < num_chunks; ++c) {
      chunks[c] = gamma_chunk(config, seed, c * kGammaChunk,
                              std::min(num_samples, (c + 1) * kGammaChunk));
    }
  }
  return finish_gamma(chunks, config.observation_length(), num_samples);
}

EmcbResult reduce_emcb(const std::vector<double>& values) {
  EmcbResult res;
  res.trials = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) {
    if (std::isinf(v)) ++res.infinite_trials;
    sum += v;
  }
  res.value = res.infinite_trials > 0 ? kInf : sum / res.trials;
  return res;
}

EmcbResult emcb_impl(const channel::SystemConfig& config,
                     const std::optional<preamble::BrpSpec>& brp1, const preamble::BrpSpec& brp2,
                     int num_trials, std::uint64_t seed, bool parallel) {
  if (num_trials < 1) {
    throw Error(ErrorCode::invalid_argument, "emcb needs at least one trial");
  }
  std::vector<double> values(num_trials);
  auto one = [&](int t) {
    const auto ch = channel::sample_channel(config, derive_seed(seed, static_cast<std::uint64_t>(t)));
    return gcrb(CrbInputs::from(channel::build_block_model(config, ch, brp1, brp2)));
  };
  if (parallel) {
    // Exceptions may not cross the parallel region; the first one (by trial
    // index) is rethrown afterwards.
    std::vector<std::exception_ptr> errors(num_trials);
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < num_trials; ++t) {
      try {
        values[t] = one(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (int t = 0; t < num_trials; ++t) values[t] = one(t);
  }
  return reduce_emcb(values);
}

}  // namespace

RVec block_index_weights(int num_blocks, int block_length) {
  RVec w(static_cast<Eigen::Index>(num_blocks) * block_length);
  for (int m = 0; m < num_blocks; ++m) w.segment(m * block_length, block_length).setConstant(m);
  return w;
}

CrbInputs CrbInputs::from(channel::BlockModel model) {
  CrbInputs in;
  in.block_weights = block_index_weights(model.num_blocks, model.block_length);
  in.model = std::move(model);
  return in;
}

NoiseWhitener::NoiseWhitener(const CMat& covariance) {
  const Eigen::Index n = covariance.rows();
  if (n == 0 || covariance.cols() != n) {
    throw Error(ErrorCode::dimension_mismatch, "noise covariance must be square and nonempty");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = n - 1; i > j + band_; --i) {
      if (covariance(i, j) != Complex(0.0, 0.0)) {
        band_ = i - j;
        break;
      }
    }
  }
  l_ = CMat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k0 = std::max<Eigen::Index>(0, j - band_);
    double d = covariance(j, j).real();
    for (Eigen::Index k = k0; k < j; ++k) d -= std::norm(l_(j, k));
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw Error(ErrorCode::invalid_argument, "noise covariance is not positive definite");
    }
    const double ljj = std::sqrt(d);
    l_(j, j) = ljj;
    const Eigen::Index iend = std::min(n - 1, j + band_);
    for (Eigen::Index i = j + 1; i <= iend; ++i) {
      Complex acc = covariance(i, j);
      for (Eigen::Index k = std::max<Eigen::Index>(0, i - band_); k < j; ++k) {
        acc -= l_(i, k) * std::conj(l_(j, k));
      }
      l_(i, j) = acc / ljj;
    }
  }
}

void NoiseWhitener::forward(Complex* x) const {
  const Eigen::Index n = l_.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    Complex acc = x[i];
    for (Eigen::Index k = std::max<Eigen::Index>(0, i - band_); k < i; ++k) acc -= l_(i, k) * x[k];
    x[i] = acc / l_(i, i).real();
  }
}

void NoiseWhitener::backward(Complex* x) const {
  const Eigen::Index n = l_.rows();
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    Complex acc = x[i];
    const Eigen::Index kend = std::min(n - 1, i + band_);
    for (Eigen::Index k = i + 1; k <= kend; ++k) acc -= std::conj(l_(k, i)) * x[k];
    x[i] = acc / l_(i, i).real();
  }
}

CMat NoiseWhitener::whiten(const CMat& x) const {
  if (x.rows() != l_.rows()) throw Error(ErrorCode::dimension_mismatch, "whiten: row mismatch");
  CMat y = x;
  for (Eigen::Index c = 0; c < y.cols(); ++c) forward(y.col(c).data());
  return y;
}

CVec NoiseWhitener::whiten(const CVec& x) const {
  if (x.size() != l_.rows()) throw Error(ErrorCode::dimension_mismatch, "whiten: size mismatch");
  CVec y = x;
  forward(y.data());
  return y;
}

CMat NoiseWhitener::solve(const CMat& x) const {
  if (x.rows() != l_.rows()) throw Error(ErrorCode::dimension_mismatch, "solve: row mismatch");
  CMat y = x;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    forward(y.col(c).data());
    backward(y.col(c).data());
  }
  return y;
}

CMat NoiseWhitener::inverse() const { return solve(CMat::Identity(l_.rows(), l_.cols())); }

GcrbTerms gcrb_terms(const CrbInputs& inputs, const NoiseWhitener& whitener) {
  check_inputs(inputs);
  const auto& m = inputs.model;
  const CMat a21 = whitener.whiten(m.G21);
  const CVec t = whitener.whiten(CVec(phase_derivative(inputs)));
  const CMat q21 = thin_q(a21);
  const CVec s = residual(q21, t);

  GcrbTerms terms;
  terms.signal_term = 2.0 * s.squaredNorm();
  if (m.one_way()) {
    terms.denominator = terms.signal_term;
  } else {
    const CMat a11 = whitener.whiten(m.G11);
    const CMat b = residual(q21, a11);
    const auto qb = full_rank_basis(b, max_column_norm(a11));
    if (!qb) {
      terms.degenerate = true;
    } else {
      terms.denominator = 2.0 * residual(*qb, s).squaredNorm();
    }
    terms.interference_term = terms.signal_term - terms.denominator;
  }
  if (!terms.degenerate && !(terms.denominator > kDenominatorTolerance * terms.signal_term)) {
    terms.degenerate = true;
  }
  if (terms.degenerate && !m.one_way() && m.num_blocks == 2) {
    throw Error(ErrorCode::degenerate_fim,
                "the genie-aided bound does not exist for two retained blocks");
  }
  terms.value = terms.degenerate ? kInf : 1.0 / terms.denominator;
  return terms;
}

double gcrb(const CrbInputs& inputs, const NoiseWhitener& whitener) {
  return gcrb_terms(inputs, whitener).value;
}

double gcrb(const CrbInputs& inputs) { return gcrb(inputs, NoiseWhitener(inputs.model.R)); }

CMat phi1_matrix(const CrbInputs& inputs) {
  check_inputs(inputs);
  const auto& m = inputs.model;
  const CMat rinv = NoiseWhitener(m.R).inverse();
  const CMat rg = rinv * m.G21;
  const CMat inner = m.G21.adjoint() * rg;
  return rinv - rg * inner.llt().solve(rg.adjoint());
}

double brute_force_crb(const CrbInputs& inputs) {
  check_inputs(inputs);
  // Real observation [Re r1; Im r1] has covariance realrep(R) / 2.
  const RMat cov = 0.5 * detail::real_representation(inputs.model.R);
  const RMat weight = cov.fullPivLu().inverse();
  return invert_first_entry(detail::real_fim(inputs, weight));
}

double acrb(double phi21, double phi11, double r21_energy, int num_blocks, double k) {
  if (num_blocks < 3) {
    throw Error(ErrorCode::invalid_argument, "acrb needs at least three blocks");
  }
  if (!(r21_energy > 0.0) || !(k > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "acrb needs positive energy and k");
  }
  const double m = num_blocks;
  const double margin = m * m - 1.0 - 3.0 * preamble::degradation(phi21 - phi11, num_blocks);
  if (!(margin > 1e-12 * (m * m - 1.0))) {
    throw Error(ErrorCode::invalid_regime,
                "self-interference degradation leaves no information about phi21");
  }
  return 6.0 / (k * m * margin * r21_energy);
}

double acrb_oneway(double r21_energy, int num_blocks, double k) {
  if (num_blocks < 2) {
    throw Error(ErrorCode::invalid_argument, "acrb_oneway needs at least two blocks");
  }
  if (!(r21_energy > 0.0) || !(k > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "acrb_oneway needs positive energy and k");
  }
  const double m = num_blocks;
  return 6.0 / (k * m * (m * m - 1.0) * r21_energy);
}

GammaEstimate estimate_gamma(const channel::SystemConfig& config, int num_samples,
                             std::uint64_t seed) {
  return estimate_gamma_impl(config, num_samples, seed, true);
}

GammaEstimate estimate_gamma_serial(const channel::SystemConfig& config, int num_samples,
                                    std::uint64_t seed) {
  return estimate_gamma_impl(config, num_samples, seed, false);
}

GammaEstimate gamma_from_channels(const channel::SystemConfig& config,
                                  const std::vector<channel::ChannelRealization>& channels) {
  config.validate();
  if (channels.empty()) {
    throw Error(ErrorCode::invalid_argument, "gamma_from_channels needs at least one channel");
  }
  const Eigen::Index n = config.observation_length();
  std::vector<GammaAccumulator> chunks(1);
  chunks[0].sum = CMat::Zero(n, n);
  for (const auto& ch : channels) accumulate_gamma(config, ch, chunks[0]);
  return finish_gamma(chunks, n, static_cast<int>(channels.size()));
}

double mcrb_numeric(const CrbInputs& inputs, const CMat& gamma) {
  check_inputs(inputs);
  if (gamma.rows() != inputs.model.R.rows() || gamma.cols() != inputs.model.R.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "gamma does not match the observation length");
  }
  return invert_first_entry(detail::real_fim(inputs, 2.0 * detail::real_representation(gamma)));
}

EmcbResult emcb(const channel::SystemConfig& config, const std::optional<preamble::BrpSpec>& brp1,
                const preamble::BrpSpec& brp2, int num_trials, std::uint64_t seed) {
  return emcb_impl(config, brp1, brp2, num_trials, seed, true);
}

EmcbResult emcb_serial(const channel::SystemConfig& config,
                       const std::optional<preamble::BrpSpec>& brp1,
                       const preamble::BrpSpec& brp2, int num_trials, std::uint64_t seed) {
  return emcb_impl(config, brp1, brp2, num_trials, seed, false);
}

EmcbResult emcb_from_channels(const channel::SystemConfig& config,
                              const std::optional<preamble::BrpSpec>& brp1,
                              const preamble::BrpSpec& brp2,
                              const std::vector<channel::ChannelRealization>& channels) {
  if (channels.empty()) {
    throw Error(ErrorCode::invalid_argument, "emcb needs at least one channel");
  }
  std::vector<double> values;
  values.reserve(channels.size());
  for (const auto& ch : channels) {
    values.push_back(gcrb(CrbInputs::from(channel::build_block_model(config, ch, brp1, brp2))));
  }
  return reduce_emcb(values);
}

CMat build_rcso(const preamble::BasisBlock& basis, double theta) {
  const Eigen::Index l = basis.length();
  const Complex twist = unit_phasor(-theta);
  CMat xi(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    for (Eigen::Index p = 0; p < l; ++p) {
      xi(i, p) = p <= i ? basis.samples[i - p] : basis.samples[l + i - p] * twist;
    }
  }
  return xi;
}

namespace detail {

RMat real_representation(const CMat& a) {
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  RMat out(2 * r, 2 * c);
  out.topLeftCorner(r, c) = a.real();
  out.topRightCorner(r, c) = -a.imag();
  out.bottomLeftCorner(r, c) = a.imag();
  out.bottomRightCorner(r, c) = a.real();
  return out;
}

RMat real_fim(const CrbInputs& inputs, const RMat& real_weight) {
  const RMat d = fim_jacobian(inputs);
  if (real_weight.rows() != d.rows() || real_weight.cols() != d.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "weight does not match the observation length");
  }
  return d.transpose() * real_weight * d;
}

double projected_bound(const CMat& nuisance, const CVec& t) {
  CMat q(t.size(), 0);
  if (nuisance.cols() > 0) {
    Eigen::ColPivHouseholderQR<CMat> qr(nuisance);
    qr.setThreshold(kRankTolerance);
    q = qr.householderQ() * CMat::Identity(nuisance.rows(), qr.rank());
  }
  const double energy = 2.0 * residual(q, t).squaredNorm();
  if (!(energy > kDenominatorTolerance * 2.0 * t.squaredNorm())) return kInf;
  return 1.0 / energy;
}

}  // namespace detail

}  // namespace brpsync::crb
