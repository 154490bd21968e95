#include "brpsync/estimation.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace brpsync::estimation {
namespace {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

CMat block(const CMat& a, int r, int c, int l) { return a.block(r * l, c * l, l, l); }

// v^H A^{-1} v for Hermitian positive definite A, via an in-place factor
// A = U^H U of the upper triangle of `a` and forward substitution into `v`.
// Both inputs are overwritten.
double quadratic_inverse_inplace(CMat& a, CVec& v) {
  const Eigen::Index n = a.rows();
  Complex* u = a.data();
  for (Eigen::Index j = 0; j < n; ++j) {
    Complex* cj = u + j * n;
    double d = cj[j].real();
    for (Eigen::Index k = 0; k < j; ++k) d -= std::norm(cj[k]);
    if (!(d > 0.0)) return kMinusInf;
    const double ujj = std::sqrt(d);
    cj[j] = ujj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Complex* ci = u + i * n;
      Complex acc = ci[j];
      for (Eigen::Index k = 0; k < j; ++k) acc -= std::conj(cj[k]) * ci[k];
      ci[j] = acc / ujj;
    }
  }
  double energy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex* ci = u + i * n;
    Complex acc = v[i];
    for (Eigen::Index k = 0; k < i; ++k) acc -= std::conj(ci[k]) * v[k];
    v[i] = acc / ci[i].real();
    energy += std::norm(v[i]);
  }
  return energy;
}

double quadratic_inverse(CMat a, CVec v) { return quadratic_inverse_inplace(a, v); }

}  // namespace

std::string_view to_string(EstimatorKind kind) {
  return kind == EstimatorKind::correlator ? "correlator" : "ga-mle";
}

std::string_view to_string(MleDomain domain) {
  return domain == MleDomain::filtered ? "filtered" : "received";
}

FilterSpec build_preserving_filter(int num_blocks, int block_length, double theta1) {
  if (num_blocks < 2 || block_length < 1) {
    throw Error(ErrorCode::invalid_argument, "filter needs M >= 2 and L >= 1");
  }
  const Eigen::Index l = block_length;
  const Complex rho = unit_phasor(theta1);
  FilterSpec spec;
  spec.block_length = block_length;
  spec.Q = CMat::Zero(l * num_blocks, l * (num_blocks - 1));
  for (int m = 0; m + 1 < num_blocks; ++m) {
    spec.Q.block(m * l, m * l, l, l).diagonal().setConstant(std::conj(rho));
    spec.Q.block((m + 1) * l, m * l, l, l).diagonal().setConstant(-1.0);
  }
  return spec;
}

CVec apply_filter(const FilterSpec& spec, const CVec& r1) {
  if (r1.size() != spec.Q.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "filter input length does not match Q");
  }
  return spec.Q.adjoint() * r1;
}

CVec apply_blockwise_filter(const CVec& r1, int num_blocks, int block_length, double theta1) {
  const Eigen::Index l = block_length;
  if (num_blocks < 2 || r1.size() != l * num_blocks) {
    throw Error(ErrorCode::dimension_mismatch, "filter input length must be M*L with M >= 2");
  }
  const Complex rho = unit_phasor(theta1);
  CVec z(l * (num_blocks - 1));
  for (int m = 0; m + 1 < num_blocks; ++m) {
    z.segment(m * l, l) = rho * r1.segment(m * l, l) - r1.segment((m + 1) * l, l);
  }
  return z;
}

CMat filtered_covariance(const CMat& R, int num_blocks, int block_length, double theta1) {
  const int l = block_length;
  if (num_blocks < 2 || R.rows() != static_cast<Eigen::Index>(l) * num_blocks ||
      R.cols() != R.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "covariance does not match M*L");
  }
  const Complex rho = unit_phasor(theta1);
  const int b = num_blocks - 1;
  CMat c(static_cast<Eigen::Index>(l) * b, static_cast<Eigen::Index>(l) * b);
  // z_a = rho r_a - r_{a+1}
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      c.block(i * l, j * l, l, l) = block(R, i, j, l) + block(R, i + 1, j + 1, l) -
                                    rho * block(R, i, j + 1, l) -
                                    std::conj(rho) * block(R, i + 1, j, l);
    }
  }
  return c;
}

FilteredGcrb filtered_gcrb_check(const crb::CrbInputs& inputs, const FilterSpec& spec) {
  FilteredGcrb out;
  out.gcrb_r = crb::gcrb(inputs);
  const auto& m = inputs.model;
  if (m.one_way()) {
    out.gcrb_z = out.gcrb_r;
    return out;
  }
  if (spec.Q.rows() != m.R.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "filter does not match the observation length");
  }
  const CMat c = spec.Q.adjoint() * m.R * spec.Q;
  std::optional<crb::NoiseWhitener> whitener;
  try {
    whitener.emplace(c);
  } catch (const Error&) {
    throw Error(ErrorCode::degenerate_fim, "filtered noise covariance Q^H R Q is singular");
  }
  CMat nuisance(spec.Q.cols(), m.G21.cols() + m.G11.cols());
  nuisance << spec.Q.adjoint() * m.G21, spec.Q.adjoint() * m.G11;
  const CVec t = spec.Q.adjoint() * inputs.block_weights.cast<Complex>().cwiseProduct(m.G21 * m.r21);
  out.gcrb_z = crb::detail::projected_bound(whitener->whiten(nuisance), whitener->whiten(t));
  return out;
}

double block_correlation_phase(const CVec& z, int block_length, double* magnitude) {
  const Eigen::Index l = block_length;
  if (l < 1 || z.size() % l != 0 || z.size() / l < 2) {
    throw Error(ErrorCode::dimension_mismatch, "correlator needs at least two whole blocks");
  }
  const Eigen::Index blocks = z.size() / l;
  Complex acc(0.0, 0.0);
  for (Eigen::Index m = 0; m + 1 < blocks; ++m) {
    acc += z.segment(m * l, l).dot(z.segment((m + 1) * l, l));
  }
  const double mag = std::abs(acc);
  if (!(mag > 0.0) || !std::isfinite(mag)) {
    throw Error(ErrorCode::undefined_angle, "block correlation vanished; angle undefined");
  }
  if (magnitude) *magnitude = mag;
  return wrap_angle(std::arg(acc));
}

EstimateResult correlator_estimate(const CVec& z1, int num_blocks, int block_length) {
  if (num_blocks < 3) {
    throw Error(ErrorCode::invalid_argument, "correlator needs M >= 3");
  }
  if (z1.size() != static_cast<Eigen::Index>(num_blocks - 1) * block_length) {
    throw Error(ErrorCode::dimension_mismatch, "correlator input must hold (M-1)*L samples");
  }
  EstimateResult res;
  res.method = EstimatorKind::correlator;
  res.phi_hat = block_correlation_phase(z1, block_length, &res.diagnostic);
  return res;
}

GaMleKnowledge GaMleKnowledge::from(const channel::BlockModel& model) {
  GaMleKnowledge k;
  k.R = model.R;
  k.phi11 = model.phi11;
  k.num_blocks = model.num_blocks;
  k.block_length = model.block_length;
  k.one_way = model.one_way();
  return k;
}

ConcentratedLikelihood::ConcentratedLikelihood(const CVec& r1, const GaMleKnowledge& knowledge,
                                               MleDomain domain)
    : domain_(domain),
      block_length_(knowledge.block_length),
      phi11_(knowledge.phi11),
      num_blocks_(knowledge.num_blocks) {
  const int l = knowledge.block_length;
  const Eigen::Index n = static_cast<Eigen::Index>(l) * knowledge.num_blocks;
  if (knowledge.num_blocks < 2 || r1.size() != n || knowledge.R.rows() != n ||
      knowledge.R.cols() != n) {
    throw Error(ErrorCode::dimension_mismatch, "GA-MLE input does not match R or M*L");
  }
  if (domain == MleDomain::received) {
    rinv_ = crb::NoiseWhitener(knowledge.R).inverse();
    rinv_r_ = rinv_ * r1;
    if (!knowledge.one_way) {
      g11_ = channel::block_rotation_matrix(knowledge.phi11, knowledge.num_blocks, l);
    }
    return;
  }

  CVec z;
  CMat c;
  if (knowledge.one_way) {
    z = r1;
    c = knowledge.R;
    blocks_ = knowledge.num_blocks;
  } else {
    z = apply_blockwise_filter(r1, knowledge.num_blocks, l, knowledge.phi11);
    c = filtered_covariance(knowledge.R, knowledge.num_blocks, l, knowledge.phi11);
    blocks_ = knowledge.num_blocks - 1;
  }
  const CMat ci = crb::NoiseWhitener(c).inverse();
  weighted_ = ci * z;
  lag_sums_.assign(blocks_, CMat::Zero(l, l));
  for (int a = 0; a < blocks_; ++a) {
    for (int b = a; b < blocks_; ++b) lag_sums_[b - a] += block(ci, a, b, l);
  }
  lag_adjoints_.clear();
  for (const auto& s : lag_sums_) lag_adjoints_.push_back(s.adjoint());
  work_.resize(l, l);
  rhs_.resize(l);
}

double ConcentratedLikelihood::operator()(double phi) const {
  return domain_ == MleDomain::filtered ? filtered(phi) : received(phi);
}

double ConcentratedLikelihood::filtered(double phi) const {
  const Eigen::Index l = block_length_;
  work_ = lag_sums_[0];
  for (int d = 1; d < blocks_; ++d) {
    const Complex p = unit_phasor(d * phi);
    work_.noalias() += p * lag_sums_[d] + std::conj(p) * lag_adjoints_[d];
  }
  rhs_.setZero();
  for (int m = 0; m < blocks_; ++m) rhs_ += unit_phasor(-m * phi) * weighted_.segment(m * l, l);
  return quadratic_inverse_inplace(work_, rhs_);
}

double ConcentratedLikelihood::received(double phi) const {
  const CMat g21 = channel::block_rotation_matrix(phi, num_blocks_, block_length_);
  CMat e(g21.rows(), g21.cols() + g11_.cols());
  e << g21, g11_;
  const CMat a = e.adjoint() * rinv_ * e;
  const CVec v = e.adjoint() * rinv_r_;
  return quadratic_inverse(a, v);
}

EstimateResult gamle_estimate(const CVec& r1, const GaMleKnowledge& knowledge,
                              const GaMleOptions& options) {
  if (options.grid_points < 8) {
    throw Error(ErrorCode::invalid_argument, "GA-MLE grid needs at least 8 points");
  }
  if (!(options.tolerance > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "GA-MLE tolerance must be positive");
  }
  const ConcentratedLikelihood objective(r1, knowledge, options.domain);
  const double step = kTwoPi / options.grid_points;
  double best_phi = -kPi;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < options.grid_points; ++i) {
    const double phi = -kPi + step * i;
    const double value = objective(phi);
    if (value > best) {
      best = value;
      best_phi = phi;
    }
  }

  // Golden-section refinement inside the neighbouring grid cells.
  const double inv_golden = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = best_phi - step;
  double hi = best_phi + step;
  double x1 = hi - inv_golden * (hi - lo);
  double x2 = lo + inv_golden * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > options.tolerance) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_golden * (hi - lo);
      f2 = objective(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_golden * (hi - lo);
      f1 = objective(x1);
    }
  }
  const double refined = 0.5 * (lo + hi);
  const double refined_value = objective(refined);

  EstimateResult res;
  res.method = EstimatorKind::ga_mle;
  if (refined_value >= best) {
    res.phi_hat = wrap_angle(refined);
    res.diagnostic = refined_value;
  } else {
    res.phi_hat = wrap_angle(best_phi);
    res.diagnostic = best;
  }
  return res;
}

double gls_residual_energy(const CVec& r1, const channel::BlockModel& model, double phi21) {
  if (r1.size() != model.R.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "received vector does not match the model");
  }
  const crb::NoiseWhitener w(model.R);
  const CMat g21 = channel::block_rotation_matrix(phi21, model.num_blocks, model.block_length);
  CMat e(g21.rows(), g21.cols() + model.G11.cols());
  e << g21, model.G11;
  const CMat we = w.whiten(e);
  const CVec wr = w.whiten(r1);
  Eigen::ColPivHouseholderQR<CMat> qr(we);
  const CMat q = qr.householderQ() * CMat::Identity(we.rows(), qr.rank());
  return (wr - q * (q.adjoint() * wr)).squaredNorm();
}

}  // namespace brpsync::estimation
