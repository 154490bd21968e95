#include <cmath>

#include <gtest/gtest.h>

#include "brpsync/estimation.hpp"
#include "brpsync/experiments.hpp"
#include "test_support.hpp"

using namespace brpsync;
using namespace brpsync::estimation;
using fixtures::rel_diff;

namespace {

// Received signal of a simulated trial, retained blocks only.
CVec received(const channel::SystemConfig& c, std::uint64_t seed,
              experiments::PreambleMode mode, bool noisy, channel::BlockModel* model,
              std::uint64_t noise_seed = 0) {
  const auto ch = channel::sample_channel(c, seed);
  const auto pre = experiments::make_preambles(c, mode);
  *model = channel::build_block_model(c, ch, pre.brp1, pre.brp2);
  const CVec x2 = preamble::assemble_brp(pre.brp2);
  const CVec x1 = pre.brp1 ? preamble::assemble_brp(*pre.brp1) : CVec(CVec::Zero(x2.size()));
  std::optional<std::uint64_t> n1;
  std::optional<std::uint64_t> n2;
  if (noisy) {
    n1 = derive_seed(seed, 2, noise_seed);
    n2 = derive_seed(seed, 3, noise_seed);
  }
  const CVec r1 = channel::simulate_phase2(c, ch, channel::simulate_phase1(c, ch, x1, x2, n1), n2);
  return channel::retained_samples(r1, c.block_length, c.num_blocks);
}

}  // namespace

TEST(Filter, AnnihilatesSelfInterferenceOnGrid) {
  for (int m = 2; m <= 8; ++m) {
    for (int l : {1, 2, 4, 16}) {
      for (double theta : {0.0, kPi / 2, kPi}) {
        const auto spec = build_preserving_filter(m, l, theta);
        EXPECT_EQ(spec.output_size(), (m - 1) * l);
        const CMat g11 = channel::block_rotation_matrix(theta, m, l);
        EXPECT_LT((spec.Q.adjoint() * g11).norm(), 1e-12);
        Eigen::ColPivHouseholderQR<CMat> qr(spec.Q);
        EXPECT_EQ(qr.rank(), (m - 1) * l);
      }
    }
  }
}

TEST(Filter, SmallestCase) {
  const auto spec = build_preserving_filter(2, 1, 0.0);
  CMat expected(1, 2);
  expected << 1.0, -1.0;
  EXPECT_LT((spec.Q.adjoint() - expected).norm(), 1e-15);
}

TEST(Filter, CrossTermBecomesSingleTone) {
  const int m = 5;
  const int l = 3;
  const double th1 = 0.4;
  const double phi21 = 2.1;
  const auto spec = build_preserving_filter(m, l, th1);
  const CMat g21 = channel::block_rotation_matrix(phi21, m, l);
  const CMat filtered = spec.Q.adjoint() * g21;
  const Complex rho11 = std::polar(1.0, th1);
  const Complex rho21 = std::polar(1.0, phi21);
  for (int b = 0; b < m - 1; ++b) {
    const Complex expected = std::pow(rho21, b + 1) * (rho11 - rho21);
    EXPECT_LT((filtered.block(b * l, 0, l, l) - expected * CMat::Identity(l, l)).norm(), 1e-12);
  }
}

TEST(Filter, StructuredAndExplicitAgree) {
  Rng rng(4);
  for (int m : {2, 3, 5}) {
    const int l = 4;
    const double th = rng.uniform(-kPi, kPi);
    const CVec r = complex_normal_vector(rng, m * l);
    const auto spec = build_preserving_filter(m, l, th);
    EXPECT_LT((apply_filter(spec, r) - apply_blockwise_filter(r, m, l, th)).norm(), 1e-13);
    const CMat big = fixtures::random_model(m, l, 3).R;
    EXPECT_LT((filtered_covariance(big, m, l, th) - spec.Q.adjoint() * big * spec.Q).norm(),
              1e-11);
  }
  EXPECT_THROW(apply_filter(build_preserving_filter(3, 2, 0.0), CVec::Zero(5)), Error);
}

TEST(Filter, LinearAndCancelsNoiselessSelfTerm) {
  Rng rng(5);
  const auto model = fixtures::random_model(4, 3, 6);
  const auto spec = build_preserving_filter(4, 3, model.phi11);
  EXPECT_LT(apply_filter(spec, model.G11 * model.r11).norm(), 1e-12);
  EXPECT_GT(apply_filter(spec, model.G21 * model.r21).norm(), 1e-3);
  const CVec a = complex_normal_vector(rng, 12);
  const CVec b = complex_normal_vector(rng, 12);
  const Complex s(0.3, -1.2);
  const Complex t(2.0, 0.5);
  EXPECT_LT((apply_filter(spec, s * a + t * b) -
             (s * apply_filter(spec, a) + t * apply_filter(spec, b))).norm(),
            1e-12);
}

TEST(Filter, PreservesGcrbOnRandomInstances) {
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 3 + rep % 3;
    const int l = 1 << (rep % 3);
    const auto in = crb::CrbInputs::from(fixtures::random_model(m, l, derive_seed(60, rep)));
    const auto res = filtered_gcrb_check(in, build_preserving_filter(m, l, in.model.phi11));
    EXPECT_LT(rel_diff(res.gcrb_r, res.gcrb_z), 1e-8) << rep;
  }
}

TEST(Filter, TruncatedFilterLosesInformation) {
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 4;
    const int l = 2;
    const auto in = crb::CrbInputs::from(fixtures::random_model(m, l, derive_seed(61, rep)));
    auto spec = build_preserving_filter(m, l, in.model.phi11);
    spec.Q = spec.Q.leftCols(spec.Q.cols() - 1 - rep % l).eval();
    const auto res = filtered_gcrb_check(in, spec);
    EXPECT_GT(res.gcrb_z, res.gcrb_r * (1 + 1e-6));
  }
}

TEST(Filter, OneWayBypass) {
  const auto in = crb::CrbInputs::from(fixtures::random_model(4, 2, 62, true));
  const auto res = filtered_gcrb_check(in, build_preserving_filter(4, 2, 0.0));
  EXPECT_EQ(res.gcrb_r, crb::gcrb(in));
  EXPECT_EQ(res.gcrb_z, res.gcrb_r);
}

TEST(Correlator, RecoversNoiselessTone) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 3 + rep % 5;
    const int l = 1 + rep % 4;
    const double phi = rng.uniform(-kPi, kPi);
    const CVec c = complex_normal_vector(rng, l);
    CVec z((m - 1) * l);
    for (int b = 0; b < m - 1; ++b) z.segment(b * l, l) = std::polar(1.0, b * phi) * c;
    const auto est = correlator_estimate(z, m, l);
    EXPECT_NEAR(wrap_angle(est.phi_hat - phi), 0.0, 1e-12);
    EXPECT_NEAR(correlator_estimate(CVec(z.conjugate()), m, l).phi_hat, wrap_angle(-phi), 1e-12);
    EXPECT_GE(est.phi_hat, -kPi);
    EXPECT_LT(est.phi_hat, kPi);
  }
}

TEST(Correlator, ErrorsOnDegenerateInput) {
  try {
    correlator_estimate(CVec::Zero(8), 5, 2);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::undefined_angle);
  }
  EXPECT_THROW(correlator_estimate(CVec::Ones(7), 5, 2), Error);
  EXPECT_THROW(correlator_estimate(CVec::Ones(2), 2, 2), Error);
}

TEST(Correlator, EndToEndNoiseless) {
  channel::SystemConfig c;
  for (int rep = 0; rep < 10; ++rep) {
    channel::BlockModel model;
    const CVec y = received(c, derive_seed(70, rep), experiments::PreambleMode::optimized_brp,
                            false, &model);
    const CVec z = apply_blockwise_filter(y, 5, 16, model.phi11);
    EXPECT_NEAR(wrap_angle(correlator_estimate(z, 5, 16).phi_hat - model.phi21), 0.0, 1e-10);
  }
}

namespace {

double correlator_mse(double snr_db, std::uint64_t channel_seed, int trials) {
  channel::SystemConfig c;
  c.snr_db = snr_db;
  const auto ch = channel::sample_channel(c, channel_seed);
  const auto pre = experiments::make_preambles(c, experiments::PreambleMode::optimized_brp);
  const auto model = channel::build_block_model(c, ch, pre.brp1, pre.brp2);
  const CVec x1 = preamble::assemble_brp(*pre.brp1);
  const CVec x2 = preamble::assemble_brp(pre.brp2);
  double se = 0.0;
  for (int t = 0; t < trials; ++t) {
    const CVec r0 = channel::simulate_phase1(c, ch, x1, x2, derive_seed(channel_seed, t, 2));
    const CVec y = channel::retained_samples(
        channel::simulate_phase2(c, ch, r0, derive_seed(channel_seed, t, 3)), 16, 5);
    const CVec z = apply_blockwise_filter(y, 5, 16, model.phi11);
    const double e = wrap_angle(correlator_estimate(z, 5, 16).phi_hat - model.phi21);
    se += e * e;
  }
  return se / trials;
}

}  // namespace

TEST(Correlator, ConsistentAtHighSnr) {
  EXPECT_LT(correlator_mse(40.0, derive_seed(71, 0), 400), 1e-6);
  // MSE falls as 1/SNR on every fixed channel.
  for (int ch = 0; ch < 4; ++ch) {
    const double hi = correlator_mse(40.0, derive_seed(71, ch), 400);
    const double top = correlator_mse(60.0, derive_seed(71, ch), 400);
    EXPECT_NEAR(hi / top, 100.0, 20.0) << ch;
  }
}

TEST(GaMle, NoiselessRecoveryInBothDomains) {
  channel::SystemConfig c;
  for (int rep = 0; rep < 5; ++rep) {
    channel::BlockModel model;
    const CVec y = received(c, derive_seed(72, rep), experiments::PreambleMode::optimized_brp,
                            false, &model);
    for (auto domain : {MleDomain::filtered, MleDomain::received}) {
      GaMleOptions opt;
      opt.domain = domain;
      const auto est = gamle_estimate(y, GaMleKnowledge::from(model), opt);
      EXPECT_NEAR(wrap_angle(est.phi_hat - model.phi21), 0.0, 1e-7);
      EXPECT_EQ(est.method, EstimatorKind::ga_mle);
    }
  }
}

TEST(GaMle, OneWayNoiselessRecovery) {
  channel::SystemConfig c;
  channel::BlockModel model;
  const CVec y = received(c, 73, experiments::PreambleMode::one_way, false, &model);
  const auto est = gamle_estimate(y, GaMleKnowledge::from(model));
  EXPECT_NEAR(wrap_angle(est.phi_hat - model.phi21), 0.0, 1e-7);
}

TEST(GaMle, FilteredAndReceivedDomainsAgree) {
  channel::SystemConfig c;
  c.snr_db = 15.0;
  for (int rep = 0; rep < 20; ++rep) {
    channel::BlockModel model;
    const CVec y = received(c, derive_seed(74, rep), experiments::PreambleMode::optimized_brp,
                            true, &model);
    const auto k = GaMleKnowledge::from(model);
    GaMleOptions f;
    GaMleOptions r;
    r.domain = MleDomain::received;
    EXPECT_NEAR(wrap_angle(gamle_estimate(y, k, f).phi_hat - gamle_estimate(y, k, r).phi_hat), 0.0,
                1e-6);
  }
}

TEST(GaMle, CoarseGridFindsSameMaximum) {
  channel::SystemConfig c;
  c.snr_db = 10.0;
  for (int rep = 0; rep < 30; ++rep) {
    channel::BlockModel model;
    const CVec y = received(c, derive_seed(75, rep), experiments::PreambleMode::optimized_brp,
                            true, &model);
    const auto k = GaMleKnowledge::from(model);
    GaMleOptions coarse;
    coarse.grid_points = 256;
    EXPECT_NEAR(wrap_angle(gamle_estimate(y, k).phi_hat - gamle_estimate(y, k, coarse).phi_hat),
                0.0, 1e-6);
  }
}

TEST(GaMle, ConcentratedLikelihoodPeaksAtEstimate) {
  channel::SystemConfig c;
  channel::BlockModel model;
  const CVec y = received(c, 76, experiments::PreambleMode::optimized_brp, true, &model);
  const auto k = GaMleKnowledge::from(model);
  const ConcentratedLikelihood lik(y, k, MleDomain::filtered);
  const auto est = gamle_estimate(y, k);
  for (int i = 0; i < 500; ++i) {
    EXPECT_LE(lik(-kPi + kTwoPi * i / 500.0), est.diagnostic * (1 + 1e-12));
  }
}

TEST(GlsResidual, MeanMatchesDegreesOfFreedom) {
  // At the true phase the weighted residual is chi-square with N - 2L complex
  // degrees of freedom.
  channel::SystemConfig c;
  c.snr_db = 10.0;
  double acc = 0.0;
  const int trials = 400;
  for (int rep = 0; rep < trials; ++rep) {
    channel::BlockModel model;
    const CVec y = received(c, derive_seed(77, rep), experiments::PreambleMode::optimized_brp,
                            true, &model);
    acc += gls_residual_energy(y, model, model.phi21);
  }
  const double expected = 80 - 32;
  // Standard error of the mean is sqrt(48 / 400) ~ 0.35.
  EXPECT_NEAR(acc / trials, expected, 1.5);
}
