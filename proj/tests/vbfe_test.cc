#include "fovb/vbfe.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fovb/ops.h"
#include "test_util.h"

namespace fovb {
namespace {

DiagonalGaussian Gauss(std::vector<double> mean, std::vector<double> log_var) {
  const std::size_t n = mean.size();
  return {Tensor::FromVector({n}, std::move(mean)),
          Tensor::FromVector({n}, std::move(log_var))};
}

double Pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) /
         std::sqrt(2.0 * std::numbers::pi * var);
}

// Trapezoid rule on a fine grid; independent of the library quadrature.
template <typename F>
double Integrate(F f, double lo, double hi, std::size_t n = 200000) {
  const double h = (hi - lo) / static_cast<double>(n);
  double total = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i < n; ++i) total += f(lo + h * static_cast<double>(i));
  return total * h;
}

double LogPdf(double x, double mean, double var) {
  return -0.5 * (x - mean) * (x - mean) / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

double KlOracle(double mq, double vq, double mp, double vp) {
  return Integrate(
      [&](double x) {
        const double q = Pdf(x, mq, vq);
        return q > 0.0 ? q * (LogPdf(x, mq, vq) - LogPdf(x, mp, vp)) : 0.0;
      },
      -30.0, 30.0);
}

double JsOracle(double mp, double vp, double mq, double vq) {
  return Integrate(
      [&](double x) {
        const double p = Pdf(x, mp, vp), q = Pdf(x, mq, vq), m = 0.5 * (p + q);
        double v = 0.0;
        if (p > 0.0) v += 0.5 * p * std::log(p / m);
        if (q > 0.0) v += 0.5 * q * std::log(q / m);
        return v;
      },
      -30.0, 30.0);
}

TEST(KlTest, IdenticalIsZero) {
  const DiagonalGaussian g = Gauss({0.3, -1.0, 2.0}, {0.1, -0.4, 1.2});
  EXPECT_NEAR(KlGaussian(g, g).item(), 0.0, 1e-15);
}

TEST(KlTest, UnitShiftIsHalf) {
  EXPECT_NEAR(KlGaussian(Gauss({1.0}, {0.0}), Gauss({0.0}, {0.0})).item(), 0.5, 1e-15);
  EXPECT_NEAR(KlOracle(1.0, 1.0, 0.0, 1.0), 0.5, 1e-9);
}

TEST(KlTest, WideAgainstUnit) {
  const double kl = KlGaussian(Gauss({0.0}, {std::log(4.0)}), Gauss({0.0}, {0.0})).item();
  EXPECT_NEAR(kl, 1.5 - std::log(2.0), 1e-12);
  EXPECT_NEAR(kl, 0.8069, 1e-4);
  EXPECT_NEAR(kl, KlOracle(0.0, 4.0, 0.0, 1.0), 1e-8);
}

TEST(KlTest, MatchesQuadratureAndIsNonNegative) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double mq = rng.Uniform(-2, 2), lq = rng.Uniform(-1.5, 1.5);
    const double mp = rng.Uniform(-2, 2), lp = rng.Uniform(-1.5, 1.5);
    const double kl = KlGaussian(Gauss({mq}, {lq}), Gauss({mp}, {lp})).item();
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, KlOracle(mq, std::exp(lq), mp, std::exp(lp)), 1e-7);
  }
}

TEST(KlTest, SumsOverLastAxisPerRow) {
  const DiagonalGaussian q{Tensor::FromVector({2, 2}, {1, 0, 0, 2}), Tensor::Zeros({2, 2})};
  const DiagonalGaussian p{Tensor::Zeros({2, 2}), Tensor::Zeros({2, 2})};
  const Tensor kl = KlGaussian(q, p);
  ASSERT_EQ(kl.shape(), (Shape{2}));
  EXPECT_NEAR(kl.data()[0], 0.5, 1e-15);
  EXPECT_NEAR(kl.data()[1], 2.0, 1e-15);
}

TEST(KlTest, ShapeMismatchThrows) {
  EXPECT_THROW(KlGaussian(Gauss({0, 0}, {0, 0}), Gauss({0}, {0})), DimensionError);
}

TEST(ReparamTest, TinyVarianceReturnsMean) {
  Rng rng(1);
  const DiagonalGaussian g = Gauss({0.5, -2.0}, {-20.0, -20.0});
  const Tensor z = SampleReparam(g, rng);
  EXPECT_NEAR(z.data()[0], 0.5, 1e-3);
  EXPECT_NEAR(z.data()[1], -2.0, 1e-3);
}

TEST(ReparamTest, SampleMomentsMatch) {
  Rng rng(2);
  const std::size_t n = 100000;
  const DiagonalGaussian g{Tensor::Full({n}, 1.0), Tensor::Full({n}, std::log(0.25))};
  const Tensor z = SampleReparam(g, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : z.data()) mean += v;
  mean /= n;
  for (double v : z.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(sq / (n - 1), 0.25, 0.01);
}

TEST(ReparamTest, GradientFlowsToMeanAndLogVar) {
  Tensor mean = Tensor::FromVector({3}, {0.1, 0.2, 0.3}, true);
  Tensor log_var = Tensor::FromVector({3}, {0.0, -1.0, 1.0}, true);
  const Tensor noise = Tensor::FromVector({3}, {1.0, -0.5, 2.0});
  Backward(Sum(SampleReparam({mean, log_var}, noise)));
  for (double g : mean.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(log_var.grad()[i], 0.5 * std::exp(0.5 * log_var.data()[i]) * noise.data()[i], 1e-15);
  }
}

TEST(LogDensityTest, MatchesClosedForm) {
  const DiagonalGaussian g = Gauss({0.5, -1.0}, {0.2, -0.3});
  const Tensor x = Tensor::FromVector({2}, {1.0, 0.0});
  const double expected = std::log(Pdf(1.0, 0.5, std::exp(0.2))) +
                          std::log(Pdf(0.0, -1.0, std::exp(-0.3)));
  EXPECT_NEAR(GaussianLogDensity(x, g).item(), expected, 1e-12);
}

TEST(JsTest, SelfDivergenceIsZero) {
  Rng rng(3);
  const DiagonalGaussian g = Gauss({0.4}, {0.3});
  const JsEstimate js = JsDivergenceMc(GaussianMixture::Single(g),
                                       GaussianMixture::Single(g), 1000, rng);
  EXPECT_NEAR(js.value.item(), 0.0, 3.0 * js.std_error + 1e-12);
}

TEST(JsTest, FarApartApproachesLogTwo) {
  Rng rng(4);
  const JsEstimate js = JsDivergenceMc(GaussianMixture::Single(Gauss({0.0}, {0.0})),
                                       GaussianMixture::Single(Gauss({100.0}, {0.0})),
                                       100000, rng);
  EXPECT_NEAR(js.value.item(), std::log(2.0), 1e-3);
}

TEST(JsTest, MatchesQuadratureWithinStandardErrors) {
  Rng rng(6);
  struct Case { double mp, lp, mq, lq; };
  for (const Case c : {Case{0, 0, 1, 0}, Case{0, 0.5, -0.5, -0.5}, Case{2, -1, 0, 1}}) {
    const JsEstimate js = JsDivergenceMc(GaussianMixture::Single(Gauss({c.mp}, {c.lp})),
                                         GaussianMixture::Single(Gauss({c.mq}, {c.lq})),
                                         100000, rng);
    const double oracle = JsOracle(c.mp, std::exp(c.lp), c.mq, std::exp(c.lq));
    EXPECT_GT(js.std_error, 0.0);
    EXPECT_LT(std::abs(js.value.item() - oracle), 3.0 * js.std_error + 1e-9)
        << "oracle " << oracle << " estimate " << js.value.item();
  }
}

TEST(JsTest, MixtureMatchesQuadrature) {
  Rng rng(7);
  GaussianMixture p{{Gauss({-1.0}, {-0.5}), Gauss({1.5}, {0.0})}, {0.3, 0.7}};
  GaussianMixture q = GaussianMixture::Single(Gauss({0.2}, {0.4}));
  const JsEstimate js = JsDivergenceMc(p, q, 100000, rng);
  // Each component is compared with the mixture M = (P + Q) / 2 separately.
  const auto m = [](double x) {
    return 0.5 * (0.3 * Pdf(x, -1.0, std::exp(-0.5)) + 0.7 * Pdf(x, 1.5, 1.0) +
                  Pdf(x, 0.2, std::exp(0.4)));
  };
  const auto kl_to_m = [&](double mean, double var) {
    return Integrate(
        [&](double x) {
          const double g = Pdf(x, mean, var);
          return g > 0.0 ? g * std::log(g / m(x)) : 0.0;
        },
        -30.0, 30.0);
  };
  const double oracle = 0.5 * (0.3 * kl_to_m(-1.0, std::exp(-0.5)) +
                               0.7 * kl_to_m(1.5, 1.0)) +
                        0.5 * kl_to_m(0.2, std::exp(0.4));
  EXPECT_LT(std::abs(js.value.item() - oracle), 3.0 * js.std_error + 1e-9);
}

TEST(JsTest, BoundedByLogTwo) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const DiagonalGaussian a = Gauss({rng.Uniform(-5, 5)}, {rng.Uniform(-2, 2)});
    const DiagonalGaussian b = Gauss({rng.Uniform(-5, 5)}, {rng.Uniform(-2, 2)});
    const JsEstimate js = JsDivergenceMc(GaussianMixture::Single(a),
                                         GaussianMixture::Single(b), 2000, rng);
    EXPECT_LE(js.value.item(), std::log(2.0) + 3.0 * js.std_error + 1e-12);
    EXPECT_GE(js.value.item(), -3.0 * js.std_error - 1e-12);
  }
}

TEST(JsTest, MirroredNoiseIsSymmetric) {
  Rng rng(9);
  const GaussianMixture p = GaussianMixture::Single(Gauss({0.3, -0.2}, {0.1, 0.5}));
  const GaussianMixture q = GaussianMixture::Single(Gauss({-0.7, 0.4}, {-0.3, 0.0}));
  const std::vector<Tensor> np{rng.NormalTensor({500, 2})};
  const std::vector<Tensor> nq{rng.NormalTensor({500, 2})};
  EXPECT_NEAR(JsDivergenceMcWithNoise(p, q, np, nq).value.item(),
              JsDivergenceMcWithNoise(q, p, nq, np).value.item(), 1e-12);
}

TEST(MixtureTest, ValidateRejectsBadWeights) {
  const DiagonalGaussian g = Gauss({0.0}, {0.0});
  EXPECT_NO_THROW((GaussianMixture{{g, g}, {0.25, 0.75}}.Validate()));
  EXPECT_THROW((GaussianMixture{{g, g}, {0.5, 0.6}}.Validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{g, g}, {1.5, -0.5}}.Validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{g}, {0.5, 0.5}}.Validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{}, {}}.Validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{g, Gauss({0, 0}, {0, 0})}, {0.5, 0.5}}.Validate()),
               DimensionError);
}

struct VbfeFixture {
  static constexpr std::size_t kDim = 8;
  ParameterStore store;
  Rng rng{11};
  Vbfe vbfe;
  Tensor x_a, x_v;
  LabelSet labels{{0, 1, 1}, {0, 1, 0}, {0, 0, 1}};

  VbfeFixture() : vbfe(store, "v", kDim, 2, 1, rng) {
    x_a = rng.NormalTensor({3, 5, kDim});
    x_v = rng.NormalTensor({3, 4, kDim});
  }
  void Randomize(double stddev) {
    for (const auto& e : store.entries()) {
      Tensor t = e.value;
      for (double& v : t.mutable_data()) v = rng.Normal(0.0, stddev);
    }
  }
  void Set(const std::string& name, double value) {
    Tensor t = store.Find(name)->value;
    for (double& v : t.mutable_data()) v = value;
  }
};

TEST(VbfeTest, RegistersSixEncodersAndHeads) {
  VbfeFixture f;
  for (const char* enc : {"prior_s_a", "prior_s_v", "prior_c", "posterior_s_a",
                          "posterior_s_v", "posterior_c"}) {
    EXPECT_NE(f.store.Find(std::string("v.") + enc + ".var_token"), nullptr) << enc;
  }
  EXPECT_NE(f.store.Find("v.posterior_c.label_table"), nullptr);
  EXPECT_EQ(f.store.Find("v.prior_c.label_table"), nullptr);
  for (const auto& e : f.store.entries()) EXPECT_TRUE(e.trainable) << e.name;
}

TEST(VbfeTest, ZeroHeadsGiveStandardNormals) {
  VbfeFixture f;
  const FactorizedLatents z = PriorLatents(f.x_a, f.x_v, f.vbfe);
  for (const DiagonalGaussian* g : {&z.c_dist, &z.s_a_dist, &z.s_v_dist}) {
    ASSERT_EQ(g->mean.shape(), (Shape{3, VbfeFixture::kDim}));
    for (double v : g->mean.data()) EXPECT_EQ(v, 0.0);
    for (double v : g->log_var.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(VbfeTest, LabelContractIsEnforced) {
  VbfeFixture f;
  const std::vector<int> y{0, 1, 1};
  EXPECT_THROW(f.vbfe.prior_c().Encode(f.x_a, &y), ContractError);
  EXPECT_THROW(f.vbfe.posterior_c().Encode(f.x_a, nullptr), ContractError);
  const std::vector<int> short_y{0};
  EXPECT_THROW(EncodePosteriorS(f.x_a, short_y, f.vbfe.posterior_s_a()), DimensionError);
  const std::vector<int> bad_y{0, 2, 1};
  EXPECT_THROW(EncodePosteriorS(f.x_a, bad_y, f.vbfe.posterior_s_a()), std::invalid_argument);
}

TEST(VbfeTest, PosteriorDependsOnLabels) {
  VbfeFixture f;
  f.Randomize(0.3);
  const FactorizedLatents a = PosteriorLatents(f.x_a, f.x_v, f.labels, f.vbfe);
  LabelSet flipped = f.labels;
  for (int& y : flipped.y_a) y = 1 - y;
  const FactorizedLatents b = PosteriorLatents(f.x_a, f.x_v, flipped, f.vbfe);
  EXPECT_GT(testing::MaxAbsDiff(a.s_a.data(), b.s_a.data()), 1e-6);
  EXPECT_EQ(testing::MaxAbsDiff(a.s_v.data(), b.s_v.data()), 0.0);
  EXPECT_EQ(testing::MaxAbsDiff(a.c.data(), b.c.data()), 0.0);
}

TEST(VbfeTest, LogVarIsClamped) {
  VbfeFixture f;
  f.Set("v.prior_c.log_var.bias", 100.0);
  const FactorizedLatents z = PriorLatents(f.x_a, f.x_v, f.vbfe);
  for (double v : z.c_dist.log_var.data()) EXPECT_EQ(v, kLogVarMax);
}

// With label-free posteriors that copy the priors, every divergence vanishes
// and the bound collapses to the reconstruction term.
TEST(VbfeTest, ElboEqualsReconWhenPosteriorMatchesPrior) {
  VbfeFixture f;
  f.Randomize(0.3);
  for (const auto& e : f.store.entries()) {
    const std::string& n = e.name;
    const auto pos = n.find(".posterior_");
    if (pos == std::string::npos) continue;
    Tensor t = e.value;
    if (n.find(".label_table") != std::string::npos || n.find(".cross") != std::string::npos) {
      for (double& v : t.mutable_data()) v = 0.0;
      continue;
    }
    const std::string prior = n.substr(0, pos) + ".prior_" + n.substr(pos + 11);
    const auto* src = f.store.Find(prior);
    ASSERT_NE(src, nullptr) << prior;
    std::copy(src->value.data().begin(), src->value.data().end(), t.mutable_data().begin());
  }
  Rng rng(1);
  const VbfePass pass = ElboFactorized(f.x_a, f.x_v, f.labels, f.vbfe, 16, rng);
  EXPECT_NEAR(pass.elbo->kl_s.item(), 0.0, 1e-12);
  EXPECT_NEAR(pass.elbo->js.item(), 0.0, 1e-12);
  EXPECT_NEAR(pass.elbo->elbo.item(), pass.elbo->recon.item(), 1e-12);
}

TEST(VbfeTest, ElboBoundedByRecon) {
  VbfeFixture f;
  for (int trial = 0; trial < 5; ++trial) {
    f.Randomize(0.3);
    Rng rng(trial);
    const VbfePass pass = ElboFactorized(f.x_a, f.x_v, f.labels, f.vbfe, 256, rng);
    const ElboTerms& t = *pass.elbo;
    EXPECT_GE(t.kl_s.item(), 0.0);
    EXPECT_NEAR(t.elbo.item(), t.recon.item() - t.kl_s.item() - t.js.item(), 1e-12);
    EXPECT_LE(t.recon.item(), 0.0);
  }
}

TEST(VbfeTest, ReconUsesJointLabel) {
  VbfeFixture f;
  f.Randomize(0.3);
  Rng r1(3), r2(3);
  const VbfePass a = ElboFactorized(f.x_a, f.x_v, f.labels, f.vbfe, 8, r1);
  LabelSet other = f.labels;
  for (int& y : other.y) y = 1 - y;
  // Same posteriors for s (labels y_a, y_v unchanged), different joint label.
  const VbfePass b = ElboFactorized(f.x_a, f.x_v, other, f.vbfe, 8, r2);
  EXPECT_NE(a.elbo->recon.item(), b.elbo->recon.item());
  EXPECT_EQ(testing::MaxAbsDiff(a.latents.s_a.data(), b.latents.s_a.data()), 0.0);
}

TEST(VbfeTest, ReconLogLikelihoodMatchesManualSoftmax) {
  VbfeFixture f;
  f.Randomize(0.3);
  const Tensor s = f.rng.NormalTensor({3, VbfeFixture::kDim});
  const Tensor c = f.rng.NormalTensor({3, VbfeFixture::kDim});
  const std::vector<int> y{1, 0, 1};
  const Tensor ll = ReconLogLikelihood(f.x_a, s, c, y, f.vbfe.recon_a());
  const auto w = f.store.Find("v.recon_a.weight")->value.data();
  const auto bias = f.store.Find("v.recon_a.bias")->value.data();
  const std::size_t d = VbfeFixture::kDim;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> feat(3 * d, 0.0);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t k = 0; k < d; ++k) feat[k] += f.x_a.data()[(r * 5 + t) * d + k] / 5.0;
    for (std::size_t k = 0; k < d; ++k) {
      feat[d + k] = s.data()[r * d + k];
      feat[2 * d + k] = c.data()[r * d + k];
    }
    double logit[2];
    for (std::size_t o = 0; o < 2; ++o) {
      logit[o] = bias[o];
      for (std::size_t i = 0; i < 3 * d; ++i) logit[o] += feat[i] * w[i * 2 + o];
    }
    const double lse = std::log(std::exp(logit[0]) + std::exp(logit[1]));
    EXPECT_NEAR(ll.data()[r], logit[y[r]] - lse, 1e-12);
  }
}

TEST(VbfeTest, ZeroFusersLeaveSequencesUnchanged) {
  VbfeFixture f;
  const Tensor seq_a = f.rng.NormalTensor({3, 6, VbfeFixture::kDim});
  const Tensor seq_v = f.rng.NormalTensor({3, 5, VbfeFixture::kDim});
  FactorizedLatents z;
  z.c = f.rng.NormalTensor({3, VbfeFixture::kDim});
  z.s_a = f.rng.NormalTensor({3, VbfeFixture::kDim});
  z.s_v = f.rng.NormalTensor({3, VbfeFixture::kDim});
  const auto [a, v] = AdaptLatents(seq_a, seq_v, z, f.vbfe);
  EXPECT_EQ(testing::MaxAbsDiff(a.data(), seq_a.data()), 0.0);
  EXPECT_EQ(testing::MaxAbsDiff(v.data(), seq_v.data()), 0.0);
}

TEST(VbfeTest, FusionShiftsEveryPatchTokenEqually) {
  VbfeFixture f;
  f.Randomize(0.3);
  const std::size_t d = VbfeFixture::kDim;
  const Tensor seq = f.rng.NormalTensor({3, 6, d});
  FactorizedLatents z;
  z.c = f.rng.NormalTensor({3, d});
  z.s_a = f.rng.NormalTensor({3, d});
  z.s_v = f.rng.NormalTensor({3, d});
  const Tensor out = AdaptLatents(seq, seq, z, f.vbfe).first;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto at = [&](const Tensor& t, std::size_t tok) {
        return t.data()[(r * 6 + tok) * d + k];
      };
      EXPECT_EQ(at(out, 0), at(seq, 0));
      const double shift = at(out, 1) - at(seq, 1);
      for (std::size_t tok = 2; tok < 6; ++tok)
        EXPECT_NEAR(at(out, tok) - at(seq, tok), shift, 1e-12);
    }
  }
}

TEST(OrthogonalityTest, OrthogonalCodesGiveZero) {
  FactorizedLatents z;
  z.c = Tensor::FromVector({1, 3}, {1, 0, 0});
  z.s_a = Tensor::FromVector({1, 3}, {0, 1, 0});
  z.s_v = Tensor::FromVector({1, 3}, {0, 0, 1});
  EXPECT_EQ(OrthogonalityLoss(z).item(), 0.0);
}

TEST(OrthogonalityTest, IdenticalUnitCodesGiveThree) {
  FactorizedLatents z;
  z.c = Tensor::FromVector({1, 3}, {1, 0, 0});
  z.s_a = z.c;
  z.s_v = z.c;
  EXPECT_EQ(OrthogonalityLoss(z).item(), 3.0);
}

TEST(OrthogonalityTest, AveragesOverBatch) {
  FactorizedLatents z;
  z.c = Tensor::FromVector({2, 2}, {1, 0, 2, 0});
  z.s_a = Tensor::FromVector({2, 2}, {0, 1, 1, 0});
  z.s_v = Tensor::FromVector({2, 2}, {0, 1, 0, 0});
  // Row 0: 0 + 0 + 1. Row 1: 4 + 0 + 0.
  EXPECT_DOUBLE_EQ(OrthogonalityLoss(z).item(), 2.5);
}

TEST(OrthogonalityTest, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  FactorizedLatents z;
  z.c = rng.NormalTensor({2, 4}, 1.0, true);
  z.s_a = rng.NormalTensor({2, 4}, 1.0, true);
  z.s_v = rng.NormalTensor({2, 4}, 1.0, true);
  Backward(OrthogonalityLoss(z));
  for (const Tensor* t : {&z.c, &z.s_a, &z.s_v}) {
    const auto numeric =
        testing::NumericGradient([&] { return OrthogonalityLoss(z).item(); }, *t);
    EXPECT_LT(testing::MaxRelError(t->grad(), numeric), 1e-6);
  }
}

TEST(EvidenceTest, DecompositionIdentityHolds) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const double pz = rng.Uniform(0.01, 0.99), qz = rng.Uniform(0.01, 0.99);
    const std::array<double, 2> lik{rng.Uniform(0.01, 1.0), rng.Uniform(0.01, 1.0)};
    const DiscreteEvidence e = DiscreteEvidenceDecomposition({pz, 1 - pz}, lik, {qz, 1 - qz});
    EXPECT_NEAR(e.log_evidence, e.elbo + e.kl_to_posterior, 1e-12);
    EXPECT_NEAR(e.log_evidence, std::log(pz * lik[0] + (1 - pz) * lik[1]), 1e-15);
    EXPECT_GE(e.kl_to_posterior, -1e-15);
  }
}

TEST(EvidenceTest, ExactPosteriorClosesTheGap) {
  const std::array<double, 2> prior{0.3, 0.7}, lik{0.9, 0.2};
  const double ev = 0.3 * 0.9 + 0.7 * 0.2;
  const DiscreteEvidence e =
      DiscreteEvidenceDecomposition(prior, lik, {0.27 / ev, 0.14 / ev});
  EXPECT_NEAR(e.kl_to_posterior, 0.0, 1e-15);
  EXPECT_NEAR(e.elbo, std::log(ev), 1e-15);
}

}  // namespace
}  // namespace fovb
