#include "fovb/train.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "fovb/checkpoint.h"
#include "fovb/ops.h"
#include "test_util.h"

namespace fovb {
namespace {

const PreparedDataset& TrainData() {
  static const PreparedDataset data = Prepare(SynthGenerate(24, 31));
  return data;
}

TrainConfig SmallConfig() {
  TrainConfig c;
  c.batch = 4;
  c.steps = 6;
  c.mc_samples = 2;
  return c;
}

bool SameParameters(const FovbModel& a, const FovbModel& b) {
  const auto& x = a.params().entries();
  const auto& y = b.params().entries();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::memcmp(x[i].value.data().data(), y[i].value.data().data(),
                    8 * x[i].value.size()) != 0) {
      return false;
    }
  }
  return true;
}

TEST(LossTest, CombinationArithmetic) {
  const LossBreakdown l = CombineLoss(Tensor::Scalar(1.0), Tensor::Scalar(-0.5),
                                      Tensor::Scalar(2.0), 0.1);
  EXPECT_NEAR(l.loss.item(), 1.7, 1e-15);
  EXPECT_DOUBLE_EQ(l.neg_elbo.item(), 0.5);
  EXPECT_DOUBLE_EQ(CombineLoss(Tensor::Scalar(1.0), Tensor::Scalar(-0.5),
                               Tensor::Scalar(2.0), 0.0)
                       .loss.item(),
                   1.5);
}

TEST(LossTest, CrossEntropyMatchesManual) {
  const Tensor logits = Tensor::FromVector({2, 2}, {0.0, std::log(3.0), 1.0, 1.0});
  const double expected = 0.5 * (-std::log(0.25) - std::log(0.5));
  EXPECT_NEAR(CrossEntropy(logits, {0, 1}).item(), expected, 1e-15);
}

TEST(LossTest, OrthogonalityTermUsesSampledCodes) {
  ForwardOutput out;
  out.logits_a = Tensor::Zeros({1, 2});
  out.logits_v = Tensor::Zeros({1, 2});
  out.elbo = ElboTerms{Tensor::Scalar(0.0), Tensor::Scalar(0.0), Tensor::Scalar(0.0),
                       Tensor::Scalar(0.0)};
  FactorizedLatents& z = out.latents;
  z.c = Tensor::FromVector({1, 2}, {1, 0});
  z.s_a = z.c;
  z.s_v = z.c;
  z.c_dist = {Tensor::FromVector({1, 2}, {1, 0}), Tensor::Zeros({1, 2})};
  z.s_a_dist = {Tensor::FromVector({1, 2}, {0, 1}), Tensor::Zeros({1, 2})};
  z.s_v_dist = {Tensor::FromVector({1, 2}, {0, 0}), Tensor::Zeros({1, 2})};
  const LossBreakdown sampled = LossTotal(out, {0}, 0.1, OrthCodes::kSampled);
  EXPECT_DOUBLE_EQ(sampled.orth.item(), 3.0);
  EXPECT_NEAR(sampled.loss.item(), std::log(2.0) + 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(LossTotal(out, {0}, 0.1, OrthCodes::kMeans).orth.item(), 0.0);
  out.elbo.reset();
  EXPECT_THROW(LossTotal(out, {0}, 0.1, OrthCodes::kSampled), ContractError);
}

TEST(LossTest, CsvFormat) {
  EXPECT_EQ(LossCsvHeader(), "step,loss,ce,neg_elbo,orth");
  EXPECT_EQ(LossCsvRow({3, 1.5, 1.0, 0.25, 2.5}), "3,1.5,1,0.25,2.5");
}

TEST(AdamWTest, SingleStepMatchesClosedForm) {
  Tensor w = Tensor::FromVector({2}, {1.0, -2.0}, true);
  Backward(Sum(Mul(w, Tensor::FromVector({2}, {0.5, -3.0}))));
  std::vector<Tensor> params{w};
  AdamWState state = AdamWState::For(params);
  AdamWOptions opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.01;
  AdamWStep(params, state, opt);
  // First step: m_hat = g, v_hat = g^2, so the step is lr * sign(g).
  EXPECT_NEAR(w.data()[0], 1.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w.data()[1], -2.0 * (1 - 0.001) + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
  EXPECT_NEAR(state.m[0][0], 0.05, 1e-15);
  EXPECT_NEAR(state.v[0][1], 0.001 * 9.0, 1e-15);
}

TEST(AdamWTest, TwoStepsMatchReferenceLoop) {
  double w = 0.7, m = 0.0, v = 0.0;
  Tensor t = Tensor::FromVector({1}, {w}, true);
  std::vector<Tensor> params{t};
  AdamWState state = AdamWState::For(params);
  AdamWOptions opt;
  opt.lr = 0.05;
  for (int step = 1; step <= 2; ++step) {
    t.ZeroGrad();
    Backward(Sum(Square(t)));
    const double g = 2.0 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, step)), vh = v / (1 - std::pow(0.999, step));
    w = w * (1 - 0.05 * 0.01) - 0.05 * mh / (std::sqrt(vh) + 1e-8);
    AdamWStep(params, state, opt);
    EXPECT_NEAR(t.data()[0], w, 1e-15);
  }
}

TEST(AdamWTest, ConvergesOnQuadratic) {
  Tensor w = Tensor::FromVector({1}, {0.0}, true);
  std::vector<Tensor> params{w};
  AdamWState state = AdamWState::For(params);
  AdamWOptions opt;
  opt.lr = 0.05;
  opt.weight_decay = 0.0;
  for (int i = 0; i < 2000; ++i) {
    w.ZeroGrad();
    Backward(Sum(Square(AddScalar(w, -3.0))));
    AdamWStep(params, state, opt);
  }
  EXPECT_NEAR(w.data()[0], 3.0, 1e-3);
}

TEST(AdamWTest, MissingGradientOnlyDecays) {
  Tensor w = Tensor::FromVector({1}, {2.0}, true);
  std::vector<Tensor> params{w};
  AdamWState state = AdamWState::For(params);
  AdamWOptions opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.5;
  AdamWStep(params, state, opt);
  EXPECT_DOUBLE_EQ(w.data()[0], 2.0 * 0.95);
}

TEST(AdamWTest, StateMismatchThrows) {
  std::vector<Tensor> params{Tensor::Zeros({2}, true)};
  AdamWState state;
  EXPECT_THROW(AdamWStep(params, state, {}), ContractError);
}

TEST(TrainerTest, SameSeedSameTrajectory) {
  FovbModel a(ModelConfig{}, 5), b(ModelConfig{}, 5);
  Trainer ta(a, TrainData(), SmallConfig(), 5), tb(b, TrainData(), SmallConfig(), 5);
  for (int i = 0; i < 4; ++i) {
    const LossRecord ra = ta.Step(), rb = tb.Step();
    EXPECT_EQ(ra.step, rb.step);
    EXPECT_EQ(ra.loss, rb.loss);
    EXPECT_EQ(ra.neg_elbo, rb.neg_elbo);
  }
  EXPECT_TRUE(SameParameters(a, b));
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  FovbModel full(ModelConfig{}, 6);
  Trainer t_full(full, TrainData(), SmallConfig(), 6);
  for (int i = 0; i < 6; ++i) t_full.Step();

  FovbModel first(ModelConfig{}, 6);
  Trainer t_first(first, TrainData(), SmallConfig(), 6);
  for (int i = 0; i < 3; ++i) t_first.Step();
  const std::string bytes = EncodeCheckpoint(
      SnapshotTensors(first, 6, t_first.step(), &t_first.optimizer()));
  LoadedCheckpoint restored = RestoreCheckpoint(DecodeCheckpoint(bytes));
  Trainer t_second(*restored.model, TrainData(), SmallConfig(), restored.snapshot.seed);
  t_second.Resume(restored.snapshot.step, restored.snapshot.optimizer);
  for (int i = 0; i < 3; ++i) t_second.Step();
  EXPECT_EQ(t_second.step(), 6u);
  EXPECT_TRUE(SameParameters(full, *restored.model));
}

TEST(TrainerTest, FrozenWeightsNeverChange) {
  FovbModel model(ModelConfig{}, 7);
  const std::uint32_t before = model.params().FrozenChecksum();
  std::vector<std::vector<double>> frozen;
  for (const Tensor& t : model.params().Frozen()) frozen.push_back(testing::ToVector(t));
  TrainConfig c = SmallConfig();
  c.steps = 20;
  c.eval_every = 5;
  Trainer trainer(model, TrainData(), c, 7);
  const TrainOutcome out = RunTraining(trainer, model, c, &TrainData());
  EXPECT_EQ(out.trace.size(), 20u);
  EXPECT_EQ(out.evals.size(), 4u);  // steps 5, 10, 15 and the final one
  EXPECT_EQ(model.params().FrozenChecksum(), before);
  const std::vector<Tensor> now = model.params().Frozen();
  for (std::size_t i = 0; i < now.size(); ++i) EXPECT_EQ(testing::ToVector(now[i]), frozen[i]);
}

TEST(TrainerTest, TrainableWeightsMove) {
  FovbModel model(ModelConfig{}, 8);
  const std::vector<double> before =
      testing::ToVector(model.params().Find("glfa_a.block1.down.weight")->value);
  Trainer trainer(model, TrainData(), SmallConfig(), 8);
  trainer.Step();
  EXPECT_NE(testing::ToVector(model.params().Find("glfa_a.block1.down.weight")->value), before);
}

TEST(TrainerTest, TamperedFrozenWeightIsDetected) {
  FovbModel model(ModelConfig{}, 9);
  Trainer trainer(model, TrainData(), SmallConfig(), 9);
  Tensor t = model.params().Frozen()[0];
  t.mutable_data()[0] += 1.0;
  EXPECT_THROW(trainer.CheckFrozen(), ContractError);
}

TEST(TrainerTest, NonFiniteLossIsReported) {
  FovbModel model(ModelConfig{}, 10);
  Tensor w = model.params().Find("head_a.bias")->value;
  w.mutable_data()[0] = std::nan("");
  Trainer trainer(model, TrainData(), SmallConfig(), 10);
  try {
    trainer.Step();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.term(), "ce");
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(TrainerTest, PosteriorReactsToLabelsAfterTraining) {
  FovbModel model(ModelConfig{}, 11);
  Trainer trainer(model, TrainData(), SmallConfig(), 11);
  for (int i = 0; i < 3; ++i) trainer.Step();
  Batch b = TrainData().MakeBatch({0, 1, 2, 3});
  const FactorizedLatents z = model.Latents(b, true);
  for (int& y : b.labels->y_a) y = 1 - y;
  const FactorizedLatents flipped = model.Latents(b, true);
  EXPECT_GT(testing::MaxAbsDiff(z.s_a_dist.mean.data(), flipped.s_a_dist.mean.data()), 0.0);
}

TEST(TrainerTest, MeanLatentCosineIsInUnitInterval) {
  FovbModel model(ModelConfig{}, 12);
  Trainer trainer(model, TrainData(), SmallConfig(), 12);
  for (int i = 0; i < 2; ++i) trainer.Step();
  const double cos = MeanLatentCosine(model, TrainData());
  EXPECT_GE(cos, 0.0);
  EXPECT_LE(cos, 1.0);
}

TEST(TrainerTest, EmptyDatasetRejected) {
  FovbModel model(ModelConfig{}, 1);
  PreparedDataset empty;
  EXPECT_THROW(Trainer(model, empty, SmallConfig(), 1), std::invalid_argument);
}

}  // namespace
}  // namespace fovb
