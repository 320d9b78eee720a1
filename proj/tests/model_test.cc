#include "fovb/model.h"

#include <gtest/gtest.h>

#include <cmath>

#include "fovb/ops.h"
#include "fovb/synth.h"
#include "test_util.h"

namespace fovb {
namespace {

const PreparedDataset& SmallData() {
  static const PreparedDataset data = Prepare(SynthGenerate(8, 77));
  return data;
}

void Perturb(FovbModel& model, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& e : model.params().entries()) {
    if (!e.trainable) continue;
    Tensor t = e.value;
    for (double& v : t.mutable_data()) v += rng.Normal(0.0, stddev);
  }
}

TEST(ModelConfigTest, DefaultsValidate) {
  ModelConfig c;
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.blocks, 12u);
  EXPECT_EQ(c.glfa_blocks, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(c.vbfe_block, 6u);
}

TEST(ModelConfigTest, RejectsInconsistentShapes) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.patch = 5;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.glfa_blocks = {0};
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.vbfe_block = 13;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.reduction = 3;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(ModelTest, FreshModelEqualsFrozenBackbone) {
  FovbModel model(ModelConfig{}, 1);
  const Batch b = SmallData().All();
  const ForwardOutput adapted = model.Forward(b, Mode::kInfer, nullptr);
  const ForwardOutput plain = model.ForwardBackbone(b);
  EXPECT_EQ(testing::MaxAbsDiff(adapted.logits_a.data(), plain.logits_a.data()), 0.0);
  EXPECT_EQ(testing::MaxAbsDiff(adapted.logits_v.data(), plain.logits_v.data()), 0.0);
}

TEST(ModelTest, ZeroAdaptationRestoresBackbone) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.1, 5);
  const Batch b = SmallData().All();
  const ForwardOutput before = model.Forward(b, Mode::kInfer, nullptr);
  const ForwardOutput plain = model.ForwardBackbone(b);
  EXPECT_GT(testing::MaxAbsDiff(before.logits_a.data(), plain.logits_a.data()), 1e-6);
  model.ZeroAdaptation();
  const ForwardOutput after = model.Forward(b, Mode::kInfer, nullptr);
  EXPECT_EQ(testing::MaxAbsDiff(after.logits_a.data(), plain.logits_a.data()), 0.0);
  EXPECT_EQ(testing::MaxAbsDiff(after.logits_v.data(), plain.logits_v.data()), 0.0);
}

TEST(ModelTest, OutputShapes) {
  FovbModel model(ModelConfig{}, 1);
  const Batch b = SmallData().All();
  Rng rng(2);
  const ForwardOutput out = model.Forward(b, Mode::kTrain, &rng);
  EXPECT_EQ(out.logits_a.shape(), (Shape{8, 2}));
  EXPECT_EQ(out.logits_v.shape(), (Shape{8, 2}));
  ASSERT_TRUE(out.elbo.has_value());
  EXPECT_EQ(out.latents.c.shape(), (Shape{8, 32}));
  EXPECT_EQ(out.latents.s_a.shape(), (Shape{8, 32}));
  EXPECT_EQ(out.latents.s_v.shape(), (Shape{8, 32}));
  EXPECT_FALSE(model.Forward(b, Mode::kInfer, nullptr).elbo.has_value());
}

TEST(ModelTest, InferenceIsDeterministic) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.05, 3);
  const Batch b = SmallData().All();
  const std::vector<double> a = model.Predict(b);
  const std::vector<double> c = model.Predict(b);
  EXPECT_EQ(a, c);
  FovbModel twin(ModelConfig{}, 1);
  Perturb(twin, 0.05, 3);
  EXPECT_EQ(twin.Predict(b), a);
}

TEST(ModelTest, InferenceUsesPriorMeans) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.05, 3);
  const Batch b = SmallData().All();
  const FactorizedLatents z = model.Latents(b, false);
  const ForwardOutput out = model.Forward(b, Mode::kInfer, nullptr);
  EXPECT_EQ(testing::MaxAbsDiff(out.latents.c.data(), z.c_dist.mean.data()), 0.0);
  EXPECT_EQ(testing::MaxAbsDiff(out.latents.s_a.data(), z.s_a_dist.mean.data()), 0.0);
}

TEST(ModelTest, InferenceIgnoresLabels) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.05, 3);
  Batch b = SmallData().All();
  const std::vector<double> with_labels = model.Predict(b);
  b.labels.reset();
  EXPECT_EQ(model.Predict(b), with_labels);
}

TEST(ModelTest, PredictAveragesHeadProbabilities) {
  FovbModel model(ModelConfig{}, 1);
  for (const char* name : {"head_a.weight", "head_a.bias", "head_v.weight", "head_v.bias"}) {
    Tensor t = model.params().Find(name)->value;
    std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  }
  for (double p : model.Predict(SmallData().All())) EXPECT_DOUBLE_EQ(p, 0.5);
  const Tensor la = Tensor::FromVector({1, 2}, {0.0, std::log(3.0)});
  const Tensor lv = Tensor::FromVector({1, 2}, {0.0, 0.0});
  EXPECT_NEAR(FakeProbability(la, lv)[0], 0.5 * (0.75 + 0.5), 1e-15);
}

TEST(ModelTest, TrainableSetExcludesBackbone) {
  FovbModel model(ModelConfig{}, 1);
  std::size_t glfa = 0;
  for (const auto& e : model.params().entries()) {
    if (e.name.starts_with("backbone_")) {
      EXPECT_FALSE(e.trainable) << e.name;
    }
    if (e.name.starts_with("glfa_") || e.name.starts_with("vbfe.") ||
        e.name.starts_with("head_")) {
      EXPECT_TRUE(e.trainable) << e.name;
    }
    if (e.name.starts_with("glfa_a.block")) glfa += e.name.ends_with(".down.weight");
  }
  EXPECT_EQ(glfa, 5u);
  EXPECT_EQ(model.params().Find("glfa_a.block6.down.weight"), nullptr);
  EXPECT_NE(model.params().Find("glfa_v.block5.down.weight"), nullptr);
}

TEST(ModelTest, BackboneIsIndependentOfInitSeed) {
  FovbModel a(ModelConfig{}, 1), b(ModelConfig{}, 2);
  EXPECT_EQ(a.params().FrozenChecksum(), b.params().FrozenChecksum());
  EXPECT_NE(testing::MaxAbsDiff(a.params().Find("head_a.weight")->value.data(),
                                b.params().Find("head_a.weight")->value.data()),
            0.0);
}

TEST(ModelTest, GradientsReachEveryTrainableTensorAndNoFrozenOne) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.05, 4);
  const Batch b = SmallData().All();
  Rng rng(3);
  const ForwardOutput out = model.Forward(b, Mode::kTrain, &rng);
  const Tensor loss = Sub(Add(Sum(out.logits_a), Sum(out.logits_v)), out.elbo->elbo);
  Backward(loss);
  for (const auto& e : model.params().entries()) {
    if (!e.trainable) {
      EXPECT_TRUE(e.value.grad().empty()) << e.name;
      continue;
    }
    ASSERT_EQ(e.value.grad().size(), e.value.size()) << e.name;
    double norm = 0.0;
    for (double g : e.value.grad()) {
      ASSERT_TRUE(std::isfinite(g)) << e.name;
      norm += g * g;
    }
    EXPECT_GT(norm, 0.0) << e.name;
  }
}

TEST(ModelTest, TrainingForwardNeedsLabelsAndRng) {
  FovbModel model(ModelConfig{}, 1);
  Batch b = SmallData().All();
  EXPECT_THROW(model.Forward(b, Mode::kTrain, nullptr), ContractError);
  b.labels.reset();
  Rng rng(1);
  EXPECT_THROW(model.Forward(b, Mode::kTrain, &rng), ContractError);
  EXPECT_THROW(model.Latents(b, true), ContractError);
}

TEST(ModelTest, PosteriorFusionUsesPosteriorSamples) {
  FovbModel model(ModelConfig{}, 1);
  Perturb(model, 0.05, 6);
  const Batch b = SmallData().All();
  ForwardOptions prior, posterior;
  posterior.fusion = TrainFusion::kPosterior;
  Rng r1(9), r2(9);
  const ForwardOutput a = model.Forward(b, Mode::kTrain, &r1, prior);
  const ForwardOutput c = model.Forward(b, Mode::kTrain, &r2, posterior);
  // The ELBO draws come first, so both paths share the posterior samples.
  EXPECT_EQ(testing::MaxAbsDiff(a.latents.c.data(), c.latents.c.data()), 0.0);
  EXPECT_GT(testing::MaxAbsDiff(a.logits_a.data(), c.logits_a.data()), 0.0);
}

TEST(ModelTest, RejectsMismatchedImages) {
  FovbModel model(ModelConfig{}, 1);
  Batch b = SmallData().All();
  b.visual = Tensor::Zeros({8, 16, 16, 3});
  EXPECT_THROW(model.Predict(b), DimensionError);
}

}  // namespace
}  // namespace fovb
