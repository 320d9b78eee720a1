#include "fovb/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fovb/ops.h"

namespace fovb {
namespace {

std::uint64_t Mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> Chunk(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

double CosineAbs(std::span<const double> a, std::span<const double> b,
                 std::size_t row, std::size_t dim) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double x = a[row * dim + k], y = b[row * dim + k];
    ab += x * y;
    aa += x * x;
    bb += y * y;
  }
  const double denom = std::sqrt(aa * bb);
  return denom > 0.0 ? std::abs(ab) / denom : 0.0;
}

}  // namespace

NumericalError::NumericalError(const std::string& term, std::uint64_t step)
    : std::runtime_error("non-finite " + term + " at step " +
                         std::to_string(step)),
      term_(term) {}

Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels) {
  std::vector<std::size_t> index(labels.begin(), labels.end());
  return Neg(Mean(GatherLastDim(LogSoftmaxLastDim(logits), index)));
}

LossBreakdown CombineLoss(const Tensor& ce, const Tensor& elbo,
                          const Tensor& orth, double alpha) {
  LossBreakdown out;
  out.ce = ce;
  out.neg_elbo = Neg(elbo);
  out.orth = orth;
  out.loss = Add(Add(ce, out.neg_elbo), Scale(orth, alpha));
  return out;
}

LossBreakdown LossTotal(const ForwardOutput& out, const std::vector<int>& y,
                        double alpha, OrthCodes codes) {
  if (!out.elbo) throw ContractError("loss needs a training-mode forward");
  const Tensor ce = Scale(
      Add(CrossEntropy(out.logits_a, y), CrossEntropy(out.logits_v, y)), 0.5);
  FactorizedLatents z = out.latents;
  if (codes == OrthCodes::kMeans) {
    z.c = z.c_dist.mean;
    z.s_a = z.s_a_dist.mean;
    z.s_v = z.s_v_dist.mean;
  }
  return CombineLoss(ce, out.elbo->elbo, OrthogonalityLoss(z), alpha);
}

std::string LossCsvHeader() { return "step,loss,ce,neg_elbo,orth"; }

std::string LossCsvRow(const LossRecord& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.step << ',' << r.loss << ',' << r.ce << ',' << r.neg_elbo << ','
      << r.orth;
  return out.str();
}

std::vector<double> PredictAll(const FovbModel& model,
                               const PreparedDataset& data, std::size_t chunk) {
  std::vector<double> scores;
  scores.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    const std::vector<double> part = model.Predict(data.MakeBatch(Chunk(begin, end)));
    scores.insert(scores.end(), part.begin(), part.end());
  }
  return scores;
}

MetricsReport Evaluate(const FovbModel& model, const PreparedDataset& data) {
  return ComputeMetrics(PredictAll(model, data), data.labels.y);
}

double MeanLatentCosine(const FovbModel& model, const PreparedDataset& data) {
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t chunk = 100;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    const FactorizedLatents z =
        model.Latents(data.MakeBatch(Chunk(begin, end)), true);
    const std::size_t dim = z.c.dim(1);
    for (std::size_t r = 0; r < end - begin; ++r) {
      total += CosineAbs(z.c.data(), z.s_a.data(), r, dim);
      total += CosineAbs(z.c.data(), z.s_v.data(), r, dim);
      total += CosineAbs(z.s_a.data(), z.s_v.data(), r, dim);
      count += 3;
    }
  }
  return total / static_cast<double>(count);
}

Trainer::Trainer(FovbModel& model, const PreparedDataset& data,
                 const TrainConfig& config, std::uint64_t seed)
    : model_(model),
      data_(data),
      config_(config),
      seed_(seed),
      params_(model.TrainableParameters()),
      state_(AdamWState::For(params_)),
      frozen_checksum_(model.params().FrozenChecksum()) {
  if (data.size() == 0) throw std::invalid_argument("empty training set");
}

void Trainer::Resume(std::uint64_t step, AdamWState state) {
  if (state.m.size() != params_.size()) {
    throw ContractError("optimizer state does not match the model");
  }
  step_ = step;
  state_ = std::move(state);
}

void Trainer::CheckFrozen() const {
  if (model_.params().FrozenChecksum() != frozen_checksum_) {
    throw ContractError("frozen parameters changed during training");
  }
}

LossRecord Trainer::Step() {
  Rng rng(Mix(seed_ ^ Mix(step_ + 1)));
  const std::size_t batch = std::min(config_.batch, data_.size());
  std::vector<std::size_t> pool(data_.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < batch; ++i)
    std::swap(pool[i], pool[i + rng.Index(pool.size() - i)]);
  pool.resize(batch);

  const Batch b = data_.MakeBatch(pool);
  ForwardOptions options;
  options.mc_samples = config_.mc_samples;
  options.fusion = config_.fusion;
  const ForwardOutput out = model_.Forward(b, Mode::kTrain, &rng, options);
  const LossBreakdown loss =
      LossTotal(out, b.labels->y, config_.alpha, config_.orth_codes);

  const std::uint64_t step = step_ + 1;
  const auto check = [&](const Tensor& t, const char* name) {
    if (!std::isfinite(t.item())) throw NumericalError(name, step);
  };
  check(loss.ce, "ce");
  check(out.elbo->recon, "neg_elbo (reconstruction term)");
  check(out.elbo->kl_s, "neg_elbo (modality KL term)");
  check(out.elbo->js, "neg_elbo (JS term)");
  check(loss.orth, "orth");
  check(loss.loss, "loss");

  model_.params().ZeroGrad();
  Backward(loss.loss);
  for (const Tensor& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericalError("gradient", step);
    }
  }
  AdamWOptions adam;
  adam.lr = config_.lr;
  adam.weight_decay = config_.weight_decay;
  AdamWStep(params_, state_, adam);
  model_.params().ZeroGrad();
  step_ = step;
  return {step, loss.loss.item(), loss.ce.item(), loss.neg_elbo.item(),
          loss.orth.item()};
}

TrainOutcome RunTraining(Trainer& trainer, const FovbModel& model,
                         const TrainConfig& config, const PreparedDataset* eval,
                         const std::function<void(const LossRecord&)>& on_step) {
  TrainOutcome outcome;
  while (trainer.step() < config.steps) {
    const LossRecord r = trainer.Step();
    outcome.trace.push_back(r);
    if (on_step) on_step(r);
    const bool periodic = config.eval_every > 0 && r.step % config.eval_every == 0 &&
                          r.step < config.steps;
    if (periodic) {
      trainer.CheckFrozen();
      if (eval != nullptr) outcome.evals.emplace_back(r.step, Evaluate(model, *eval));
    }
  }
  trainer.CheckFrozen();
  if (eval != nullptr) outcome.evals.emplace_back(trainer.step(), Evaluate(model, *eval));
  return outcome;
}

}  // namespace fovb
