#ifndef FOVB_TRAIN_H_
#define FOVB_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovb/config.h"
#include "fovb/metrics.h"
#include "fovb/model.h"
#include "fovb/optim.h"
#include "fovb/synth.h"

namespace fovb {

// Non-finite value in a named loss term.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& term, std::uint64_t step);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct LossBreakdown {
  Tensor loss;
  Tensor ce;        // cross-entropy averaged over both heads
  Tensor neg_elbo;  // -ELBO~
  Tensor orth;      // L_orth (before alpha)
};

// Mean cross-entropy of one head against binary labels.
Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& labels);

// L = ce - elbo + alpha * orth.
LossBreakdown CombineLoss(const Tensor& ce, const Tensor& elbo,
                          const Tensor& orth, double alpha);

LossBreakdown LossTotal(const ForwardOutput& out, const std::vector<int>& y,
                        double alpha, OrthCodes codes);

struct LossRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double ce = 0.0;
  double neg_elbo = 0.0;
  double orth = 0.0;
};

std::string LossCsvHeader();
std::string LossCsvRow(const LossRecord& r);

// Scores every sample with the inference path, in fixed-size chunks.
std::vector<double> PredictAll(const FovbModel& model,
                               const PreparedDataset& data,
                               std::size_t chunk = 100);
MetricsReport Evaluate(const FovbModel& model, const PreparedDataset& data);

// Mean |cosine| over the (c, s_a), (c, s_v), (s_a, s_v) pairs of the
// posterior means.
double MeanLatentCosine(const FovbModel& model, const PreparedDataset& data);

class Trainer {
 public:
  // `seed` drives batch selection and sampling noise. Each step derives its
  // own generator from (seed, step), so a resumed run replays the same
  // batches as an uninterrupted one.
  Trainer(FovbModel& model, const PreparedDataset& data,
          const TrainConfig& config, std::uint64_t seed);

  // Restores optimizer state and the step counter.
  void Resume(std::uint64_t step, AdamWState state);

  // One optimization step; throws NumericalError on non-finite terms.
  LossRecord Step();

  std::uint64_t step() const { return step_; }
  const AdamWState& optimizer() const { return state_; }
  std::uint32_t frozen_checksum() const { return frozen_checksum_; }
  // Throws ContractError if any frozen parameter changed.
  void CheckFrozen() const;

 private:
  FovbModel& model_;
  const PreparedDataset& data_;
  TrainConfig config_;
  std::uint64_t seed_;
  std::vector<Tensor> params_;
  AdamWState state_;
  std::uint64_t step_ = 0;
  std::uint32_t frozen_checksum_;
};

struct TrainOutcome {
  std::vector<LossRecord> trace;
  std::vector<std::pair<std::uint64_t, MetricsReport>> evals;
};

// Runs until trainer.step() reaches config.steps. Evaluates every
// eval_every steps (if nonzero) and at the end when `eval` is given; the
// frozen checksum is checked at every evaluation. `on_step` sees each record.
TrainOutcome RunTraining(Trainer& trainer, const FovbModel& model,
                         const TrainConfig& config, const PreparedDataset* eval,
                         const std::function<void(const LossRecord&)>& on_step = {});

}  // namespace fovb

#endif  // FOVB_TRAIN_H_
