#ifndef FOVB_MODEL_H_
#define FOVB_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fovb/frontend.h"
#include "fovb/glfa.h"
#include "fovb/nn.h"
#include "fovb/rng.h"
#include "fovb/tensor.h"
#include "fovb/vbfe.h"

namespace fovb {

// Seed of the simulated pre-trained backbone. It is deliberately independent
// of the run seed so every run adapts the same frozen network.
inline constexpr std::uint64_t kBackboneSeed = 0x5EEDBAC4B0E5ULL;

struct ModelConfig {
  std::size_t blocks = 12;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t patch = 8;
  std::size_t reduction = 2;
  std::vector<std::size_t> glfa_blocks = {1, 2, 3, 4, 5};  // 1-based
  std::size_t vbfe_block = 6;  // VBFE runs after this block (1-based)
  std::size_t encoder_blocks = 2;
  std::size_t image_size = 32;

  // Throws std::invalid_argument describing the first inconsistency.
  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Images are [batch, S, S, 3]: the audio spectrogram image and the video
// frame. Labels are optional; training requires them.
struct Batch {
  Tensor audio;
  Tensor visual;
  std::optional<LabelSet> labels;

  std::size_t size() const { return audio.dim(0); }
};

enum class Mode { kTrain, kInfer };

// Which codes are fused into the backbone on the training path. The ELBO
// always uses posterior samples. kPosterior fuses those same samples;
// kPrior fuses samples of the prior, matching what inference sees (prior
// means) and keeping the label-conditioned posterior out of the heads'
// input.
enum class TrainFusion { kPrior, kPosterior };

struct ForwardOptions {
  std::size_t mc_samples = 8;  // JS samples per component
  TrainFusion fusion = TrainFusion::kPrior;
};

struct ForwardOutput {
  Tensor logits_a;  // [batch, 2]
  Tensor logits_v;  // [batch, 2]
  std::optional<ElboTerms> elbo;
  FactorizedLatents latents;  // posterior samples (train) or prior means
};

class FovbModel {
 public:
  // Backbone weights come from kBackboneSeed; adapter, VBFE and head weights
  // from `init_seed`.
  FovbModel(const ModelConfig& config, std::uint64_t init_seed);
  FovbModel(const FovbModel&) = delete;
  FovbModel& operator=(const FovbModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Train mode needs labels and an rng (posterior path, sampled codes);
  // infer mode uses prior means and is deterministic.
  ForwardOutput Forward(const Batch& batch, Mode mode, Rng* rng,
                        const ForwardOptions& options = {}) const;
  // The frozen backbone alone: same embeddings and heads, no adapters, no
  // latent fusion.
  ForwardOutput ForwardBackbone(const Batch& batch) const;

  // Mean of the two heads' softmax probability of "fake", per sample.
  std::vector<double> Predict(const Batch& batch) const;

  // Latent distributions at the VBFE layer. The posterior path needs labels.
  FactorizedLatents Latents(const Batch& batch, bool posterior) const;

  std::vector<Tensor> TrainableParameters() const { return store_.Trainable(); }
  // Sets every adapter and VBFE parameter to zero.
  void ZeroAdaptation();

 private:
  struct Streams {
    TokenSequence audio;
    TokenSequence visual;
  };
  Streams Embed(const Batch& batch) const;
  Tensor RunBlock(std::size_t index, const std::vector<TransformerBlock>& blocks,
                  const std::vector<std::unique_ptr<GlfaAdapter>>& adapters,
                  const TokenSequence& x, bool adapt) const;
  // Runs blocks [first, last) of both streams.
  void RunBlocks(Streams& s, std::size_t first, std::size_t last,
                 bool adapt) const;
  ForwardOutput Heads(const Streams& s) const;

  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<PatchEmbedding> embed_a_, embed_v_;
  std::vector<TransformerBlock> blocks_a_, blocks_v_;
  std::vector<std::unique_ptr<GlfaAdapter>> glfa_a_, glfa_v_;  // per block
  LayerNormLayer norm_a_, norm_v_;
  Vbfe vbfe_;
  LinearLayer head_a_, head_v_;
};

// Mean of softmax(logits)[:, 1] over the two heads.
std::vector<double> FakeProbability(const Tensor& logits_a,
                                    const Tensor& logits_v);

}  // namespace fovb

#endif  // FOVB_MODEL_H_
