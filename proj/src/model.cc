#include "fovb/model.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fovb/ops.h"

namespace fovb {

void ModelConfig::Validate() const {
  if (blocks == 0) throw std::invalid_argument("model needs at least one block");
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("model.dim must be a positive multiple of model.heads");
  }
  if (reduction == 0 || dim % reduction != 0) {
    throw std::invalid_argument("model.r must divide model.dim");
  }
  if (patch == 0 || image_size % patch != 0) {
    throw std::invalid_argument("model.patch must divide the image size " +
                                std::to_string(image_size));
  }
  if (image_size / patch < 4) {
    throw std::invalid_argument(
        "model.patch leaves a token grid smaller than 4x4");
  }
  for (std::size_t b : glfa_blocks) {
    if (b < 1 || b > blocks) {
      throw std::invalid_argument("model.glfa_blocks entry " +
                                  std::to_string(b) + " is out of range");
    }
  }
  if (vbfe_block < 1 || vbfe_block > blocks) {
    throw std::invalid_argument("model.vbfe_block is out of range");
  }
}

FovbModel::FovbModel(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config) {
  config_.Validate();
  Rng backbone(kBackboneSeed);
  Rng init(init_seed);
  const std::size_t d = config_.dim;

  embed_a_ = std::make_unique<PatchEmbedding>(
      config_.image_size, config_.image_size, 3, config_.patch, d, backbone);
  embed_v_ = std::make_unique<PatchEmbedding>(
      config_.image_size, config_.image_size, 3, config_.patch, d, backbone);
  const auto register_embedding = [&](PatchEmbedding& e,
                                      const std::string& name) {
    store_.Register(name + ".projection", e.projection(), true);
    store_.Register(name + ".bias", e.bias(), true);
    store_.Register(name + ".class_token", e.class_token(), true);
    store_.Register(name + ".positions", e.positions(), true);
  };
  register_embedding(*embed_a_, "embed_a");
  register_embedding(*embed_v_, "embed_v");

  for (std::size_t b = 0; b < config_.blocks; ++b) {
    blocks_a_.emplace_back(store_, "backbone_a.block" + std::to_string(b + 1),
                           d, config_.heads, backbone, false);
    blocks_v_.emplace_back(store_, "backbone_v.block" + std::to_string(b + 1),
                           d, config_.heads, backbone, false);
  }
  norm_a_ = LayerNormLayer::Create(store_, "backbone_a.norm", d, false);
  norm_v_ = LayerNormLayer::Create(store_, "backbone_v.norm", d, false);

  glfa_a_.resize(config_.blocks);
  glfa_v_.resize(config_.blocks);
  const std::size_t grid = config_.image_size / config_.patch;
  std::vector<std::size_t> glfa = config_.glfa_blocks;
  std::sort(glfa.begin(), glfa.end());
  glfa.erase(std::unique(glfa.begin(), glfa.end()), glfa.end());
  for (std::size_t b : glfa) {
    glfa_a_[b - 1] = std::make_unique<GlfaAdapter>(
        store_, "glfa_a.block" + std::to_string(b), d, config_.heads,
        config_.reduction, grid, grid, init);
    glfa_v_[b - 1] = std::make_unique<GlfaAdapter>(
        store_, "glfa_v.block" + std::to_string(b), d, config_.heads,
        config_.reduction, grid, grid, init);
  }
  vbfe_ = Vbfe(store_, "vbfe", d, config_.heads, config_.encoder_blocks, init);
  head_a_ = LinearLayer::Create(store_, "head_a", d, 2, 0.02, init, true);
  head_v_ = LinearLayer::Create(store_, "head_v", d, 2, 0.02, init, true);
}

FovbModel::Streams FovbModel::Embed(const Batch& batch) const {
  if (!batch.audio.defined() || !batch.visual.defined() ||
      batch.audio.rank() != 4 || batch.audio.shape() != batch.visual.shape()) {
    throw DimensionError("batch needs matching [batch, S, S, 3] images");
  }
  return {embed_a_->Embed(batch.audio, Modality::kAudio),
          embed_v_->Embed(batch.visual, Modality::kVisual)};
}

Tensor FovbModel::RunBlock(
    std::size_t index, const std::vector<TransformerBlock>& blocks,
    const std::vector<std::unique_ptr<GlfaAdapter>>& adapters,
    const TokenSequence& x, bool adapt) const {
  if (adapt && adapters[index]) {
    return GlfaBlockForward(blocks[index], *adapters[index], x);
  }
  return blocks[index].Forward(x.tokens);
}

void FovbModel::RunBlocks(Streams& s, std::size_t first, std::size_t last,
                          bool adapt) const {
  for (std::size_t b = first; b < last; ++b) {
    s.audio.tokens = RunBlock(b, blocks_a_, glfa_a_, s.audio, adapt);
    s.visual.tokens = RunBlock(b, blocks_v_, glfa_v_, s.visual, adapt);
  }
}

ForwardOutput FovbModel::Heads(const Streams& s) const {
  const auto cls = [](const Tensor& tokens) {
    return Reshape(Slice(tokens, 1, 0, 1), {tokens.dim(0), tokens.dim(2)});
  };
  ForwardOutput out;
  out.logits_a = head_a_.Forward(norm_a_.Forward(cls(s.audio.tokens)));
  out.logits_v = head_v_.Forward(norm_v_.Forward(cls(s.visual.tokens)));
  return out;
}

ForwardOutput FovbModel::Forward(const Batch& batch, Mode mode, Rng* rng,
                                 const ForwardOptions& options) const {
  const bool train = mode == Mode::kTrain;
  if (train && (!batch.labels || rng == nullptr)) {
    throw ContractError("training forward needs labels and an rng");
  }
  Streams s = Embed(batch);
  const std::size_t split = config_.vbfe_block;
  RunBlocks(s, 0, split, true);

  const std::size_t n = s.audio.patch_count();
  const Tensor patches_a = Slice(s.audio.tokens, 1, 1, n + 1);
  const Tensor patches_v = Slice(s.visual.tokens, 1, 1, n + 1);
  VbfePass pass = train ? ElboFactorized(patches_a, patches_v, *batch.labels,
                                         vbfe_, options.mc_samples, *rng)
                        : PriorMeanLatents(patches_a, patches_v, vbfe_);
  FactorizedLatents fused = pass.latents;
  if (train && options.fusion == TrainFusion::kPrior) {
    fused = pass.prior;
    fused.s_a = SampleReparam(fused.s_a_dist, *rng);
    fused.s_v = SampleReparam(fused.s_v_dist, *rng);
    fused.c = SampleReparam(fused.c_dist, *rng);
  }
  auto [adapted_a, adapted_v] =
      AdaptLatents(s.audio.tokens, s.visual.tokens, fused, vbfe_);
  s.audio.tokens = adapted_a;
  s.visual.tokens = adapted_v;

  RunBlocks(s, split, config_.blocks, true);
  ForwardOutput out = Heads(s);
  out.elbo = pass.elbo;
  out.latents = pass.latents;
  return out;
}

ForwardOutput FovbModel::ForwardBackbone(const Batch& batch) const {
  Streams s = Embed(batch);
  RunBlocks(s, 0, config_.blocks, false);
  return Heads(s);
}

FactorizedLatents FovbModel::Latents(const Batch& batch, bool posterior) const {
  if (posterior && !batch.labels) {
    throw ContractError("posterior latents need labels");
  }
  Streams s = Embed(batch);
  RunBlocks(s, 0, config_.vbfe_block, true);
  const std::size_t n = s.audio.patch_count();
  const Tensor patches_a = Slice(s.audio.tokens, 1, 1, n + 1);
  const Tensor patches_v = Slice(s.visual.tokens, 1, 1, n + 1);
  return posterior ? PosteriorLatents(patches_a, patches_v, *batch.labels, vbfe_)
                   : PriorLatents(patches_a, patches_v, vbfe_);
}

std::vector<double> FakeProbability(const Tensor& logits_a,
                                    const Tensor& logits_v) {
  const Tensor pa = SoftmaxLastDim(logits_a);
  const Tensor pv = SoftmaxLastDim(logits_v);
  const std::size_t batch = logits_a.dim(0);
  std::vector<double> out(batch);
  for (std::size_t i = 0; i < batch; ++i)
    out[i] = 0.5 * (pa.at(i * 2 + 1) + pv.at(i * 2 + 1));
  return out;
}

std::vector<double> FovbModel::Predict(const Batch& batch) const {
  const ForwardOutput out = Forward(batch, Mode::kInfer, nullptr, {});
  return FakeProbability(out.logits_a, out.logits_v);
}

void FovbModel::ZeroAdaptation() {
  for (const ParameterStore::Entry& e : store_.entries()) {
    if (e.name.starts_with("glfa_") || e.name.starts_with("vbfe.")) {
      Tensor t = e.value;
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
  }
}

}  // namespace fovb
