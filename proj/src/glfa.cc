#include "fovb/glfa.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fovb/ops.h"

namespace fovb {
namespace {

DiffConvKernel BranchKernel(ParameterStore& store, const std::string& name,
                            DiffConvKind kind, std::size_t channels,
                            Rng& rng) {
  const double stddev = 1.0 / std::sqrt(9.0 * static_cast<double>(channels));
  Tensor w = store.Register(
      name + "." + std::string(DiffConvKindName(kind)) + ".weight",
      rng.NormalTensor({channels, channels, 3, 3}, stddev), true);
  return DiffConvKernel(kind, w);
}

// [batch, N, D] head-split offsets with a zero classification row prepended.
Tensor PadClassRow(const Tensor& offsets) {
  const Shape& s = offsets.shape();  // [batch, heads, N, dh]
  return Concat({Tensor::Zeros({s[0], s[1], 1, s[3]}), offsets}, 2);
}

}  // namespace

GlfaAdapter::GlfaAdapter(ParameterStore& store, const std::string& name,
                         std::size_t dim, std::size_t heads,
                         std::size_t reduction, std::size_t grid_rows,
                         std::size_t grid_cols, Rng& rng)
    : dim_(dim),
      heads_(heads),
      reduction_(reduction),
      branches_{BranchKernel(store, name, kGlfaBranches[0], dim / reduction, rng),
                BranchKernel(store, name, kGlfaBranches[1], dim / reduction, rng),
                BranchKernel(store, name, kGlfaBranches[2], dim / reduction, rng),
                BranchKernel(store, name, kGlfaBranches[3], dim / reduction, rng)},
      mask_(BuildHighPassMask(grid_rows, grid_cols)) {
  if (reduction == 0 || dim % reduction != 0) {
    throw std::invalid_argument("reduction factor must divide the dimension");
  }
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("dimension must divide by the head count");
  }
  const std::size_t reduced = dim / reduction;
  down_ = LinearLayer::Create(store, name + ".down", dim, reduced,
                              1.0 / std::sqrt(static_cast<double>(dim)), rng,
                              true);
  proj_q_ = LinearLayer::Zero(store, name + ".proj_q", 5 * reduced, dim, true);
  proj_k_ = LinearLayer::Zero(store, name + ".proj_k", 5 * reduced, dim, true);
  proj_v_ = LinearLayer::Zero(store, name + ".proj_v", 5 * reduced, dim, true);
}

Tensor ForgeryFeatures(const Tensor& grid, const GlfaAdapter& adapter) {
  const Tensor down = adapter.down().Forward(grid);
  std::vector<Tensor> parts;
  parts.reserve(5);
  for (std::size_t i = 0; i < kGlfaBranches.size(); ++i)
    parts.push_back(DiffConv(down, adapter.branch(i)));
  parts.push_back(GfcFilter(down, adapter.mask()));
  return Gelu(Concat(parts, down.rank() - 1));
}

ForgeryOffsets ProjectOffsetsMultihead(const Tensor& features,
                                       const GlfaAdapter& adapter) {
  if (features.rank() != 4) {
    throw DimensionError("features must be [batch, h, w, C], got " +
                         ShapeToString(features.shape()));
  }
  const std::size_t batch = features.dim(0);
  const std::size_t tokens = features.dim(1) * features.dim(2);
  const Tensor flat =
      Reshape(features, {batch, tokens, features.dim(3)});
  return {SplitHeads(adapter.proj_q().Forward(flat), adapter.heads()),
          SplitHeads(adapter.proj_k().Forward(flat), adapter.heads()),
          SplitHeads(adapter.proj_v().Forward(flat), adapter.heads())};
}

TokenSequence GlfaForward(const TokenSequence& x, const AttentionInputs& qkv,
                          const GlfaAdapter& adapter,
                          const MultiHeadAttention& attention) {
  const std::size_t batch = x.tokens.dim(0);
  const std::size_t patches = x.tokens.dim(1) - 1;
  if (patches != x.grid_rows * x.grid_cols ||
      x.grid_rows != adapter.grid_rows() ||
      x.grid_cols != adapter.grid_cols()) {
    throw ContractError("sequence of " + std::to_string(patches) +
                        " patch tokens does not fill the adapter's " +
                        std::to_string(adapter.grid_rows()) + "x" +
                        std::to_string(adapter.grid_cols()) + " grid");
  }
  const Tensor patch_tokens = Slice(x.tokens, 1, 1, patches + 1);
  const Tensor grid = Reshape(
      patch_tokens, {batch, x.grid_rows, x.grid_cols, x.tokens.dim(2)});
  const ForgeryOffsets offsets =
      ProjectOffsetsMultihead(ForgeryFeatures(grid, adapter), adapter);
  const std::size_t heads = attention.heads();
  const Tensor q = Add(SplitHeads(qkv.q, heads), PadClassRow(offsets.dq));
  const Tensor k = Add(SplitHeads(qkv.k, heads), PadClassRow(offsets.dk));
  const Tensor v = Add(SplitHeads(qkv.v, heads), PadClassRow(offsets.dv));
  TokenSequence out = x;
  out.tokens = attention.AttendHeads(q, k, v);
  return out;
}

Tensor GlfaBlockForward(const TransformerBlock& block,
                        const GlfaAdapter& adapter, const TokenSequence& x) {
  TokenSequence normed = x;
  normed.tokens = block.NormAttentionInput(x.tokens);
  const AttentionInputs qkv = block.attention().Project(normed.tokens);
  const TokenSequence attended =
      GlfaForward(normed, qkv, adapter, block.attention());
  return block.Finish(x.tokens, attended.tokens);
}

}  // namespace fovb
