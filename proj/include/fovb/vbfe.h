#ifndef FOVB_VBFE_H_
#define FOVB_VBFE_H_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fovb/nn.h"
#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

// Diagonal Gaussian over the last axis. Leading axes (if any) index
// independent rows, e.g. [batch, D].
struct DiagonalGaussian {
  Tensor mean;
  Tensor log_var;

  std::size_t dim() const { return mean.dim(mean.rank() - 1); }
};

struct GaussianMixture {
  std::vector<DiagonalGaussian> components;
  std::vector<double> weights;

  static GaussianMixture Single(DiagonalGaussian g) {
    return {{std::move(g)}, {1.0}};
  }
  // Throws std::invalid_argument unless weights are nonnegative, sum to one
  // within 1e-12 and match the component count and shapes.
  void Validate() const;
};

enum class EncoderKind { kPrior, kPosterior };

// Variable-token encoder: a learnable token is prepended to the input
// tokens, run through two trainable blocks, and read out into (mean,
// log_var). The posterior variant first lets the token cross-attend to an
// embedding of the binary label.
class VariableEncoder {
 public:
  VariableEncoder() = default;
  VariableEncoder(ParameterStore& store, const std::string& name,
                  EncoderKind kind, std::size_t dim, std::size_t heads,
                  std::size_t blocks, Rng& rng);

  EncoderKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }

  // tokens: [batch, T, D]. labels are required iff kind() is kPosterior.
  DiagonalGaussian Encode(const Tensor& tokens,
                          const std::vector<int>* labels) const;

  const LinearLayer& mean_head() const { return mean_head_; }
  const LinearLayer& log_var_head() const { return log_var_head_; }

 private:
  EncoderKind kind_ = EncoderKind::kPrior;
  std::size_t dim_ = 0;
  Tensor var_token_;  // [1, 1, D]
  std::vector<TransformerBlock> blocks_;
  LayerNormLayer out_norm_;
  LinearLayer mean_head_, log_var_head_;
  // Posterior only.
  Tensor label_table_;  // [2, D]
  LayerNormLayer cross_norm_;
  MultiHeadAttention cross_;
};

// x_o excludes the classification token.
DiagonalGaussian EncodePriorS(const Tensor& x_o, const VariableEncoder& enc);
DiagonalGaussian EncodePosteriorS(const Tensor& x_o,
                                  const std::vector<int>& y_o,
                                  const VariableEncoder& enc);
// Audio and visual tokens are concatenated along the token axis. `labels`
// must be given for a posterior encoder and omitted for a prior encoder.
DiagonalGaussian EncodeC(const Tensor& x_a, const Tensor& x_v,
                         const std::vector<int>* labels,
                         const VariableEncoder& enc);

// mean + exp(log_var / 2) * eps with eps ~ N(0, I).
Tensor SampleReparam(const DiagonalGaussian& g, Rng& rng);
Tensor SampleReparam(const DiagonalGaussian& g, const Tensor& noise);

// Closed-form KL(q || p) summed over the last axis; one value per leading
// row (a single vector gives shape [1]).
Tensor KlGaussian(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Log density of x under g, summed over the last axis. x may carry extra
// leading sample axes that broadcast against g.
Tensor GaussianLogDensity(const Tensor& x, const DiagonalGaussian& g);

struct JsEstimate {
  Tensor value;        // scalar, averaged over leading rows
  double std_error = 0.0;
};

// Monte-Carlo Jensen-Shannon divergence between two mixtures:
// 1/2 sum_i pi^P_i KL(P_i || M) + 1/2 sum_j pi^Q_j KL(Q_j || M), M = (P+Q)/2,
// with `n_samples` reparameterized draws per component.
JsEstimate JsDivergenceMc(const GaussianMixture& p, const GaussianMixture& q,
                          std::size_t n_samples, Rng& rng);
// Same estimator with explicit standard-normal noise per component, each
// tensor shaped [n, ...component shape]. Swapping (p, noise_p) with
// (q, noise_q) gives a mirrored estimate.
JsEstimate JsDivergenceMcWithNoise(const GaussianMixture& p,
                                   const GaussianMixture& q,
                                   const std::vector<Tensor>& noise_p,
                                   const std::vector<Tensor>& noise_q);

struct FactorizedLatents {
  Tensor c, s_a, s_v;  // [batch, D]
  DiagonalGaussian c_dist, s_a_dist, s_v_dist;
};

struct ElboTerms {
  Tensor recon;  // sum over modalities of the batch-mean log-likelihood
  Tensor kl_s;   // sum over modalities of the batch-mean KL
  Tensor js;     // batch-mean JS between posterior and prior of c
  Tensor elbo;   // recon - kl_s - js
};

struct LabelSet {
  std::vector<int> y, y_a, y_v;
};

// Latent encoders, reconstruction heads and fusers.
class Vbfe {
 public:
  Vbfe() = default;
  Vbfe(ParameterStore& store, const std::string& name, std::size_t dim,
       std::size_t heads, std::size_t encoder_blocks, Rng& rng);

  const VariableEncoder& prior_s_a() const { return prior_s_a_; }
  const VariableEncoder& prior_s_v() const { return prior_s_v_; }
  const VariableEncoder& prior_c() const { return prior_c_; }
  const VariableEncoder& posterior_s_a() const { return posterior_s_a_; }
  const VariableEncoder& posterior_s_v() const { return posterior_s_v_; }
  const VariableEncoder& posterior_c() const { return posterior_c_; }
  const LinearLayer& recon_a() const { return recon_a_; }
  const LinearLayer& recon_v() const { return recon_v_; }
  const LinearLayer& fuse_a() const { return fuse_a_; }
  const LinearLayer& fuse_v() const { return fuse_v_; }

 private:
  VariableEncoder prior_s_a_, prior_s_v_, prior_c_;
  VariableEncoder posterior_s_a_, posterior_s_v_, posterior_c_;
  LinearLayer recon_a_, recon_v_;  // [3D -> 2]
  LinearLayer fuse_a_, fuse_v_;    // [2D -> D]
};

// log p(label | x_o, s_o, c): log-softmax of the 2-class head over
// [mean-pooled tokens; s_o; c], per batch row.
Tensor ReconLogLikelihood(const Tensor& x_o, const Tensor& s_o,
                          const Tensor& c, const std::vector<int>& labels,
                          const LinearLayer& head);

struct VbfePass {
  FactorizedLatents latents;
  FactorizedLatents prior;  // prior distributions; codes are prior means
  std::optional<ElboTerms> elbo;  // training path only
};

// Training path: posterior encoders, one reparameterized sample per code,
// and the factorized ELBO. x_a / x_v exclude the classification token.
VbfePass ElboFactorized(const Tensor& x_a, const Tensor& x_v,
                        const LabelSet& labels, const Vbfe& vbfe,
                        std::size_t js_samples, Rng& rng);

// Inference path: prior means, no sampling.
VbfePass PriorMeanLatents(const Tensor& x_a, const Tensor& x_v,
                          const Vbfe& vbfe);

// Prior-path parameters of all three codes (used for latent dumps).
FactorizedLatents PriorLatents(const Tensor& x_a, const Tensor& x_v,
                               const Vbfe& vbfe);

// Posterior-path parameters, codes set to the posterior means.
FactorizedLatents PosteriorLatents(const Tensor& x_a, const Tensor& x_v,
                                   const LabelSet& labels, const Vbfe& vbfe);

// sc_o = fuse_o([s_o; c]) added to every non-classification token.
// Sequences are full [batch, N + 1, D] block outputs.
std::pair<Tensor, Tensor> AdaptLatents(const Tensor& x_a, const Tensor& x_v,
                                       const FactorizedLatents& latents,
                                       const Vbfe& vbfe);

// (c.s_a)^2 + (c.s_v)^2 + (s_a.s_v)^2 averaged over the batch.
Tensor OrthogonalityLoss(const FactorizedLatents& latents);

// Fully discrete check of the evidence decomposition with a binary latent:
// log p(y) = ELBO(q) + KL(q || p(z | y)).
struct DiscreteEvidence {
  double log_evidence = 0.0;
  double elbo = 0.0;
  double kl_to_posterior = 0.0;
};
DiscreteEvidence DiscreteEvidenceDecomposition(
    const std::array<double, 2>& prior_z,
    const std::array<double, 2>& likelihood_y_given_z,
    const std::array<double, 2>& q_z);

}  // namespace fovb

#endif  // FOVB_VBFE_H_
