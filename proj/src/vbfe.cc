#include "fovb/vbfe.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fovb/ops.h"

namespace fovb {
namespace {

void CheckSameShape(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  if (a.mean.shape() != b.mean.shape() ||
      a.log_var.shape() != a.mean.shape() ||
      b.log_var.shape() != b.mean.shape()) {
    throw DimensionError("Gaussian shapes differ: " +
                         ShapeToString(a.mean.shape()) + " vs " +
                         ShapeToString(b.mean.shape()));
  }
}

Tensor OneHot(const std::vector<int>& labels) {
  std::vector<double> values(labels.size() * 2, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    values[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::FromVector({labels.size(), 2}, std::move(values));
}

std::vector<std::size_t> ToIndex(const std::vector<int>& labels) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    out[i] = static_cast<std::size_t>(labels[i]);
  }
  return out;
}

Tensor FuseInto(const Tensor& x, const Tensor& s, const Tensor& c,
                const LinearLayer& fuser) {
  const std::size_t batch = x.dim(0), tokens = x.dim(1), dim = x.dim(2);
  const Tensor sc = Reshape(fuser.Forward(Concat({s, c}, 1)), {batch, 1, dim});
  const Tensor pad = Concat({Tensor::Zeros({batch, 1, dim}),
                             BroadcastTo(sc, {batch, tokens - 1, dim})},
                            1);
  return Add(x, pad);
}

}  // namespace

void GaussianMixture::Validate() const {
  if (components.empty() || components.size() != weights.size()) {
    throw std::invalid_argument("mixture needs one weight per component");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("mixture weights must sum to one");
  }
  for (const DiagonalGaussian& g : components) CheckSameShape(g, components[0]);
}

VariableEncoder::VariableEncoder(ParameterStore& store, const std::string& name,
                                 EncoderKind kind, std::size_t dim,
                                 std::size_t heads, std::size_t blocks,
                                 Rng& rng)
    : kind_(kind), dim_(dim) {
  var_token_ = store.Register(name + ".var_token",
                              rng.NormalTensor({1, 1, dim}, 0.1), true);
  if (kind == EncoderKind::kPosterior) {
    label_table_ = store.Register(name + ".label_table",
                                  rng.NormalTensor({2, dim}, 1.0), true);
    cross_norm_ = LayerNormLayer::Create(store, name + ".cross_ln", dim, true);
    cross_ = MultiHeadAttention(store, name + ".cross", dim, heads, rng, true);
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(b), dim,
                         heads, rng, true);
  }
  out_norm_ = LayerNormLayer::Create(store, name + ".out_ln", dim, true);
  mean_head_ = LinearLayer::Zero(store, name + ".mean", dim, dim, true);
  log_var_head_ = LinearLayer::Zero(store, name + ".log_var", dim, dim, true);
}

DiagonalGaussian VariableEncoder::Encode(const Tensor& tokens,
                                         const std::vector<int>* labels) const {
  if (tokens.rank() != 3 || tokens.dim(2) != dim_) {
    throw DimensionError("encoder expects [batch, T, " + std::to_string(dim_) +
                         "], got " + ShapeToString(tokens.shape()));
  }
  const bool posterior = kind_ == EncoderKind::kPosterior;
  if (posterior != (labels != nullptr)) {
    throw ContractError(posterior ? "posterior encoder needs labels"
                                  : "prior encoder must not see labels");
  }
  const std::size_t batch = tokens.dim(0);
  Tensor var = BroadcastTo(var_token_, {batch, 1, dim_});
  if (posterior) {
    if (labels->size() != batch) {
      throw DimensionError("one label per batch row required");
    }
    const Tensor embedded =
        Reshape(MatMul(OneHot(*labels), label_table_), {batch, 1, dim_});
    // Keys: the label embedding followed by the modality tokens.
    const Tensor context = Concat({embedded, tokens}, 1);
    var = Add(var, cross_.Attend(
                       cross_.ProjectCross(cross_norm_.Forward(var), context)));
  }
  Tensor seq = Concat({var, tokens}, 1);
  for (const TransformerBlock& block : blocks_) seq = block.Forward(seq);
  const Tensor readout =
      out_norm_.Forward(Reshape(Slice(seq, 1, 0, 1), {batch, dim_}));
  return {mean_head_.Forward(readout),
          Clamp(log_var_head_.Forward(readout), kLogVarMin, kLogVarMax)};
}

DiagonalGaussian EncodePriorS(const Tensor& x_o, const VariableEncoder& enc) {
  return enc.Encode(x_o, nullptr);
}

DiagonalGaussian EncodePosteriorS(const Tensor& x_o,
                                  const std::vector<int>& y_o,
                                  const VariableEncoder& enc) {
  return enc.Encode(x_o, &y_o);
}

DiagonalGaussian EncodeC(const Tensor& x_a, const Tensor& x_v,
                         const std::vector<int>* labels,
                         const VariableEncoder& enc) {
  return enc.Encode(Concat({x_a, x_v}, 1), labels);
}

Tensor SampleReparam(const DiagonalGaussian& g, const Tensor& noise) {
  return Add(g.mean, Mul(Exp(Scale(g.log_var, 0.5)), noise));
}

Tensor SampleReparam(const DiagonalGaussian& g, Rng& rng) {
  return SampleReparam(g, rng.NormalTensor(g.mean.shape()));
}

Tensor KlGaussian(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  CheckSameShape(q, p);
  const Tensor log_ratio = Scale(Sub(p.log_var, q.log_var), 0.5);
  const Tensor spread = Scale(
      Mul(Add(Exp(q.log_var), Square(Sub(q.mean, p.mean))), Exp(Neg(p.log_var))),
      0.5);
  const Tensor per_dim = AddScalar(Add(log_ratio, spread), -0.5);
  return SumAxis(per_dim, per_dim.rank() - 1);
}

Tensor GaussianLogDensity(const Tensor& x, const DiagonalGaussian& g) {
  const Tensor sq = Mul(Square(Sub(x, g.mean)), Exp(Neg(g.log_var)));
  const Tensor per_dim =
      AddScalar(Add(sq, g.log_var), std::log(2.0 * std::numbers::pi));
  return Scale(SumAxis(per_dim, per_dim.rank() - 1), -0.5);
}

JsEstimate JsDivergenceMcWithNoise(const GaussianMixture& p,
                                   const GaussianMixture& q,
                                   const std::vector<Tensor>& noise_p,
                                   const std::vector<Tensor>& noise_q) {
  p.Validate();
  q.Validate();
  CheckSameShape(p.components[0], q.components[0]);
  if (noise_p.size() != p.components.size() ||
      noise_q.size() != q.components.size()) {
    throw std::invalid_argument("need one noise tensor per component");
  }
  // Mixture M = (P + Q) / 2 as a flat list of weighted components.
  std::vector<const DiagonalGaussian*> m_parts;
  std::vector<double> m_log_weights;
  for (std::size_t i = 0; i < p.components.size(); ++i) {
    if (p.weights[i] <= 0.0) continue;
    m_parts.push_back(&p.components[i]);
    m_log_weights.push_back(std::log(0.5 * p.weights[i]));
  }
  for (std::size_t i = 0; i < q.components.size(); ++i) {
    if (q.weights[i] <= 0.0) continue;
    m_parts.push_back(&q.components[i]);
    m_log_weights.push_back(std::log(0.5 * q.weights[i]));
  }

  Tensor total;
  double row_variance_sum = 0.0;
  std::size_t rows = 0;
  const auto accumulate = [&](const DiagonalGaussian& g, double weight,
                              const Tensor& noise) {
    if (weight <= 0.0) return;
    if (noise.rank() != g.mean.rank() + 1 ||
        !std::equal(noise.shape().begin() + 1, noise.shape().end(),
                    g.mean.shape().begin())) {
      throw DimensionError("noise shape " + ShapeToString(noise.shape()) +
                           " does not match component " +
                           ShapeToString(g.mean.shape()));
    }
    const Tensor x = SampleReparam(g, noise);
    std::vector<Tensor> mixture_terms;
    mixture_terms.reserve(m_parts.size());
    for (std::size_t j = 0; j < m_parts.size(); ++j) {
      mixture_terms.push_back(
          AddScalar(GaussianLogDensity(x, *m_parts[j]), m_log_weights[j]));
    }
    // [n, rows...] pointwise log-ratio; its sample mean estimates KL(g || M).
    const Tensor ratio =
        Sub(GaussianLogDensity(x, g), LogSumExp(mixture_terms));
    const Tensor term = Scale(MeanAxis(ratio, 0), 0.5 * weight);
    total = total.defined() ? Add(total, term) : term;

    const std::size_t n = ratio.dim(0);
    rows = ratio.size() / n;
    if (n > 1) {
      auto values = ratio.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n; ++s) mean += values[s * rows + r];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double d = values[s * rows + r] - mean;
          var += d * d;
        }
        var /= static_cast<double>(n - 1);
        row_variance_sum += 0.25 * weight * weight * var / static_cast<double>(n);
      }
    }
  };
  for (std::size_t i = 0; i < p.components.size(); ++i)
    accumulate(p.components[i], p.weights[i], noise_p[i]);
  for (std::size_t i = 0; i < q.components.size(); ++i)
    accumulate(q.components[i], q.weights[i], noise_q[i]);

  JsEstimate out;
  out.value = Mean(total);
  out.std_error =
      std::sqrt(row_variance_sum) / static_cast<double>(std::max<std::size_t>(rows, 1));
  return out;
}

JsEstimate JsDivergenceMc(const GaussianMixture& p, const GaussianMixture& q,
                          std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw std::invalid_argument("need at least one sample");
  const auto draw = [&](const GaussianMixture& m) {
    std::vector<Tensor> noise;
    for (const DiagonalGaussian& g : m.components) {
      Shape shape = g.mean.shape();
      shape.insert(shape.begin(), n_samples);
      noise.push_back(rng.NormalTensor(shape));
    }
    return noise;
  };
  const std::vector<Tensor> noise_p = draw(p);
  const std::vector<Tensor> noise_q = draw(q);
  return JsDivergenceMcWithNoise(p, q, noise_p, noise_q);
}

Vbfe::Vbfe(ParameterStore& store, const std::string& name, std::size_t dim,
           std::size_t heads, std::size_t encoder_blocks, Rng& rng) {
  const auto make = [&](const std::string& suffix, EncoderKind kind) {
    return VariableEncoder(store, name + "." + suffix, kind, dim, heads,
                           encoder_blocks, rng);
  };
  prior_s_a_ = make("prior_s_a", EncoderKind::kPrior);
  prior_s_v_ = make("prior_s_v", EncoderKind::kPrior);
  prior_c_ = make("prior_c", EncoderKind::kPrior);
  posterior_s_a_ = make("posterior_s_a", EncoderKind::kPosterior);
  posterior_s_v_ = make("posterior_s_v", EncoderKind::kPosterior);
  posterior_c_ = make("posterior_c", EncoderKind::kPosterior);
  const double s = 1.0 / std::sqrt(3.0 * static_cast<double>(dim));
  recon_a_ = LinearLayer::Create(store, name + ".recon_a", 3 * dim, 2, s, rng,
                                 true);
  recon_v_ = LinearLayer::Create(store, name + ".recon_v", 3 * dim, 2, s, rng,
                                 true);
  fuse_a_ = LinearLayer::Zero(store, name + ".fuse_a", 2 * dim, dim, true);
  fuse_v_ = LinearLayer::Zero(store, name + ".fuse_v", 2 * dim, dim, true);
}

Tensor ReconLogLikelihood(const Tensor& x_o, const Tensor& s_o,
                          const Tensor& c, const std::vector<int>& labels,
                          const LinearLayer& head) {
  const Tensor pooled = MeanAxis(x_o, 1);
  const Tensor logits = head.Forward(Concat({pooled, s_o, c}, 1));
  return GatherLastDim(LogSoftmaxLastDim(logits), ToIndex(labels));
}

VbfePass ElboFactorized(const Tensor& x_a, const Tensor& x_v,
                        const LabelSet& labels, const Vbfe& vbfe,
                        std::size_t js_samples, Rng& rng) {
  const DiagonalGaussian q_sa =
      EncodePosteriorS(x_a, labels.y_a, vbfe.posterior_s_a());
  const DiagonalGaussian q_sv =
      EncodePosteriorS(x_v, labels.y_v, vbfe.posterior_s_v());
  const DiagonalGaussian q_c = EncodeC(x_a, x_v, &labels.y, vbfe.posterior_c());
  const DiagonalGaussian p_sa = EncodePriorS(x_a, vbfe.prior_s_a());
  const DiagonalGaussian p_sv = EncodePriorS(x_v, vbfe.prior_s_v());
  const DiagonalGaussian p_c = EncodeC(x_a, x_v, nullptr, vbfe.prior_c());

  VbfePass pass;
  FactorizedLatents& z = pass.latents;
  z.s_a_dist = q_sa;
  z.s_v_dist = q_sv;
  z.c_dist = q_c;
  z.s_a = SampleReparam(q_sa, rng);
  z.s_v = SampleReparam(q_sv, rng);
  z.c = SampleReparam(q_c, rng);

  ElboTerms terms;
  terms.recon = Add(
      Mean(ReconLogLikelihood(x_a, z.s_a, z.c, labels.y, vbfe.recon_a())),
      Mean(ReconLogLikelihood(x_v, z.s_v, z.c, labels.y, vbfe.recon_v())));
  terms.kl_s = Add(Mean(KlGaussian(q_sa, p_sa)), Mean(KlGaussian(q_sv, p_sv)));
  terms.js = JsDivergenceMc(GaussianMixture::Single(q_c),
                            GaussianMixture::Single(p_c), js_samples, rng)
                 .value;
  terms.elbo = Sub(Sub(terms.recon, terms.kl_s), terms.js);
  pass.elbo = terms;
  pass.prior.s_a_dist = p_sa;
  pass.prior.s_v_dist = p_sv;
  pass.prior.c_dist = p_c;
  pass.prior.s_a = p_sa.mean;
  pass.prior.s_v = p_sv.mean;
  pass.prior.c = p_c.mean;
  return pass;
}

FactorizedLatents PriorLatents(const Tensor& x_a, const Tensor& x_v,
                               const Vbfe& vbfe) {
  FactorizedLatents z;
  z.s_a_dist = EncodePriorS(x_a, vbfe.prior_s_a());
  z.s_v_dist = EncodePriorS(x_v, vbfe.prior_s_v());
  z.c_dist = EncodeC(x_a, x_v, nullptr, vbfe.prior_c());
  z.s_a = z.s_a_dist.mean;
  z.s_v = z.s_v_dist.mean;
  z.c = z.c_dist.mean;
  return z;
}

FactorizedLatents PosteriorLatents(const Tensor& x_a, const Tensor& x_v,
                                   const LabelSet& labels, const Vbfe& vbfe) {
  FactorizedLatents z;
  z.s_a_dist = EncodePosteriorS(x_a, labels.y_a, vbfe.posterior_s_a());
  z.s_v_dist = EncodePosteriorS(x_v, labels.y_v, vbfe.posterior_s_v());
  z.c_dist = EncodeC(x_a, x_v, &labels.y, vbfe.posterior_c());
  z.s_a = z.s_a_dist.mean;
  z.s_v = z.s_v_dist.mean;
  z.c = z.c_dist.mean;
  return z;
}

VbfePass PriorMeanLatents(const Tensor& x_a, const Tensor& x_v,
                          const Vbfe& vbfe) {
  VbfePass pass;
  pass.latents = PriorLatents(x_a, x_v, vbfe);
  return pass;
}

std::pair<Tensor, Tensor> AdaptLatents(const Tensor& x_a, const Tensor& x_v,
                                       const FactorizedLatents& latents,
                                       const Vbfe& vbfe) {
  return {FuseInto(x_a, latents.s_a, latents.c, vbfe.fuse_a()),
          FuseInto(x_v, latents.s_v, latents.c, vbfe.fuse_v())};
}

Tensor OrthogonalityLoss(const FactorizedLatents& latents) {
  const auto dot_sq = [](const Tensor& a, const Tensor& b) {
    return Square(SumAxis(Mul(a, b), a.rank() - 1));
  };
  return Mean(Add(Add(dot_sq(latents.c, latents.s_a),
                      dot_sq(latents.c, latents.s_v)),
                  dot_sq(latents.s_a, latents.s_v)));
}

DiscreteEvidence DiscreteEvidenceDecomposition(
    const std::array<double, 2>& prior_z,
    const std::array<double, 2>& likelihood_y_given_z,
    const std::array<double, 2>& q_z) {
  const double evidence = prior_z[0] * likelihood_y_given_z[0] +
                          prior_z[1] * likelihood_y_given_z[1];
  if (!(evidence > 0.0)) {
    throw std::invalid_argument("observation has zero probability");
  }
  DiscreteEvidence out;
  out.log_evidence = std::log(evidence);
  for (std::size_t z = 0; z < 2; ++z) {
    if (q_z[z] <= 0.0) continue;
    const double joint = prior_z[z] * likelihood_y_given_z[z];
    const double posterior = joint / evidence;
    out.elbo += q_z[z] * (std::log(likelihood_y_given_z[z]) +
                          std::log(prior_z[z]) - std::log(q_z[z]));
    out.kl_to_posterior += q_z[z] * (std::log(q_z[z]) - std::log(posterior));
  }
  return out;
}

}  // namespace fovb
