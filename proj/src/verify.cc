#include "fovb/verify.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fovb/fft.h"
#include "fovb/forgery_conv.h"
#include "fovb/glfa.h"
#include "fovb/model.h"
#include "fovb/nn.h"
#include "fovb/ops.h"
#include "fovb/synth.h"
#include "fovb/train.h"
#include "fovb/vbfe.h"

namespace fovb {
namespace {

constexpr std::size_t kOpCoords = 64;
constexpr std::size_t kCompositeCoords = 64;

// Weighted sum with fixed random weights: a scalar whose gradient touches
// every output element with a different coefficient.
GradCheckEntry CheckOp(const std::string& name, const std::function<Tensor()>& f,
                       const std::vector<GradInput>& inputs, Rng& rng,
                       std::size_t max_coords = kOpCoords) {
  const Tensor weights = rng.NormalTensor(f().shape());
  return CheckGradient(
      name, [&] { return Sum(Mul(f(), weights)); }, inputs, max_coords, rng);
}

Tensor Param(Rng& rng, const Shape& shape, double stddev = 1.0) {
  return rng.NormalTensor(shape, stddev, true);
}

// Redraws every trainable entry of `store` whose name starts with `prefix`.
void Randomize(ParameterStore& store, const std::string& prefix, double stddev,
               Rng& rng) {
  for (const ParameterStore::Entry& e : store.entries()) {
    if (!e.trainable || !e.name.starts_with(prefix)) continue;
    Tensor t = e.value;
    for (double& v : t.mutable_data()) v += rng.Normal(0.0, stddev);
  }
}

std::vector<GradInput> TrainableInputs(const ParameterStore& store,
                                       const std::string& prefix) {
  std::vector<GradInput> out;
  for (const ParameterStore::Entry& e : store.entries()) {
    if (e.trainable && e.name.starts_with(prefix)) out.push_back({e.name, e.value});
  }
  return out;
}

void OpsSuite(GradCheckReport& report, Rng& rng) {
  auto add = [&](GradCheckEntry e) { report.entries.push_back(std::move(e)); };

  {
    Tensor a = Param(rng, {3, 4}), b = Param(rng, {4});
    add(CheckOp("add", [&] { return Add(a, b); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor a = Param(rng, {2, 1, 3}), b = Param(rng, {4, 1});
    add(CheckOp("sub", [&] { return Sub(a, b); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor a = Param(rng, {3, 4}), b = Param(rng, {3, 1});
    add(CheckOp("mul", [&] { return Mul(a, b); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor x = Param(rng, {3, 4});
    add(CheckOp("scale", [&] { return Neg(AddScalar(Scale(x, 1.7), 0.3)); },
                {{"x", x}}, rng));
    add(CheckOp("exp", [&] { return Exp(x); }, {{"x", x}}, rng));
    add(CheckOp("square", [&] { return Square(x); }, {{"x", x}}, rng));
    add(CheckOp("softplus", [&] { return Softplus(x); }, {{"x", x}}, rng));
    add(CheckOp("gelu", [&] { return Gelu(x); }, {{"x", x}}, rng));
  }
  {
    Tensor x = rng.UniformTensor({3, 4}, 0.5, 2.0, true);
    add(CheckOp("log", [&] { return Log(x); }, {{"x", x}}, rng));
  }
  {
    // Values kept away from the clamp bounds, where the derivative jumps.
    std::vector<double> values(12);
    for (double& v : values) {
      do {
        v = rng.Uniform(-2.0, 2.0);
      } while (std::abs(std::abs(v) - 1.0) < 1e-3);
    }
    Tensor x = Tensor::FromVector({3, 4}, values, true);
    add(CheckOp("clamp", [&] { return Clamp(x, -1.0, 1.0); }, {{"x", x}}, rng));
  }
  {
    Tensor a = Param(rng, {2, 3}), b = Param(rng, {2, 3}), c = Param(rng, {2, 3});
    add(CheckOp("logsumexp", [&] { return LogSumExp({a, b, c}); },
                {{"a", a}, {"b", b}, {"c", c}}, rng));
  }
  {
    Tensor x = Param(rng, {2, 3, 4});
    add(CheckOp("sum", [&] { return Sum(x); }, {{"x", x}}, rng));
    add(CheckOp("mean", [&] { return Mean(x); }, {{"x", x}}, rng));
    add(CheckOp("sum_axis", [&] { return SumAxis(x, 1); }, {{"x", x}}, rng));
    add(CheckOp("mean_axis", [&] { return MeanAxis(x, 0, true); }, {{"x", x}}, rng));
    add(CheckOp("reshape", [&] { return Reshape(x, {6, 4}); }, {{"x", x}}, rng));
    add(CheckOp("permute", [&] { return Permute(x, {2, 0, 1}); }, {{"x", x}}, rng));
    add(CheckOp("slice", [&] { return Slice(x, 2, 1, 3); }, {{"x", x}}, rng));
    add(CheckOp("broadcast_to", [&] { return BroadcastTo(Slice(x, 0, 0, 1), {3, 3, 4}); },
                {{"x", x}}, rng));
  }
  {
    Tensor a = Param(rng, {2, 3}), b = Param(rng, {2, 2});
    add(CheckOp("concat", [&] { return Concat({a, b}, 1); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor a = Param(rng, {3, 4}), b = Param(rng, {4, 5});
    add(CheckOp("matmul", [&] { return MatMul(a, b); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor x = Param(rng, {2, 3, 4}), w = Param(rng, {4, 5}), b = Param(rng, {5});
    add(CheckOp("linear", [&] { return Linear(x, w, b); },
                {{"x", x}, {"w", w}, {"bias", b}}, rng));
  }
  for (int mode = 0; mode < 4; ++mode) {
    const bool ta = mode & 1, tb = mode & 2;
    Tensor a = Param(rng, ta ? Shape{2, 4, 3} : Shape{2, 3, 4});
    Tensor b = Param(rng, tb ? Shape{2, 5, 4} : Shape{2, 4, 5});
    add(CheckOp("batch_matmul" + std::string(ta ? "_ta" : "") + (tb ? "_tb" : ""),
                [&] { return BatchMatMul(a, b, ta, tb); }, {{"a", a}, {"b", b}}, rng));
  }
  {
    Tensor x = Param(rng, {3, 5});
    add(CheckOp("softmax", [&] { return SoftmaxLastDim(x); }, {{"x", x}}, rng));
    add(CheckOp("log_softmax", [&] { return LogSoftmaxLastDim(x); }, {{"x", x}}, rng));
    add(CheckOp("gather_last_dim", [&] { return GatherLastDim(x, {4, 0, 2}); },
                {{"x", x}}, rng));
  }
  {
    Tensor x = Param(rng, {3, 6}), g = Param(rng, {6}), b = Param(rng, {6});
    add(CheckOp("layer_norm", [&] { return LayerNorm(x, g, b); },
                {{"x", x}, {"gain", g}, {"bias", b}}, rng));
  }
  {
    Tensor x = Param(rng, {2, 5, 6});
    add(CheckOp("fft2", [&] { return Fft2(x); }, {{"x", x}}, rng));
    Tensor y = Param(rng, {1, 8, 8});
    add(CheckOp("fft2_radix2", [&] { return Fft2(y); }, {{"x", y}}, rng));
    Tensor s = Param(rng, {2, 4, 3, 2});
    add(CheckOp("ifft2", [&] { return Ifft2(s); }, {{"spectrum", s}}, rng));
  }
  for (DiffConvKind kind : {DiffConvKind::kVanilla, DiffConvKind::kAdc,
                            DiffConvKind::kCdc, DiffConvKind::kRdc,
                            DiffConvKind::kSoc}) {
    Tensor x = Param(rng, {1, 5, 6, 2});
    const DiffConvKernel k = DiffConvKernel::Random(kind, 3, 2, 0.3, rng);
    add(CheckOp("conv_" + std::string(DiffConvKindName(kind)),
                [&] { return DiffConv(x, k); }, {{"x", x}, {"weights", k.weights()}},
                rng));
  }
  {
    Tensor x = Param(rng, {2, 6, 5, 3});
    const HighPassMask mask = BuildHighPassMask(6, 5);
    add(CheckOp("gfc_filter", [&] { return GfcFilter(x, mask); }, {{"x", x}}, rng));
  }
  {
    Tensor q = Param(rng, {1, 2, 3, 4}), k = Param(rng, {1, 2, 5, 4}),
           v = Param(rng, {1, 2, 5, 4});
    add(CheckOp("attention", [&] { return ScaledDotProductAttention(q, k, v); },
                {{"q", q}, {"k", k}, {"v", v}}, rng));
  }
  {
    DiagonalGaussian q{Param(rng, {3, 4}), Param(rng, {3, 4}, 0.5)};
    DiagonalGaussian p{Param(rng, {3, 4}), Param(rng, {3, 4}, 0.5)};
    const std::vector<GradInput> in = {{"q.mean", q.mean},
                                       {"q.log_var", q.log_var},
                                       {"p.mean", p.mean},
                                       {"p.log_var", p.log_var}};
    add(CheckOp("kl_gaussian", [&] { return KlGaussian(q, p); }, in, rng));
    Tensor x = Param(rng, {5, 3, 4});
    std::vector<GradInput> with_x = {{"x", x}, {"q.mean", q.mean}, {"q.log_var", q.log_var}};
    add(CheckOp("gaussian_log_density", [&] { return GaussianLogDensity(x, q); },
                with_x, rng));
    const Tensor noise = rng.NormalTensor({3, 4});
    add(CheckOp("sample_reparam", [&] { return SampleReparam(q, noise); },
                {{"mean", q.mean}, {"log_var", q.log_var}}, rng));

    const std::vector<Tensor> np = {rng.NormalTensor({16, 3, 4})};
    const std::vector<Tensor> nq = {rng.NormalTensor({16, 3, 4})};
    add(CheckOp("js_mc", [&] {
          return JsDivergenceMcWithNoise(GaussianMixture::Single(q),
                                         GaussianMixture::Single(p), np, nq).value;
        }, in, rng));

    DiagonalGaussian q2{Param(rng, {3, 4}), Param(rng, {3, 4}, 0.5)};
    const GaussianMixture mix{{q, q2}, {0.3, 0.7}};
    const std::vector<Tensor> nm = {rng.NormalTensor({16, 3, 4}),
                                    rng.NormalTensor({16, 3, 4})};
    std::vector<GradInput> mix_in = in;
    mix_in.push_back({"q2.mean", q2.mean});
    mix_in.push_back({"q2.log_var", q2.log_var});
    add(CheckOp("js_mc_mixture", [&] {
          return JsDivergenceMcWithNoise(mix, GaussianMixture::Single(p), nm, nq).value;
        }, mix_in, rng));
  }
}

void GlfaSuite(GradCheckReport& report, Rng& rng) {
  ParameterStore store;
  const std::size_t dim = 8, heads = 2, grid = 4;
  TransformerBlock block(store, "block", dim, heads, rng, false);
  GlfaAdapter adapter(store, "glfa", dim, heads, 2, grid, grid, rng);
  Randomize(store, "glfa", 0.3, rng);

  TokenSequence x;
  x.tokens = Param(rng, {2, grid * grid + 1, dim});
  x.grid_rows = grid;
  x.grid_cols = grid;
  const std::vector<GradInput> params = TrainableInputs(store, "glfa");

  Tensor features_in = Param(rng, {2, grid, grid, dim});
  std::vector<GradInput> feature_inputs = params;
  feature_inputs.insert(feature_inputs.begin(), {"grid", features_in});
  report.entries.push_back(CheckOp(
      "forgery_features", [&] { return ForgeryFeatures(features_in, adapter); },
      feature_inputs, rng, kCompositeCoords));

  std::vector<GradInput> block_inputs = params;
  block_inputs.insert(block_inputs.begin(), {"x", x.tokens});
  report.entries.push_back(CheckOp(
      "glfa_block", [&] { return GlfaBlockForward(block, adapter, x); },
      block_inputs, rng, kCompositeCoords));
}

void VbfeSuite(GradCheckReport& report, Rng& rng, std::uint64_t seed) {
  ParameterStore store;
  const std::size_t dim = 8;
  const Vbfe vbfe(store, "vbfe", dim, 2, 1, rng);
  Randomize(store, "vbfe", 0.2, rng);
  Tensor x_a = Param(rng, {2, 16, dim});
  Tensor x_v = Param(rng, {2, 16, dim});
  Tensor seq_a = Param(rng, {2, 17, dim});
  Tensor seq_v = Param(rng, {2, 17, dim});
  const LabelSet labels{{1, 0}, {1, 0}, {0, 0}};
  const Tensor wa = rng.NormalTensor({2, 17, dim});
  const Tensor wv = rng.NormalTensor({2, 17, dim});

  // Fixed noise: the rng is rebuilt from the same seed on every evaluation.
  const auto loss = [&] {
    Rng noise(seed ^ 0xE1B0ULL);
    const VbfePass pass = ElboFactorized(x_a, x_v, labels, vbfe, 4, noise);
    const auto [a, v] = AdaptLatents(seq_a, seq_v, pass.latents, vbfe);
    return Add(Add(Neg(pass.elbo->elbo), OrthogonalityLoss(pass.latents)),
               Add(Sum(Mul(a, wa)), Sum(Mul(v, wv))));
  };
  std::vector<GradInput> inputs = {{"x_a", x_a}, {"x_v", x_v}, {"seq_a", seq_a},
                                   {"seq_v", seq_v}};
  report.entries.push_back(
      CheckGradient("vbfe_inputs", loss, inputs, kCompositeCoords, rng));
  for (const char* group : {"vbfe.prior_", "vbfe.posterior_", "vbfe.recon_",
                            "vbfe.fuse_"}) {
    report.entries.push_back(CheckGradient(std::string(group) + "*", loss,
                                           TrainableInputs(store, group),
                                           kCompositeCoords, rng));
  }
}

void FullSuite(GradCheckReport& report, Rng& rng, std::uint64_t seed) {
  ModelConfig config;
  FovbModel model(config, seed);
  Randomize(model.params(), "", 0.05, rng);
  const PreparedDataset data = Prepare(SynthGenerate(4, seed));
  const Batch batch = data.MakeBatch({0, 1, 2, 3});

  const auto loss = [&] {
    Rng noise(seed ^ 0xF011ULL);
    ForwardOptions options;
    options.mc_samples = 4;
    const ForwardOutput out = model.Forward(batch, Mode::kTrain, &noise, options);
    return LossTotal(out, batch.labels->y, 0.1, OrthCodes::kSampled).loss;
  };
  for (const char* group : {"embed_", "glfa_", "vbfe.", "head_"}) {
    report.entries.push_back(CheckGradient(
        std::string("full:") + group + "*", loss,
        TrainableInputs(model.params(), group), kCompositeCoords / 4, rng));
  }
}

std::string Number(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << std::scientific << v;
  return out.str();
}

double LogNormalPdf(double x, const Gaussian1d& g) {
  const double var = std::exp(g.log_var);
  const double d = x - g.mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi) + g.log_var + d * d / var);
}

double LogMixturePdf(double x, const std::vector<Gaussian1d>& parts,
                     const std::vector<double>& weights) {
  double top = -INFINITY;
  std::vector<double> terms(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    terms[i] = std::log(weights[i]) + LogNormalPdf(x, parts[i]);
    top = std::max(top, terms[i]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s);
}

// Integration window covering every component to 12 standard deviations.
std::pair<double, double> Window(const std::vector<Gaussian1d>& parts) {
  double lo = INFINITY, hi = -INFINITY;
  for (const Gaussian1d& g : parts) {
    const double sd = std::exp(0.5 * g.log_var);
    lo = std::min(lo, g.mean - 12.0 * sd);
    hi = std::max(hi, g.mean + 12.0 * sd);
  }
  return {lo, hi};
}

DiagonalGaussian ToTensor(const Gaussian1d& g) {
  return {Tensor::FromVector({1}, {g.mean}), Tensor::FromVector({1}, {g.log_var})};
}

Gaussian1d RandomGaussian(Rng& rng) {
  return {rng.Uniform(-2.0, 2.0), rng.Uniform(-1.5, 1.5)};
}

}  // namespace

double GradRelativeError(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckEntry CheckGradient(const std::string& name,
                             const std::function<Tensor()>& loss,
                             const std::vector<GradInput>& inputs,
                             std::size_t max_coords, Rng& rng) {
  GradCheckEntry entry;
  entry.name = name;
  std::vector<std::vector<double>> analytic;
  {
    for (const GradInput& in : inputs) Tensor(in.value).ZeroGrad();
    const Tensor l = loss();
    Backward(l);
    for (const GradInput& in : inputs) {
      const auto g = in.value.grad();
      analytic.emplace_back(g.begin(), g.end());
      analytic.back().resize(in.value.size(), 0.0);
      Tensor(in.value).ZeroGrad();
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const GradInput& in : inputs) total += in.value.size();
  if (total <= max_coords) {
    for (std::size_t i = 0; i < inputs.size(); ++i)
      for (std::size_t j = 0; j < inputs[i].value.size(); ++j) coords.emplace_back(i, j);
  } else {
    for (std::size_t n = 0; n < max_coords; ++n) {
      std::size_t flat = rng.Index(total), i = 0;
      while (flat >= inputs[i].value.size()) flat -= inputs[i++].value.size();
      coords.emplace_back(i, flat);
    }
  }

  for (const auto& [i, j] : coords) {
    Tensor t = inputs[i].value;
    const double saved = t.mutable_data()[j];
    t.mutable_data()[j] = saved + kGradStep;
    const double up = loss().item();
    t.mutable_data()[j] = saved - kGradStep;
    const double down = loss().item();
    t.mutable_data()[j] = saved;
    const double numeric = (up - down) / (2.0 * kGradStep);
    const double err = GradRelativeError(analytic[i][j], numeric);
    if (entry.worst.empty() || !(err <= entry.max_rel_error)) {
      entry.max_rel_error = std::isnan(err) ? INFINITY : err;
      entry.worst = inputs[i].name + "[" + std::to_string(j) + "]";
      entry.worst_analytic = analytic[i][j];
      entry.worst_numeric = numeric;
    }
  }
  entry.coordinates = coords.size();
  return entry;
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const GradCheckEntry& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

bool GradCheckReport::passed() const {
  return !entries.empty() && max_rel_error() < tolerance;
}

std::string GradCheckReport::Format() const {
  std::ostringstream out;
  out << "gradcheck scope=" << scope << " tolerance=" << Number(tolerance)
      << " step=" << Number(kGradStep) << "\n";
  for (const GradCheckEntry& e : entries) {
    out << "  " << std::left << std::setw(28) << e.name << " coords=" << std::setw(4)
        << e.coordinates << " max_rel_err=" << Number(e.max_rel_error)
        << " worst=" << e.worst << " analytic=" << Number(e.worst_analytic)
        << " numeric=" << Number(e.worst_numeric)
        << (e.max_rel_error < tolerance ? "" : "  FAIL") << "\n";
  }
  out << (passed() ? "PASS" : "FAIL") << " scope=" << scope
      << " max_rel_err=" << Number(max_rel_error()) << "\n";
  return out.str();
}

bool IsGradCheckScope(const std::string& scope) {
  return scope == "ops" || scope == "glfa" || scope == "vbfe" || scope == "full";
}

GradCheckReport RunGradCheck(const std::string& scope, std::uint64_t seed) {
  if (!IsGradCheckScope(scope)) {
    throw std::invalid_argument("unknown gradcheck scope '" + scope + "'");
  }
  GradCheckReport report;
  report.scope = scope;
  report.tolerance = scope == "ops" ? kOpsTolerance : kCompositeTolerance;
  Rng rng(seed);
  if (scope == "ops") OpsSuite(report, rng);
  else if (scope == "glfa") GlfaSuite(report, rng);
  else if (scope == "vbfe") VbfeSuite(report, rng, seed);
  else FullSuite(report, rng, seed);
  return report;
}

double Simpson(const std::function<double(double)>& f, double lo, double hi,
               std::size_t intervals) {
  const std::size_t n = intervals + (intervals % 2);
  const double h = (hi - lo) / static_cast<double>(n);
  double sum = f(lo) + f(hi);
  for (std::size_t i = 1; i < n; ++i) {
    sum += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
  }
  return sum * h / 3.0;
}

double KlQuadrature(const Gaussian1d& q, const Gaussian1d& p) {
  const auto [lo, hi] = Window({q});
  return Simpson(
      [&](double x) {
        const double lq = LogNormalPdf(x, q);
        return std::exp(lq) * (lq - LogNormalPdf(x, p));
      },
      lo, hi, 20000);
}

double JsQuadrature(const std::vector<Gaussian1d>& p,
                    const std::vector<double>& wp,
                    const std::vector<Gaussian1d>& q,
                    const std::vector<double>& wq) {
  std::vector<Gaussian1d> m = p;
  m.insert(m.end(), q.begin(), q.end());
  std::vector<double> wm;
  for (double w : wp) wm.push_back(0.5 * w);
  for (double w : wq) wm.push_back(0.5 * w);
  const auto kl_to_m = [&](const Gaussian1d& g) {
    const auto [lo, hi] = Window({g});
    return Simpson(
        [&](double x) {
          const double lg = LogNormalPdf(x, g);
          return std::exp(lg) * (lg - LogMixturePdf(x, m, wm));
        },
        lo, hi, 40000);
  };
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) js += 0.5 * wp[i] * kl_to_m(p[i]);
  for (std::size_t i = 0; i < q.size(); ++i) js += 0.5 * wq[i] * kl_to_m(q[i]);
  return js;
}

bool DivCheckReport::passed() const {
  for (const DivCheckItem& item : items) {
    if (!item.informational && !item.passed) return false;
  }
  return true;
}

std::string DivCheckReport::Format() const {
  std::ostringstream out;
  for (const DivCheckItem& item : items) {
    out << (item.informational ? "INFO" : item.passed ? "PASS" : "FAIL") << " "
        << item.name << ": " << item.detail << "\n";
  }
  out << (passed() ? "PASS" : "FAIL") << " divcheck\n";
  return out.str();
}

DivCheckReport RunDivCheck(const DivCheckOptions& options) {
  if (options.samples < 2) throw std::invalid_argument("divcheck needs >= 2 samples");
  DivCheckReport report;
  Rng rng(options.seed);
  const double ln2 = std::numbers::ln2;

  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Gaussian1d q = RandomGaussian(rng), p = RandomGaussian(rng);
      const double closed = KlGaussian(ToTensor(q), ToTensor(p)).item();
      worst = std::max(worst, std::abs(closed - KlQuadrature(q, p)));
    }
    report.items.push_back({"kl_vs_quadrature", worst < 1e-6, false,
                            "20 pairs, max |closed - quadrature| = " + Number(worst)});
  }

  {
    // Single Gaussians plus one two-component mixture.
    bool ok = true, bounded = true;
    std::ostringstream detail;
    for (int i = 0; i < 4; ++i) {
      std::vector<Gaussian1d> p = {RandomGaussian(rng)};
      std::vector<double> wp = {1.0};
      if (i == 3) {
        p.push_back(RandomGaussian(rng));
        wp = {0.4, 0.6};
      }
      const std::vector<Gaussian1d> q = {RandomGaussian(rng)};
      GaussianMixture mp, mq = GaussianMixture::Single(ToTensor(q[0]));
      for (std::size_t k = 0; k < p.size(); ++k) mp.components.push_back(ToTensor(p[k]));
      mp.weights = wp;
      const JsEstimate est = JsDivergenceMc(mp, mq, options.samples, rng);
      const double exact = JsQuadrature(p, wp, q, {1.0});
      const double z = std::abs(est.value.item() - exact) / est.std_error;
      ok = ok && z < 3.0;
      bounded = bounded && est.value.item() <= ln2 + 3.0 * est.std_error;
      detail << (i ? "; " : "") << "mc=" << Number(est.value.item())
             << " quad=" << Number(exact) << " se=" << Number(est.std_error)
             << " z=" << std::fixed << std::setprecision(2) << z
             << std::defaultfloat;
    }
    report.items.push_back({"js_vs_quadrature", ok, false, detail.str()});
    report.items.push_back({"js_bound", bounded, false,
                            "every estimate <= ln 2 + 3 standard errors"});
  }

  {
    const Gaussian1d g = RandomGaussian(rng);
    const GaussianMixture m = GaussianMixture::Single(ToTensor(g));
    const JsEstimate est = JsDivergenceMc(m, m, options.samples, rng);
    const double v = est.value.item();
    report.items.push_back({"js_self", std::abs(v) <= 3.0 * est.std_error + 1e-15,
                            false,
                            "JS(P,P) = " + Number(v) + " se=" + Number(est.std_error)});
  }

  {
    const GaussianMixture p = GaussianMixture::Single(ToTensor({-50.0, 0.0}));
    const GaussianMixture q = GaussianMixture::Single(ToTensor({50.0, 0.0}));
    const double v = JsDivergenceMc(p, q, options.samples, rng).value.item();
    report.items.push_back({"js_disjoint", std::abs(v - ln2) < 1e-3, false,
                            "JS = " + Number(v) + " vs ln 2 = " + Number(ln2)});
  }

  {
    const Gaussian1d a = RandomGaussian(rng), b = RandomGaussian(rng);
    const std::size_t n = std::min<std::size_t>(options.samples, 4096);
    const Tensor na = rng.NormalTensor({n, 1}), nb = rng.NormalTensor({n, 1});
    const GaussianMixture pa = GaussianMixture::Single(ToTensor(a));
    const GaussianMixture pb = GaussianMixture::Single(ToTensor(b));
    const double ab = JsDivergenceMcWithNoise(pa, pb, {na}, {nb}).value.item();
    const double ba = JsDivergenceMcWithNoise(pb, pa, {nb}, {na}).value.item();
    report.items.push_back({"js_symmetry", std::abs(ab - ba) <= 1e-12, false,
                            "mirrored estimates differ by " + Number(std::abs(ab - ba))});
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double pz = rng.Uniform(0.01, 0.99), qz = rng.Uniform(0.01, 0.99);
      const DiscreteEvidence e = DiscreteEvidenceDecomposition(
          {pz, 1.0 - pz}, {rng.Uniform(0.01, 1.0), rng.Uniform(0.01, 1.0)},
          {qz, 1.0 - qz});
      worst = std::max(worst, std::abs(e.log_evidence - (e.elbo + e.kl_to_posterior)));
    }
    report.items.push_back({"evidence_identity", worst < 1e-12, false,
                            "100 tables, max |log p(y) - (ELBO + KL)| = " + Number(worst)});
  }

  if (options.search_c1) {
    std::size_t first = 0, second = 0;
    for (std::size_t t = 0; t < options.c1_trials; ++t) {
      const std::vector<Gaussian1d> q = {RandomGaussian(rng), RandomGaussian(rng)};
      const std::vector<Gaussian1d> p = {RandomGaussian(rng), RandomGaussian(rng)};
      std::vector<Gaussian1d> f = q;
      f.insert(f.end(), p.begin(), p.end());
      const std::vector<double> wf(4, 0.25);
      const auto kl_to_f = [&](const Gaussian1d& g) {
        const auto [lo, hi] = Window({g});
        return Simpson(
            [&](double x) {
              const double lg = LogNormalPdf(x, g);
              return std::exp(lg) * (lg - LogMixturePdf(x, f, wf));
            },
            lo, hi, 4000);
      };
      const double lhs = 0.5 * (KlQuadrature(q[0], p[0]) + KlQuadrature(q[1], p[1]));
      const double mid = 0.5 * (kl_to_f(q[0]) + kl_to_f(q[1]));
      const double rhs = 0.5 * mid + 0.25 * (kl_to_f(p[0]) + kl_to_f(p[1]));
      if (lhs > mid + 1e-9) ++first;
      if (mid > rhs + 1e-9) ++second;
    }
    report.items.push_back(
        {"c1_search", true, true,
         std::to_string(options.c1_trials) + " random configurations: first "
             "inequality violated " + std::to_string(first) +
             " times, second " + std::to_string(second) + " times"});
  }
  return report;
}

}  // namespace fovb
