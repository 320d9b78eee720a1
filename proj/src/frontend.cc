#include "fovb/frontend.h"

#include <Eigen/Core>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fovb/ops.h"

namespace fovb {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Windowed real-DFT basis for one window length: cos and -sin tables of
// shape [window x bins] with the Hann taper folded in.
struct DftBasis {
  RowMatrix cos_part;
  RowMatrix sin_part;
};

const DftBasis& BasisFor(std::size_t window) {
  static std::mutex mu;
  static std::map<std::size_t, DftBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(window);
  if (it != cache.end()) return it->second;
  const std::size_t bins = window / 2 + 1;
  DftBasis basis;
  basis.cos_part.resize(static_cast<Eigen::Index>(window),
                        static_cast<Eigen::Index>(bins));
  basis.sin_part.resizeLike(basis.cos_part);
  const double n = static_cast<double>(window);
  for (std::size_t t = 0; t < window; ++t) {
    // Periodic Hann.
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / n);
    for (std::size_t k = 0; k < bins; ++k) {
      const double angle = 2.0 * std::numbers::pi *
                           static_cast<double>((k * t) % window) / n;
      basis.cos_part(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          hann * std::cos(angle);
      basis.sin_part(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          -hann * std::sin(angle);
    }
  }
  return cache.emplace(window, std::move(basis)).first->second;
}

}  // namespace

StftFrames Stft(const AudioWave& wave, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) {
    throw std::invalid_argument("STFT window and hop must be positive");
  }
  if (wave.sample_rate <= 0) {
    throw std::invalid_argument("sample rate must be positive");
  }
  if (wave.samples.size() < window) {
    throw std::invalid_argument("signal of " +
                                std::to_string(wave.samples.size()) +
                                " samples is shorter than the STFT window " +
                                std::to_string(window));
  }
  const std::size_t frames = 1 + (wave.samples.size() - window) / hop;
  const DftBasis& basis = BasisFor(window);
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  RowMatrix slices(ei(frames), ei(window));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t t = 0; t < window; ++t)
      slices(ei(f), ei(t)) = wave.samples[f * hop + t];
  const RowMatrix re = slices * basis.cos_part;
  const RowMatrix im = slices * basis.sin_part;
  StftFrames out;
  out.frame_count = frames;
  out.bin_count = window / 2 + 1;
  out.values.resize(frames * out.bin_count);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < out.bin_count; ++k)
      out.values[f * out.bin_count + k] = {re(ei(f), ei(k)), im(ei(f), ei(k))};
  return out;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> MelFilterbank(std::size_t n_bins, std::size_t n_fft,
                                  double sample_rate) {
  if (n_bins == 0) throw std::invalid_argument("need at least one mel bin");
  const std::size_t fft_bins = n_fft / 2 + 1;
  const double max_mel = HzToMel(sample_rate / 2.0);
  // Filter edges/centres in fractional FFT-bin units.
  std::vector<double> points(n_bins + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double mel = max_mel * static_cast<double>(i) /
                       static_cast<double>(n_bins + 1);
    points[i] = MelToHz(mel) * static_cast<double>(n_fft) / sample_rate;
  }
  std::vector<double> bank(n_bins * fft_bins, 0.0);
  for (std::size_t m = 0; m < n_bins; ++m) {
    const double centre = points[m + 1];
    const double left = std::max(centre - points[m], 1.0);
    const double right = std::max(points[m + 2] - centre, 1.0);
    for (std::size_t k = 0; k < fft_bins; ++k) {
      const double kk = static_cast<double>(k);
      const double w = kk <= centre ? 1.0 - (centre - kk) / left
                                    : 1.0 - (kk - centre) / right;
      bank[m * fft_bins + k] = std::max(w, 0.0);
    }
  }
  return bank;
}

LogMelSpectrogram LogMel(const AudioWave& wave, std::size_t mel_bins,
                         std::size_t window, std::size_t hop) {
  const StftFrames stft = Stft(wave, window, hop);
  const std::vector<double> bank =
      MelFilterbank(mel_bins, window, wave.sample_rate);
  const std::size_t bins = stft.bin_count;
  LogMelSpectrogram out;
  out.mel_bins = mel_bins;
  out.frames = stft.frame_count;
  out.window = window;
  out.hop = hop;
  out.grid.assign(mel_bins * stft.frame_count, 0.0);
  std::vector<double> power(bins);
  for (std::size_t f = 0; f < stft.frame_count; ++f) {
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(stft.at(f, k));
    for (std::size_t m = 0; m < mel_bins; ++m) {
      double acc = 0.0;
      const double* row = bank.data() + m * bins;
      for (std::size_t k = 0; k < bins; ++k) acc += row[k] * power[k];
      out.grid[m * out.frames + f] = std::log(acc + kLogFloor);
    }
  }
  return out;
}

std::vector<double> SpectrogramImage(const LogMelSpectrogram& spec,
                                     std::size_t rows, std::size_t cols) {
  const double silence = std::log(kLogFloor);
  std::vector<double> image(rows * cols * 3);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = (r < spec.mel_bins && c < spec.frames)
                           ? spec.at(r, c)
                           : silence;
      // Silence maps to 0, unit mel power to 1.
      const double scaled = (v - silence) / -silence;
      for (std::size_t ch = 0; ch < 3; ++ch)
        image[(r * cols + c) * 3 + ch] = scaled;
    }
  }
  return image;
}

Tensor Patchify(const Tensor& images, std::size_t patch) {
  if (images.rank() != 4) {
    throw DimensionError("patchify expects [batch, H, W, C], got " +
                         ShapeToString(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t rows = images.dim(1);
  const std::size_t cols = images.dim(2);
  const std::size_t channels = images.dim(3);
  if (patch == 0 || rows % patch != 0 || cols % patch != 0) {
    throw std::invalid_argument("image " + std::to_string(rows) + "x" +
                                std::to_string(cols) +
                                " is not divisible by patch size " +
                                std::to_string(patch));
  }
  const std::size_t gr = rows / patch;
  const std::size_t gc = cols / patch;
  const Tensor split =
      Reshape(images, {batch, gr, patch, gc, patch, channels});
  return Reshape(Permute(split, {0, 1, 3, 2, 4, 5}),
                 {batch, gr * gc, patch * patch * channels});
}

PatchEmbedding::PatchEmbedding(std::size_t image_rows, std::size_t image_cols,
                               std::size_t channels, std::size_t patch,
                               std::size_t dim, Rng& rng)
    : patch_(patch), channels_(channels) {
  if (patch == 0 || image_rows % patch != 0 || image_cols % patch != 0) {
    throw std::invalid_argument("image size not divisible by patch size");
  }
  grid_rows_ = image_rows / patch;
  grid_cols_ = image_cols / patch;
  const std::size_t fan_in = patch * patch * channels;
  projection_ = rng.NormalTensor({fan_in, dim},
                                 1.0 / std::sqrt(static_cast<double>(fan_in)),
                                 true);
  bias_ = Tensor::Zeros({dim}, true);
  class_token_ = rng.NormalTensor({1, 1, dim}, 0.5, true);
  positions_ = rng.NormalTensor({grid_rows_ * grid_cols_ + 1, dim}, 0.1, true);
}

TokenSequence PatchEmbedding::Embed(const Tensor& images,
                                    Modality modality) const {
  const Tensor patches = Patchify(images, patch_);
  if (patches.dim(1) != grid_rows_ * grid_cols_ ||
      patches.dim(2) != projection_.dim(0)) {
    throw DimensionError("image shape " + ShapeToString(images.shape()) +
                         " does not match this patch embedding");
  }
  const std::size_t batch = images.dim(0);
  const Tensor embedded = Linear(patches, projection_, bias_);
  const Tensor cls = BroadcastTo(class_token_, {batch, 1, projection_.dim(1)});
  TokenSequence seq;
  seq.tokens = Add(Concat({cls, embedded}, 1), positions_);
  seq.modality = modality;
  seq.grid_rows = grid_rows_;
  seq.grid_cols = grid_cols_;
  return seq;
}

}  // namespace fovb
