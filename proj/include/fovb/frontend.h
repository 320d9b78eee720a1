#ifndef FOVB_FRONTEND_H_
#define FOVB_FRONTEND_H_

#include <complex>
#include <cstddef>
#include <vector>

#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

inline constexpr double kDefaultSampleRate = 16000.0;
inline constexpr std::size_t kDefaultWindow = 320;
inline constexpr std::size_t kDefaultHop = 160;
inline constexpr std::size_t kDefaultMelBins = 80;
inline constexpr double kLogFloor = 1e-6;

struct AudioWave {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;
};

// One-sided spectra of consecutive Hann-windowed frames.
struct StftFrames {
  std::size_t frame_count = 0;
  std::size_t bin_count = 0;  // window / 2 + 1
  std::vector<std::complex<double>> values;  // frame-major

  std::complex<double> at(std::size_t frame, std::size_t bin) const {
    return values[frame * bin_count + bin];
  }
};

struct LogMelSpectrogram {
  std::size_t mel_bins = kDefaultMelBins;
  std::size_t frames = 0;
  std::size_t window = kDefaultWindow;
  std::size_t hop = kDefaultHop;
  std::vector<double> grid;  // mel_bins x frames, row-major

  double at(std::size_t bin, std::size_t frame) const {
    return grid[bin * frames + frame];
  }
};

struct VisualClip {
  std::size_t frames = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // T x H x W x 3 in [0, 1]
};

enum class Modality { kAudio, kVisual };

// Batched token sequences. Row 0 of every sample is the classification
// token; rows 1..N are patch tokens laid out row-major over the h x w grid.
struct TokenSequence {
  Tensor tokens;  // [batch, N + 1, D]
  Modality modality = Modality::kAudio;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t patch_count() const { return grid_rows * grid_cols; }
  std::size_t dim() const { return tokens.dim(2); }
};

// Hann-windowed STFT; frame count is 1 + floor((len - window) / hop).
// Throws std::invalid_argument if the signal is shorter than the window.
StftFrames Stft(const AudioWave& wave, std::size_t window, std::size_t hop);

// Triangular HTK-mel filters from 0 Hz to Nyquist: [n_bins x (n_fft/2 + 1)].
// Each half-width is at least one FFT bin so narrow low-frequency filters
// never vanish.
std::vector<double> MelFilterbank(std::size_t n_bins, std::size_t n_fft,
                                  double sample_rate);

double HzToMel(double hz);
double MelToHz(double mel);

// log(mel power + kLogFloor).
LogMelSpectrogram LogMel(const AudioWave& wave,
                         std::size_t mel_bins = kDefaultMelBins,
                         std::size_t window = kDefaultWindow,
                         std::size_t hop = kDefaultHop);

// Crops (or pads with the silence level) to rows x cols and replicates the
// single channel three times: returns rows x cols x 3.
std::vector<double> SpectrogramImage(const LogMelSpectrogram& spec,
                                     std::size_t rows, std::size_t cols);

// [batch, H, W, C] -> [batch, (H/P)*(W/P), P*P*C]; patch-internal order is
// (row, col, channel). Throws if H or W is not divisible by P.
Tensor Patchify(const Tensor& images, std::size_t patch);

// Learned patch projection with prepended classification token and additive
// positional embeddings.
class PatchEmbedding {
 public:
  PatchEmbedding(std::size_t image_rows, std::size_t image_cols,
                 std::size_t channels, std::size_t patch, std::size_t dim,
                 Rng& rng);

  TokenSequence Embed(const Tensor& images, Modality modality) const;

  std::size_t patch() const { return patch_; }
  std::size_t grid_rows() const { return grid_rows_; }
  std::size_t grid_cols() const { return grid_cols_; }

  Tensor& projection() { return projection_; }
  Tensor& bias() { return bias_; }
  Tensor& class_token() { return class_token_; }
  Tensor& positions() { return positions_; }

 private:
  std::size_t patch_;
  std::size_t grid_rows_;
  std::size_t grid_cols_;
  std::size_t channels_;
  Tensor projection_;   // [P*P*C, D]
  Tensor bias_;         // [D]
  Tensor class_token_;  // [1, 1, D]
  Tensor positions_;    // [N + 1, D]
};

}  // namespace fovb

#endif  // FOVB_FRONTEND_H_
