#ifndef FOVB_SYNTH_H_
#define FOVB_SYNTH_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovb/frontend.h"
#include "fovb/model.h"

namespace fovb {

enum class Category : std::uint8_t { kReal = 0, kRvfa = 1, kFvra = 2, kFvfa = 3 };

const char* CategoryName(Category c);

struct SampleLabels {
  int y = 0;
  int y_a = 0;
  int y_v = 0;
};
SampleLabels LabelsFor(Category c);

// Samples per clip: exactly 32 STFT frames at the default window and hop.
inline constexpr std::size_t kWaveLength = 5280;
inline constexpr std::size_t kFrameSize = 32;

struct SyntheticSample {
  AudioWave wave;
  VisualClip frame;  // one frame, kFrameSize x kFrameSize x 3
  Category category = Category::kReal;
  SampleLabels labels;
};

// Relative category frequencies in REAL, RVFA, FVRA, FVFA order.
using CategoryMix = std::array<double, 4>;
inline constexpr CategoryMix kBalancedMix = {0.25, 0.25, 0.25, 0.25};

// Exact per-category counts for n samples (largest remainder rounding).
std::array<std::size_t, 4> CategoryCounts(std::size_t n, const CategoryMix& mix);

std::vector<SyntheticSample> SynthGenerate(std::size_t n, std::uint64_t seed,
                                           const CategoryMix& mix = kBalancedMix);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kDatasetHeader[] = "FOVB-SYNTH v1\n";

std::string SerializeDataset(const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> ParseDataset(const std::string& bytes);
// Throws std::runtime_error if the file cannot be written.
void WriteDataset(const std::string& path,
                  const std::vector<SyntheticSample>& samples);
// Throws DataError on a missing or malformed file.
std::vector<SyntheticSample> ReadDataset(const std::string& path);

// Model-ready images for a whole dataset, computed once.
struct PreparedDataset {
  std::size_t image_size = 0;
  std::vector<std::vector<double>> audio;   // S x S x 3 spectrogram images
  std::vector<std::vector<double>> visual;  // S x S x 3 frames
  std::vector<Category> categories;
  LabelSet labels;

  std::size_t size() const { return audio.size(); }
  Batch MakeBatch(const std::vector<std::size_t>& indices) const;
  Batch All() const;
};

PreparedDataset Prepare(const std::vector<SyntheticSample>& samples,
                        std::size_t image_size = kFrameSize);

}  // namespace fovb

#endif  // FOVB_SYNTH_H_
