#include "fovb/synth.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fovb/io.h"
#include "fovb/rng.h"

namespace fovb {
namespace {

constexpr std::size_t kSegments = 4;
constexpr double kToneLowHz = 250.0;
constexpr double kToneHighHz = 900.0;

double LogUniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.Uniform(std::log(lo), std::log(hi)));
}

// Latent driver shared by a real clip's audio and video.
struct Driver {
  std::array<double, kSegments> tones{};
};

Driver RandomDriver(Rng& rng) {
  Driver d;
  for (double& f : d.tones) f = rng.Uniform(kToneLowHz, kToneHighHz);
  return d;
}

void AddTone(std::vector<double>& wave, std::size_t begin, std::size_t end,
             double hz, double amplitude, double phase) {
  const double w = 2.0 * std::numbers::pi * hz / kDefaultSampleRate;
  for (std::size_t t = begin; t < end && t < wave.size(); ++t)
    wave[t] += amplitude * std::sin(w * static_cast<double>(t) + phase);
}

std::vector<double> DriverWave(const Driver& d, Rng& rng) {
  std::vector<double> wave(kWaveLength, 0.0);
  const double amplitude = LogUniform(rng, 0.05, 0.5);
  const double noise = LogUniform(rng, 0.002, 0.02);
  const std::size_t seg = kWaveLength / kSegments;
  for (std::size_t k = 0; k < kSegments; ++k)
    AddTone(wave, k * seg, (k + 1) * seg, d.tones[k], amplitude,
            rng.Uniform(0.0, 2.0 * std::numbers::pi));
  for (double& s : wave) s += rng.Normal(0.0, noise);
  return wave;
}

// Short narrowband bursts on top of the clip.
void AddSpikes(std::vector<double>& wave, Rng& rng) {
  double peak = 0.0;
  for (double s : wave) peak = std::max(peak, std::abs(s));
  const std::size_t count = 2 + rng.Index(3);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t length = 320 + rng.Index(321);
    const std::size_t begin = rng.Index(kWaveLength - length);
    AddTone(wave, begin, begin + length, rng.Uniform(300.0, 950.0),
            peak * rng.Uniform(0.8, 1.5),
            rng.Uniform(0.0, 2.0 * std::numbers::pi));
  }
}

// Smooth texture: one horizontal grating per column band, its spatial
// frequency following the band's tone.
std::vector<double> DriverFrame(const Driver& d, Rng& rng) {
  const std::size_t s = kFrameSize;
  std::vector<double> pixels(s * s * 3);
  const double brightness = rng.Uniform(0.35, 0.65);
  const double contrast = rng.Uniform(0.1, 0.25);
  const double noise = 0.01;
  std::array<double, 3> tint{};
  for (double& t : tint) t = rng.Uniform(0.85, 1.15);
  const std::size_t band = s / kSegments;
  std::array<double, kSegments> phase{};
  for (double& p : phase) p = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const std::size_t k = std::min(c / band, kSegments - 1);
      const double cycles =
          1.0 + 3.0 * (d.tones[k] - kToneLowHz) / (kToneHighHz - kToneLowHz);
      const double v =
          brightness + contrast * std::sin(2.0 * std::numbers::pi * cycles *
                                               static_cast<double>(r) /
                                               static_cast<double>(s) +
                                           phase[k]);
      for (std::size_t ch = 0; ch < 3; ++ch)
        pixels[(r * s + c) * 3 + ch] = v * tint[ch] + rng.Normal(0.0, noise);
    }
  }
  return pixels;
}

// Pixel-level checkerboard over a random rectangle.
void AddCheckerboard(std::vector<double>& pixels, Rng& rng) {
  const std::size_t s = kFrameSize;
  const std::size_t h = 12 + rng.Index(13);
  const std::size_t w = 12 + rng.Index(13);
  const std::size_t r0 = rng.Index(s - h + 1);
  const std::size_t c0 = rng.Index(s - w + 1);
  const double amplitude = rng.Uniform(0.06, 0.12);
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const double sign = ((r + c) % 2 == 0) ? 1.0 : -1.0;
      for (std::size_t ch = 0; ch < 3; ++ch)
        pixels[(r * s + c) * 3 + ch] += sign * amplitude;
    }
}

SyntheticSample Generate(Category category, Rng& rng) {
  SyntheticSample sample;
  sample.category = category;
  sample.labels = LabelsFor(category);
  const Driver shared = RandomDriver(rng);
  const Driver audio_driver =
      sample.labels.y_a ? RandomDriver(rng) : shared;
  const Driver visual_driver =
      sample.labels.y_v ? RandomDriver(rng) : shared;
  sample.wave.samples = DriverWave(audio_driver, rng);
  if (sample.labels.y_a) AddSpikes(sample.wave.samples, rng);
  std::vector<double> pixels = DriverFrame(visual_driver, rng);
  if (sample.labels.y_v) AddCheckerboard(pixels, rng);
  for (double& p : pixels) p = std::clamp(p, 0.0, 1.0);
  sample.frame.frames = 1;
  sample.frame.height = kFrameSize;
  sample.frame.width = kFrameSize;
  sample.frame.pixels = std::move(pixels);
  return sample;
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void PutF64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t U8() {
    Need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++]))
           << (8 * i);
    return v;
  }
  double F64() {
    Need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++]))
              << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

 private:
  void Need(std::size_t n) const {
    if (remaining() < n) throw DataError("dataset truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* CategoryName(Category c) {
  switch (c) {
    case Category::kReal: return "REAL";
    case Category::kRvfa: return "RVFA";
    case Category::kFvra: return "FVRA";
    case Category::kFvfa: return "FVFA";
  }
  return "?";
}

SampleLabels LabelsFor(Category c) {
  switch (c) {
    case Category::kReal: return {0, 0, 0};
    case Category::kRvfa: return {1, 1, 0};
    case Category::kFvra: return {1, 0, 1};
    case Category::kFvfa: return {1, 1, 1};
  }
  throw std::invalid_argument("unknown category");
}

std::array<std::size_t, 4> CategoryCounts(std::size_t n,
                                          const CategoryMix& mix) {
  double total = 0.0;
  for (double w : mix) {
    if (!(w >= 0.0)) throw std::invalid_argument("category weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("category weights sum to zero");
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = static_cast<double>(n) * mix[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 4]];
  return counts;
}

std::vector<SyntheticSample> SynthGenerate(std::size_t n, std::uint64_t seed,
                                           const CategoryMix& mix) {
  if (n == 0) throw std::invalid_argument("need at least one sample");
  const std::array<std::size_t, 4> counts = CategoryCounts(n, mix);
  std::vector<Category> categories;
  categories.reserve(n);
  for (std::size_t i = 0; i < 4; ++i)
    categories.insert(categories.end(), counts[i], static_cast<Category>(i));
  Rng rng(seed);
  rng.Shuffle(categories);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (Category c : categories) {
    Rng sample_rng = rng.Split();
    out.push_back(Generate(c, sample_rng));
  }
  return out;
}

std::string SerializeDataset(const std::vector<SyntheticSample>& samples) {
  std::string out(kDatasetHeader);
  for (const SyntheticSample& s : samples) {
    PutU32(out, static_cast<std::uint32_t>(s.wave.samples.size()));
    for (double v : s.wave.samples) PutF64(out, v);
    PutU32(out, static_cast<std::uint32_t>(s.frame.pixels.size()));
    for (double v : s.frame.pixels) PutF64(out, v);
    out.push_back(static_cast<char>(s.category));
  }
  return out;
}

std::vector<SyntheticSample> ParseDataset(const std::string& bytes) {
  const std::string header(kDatasetHeader);
  if (bytes.compare(0, header.size(), header) != 0) {
    throw DataError("missing FOVB-SYNTH v1 header");
  }
  const std::string body = bytes.substr(header.size());
  Reader reader(body);
  std::vector<SyntheticSample> out;
  while (!reader.done()) {
    SyntheticSample s;
    const std::uint32_t n_wave = reader.U32();
    if (static_cast<std::size_t>(n_wave) * 8 > reader.remaining()) {
      throw DataError("dataset truncated");
    }
    s.wave.samples.resize(n_wave);
    for (double& v : s.wave.samples) v = reader.F64();
    const std::uint32_t n_frame = reader.U32();
    if (static_cast<std::size_t>(n_frame) * 8 > reader.remaining()) {
      throw DataError("dataset truncated");
    }
    const auto side = static_cast<std::size_t>(
        std::llround(std::sqrt(static_cast<double>(n_frame) / 3.0)));
    if (side * side * 3 != n_frame || side == 0) {
      throw DataError("frame of " + std::to_string(n_frame) +
                      " values is not a square RGB image");
    }
    s.frame.frames = 1;
    s.frame.height = side;
    s.frame.width = side;
    s.frame.pixels.resize(n_frame);
    for (double& v : s.frame.pixels) v = reader.F64();
    const std::uint8_t cat = reader.U8();
    if (cat > 3) throw DataError("invalid category byte " + std::to_string(cat));
    s.category = static_cast<Category>(cat);
    s.labels = LabelsFor(s.category);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("dataset has no samples");
  return out;
}

void WriteDataset(const std::string& path,
                  const std::vector<SyntheticSample>& samples) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw WriteError("cannot open " + path + " for writing");
  const std::string bytes = SerializeDataset(samples);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw WriteError("failed writing " + path);
}

std::vector<SyntheticSample> ReadDataset(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open dataset " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return ParseDataset(buffer.str());
}

PreparedDataset Prepare(const std::vector<SyntheticSample>& samples,
                        std::size_t image_size) {
  PreparedDataset out;
  out.image_size = image_size;
  for (const SyntheticSample& s : samples) {
    if (s.frame.height != image_size || s.frame.width != image_size) {
      throw DataError("frame is " + std::to_string(s.frame.height) + "x" +
                      std::to_string(s.frame.width) + ", model expects " +
                      std::to_string(image_size));
    }
    out.audio.push_back(
        SpectrogramImage(LogMel(s.wave), image_size, image_size));
    out.visual.push_back(s.frame.pixels);
    out.categories.push_back(s.category);
    out.labels.y.push_back(s.labels.y);
    out.labels.y_a.push_back(s.labels.y_a);
    out.labels.y_v.push_back(s.labels.y_v);
  }
  return out;
}

Batch PreparedDataset::MakeBatch(const std::vector<std::size_t>& indices) const {
  const std::size_t per = image_size * image_size * 3;
  std::vector<double> audio_values, visual_values;
  audio_values.reserve(indices.size() * per);
  visual_values.reserve(indices.size() * per);
  Batch batch;
  batch.labels = LabelSet{};
  for (std::size_t i : indices) {
    audio_values.insert(audio_values.end(), audio[i].begin(), audio[i].end());
    visual_values.insert(visual_values.end(), visual[i].begin(), visual[i].end());
    batch.labels->y.push_back(labels.y[i]);
    batch.labels->y_a.push_back(labels.y_a[i]);
    batch.labels->y_v.push_back(labels.y_v[i]);
  }
  const Shape shape{indices.size(), image_size, image_size, 3};
  batch.audio = Tensor::FromVector(shape, std::move(audio_values));
  batch.visual = Tensor::FromVector(shape, std::move(visual_values));
  return batch;
}

Batch PreparedDataset::All() const {
  std::vector<std::size_t> indices(size());
  std::iota(indices.begin(), indices.end(), 0);
  return MakeBatch(indices);
}

}  // namespace fovb
