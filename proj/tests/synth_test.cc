#include "fovb/synth.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fovb/io.h"

namespace fovb {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fovb_synth_" + name)).string();
}

// Mean squared residual of each pixel against its 4-neighbour average.
double HighPassEnergy(const VisualClip& f) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 1; r + 1 < f.height; ++r)
    for (std::size_t c = 1; c + 1 < f.width; ++c) {
      const auto px = [&](std::size_t rr, std::size_t cc) {
        return f.pixels[(rr * f.width + cc) * 3];
      };
      const double d = px(r, c) - 0.25 * (px(r - 1, c) + px(r + 1, c) +
                                          px(r, c - 1) + px(r, c + 1));
      total += d * d;
      ++n;
    }
  return total / static_cast<double>(n);
}

double CrestFactor(const AudioWave& w) {
  double peak = 0.0, sq = 0.0;
  for (double s : w.samples) {
    peak = std::max(peak, std::abs(s));
    sq += s * s;
  }
  return peak / std::sqrt(sq / static_cast<double>(w.samples.size()));
}

TEST(SynthTest, LabelMapping) {
  const auto check = [](Category c, int y, int ya, int yv) {
    const SampleLabels l = LabelsFor(c);
    EXPECT_EQ(l.y, y) << CategoryName(c);
    EXPECT_EQ(l.y_a, ya) << CategoryName(c);
    EXPECT_EQ(l.y_v, yv) << CategoryName(c);
  };
  check(Category::kReal, 0, 0, 0);
  check(Category::kRvfa, 1, 1, 0);
  check(Category::kFvra, 1, 0, 1);
  check(Category::kFvfa, 1, 1, 1);
}

TEST(SynthTest, JointLabelIsOrOfModalityLabels) {
  for (const SyntheticSample& s : SynthGenerate(40, 3)) {
    EXPECT_EQ(s.labels.y, s.labels.y_a | s.labels.y_v);
    EXPECT_EQ(s.labels.y, LabelsFor(s.category).y);
  }
}

TEST(SynthTest, SampleShapes) {
  const SyntheticSample s = SynthGenerate(1, 1)[0];
  EXPECT_EQ(s.wave.samples.size(), kWaveLength);
  EXPECT_EQ(s.frame.height, kFrameSize);
  EXPECT_EQ(s.frame.width, kFrameSize);
  EXPECT_EQ(s.frame.pixels.size(), kFrameSize * kFrameSize * 3);
  for (double p : s.frame.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(SynthTest, SameSeedSameBytes) {
  EXPECT_EQ(SerializeDataset(SynthGenerate(12, 9)), SerializeDataset(SynthGenerate(12, 9)));
  EXPECT_NE(SerializeDataset(SynthGenerate(12, 9)), SerializeDataset(SynthGenerate(12, 10)));
}

TEST(SynthTest, BalancedCountsAreExact) {
  const auto data = SynthGenerate(100, 4);
  std::array<int, 4> counts{};
  for (const auto& s : data) ++counts[static_cast<int>(s.category)];
  for (int c : counts) EXPECT_EQ(c, 25);
}

TEST(SynthTest, CategoryCountsUseLargestRemainder) {
  EXPECT_EQ(CategoryCounts(10, kBalancedMix), (std::array<std::size_t, 4>{3, 3, 2, 2}));
  EXPECT_EQ(CategoryCounts(10, {1, 0, 0, 1}), (std::array<std::size_t, 4>{5, 0, 0, 5}));
  EXPECT_EQ(CategoryCounts(7, {0.5, 0.25, 0.25, 0.0}), (std::array<std::size_t, 4>{3, 2, 2, 0}));
  for (std::size_t n : {1u, 5u, 17u, 333u}) {
    const auto c = CategoryCounts(n, {0.1, 0.2, 0.3, 0.4});
    EXPECT_EQ(c[0] + c[1] + c[2] + c[3], n);
  }
  EXPECT_THROW(CategoryCounts(4, {0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(CategoryCounts(4, {-1, 1, 1, 1}), std::invalid_argument);
}

TEST(SynthTest, ZeroSamplesRejected) {
  EXPECT_THROW(SynthGenerate(0, 1), std::invalid_argument);
}

TEST(SynthTest, CategoriesAreShuffled) {
  const auto data = SynthGenerate(40, 5);
  std::size_t changes = 0;
  for (std::size_t i = 1; i < data.size(); ++i) changes += data[i].category != data[i - 1].category;
  EXPECT_GT(changes, 10u);
}

TEST(SynthTest, FakeFramesCarryHighFrequencyArtifacts) {
  double real = 0.0, fake = 0.0;
  std::size_t n_real = 0, n_fake = 0;
  for (const SyntheticSample& s : SynthGenerate(80, 6)) {
    const double e = HighPassEnergy(s.frame);
    if (s.labels.y_v) {
      fake += e;
      ++n_fake;
    } else {
      real += e;
      ++n_real;
    }
  }
  EXPECT_GT(fake / n_fake, 4.0 * real / n_real);
}

TEST(SynthTest, FakeAudioCarriesBursts) {
  double real = 0.0, fake = 0.0;
  std::size_t n_real = 0, n_fake = 0;
  for (const SyntheticSample& s : SynthGenerate(80, 7)) {
    const double crest = CrestFactor(s.wave);
    if (s.labels.y_a) {
      fake += crest;
      ++n_fake;
    } else {
      real += crest;
      ++n_real;
    }
  }
  EXPECT_GT(fake / n_fake, 1.2 * real / n_real);
}

TEST(SynthTest, SerializeRoundTrip) {
  const auto data = SynthGenerate(6, 11);
  const std::string bytes = SerializeDataset(data);
  EXPECT_EQ(bytes.rfind(kDatasetHeader, 0), 0u);
  const auto back = ParseDataset(bytes);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].category, data[i].category);
    EXPECT_EQ(back[i].wave.samples, data[i].wave.samples);
    EXPECT_EQ(back[i].frame.pixels, data[i].frame.pixels);
    EXPECT_EQ(back[i].labels.y, data[i].labels.y);
  }
  EXPECT_EQ(SerializeDataset(back), bytes);
}

TEST(SynthTest, FileRoundTrip) {
  const std::string path = TempPath("roundtrip.bin");
  const auto data = SynthGenerate(3, 12);
  WriteDataset(path, data);
  EXPECT_EQ(SerializeDataset(ReadDataset(path)), SerializeDataset(data));
  std::filesystem::remove(path);
}

TEST(SynthTest, MalformedDataRejected) {
  const std::string bytes = SerializeDataset(SynthGenerate(2, 13));
  EXPECT_THROW(ParseDataset("not a dataset"), DataError);
  EXPECT_THROW(ParseDataset(kDatasetHeader), DataError);
  EXPECT_THROW(ParseDataset(bytes.substr(0, bytes.size() - 5)), DataError);
  std::string bad = bytes;
  bad.back() = 7;
  EXPECT_THROW(ParseDataset(bad), DataError);
  EXPECT_THROW(ReadDataset(TempPath("missing.bin")), DataError);
}

TEST(SynthTest, UnwritablePathRaisesWriteError) {
  EXPECT_THROW(WriteDataset("/nonexistent_dir/x.bin", SynthGenerate(1, 1)), WriteError);
}

TEST(SynthTest, PreparedBatchShapes) {
  const PreparedDataset p = Prepare(SynthGenerate(5, 14));
  EXPECT_EQ(p.size(), 5u);
  const Batch b = p.MakeBatch({4, 0});
  EXPECT_EQ(b.audio.shape(), (Shape{2, kFrameSize, kFrameSize, 3}));
  EXPECT_EQ(b.visual.shape(), (Shape{2, kFrameSize, kFrameSize, 3}));
  ASSERT_TRUE(b.labels.has_value());
  EXPECT_EQ(b.labels->y[0], p.labels.y[4]);
  EXPECT_EQ(b.labels->y_v[1], p.labels.y_v[0]);
}

}  // namespace
}  // namespace fovb
