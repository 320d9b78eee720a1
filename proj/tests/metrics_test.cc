#include "fovb/metrics.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fovb/rng.h"
#include "json.hpp"

namespace fovb {
namespace {

// Pairwise definition: every (positive, negative) pair.
double BruteAuc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Precision/recall at every distinct threshold, taken from the full list.
double BruteAp(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.rbegin(), thresholds.rend());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double positives = std::count(y.begin(), y.end(), 1);
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        predicted += 1.0;
        tp += y[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

TEST(MetricsTest, AucWorkedExample) {
  EXPECT_DOUBLE_EQ(Auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
}

TEST(MetricsTest, AucPerfectAndInverted) {
  EXPECT_DOUBLE_EQ(Auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(Auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
}

TEST(MetricsTest, AucTiesCountHalf) {
  EXPECT_DOUBLE_EQ(Auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(Auc({0.3, 0.5, 0.5}, {0, 0, 1}), 0.75);
}

TEST(MetricsTest, ApWorkedExample) {
  // Ranked: 0.9 (neg), 0.8 (pos), 0.1 (neg). One positive found at rank 2.
  EXPECT_DOUBLE_EQ(AveragePrecision({0.9, 0.8, 0.1}, {0, 1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(AveragePrecision({0.9, 0.8, 0.1}, {1, 1, 0}), 1.0);
}

TEST(MetricsTest, ApTiedScoresEnterTogether) {
  // Both scored 0.5: recall jumps to 1 at precision 1/2.
  EXPECT_DOUBLE_EQ(AveragePrecision({0.5, 0.5}, {0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(AveragePrecision({0.5, 0.5}, {1, 0}), 0.5);
}

TEST(MetricsTest, MatchesBruteForceOracles) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.Index(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties are common.
      s[i] = static_cast<double>(rng.Index(8)) / 8.0;
      y[i] = static_cast<int>(rng.Index(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(Auc(s, y), BruteAuc(s, y), 1e-12);
    EXPECT_NEAR(AveragePrecision(s, y), BruteAp(s, y), 1e-12);
  }
}

TEST(MetricsTest, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::vector<double> s(60);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.Uniform();
    y[i] = i % 3 == 0;
  }
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
  EXPECT_DOUBLE_EQ(Auc(s, y), Auc(t, y));
  EXPECT_DOUBLE_EQ(AveragePrecision(s, y), AveragePrecision(t, y));
}

TEST(MetricsTest, InvariantUnderPermutation) {
  Rng rng(3);
  std::vector<double> s(30);
  std::vector<int> y(30);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<double>(rng.Index(5));
    y[i] = static_cast<int>(rng.Index(2));
  }
  y[0] = 0;
  y[1] = 1;
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(order);
  std::vector<double> ps;
  std::vector<int> py;
  for (std::size_t i : order) {
    ps.push_back(s[i]);
    py.push_back(y[i]);
  }
  EXPECT_NEAR(Auc(s, y), Auc(ps, py), 1e-15);
  EXPECT_NEAR(AveragePrecision(s, y), AveragePrecision(ps, py), 1e-15);
}

TEST(MetricsTest, RankingMetricsStayInUnitInterval) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(20);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      s[i] = rng.Normal();
      y[i] = static_cast<int>(rng.Index(2));
    }
    y[0] = 0;
    y[1] = 1;
    for (double m : {Auc(s, y), AveragePrecision(s, y), Accuracy(s, y)}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  }
}

TEST(MetricsTest, SingleClassIsAnError) {
  EXPECT_THROW(Auc({0.1, 0.2}, {1, 1}), MetricError);
  EXPECT_THROW(AveragePrecision({0.1, 0.2}, {0, 0}), MetricError);
  EXPECT_THROW(Auc({0.1}, {0, 1}), MetricError);
  EXPECT_THROW(Auc({0.1, 0.2}, {0, 2}), MetricError);
}

TEST(MetricsTest, AccuracyThresholdIsInclusive) {
  EXPECT_DOUBLE_EQ(Accuracy({0.5, 0.49, 0.9, 0.1}, {1, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(Accuracy({0.3}, {1}, 0.3), 1.0);
}

TEST(MetricsTest, ReportSerializes) {
  const MetricsReport r = ComputeMetrics({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(r.auc, 0.75);
  EXPECT_EQ(r.count, 4u);
  EXPECT_EQ(r.positives, 2u);
  EXPECT_EQ(r.negatives, 2u);
  const auto j = nlohmann::json::parse(r.ToJson());
  EXPECT_DOUBLE_EQ(j.at("auc").get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(j.at("acc").get<double>(), r.acc);
  EXPECT_DOUBLE_EQ(j.at("ap").get<double>(), r.ap);
  EXPECT_NE(r.ToKeyValue().find("auc=0.75"), std::string::npos);
}

}  // namespace
}  // namespace fovb
