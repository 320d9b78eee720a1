#include "fovb/metrics.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fovb {
namespace {

void CheckInputs(const std::vector<double>& scores,
                 const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw MetricError("scores and labels differ in length");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("labels must be 0 or 1");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> DescendingOrder(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace

double Auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  CheckInputs(scores, labels);
  const std::size_t pos = std::count(labels.begin(), labels.end(), 1);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw MetricError("AUC needs both classes present");
  }
  // Rank-sum with average ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double AveragePrecision(const std::vector<double>& scores,
                        const std::vector<int>& labels) {
  CheckInputs(scores, labels);
  const std::size_t pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0) throw MetricError("average precision needs a positive");
  const std::vector<std::size_t> order = DescendingOrder(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double Accuracy(const std::vector<double>& scores,
                const std::vector<int>& labels, double threshold) {
  CheckInputs(scores, labels);
  if (scores.empty()) throw MetricError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    correct += static_cast<std::size_t>((scores[i] >= threshold) == (labels[i] == 1));
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

MetricsReport ComputeMetrics(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  MetricsReport r;
  r.acc = Accuracy(scores, labels);
  r.ap = AveragePrecision(scores, labels);
  r.auc = Auc(scores, labels);
  r.count = scores.size();
  r.positives = std::count(labels.begin(), labels.end(), 1);
  r.negatives = r.count - r.positives;
  return r;
}

std::string MetricsReport::ToKeyValue() const {
  std::ostringstream out;
  out.precision(17);
  out << "acc=" << acc << "\nap=" << ap << "\nauc=" << auc
      << "\ncount=" << count << "\npositives=" << positives
      << "\nnegatives=" << negatives << "\n";
  return out.str();
}

std::string MetricsReport::ToJson() const {
  nlohmann::ordered_json j;
  j["acc"] = acc;
  j["ap"] = ap;
  j["auc"] = auc;
  j["count"] = count;
  j["positives"] = positives;
  j["negatives"] = negatives;
  return j.dump(2);
}

}  // namespace fovb
