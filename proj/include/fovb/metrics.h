#ifndef FOVB_METRICS_H_
#define FOVB_METRICS_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fovb {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie). Labels are 0/1.
double Auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Sum over descending distinct-score thresholds of (R_k - R_{k-1}) P_k.
// Tied scores enter together.
double AveragePrecision(const std::vector<double>& scores,
                        const std::vector<int>& labels);

// Fraction with (score >= threshold) == label.
double Accuracy(const std::vector<double>& scores,
                const std::vector<int>& labels, double threshold = 0.5);

struct MetricsReport {
  double acc = 0.0;
  double ap = 0.0;
  double auc = 0.0;
  std::size_t count = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  std::string ToKeyValue() const;
  std::string ToJson() const;
};

MetricsReport ComputeMetrics(const std::vector<double>& scores,
                             const std::vector<int>& labels);

}  // namespace fovb

#endif  // FOVB_METRICS_H_
