#ifndef FOVB_VERIFY_H_
#define FOVB_VERIFY_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fovb/rng.h"
#include "fovb/tensor.h"

namespace fovb {

inline constexpr double kGradStep = 1e-6;
// Denominator floor of the relative error, so near-zero gradients are judged
// on absolute error instead.
inline constexpr double kGradFloor = 1e-4;
inline constexpr double kOpsTolerance = 1e-4;
inline constexpr double kCompositeTolerance = 1e-3;

// |a - n| / max(|a|, |n|, kGradFloor).
double GradRelativeError(double analytic, double numeric);

struct GradInput {
  std::string name;
  Tensor value;  // perturbed in place; must require grad
};

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "input[index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares backward() against central differences on every coordinate of
// `inputs`, or on `max_coords` coordinates drawn from `rng` when there are
// more. `loss` must rebuild its graph on every call and return a scalar.
GradCheckEntry CheckGradient(const std::string& name,
                             const std::function<Tensor()>& loss,
                             const std::vector<GradInput>& inputs,
                             std::size_t max_coords, Rng& rng);

struct GradCheckReport {
  std::string scope;
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed() const;
  std::string Format() const;
};

// Scopes: "ops", "glfa", "vbfe", "full". Throws std::invalid_argument for
// anything else.
GradCheckReport RunGradCheck(const std::string& scope, std::uint64_t seed);
bool IsGradCheckScope(const std::string& scope);

// Composite Simpson rule with `intervals` (rounded up to even) panels.
double Simpson(const std::function<double(double)>& f, double lo, double hi,
               std::size_t intervals);

struct Gaussian1d {
  double mean = 0.0;
  double log_var = 0.0;
};

double KlQuadrature(const Gaussian1d& q, const Gaussian1d& p);
// Componentwise Jensen-Shannon of two 1-D mixtures by quadrature:
// 1/2 sum_i wp_i KL(P_i || M) + 1/2 sum_j wq_j KL(Q_j || M).
double JsQuadrature(const std::vector<Gaussian1d>& p,
                    const std::vector<double>& wp,
                    const std::vector<Gaussian1d>& q,
                    const std::vector<double>& wq);

struct DivCheckItem {
  std::string name;
  bool passed = true;
  bool informational = false;
  std::string detail;
};

struct DivCheckReport {
  std::vector<DivCheckItem> items;

  // Informational items never fail the report.
  bool passed() const;
  std::string Format() const;
};

struct DivCheckOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  bool search_c1 = false;
  std::size_t c1_trials = 200;
};

DivCheckReport RunDivCheck(const DivCheckOptions& options);

}  // namespace fovb

#endif  // FOVB_VERIFY_H_
