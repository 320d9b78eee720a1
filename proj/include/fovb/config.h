#ifndef FOVB_CONFIG_H_
#define FOVB_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "fovb/model.h"
#include "fovb/synth.h"

namespace fovb {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OrthCodes { kSampled, kMeans };

struct TrainConfig {
  double alpha = 0.1;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t steps = 2000;
  std::size_t batch = 16;
  std::size_t mc_samples = 8;
  std::size_t eval_every = 0;  // 0: evaluate only at the end
  OrthCodes orth_codes = OrthCodes::kSampled;
  TrainFusion fusion = TrainFusion::kPrior;
};

struct DataConfig {
  std::size_t n_train = 2000;
  std::size_t n_eval = 500;
  CategoryMix category_mix = kBalancedMix;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  // Throws ConfigError on out-of-range values.
  void Validate() const;
};

// Seeds of the generated train and eval sets when no dataset file is given.
std::uint64_t TrainDataSeed(std::uint64_t seed);
std::uint64_t EvalDataSeed(std::uint64_t seed);

// Every key is optional; unknown keys raise ConfigError naming the key.
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::string& path);
std::string RunConfigToJson(const RunConfig& config);

}  // namespace fovb

#endif  // FOVB_CONFIG_H_
