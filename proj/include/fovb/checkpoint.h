#ifndef FOVB_CHECKPOINT_H_
#define FOVB_CHECKPOINT_H_

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovb/model.h"
#include "fovb/optim.h"
#include "fovb/tensor.h"

namespace fovb {

inline constexpr char kCheckpointMagic[4] = {'F', 'O', 'V', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Raised for CRC mismatches, truncation and structurally invalid files.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

std::string EncodeCheckpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes);

void WriteFile(const std::string& path, const std::string& bytes);
// Throws IntegrityError if the file cannot be read.
std::string ReadFile(const std::string& path);

// Everything needed to rebuild a model and continue optimizing it.
struct TrainingSnapshot {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint32_t frozen_checksum = 0;
  AdamWState optimizer;  // may be empty
};

// Trainable parameters ("param/<name>"), optimizer moments
// ("adam_m/<name>", "adam_v/<name>") and run metadata ("meta/...").
std::vector<NamedTensor> SnapshotTensors(const FovbModel& model,
                                         std::uint64_t seed, std::uint64_t step,
                                         const AdamWState* optimizer);

struct LoadedCheckpoint {
  std::unique_ptr<FovbModel> model;
  TrainingSnapshot snapshot;
};

// Rebuilds the model (frozen weights regenerated and verified against the
// stored checksum) and restores every trainable tensor.
LoadedCheckpoint RestoreCheckpoint(const std::vector<NamedTensor>& tensors);

void SaveCheckpoint(const std::string& path, const FovbModel& model,
                    std::uint64_t seed, std::uint64_t step,
                    const AdamWState* optimizer);
LoadedCheckpoint LoadCheckpoint(const std::string& path);

}  // namespace fovb

#endif  // FOVB_CHECKPOINT_H_
