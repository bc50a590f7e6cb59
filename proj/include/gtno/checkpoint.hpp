#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gtno/model.hpp"

namespace gtno {

/// Optimizer bookkeeping saved next to the weights so a run can resume at the
/// same point of its learning-rate schedule.
struct TrainingState {
  std::uint64_t step = 0;         // optimizer steps taken
  std::uint64_t total_steps = 0;  // schedule length
  std::uint64_t epoch = 0;        // epochs completed
  double best_metric = 0.0;
  /// Adam moments, one entry per model.parameters() element.
  std::vector<std::vector<double>> adam_m, adam_v;

  bool operator==(const TrainingState&) const = default;
};

struct Checkpoint {
  std::unique_ptr<OperatorModel> model;
  std::optional<TrainingState> state;
};

/// Writes config, every named tensor and (optionally) the training state.
void save_checkpoint(const std::string& path, const OperatorModel& model, const TrainingState* state = nullptr);

/// Rebuilds the model from the stored config and overwrites every tensor.
/// Throws the FormatError family on malformed files and IoError when
/// unreadable.
Checkpoint load_checkpoint(const std::string& path);

/// The serialized bytes (used for bit-exactness tests).
std::vector<char> checkpoint_bytes(const OperatorModel& model, const TrainingState* state = nullptr);

}  // namespace gtno
