#pragma once

#include <string>
#include <vector>

#include "gtno/model.hpp"
#include "gtno/training.hpp"

namespace gtno {

/// Flat `key = value` run description. Channel counts, spatial dimension,
/// decoder mode and rollout length are filled in from the dataset.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_data;
  std::string test_data;
  std::string out_dir = ".";
  bool normalize = true;

  /// Sets one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Parses `key = value` lines, `#` starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  /// Every key with its resolved value, one per line, sorted by key.
  std::string to_text() const;
  /// FNV-1a hash of to_text(), as 16 hex digits.
  std::string hash() const;

  static std::vector<std::string> keys();
};

}  // namespace gtno
