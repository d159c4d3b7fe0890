#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pd::train {

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double mean_train_loss = 0.0;
  // Loss of the frozen snapshot over the un-augmented pool (Stage II) or the
  // few-shot set (Stage I).
  double eval_loss = 0.0;
  std::string frozen_checksum;
};

// Append-only training record: per-step losses, per-epoch eval metrics and
// frozen-set checksums, the seed, and a config snapshot.
struct TrainingLog {
  std::string config_snapshot;  // "key = value" lines
  uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  bool frozen_checksums_constant() const;
};

// Line-delimited export: config header block, then one record per step
// (step, epoch, loss, lr, frozen-set checksum of the enclosing epoch),
// then one summary line per epoch.
void export_training_log(const TrainingLog& log, const std::filesystem::path& path);

}  // namespace pd::train
