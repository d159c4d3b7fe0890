#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "harness/pipeline.hpp"

namespace pd::harness {

// One axis value: a human label plus the config edits it applies.
struct AblationValue {
  std::string label;
  ExperimentConfig cfg;
  RunManifest manifest;
  double mean_hm = 0.0;
  double mean_teacher_acc = 0.0;
};

struct AblationReport {
  std::string axis;
  std::vector<AblationValue> values;  // sorted by mean HM, descending
  std::string csv;
  std::string table_text;
};

std::vector<std::string> ablation_axes();

// Runs the pipeline once per axis value, all other keys and the seed list
// held fixed, and emits a side-by-side comparison sorted by HM. Stage-I
// artifacts shared through the stage1 scope hash are reused automatically.
AblationReport run_ablation(const ExperimentConfig& base, const std::string& axis,
                            const std::filesystem::path& run_root, bool resume);

}  // namespace pd::harness
