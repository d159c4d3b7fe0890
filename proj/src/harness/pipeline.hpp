#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eval/cost_counter.hpp"
#include "eval/metrics.hpp"
#include "harness/config.hpp"

namespace pd::harness {

// Pipeline stages, in order. Each is runnable standalone against persisted
// artifacts; `force_from` marks the first stage that must be recomputed,
// everything before it is reused when its artifacts validate.
enum class StageId { stage1, cache, stage2, eval };

struct StageStatus {
  std::string state = "pending";  // pending | done | reused | failed | skipped
  std::string error;
};

struct SeedRun {
  uint64_t seed = 0;
  std::string stage1_hash;
  std::filesystem::path teacher_ckpt, cache_file, stage1_log;
  std::filesystem::path student_ckpt, stage2_log;
  StageStatus stage1, cache_stage, stage2, eval_stage;

  eval::CostCounter costs;
  eval::EvalReport report;
  double agreement = 0.0;
  double baseline_novel_acc = 0.0;
  double baseline_base_acc = 0.0;
  double baseline_agreement = 0.0;
  double teacher_base_acc = 0.0;
  double teacher_novel_acc = 0.0;
  double teacher_test_acc = 0.0;

  bool ok() const {
    return stage1.error.empty() && cache_stage.error.empty() &&
           stage2.error.empty() && eval_stage.error.empty();
  }
};

struct RunManifest {
  std::string config_hash;
  std::string variant;
  std::filesystem::path run_dir;
  std::string created_at, updated_at;
  std::vector<SeedRun> seeds;

  bool ok() const {
    for (const auto& s : seeds) {
      if (!s.ok()) return false;
    }
    return !seeds.empty();
  }
};

// Executes stage1 -> cache -> stage2 -> eval per seed, persisting artifacts
// under run_root. Stage-I artifacts are keyed by the stage1 scope hash so
// ablation sweeps that share a teacher reuse it; everything else lives under
// the full config hash.
RunManifest run_pipeline(const ExperimentConfig& cfg,
                         const std::filesystem::path& run_root, StageId force_from,
                         StageId upto = StageId::eval);

std::filesystem::path run_dir_for(const ExperimentConfig& cfg,
                                  const std::filesystem::path& run_root);

// report.csv: variant,seed,base_acc,novel_acc,hm,agreement,text_forwards_stage2
std::string report_csv(const ExperimentConfig& cfg, const RunManifest& man);
std::string report_text(const ExperimentConfig& cfg, const RunManifest& man);

void save_manifest(const RunManifest& man, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace pd::harness
