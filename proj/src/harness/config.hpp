#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "data/dataset.hpp"
#include "model/model.hpp"
#include "train/sgd.hpp"
#include "train/trainer.hpp"

namespace pd::harness {

// The full experiment description. Defaults are the reference recipe:
// 20 epochs, batch 8, lr 0.005, tau 1, prompt depth 9, length 4, 16 shots.
// Serialized canonically (sorted "key = value" lines) into every log and
// report; the config hash names the run directory.
struct ExperimentConfig {
  data::DatasetSpec dataset;

  struct Tower {
    int layers = 0;
    int width = 0;
    int heads = 0;
    int dim = 0;
  };
  Tower teacher{6, 64, 4, 64};
  Tower student{4, 32, 2, 32};

  int prompt_depth = 9;
  int prompt_length = 4;
  int projector_layers = 2;

  train::TrainConfig stage1;
  train::TrainConfig stage2;
  int shots = 16;
  train::TextRefresh text_refresh = train::TextRefresh::per_step;

  train::DistillVariant variant;
  data::PoolScope pool_scope = data::PoolScope::full;
  int pool_per_class_cap = 0;  // 0 = the whole train set

  bool eval_novel_full_table = true;
  std::string template_str = "a photo of a {classname}";
  bool allow_fingerprint_mismatch = false;

  std::vector<uint64_t> seeds{0, 1, 2};

  int image_patch_size = 4;
  int image_max_seq_len = 32;
  int text_vocab_size = 1024;
  int text_max_seq_len = 16;

  void validate() const;
  model::ModelConfig teacher_model_config() const;
  model::ModelConfig student_model_config() const;
};

// Layered resolution: built-in defaults <- file <- command-line overrides.
// Unknown keys, type mismatches and invariant violations raise ConfigError
// naming the key.
ExperimentConfig parse_config(const std::string& file_text,
                              const std::vector<std::pair<std::string, std::string>>&
                                  overrides = {});
ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   const std::vector<std::pair<std::string, std::string>>&
                                       overrides = {});

// Canonical serialization: every key, sorted, "key = value" lines.
std::string dump_config(const ExperimentConfig& cfg);

// SHA-256 of the canonical dump.
std::string config_hash(const ExperimentConfig& cfg);

// Hash over the subset of keys that determine the Stage-I artifacts
// (dataset, teacher tower, prompts, stage1 recipe, template, plumbing) plus
// the run seed; keys ablation sweeps share the teacher and cache through it.
std::string stage1_scope_hash(const ExperimentConfig& cfg, uint64_t seed);

}  // namespace pd::harness
