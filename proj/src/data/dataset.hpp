#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "util/errors.hpp"

namespace pd::data {

// Prototype-plus-noise synthetic data: each class has a fixed seeded
// prototype image and samples are prototype + N(0, noise_std). The nearest
// prototype classifier is then a closed-form oracle for task separability.
struct DatasetSpec {
  int num_classes = 10;
  int images_per_class = 200;  // train images per class
  int test_per_class = 50;
  int image_side = 16;
  double noise_std = 0.25;
  uint64_t seed = 42;

  void validate() const {
    if (num_classes < 4) {
      throw ConfigError("num_classes must be >= 4 so base and novel are both >= 2");
    }
    if (images_per_class < 1) throw ConfigError("images_per_class must be >= 1");
    if (test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
    if (image_side < 1) throw ConfigError("image_side must be >= 1");
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  }
};

struct LabeledSample {
  std::vector<float> image;
  int label = 0;
};

struct SyntheticDataset {
  DatasetSpec spec;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<std::string> class_names;          // "class_0" .. "class_{N-1}"
  std::vector<std::vector<float>> prototypes;    // oracle/debug use only
};

SyntheticDataset generate_synthetic_dataset(const DatasetSpec& spec);

struct ClassSplit {
  std::vector<int> base;
  std::vector<int> novel;
};

// First ceil(N/2) classes by index are base, the rest novel.
ClassSplit base_novel_split(int num_classes);
ClassSplit base_novel_split(const std::vector<std::string>& class_names);

// Exactly k train samples per base class, seeded, none from novel classes.
std::vector<LabeledSample> few_shot_sample(const std::vector<LabeledSample>& train,
                                           int k, const std::vector<int>& base,
                                           uint64_t seed);

// Image-only view of the train set: the type carries no label field, so the
// distillation stage cannot read ground truth even by accident.
struct UnlabeledPool {
  int image_side = 0;
  std::vector<std::vector<float>> images;
};

enum class PoolScope { full, base_only };

UnlabeledPool unlabeled_pool(const std::vector<LabeledSample>& train, int image_side,
                             PoolScope scope, int per_class_cap,
                             const ClassSplit& split);

// Debug export: header line, then one text record per sample.
void export_dataset_manifest(const SyntheticDataset& ds,
                             const std::filesystem::path& path);

}  // namespace pd::data
