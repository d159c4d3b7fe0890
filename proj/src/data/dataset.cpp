#include "data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "util/io.hpp"
#include "util/rng.hpp"

namespace pd::data {

SyntheticDataset generate_synthetic_dataset(const DatasetSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  const int pixels = spec.image_side * spec.image_side;

  RngStream proto_rng(spec.seed, "data.prototypes");
  RngStream noise_rng(spec.seed, "data.noise");

  ds.prototypes.resize(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    ds.prototypes[c].resize(pixels);
    proto_rng.fill_normal(ds.prototypes[c], 0.0, 1.0);
    ds.class_names.push_back("class_" + std::to_string(c));
  }

  auto draw = [&](int c) {
    LabeledSample s;
    s.label = c;
    s.image = ds.prototypes[c];
    if (spec.noise_std > 0.0) {
      for (auto& v : s.image) {
        v += static_cast<float>(noise_rng.normal(0.0, spec.noise_std));
      }
    }
    return s;
  };

  // Train then test per class; disjoint by construction since every sample
  // is a fresh noise draw.
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int j = 0; j < spec.images_per_class; ++j) ds.train.push_back(draw(c));
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int j = 0; j < spec.test_per_class; ++j) ds.test.push_back(draw(c));
  }
  return ds;
}

ClassSplit base_novel_split(int num_classes) {
  if (num_classes < 4) {
    throw ConfigError("base/novel split needs at least 4 classes");
  }
  ClassSplit split;
  const int base_count = (num_classes + 1) / 2;  // ceil(N/2)
  for (int c = 0; c < num_classes; ++c) {
    (c < base_count ? split.base : split.novel).push_back(c);
  }
  return split;
}

ClassSplit base_novel_split(const std::vector<std::string>& class_names) {
  return base_novel_split(static_cast<int>(class_names.size()));
}

std::vector<LabeledSample> few_shot_sample(const std::vector<LabeledSample>& train,
                                           int k, const std::vector<int>& base,
                                           uint64_t seed) {
  if (k < 1) throw ConfigError("few-shot k must be >= 1");
  RngStream rng(seed, "sample.fewshot");
  std::vector<LabeledSample> out;
  for (int c : base) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(train.size()); ++i) {
      if (train[i].label == c) idx.push_back(i);
    }
    if (static_cast<int>(idx.size()) < k) {
      throw DataError("class " + std::to_string(c) + " has only " +
                      std::to_string(idx.size()) + " train samples, need " +
                      std::to_string(k));
    }
    // Partial Fisher-Yates: first k slots are a uniform sample w/o replacement.
    for (int j = 0; j < k; ++j) {
      const int swap_with =
          j + static_cast<int>(rng.below(static_cast<uint64_t>(idx.size() - j)));
      std::swap(idx[j], idx[swap_with]);
      out.push_back(train[idx[j]]);
    }
  }
  return out;
}

UnlabeledPool unlabeled_pool(const std::vector<LabeledSample>& train, int image_side,
                             PoolScope scope, int per_class_cap,
                             const ClassSplit& split) {
  UnlabeledPool pool;
  pool.image_side = image_side;
  std::set<int> base_set(split.base.begin(), split.base.end());
  std::vector<int> taken_per_class;
  for (const auto& s : train) {
    if (scope == PoolScope::base_only && !base_set.count(s.label)) continue;
    if (per_class_cap > 0) {
      if (s.label >= static_cast<int>(taken_per_class.size())) {
        taken_per_class.resize(s.label + 1, 0);
      }
      if (taken_per_class[s.label] >= per_class_cap) continue;
      ++taken_per_class[s.label];
    }
    pool.images.push_back(s.image);
  }
  return pool;
}

void export_dataset_manifest(const SyntheticDataset& ds,
                             const std::filesystem::path& path) {
  std::ostringstream out;
  out << "num_classes=" << ds.spec.num_classes
      << " images_per_class=" << ds.spec.images_per_class
      << " test_per_class=" << ds.spec.test_per_class
      << " image_side=" << ds.spec.image_side << " seed=" << ds.spec.seed << "\n";
  char buf[32];
  auto emit = [&](const char* tag, const std::vector<LabeledSample>& samples) {
    for (const auto& s : samples) {
      out << tag << " " << s.label;
      for (float v : s.image) {
        std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
        out << buf;
      }
      out << "\n";
    }
  };
  emit("train", ds.train);
  emit("test", ds.test);
  atomic_write_text(path, out.str());
}

}  // namespace pd::data
