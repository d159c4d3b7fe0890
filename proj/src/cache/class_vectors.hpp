#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "data/tokenizer.hpp"
#include "eval/cost_counter.hpp"
#include "model/model.hpp"

namespace pd::cache {

// The shared class vectors: teacher text features computed once, persisted,
// and reused bytewise-identically by teacher and student logits and by
// inference. Rows are unit-norm float32.
struct ClassVectorTable {
  int n = 0;
  int d = 0;
  std::vector<float> w;  // n x d row-major
  std::vector<std::string> class_names;
  std::array<uint8_t, 32> fingerprint{};  // checksum of the producing teacher

  const float* row(int i) const { return w.data() + static_cast<size_t>(i) * d; }
};

// Checksum binding a cache to the exact teacher (params + prompts) that
// produced it.
std::array<uint8_t, 32> teacher_fingerprint(const model::Model& teacher);

// Encodes "a photo of a {classname}" for every class through the teacher
// text branch; exactly class_names.size() text forwards, counted.
ClassVectorTable compute_class_vectors(const model::Model& teacher,
                                       const std::vector<std::string>& class_names,
                                       const data::Vocabulary& vocab,
                                       const std::string& template_str,
                                       eval::CostCounter& costs, eval::Phase phase,
                                       std::vector<std::string>* warnings = nullptr);

// Cache file ("PKDW"): magic, version, N, d, 32-byte fingerprint, name
// section, then N*d float32 little-endian row-major. Round trip is bit-exact.
void save_cache(const ClassVectorTable& table, const std::filesystem::path& path);
ClassVectorTable load_cache(const std::filesystem::path& path);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Row norms, name alignment against the evaluation split, and dimension
// against the student projector output. Report-returning, never throws.
ValidationReport validate_cache(const ClassVectorTable& table,
                                const std::vector<std::string>& expected_names,
                                int expected_dim);

}  // namespace pd::cache
