#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cache/class_vectors.hpp"
#include "core/math.hpp"
#include "data/dataset.hpp"
#include "eval/cost_counter.hpp"
#include "model/model.hpp"

namespace pd::eval {

// Image-branch-only scorer. Construction copies exactly the tensors the
// inference path needs -- image tower, visual prompts, and the projector when
// present -- so a scorer plus a ClassVectorTable is the whole deployment
// artifact and no text encoder exists on this path.
class ImageBranch {
 public:
  enum class Role { teacher, student };

  static ImageBranch from_model(const model::Model& m, Role role);

  // Unnormalized feature in the joint space (post-projector for students).
  core::Vec raw_feature(std::span<const float> image) const;

  void count_forward(CostCounter& costs, Phase phase) const {
    if (role_ == Role::teacher) {
      costs.add_teacher_image(phase, 1);
    } else {
      costs.add_student_image(phase, 1);
    }
  }

  int output_dim() const;
  Role role() const { return role_; }

 private:
  Role role_ = Role::student;
  model::EncoderConfig img_cfg_;
  model::ParamStore bundle_;
  bool has_projector_ = false;
};

using FeatureFn = std::function<core::Vec(std::span<const float>)>;

// Fraction of samples whose argmax class over the table matches the label;
// lowest index wins ties. The generic overload lets tests plug oracle
// scorers.
double top1_accuracy(const FeatureFn& feature,
                     const std::vector<data::LabeledSample>& samples,
                     const cache::ClassVectorTable& table);
double top1_accuracy(const ImageBranch& scorer,
                     const std::vector<data::LabeledSample>& samples,
                     const cache::ClassVectorTable& table, CostCounter& costs,
                     Phase phase);

struct EvalReport {
  double base_acc = 0.0;
  double novel_acc = 0.0;
  double hm = 0.0;  // harmonic mean; 0 when either accuracy is 0
  std::vector<double> per_class_acc;
  int sample_count = 0;
  uint64_t seed = 0;
  bool novel_full_table = true;  // scoring mode, recorded in every report
};

// Base and novel accuracy over the test set, both scored against the full
// N-way table by default; novel_full_table=false switches novel samples to a
// novel-rows-only table for protocol comparison.
EvalReport evaluate_base_to_novel(const ImageBranch& student,
                                  const cache::ClassVectorTable& table,
                                  const std::vector<data::LabeledSample>& test,
                                  const data::ClassSplit& split,
                                  const std::vector<std::string>& class_names,
                                  bool novel_full_table, CostCounter& costs,
                                  Phase phase);

// Fraction of images where student and teacher argmax over the shared table
// coincide.
double agreement_rate(const ImageBranch& student, const ImageBranch& teacher,
                      const std::vector<std::vector<float>>& images,
                      const cache::ClassVectorTable& table, CostCounter& costs,
                      Phase phase);

struct CostReport {
  PhaseCounts stage1, cache_phase, stage2, inference, aux, total;
  bool stage2_text_free = false;
  bool inference_text_free = false;
  // cache text forwards == class count, when the expectation is known
  int64_t expected_cache_text = -1;
  bool cache_text_matches = false;
};

CostReport cost_report(const CostCounter& counter, int64_t expected_classes = -1);
std::string cost_report_text(const CostReport& r);

}  // namespace pd::eval
