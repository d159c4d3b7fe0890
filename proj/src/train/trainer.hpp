#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cache/class_vectors.hpp"
#include "data/dataset.hpp"
#include "data/tokenizer.hpp"
#include "eval/cost_counter.hpp"
#include "model/model.hpp"
#include "train/log.hpp"
#include "train/sgd.hpp"

namespace pd::train {

// Stage-I text feature handling: encode the base-class texts each step with
// gradients flowing into the textual prompts, or refresh a fixed table once
// per epoch (cheaper at large N; textual prompts then receive no gradient).
enum class TextRefresh { per_step, per_epoch };

// The Stage-II ablation axes: distillation form, trainable set, and whether
// the student uses the shared cache or its own text branch.
struct DistillVariant {
  model::DistillMode mode = model::DistillMode::logit_kl;
  model::TrainableSet trainable = model::TrainableSet::prompts_and_projector;
  model::TextBranchMode text_branch = model::TextBranchMode::shared_cache;
};

std::string variant_string(const DistillVariant& v);

// Stage I: few-shot supervised prompt tuning of the teacher. Trains exactly
// the teacher prompt sets; every other teacher parameter is frozen
// bit-identically.
TrainingLog pretrain_teacher(model::Model& teacher,
                             const std::vector<data::LabeledSample>& fewshot,
                             const std::vector<int>& base_classes,
                             const std::vector<std::string>& class_names,
                             const data::Vocabulary& vocab,
                             const std::string& template_str, const TrainConfig& cfg,
                             TextRefresh refresh, eval::CostCounter& costs);

// Stage II: unsupervised distillation on the unlabeled pool. Per batch:
// teacher and student encode the same image, both score against the shared
// class vectors, and the student's trainable set follows the variant. The
// teacher is const and never receives gradients.
TrainingLog distill_student(const model::Model& teacher, model::Model& student,
                            const cache::ClassVectorTable& table,
                            const data::UnlabeledPool& pool, const TrainConfig& cfg,
                            const DistillVariant& variant,
                            bool allow_fingerprint_mismatch,
                            eval::CostCounter& costs,
                            const data::Vocabulary* vocab = nullptr,
                            const std::string* template_str = nullptr);

// Mean cross-entropy of the teacher on a labeled set with its current text
// features, un-augmented. Used for per-epoch log records.
double teacher_eval_loss(const model::Model& teacher,
                         const std::vector<data::LabeledSample>& samples,
                         const std::vector<int>& base_classes,
                         const std::vector<std::string>& class_names,
                         const data::Vocabulary& vocab,
                         const std::string& template_str, double tau,
                         eval::CostCounter& costs);

}  // namespace pd::train
