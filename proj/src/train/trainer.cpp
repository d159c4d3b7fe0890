#include "train/trainer.hpp"

#include <cmath>
#include <map>

#include "core/math.hpp"
#include "data/augment.hpp"
#include "kernels/kernels.hpp"
#include "util/sha256.hpp"

namespace pd::train {

namespace {

using core::Vec;
using eval::Phase;

const kern::KernelTable& K() { return kern::kernels(); }

std::string combined_frozen_checksum(const model::Model& teacher,
                                     const model::Model* student,
                                     const std::set<std::string>* student_frozen) {
  Sha256 h;
  const auto t = teacher.params.checksum();
  h.update(t.data(), t.size());
  if (student && student_frozen) {
    const auto s = student->params.checksum(*student_frozen);
    h.update(s.data(), s.size());
  }
  return Sha256::hex(h.finish());
}

// Logits of a normalized feature against a list of normalized rows.
Vec logits_against(const Vec& u, const std::vector<Vec>& rows) {
  Vec q(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    q[i] = K().dot(u.data(), rows[i].data(), static_cast<int>(u.size()));
  }
  return q;
}

}  // namespace

std::string variant_string(const DistillVariant& v) {
  std::string s;
  switch (v.mode) {
    case model::DistillMode::logit_kl: s = "logit_kl"; break;
    case model::DistillMode::feature_l1: s = "feature_l1"; break;
    case model::DistillMode::feature_mse: s = "feature_mse"; break;
  }
  switch (v.trainable) {
    case model::TrainableSet::prompts_and_projector: s += "+prompts_and_projector"; break;
    case model::TrainableSet::projector_only: s += "+projector_only"; break;
    case model::TrainableSet::full_finetune: s += "+full_finetune"; break;
  }
  switch (v.text_branch) {
    case model::TextBranchMode::shared_cache: s += "+shared_cache"; break;
    case model::TextBranchMode::own_text_encoder: s += "+own_text"; break;
  }
  return s;
}

double teacher_eval_loss(const model::Model& teacher,
                         const std::vector<data::LabeledSample>& samples,
                         const std::vector<int>& base_classes,
                         const std::vector<std::string>& class_names,
                         const data::Vocabulary& vocab,
                         const std::string& template_str, double tau,
                         eval::CostCounter& costs) {
  const model::TowerView itv = teacher.image_view();
  const model::TowerView ttv = teacher.text_view();
  const model::PromptView vps = teacher.visual_prompts();
  const model::PromptView tps = teacher.textual_prompts();
  std::map<int, int> local;
  std::vector<Vec> rows;
  for (int i = 0; i < static_cast<int>(base_classes.size()); ++i) {
    local[base_classes[i]] = i;
    const auto tokens = data::tokenize(vocab, template_str, class_names[base_classes[i]]);
    const Vec feat = model::text_forward(ttv, tps, tokens, nullptr);
    costs.add_text(Phase::aux, 1);
    rows.push_back(core::l2_normalize(feat));
  }
  double sum = 0.0;
  for (const auto& s : samples) {
    const Vec feat = model::vision_forward(itv, vps, s.image, nullptr);
    costs.add_teacher_image(Phase::aux, 1);
    const Vec u = core::l2_normalize(feat);
    sum += core::cross_entropy(logits_against(u, rows), local.at(s.label), tau);
  }
  return sum / static_cast<double>(samples.size());
}

TrainingLog pretrain_teacher(model::Model& teacher,
                             const std::vector<data::LabeledSample>& fewshot,
                             const std::vector<int>& base_classes,
                             const std::vector<std::string>& class_names,
                             const data::Vocabulary& vocab,
                             const std::string& template_str, const TrainConfig& cfg,
                             TextRefresh refresh, eval::CostCounter& costs) {
  cfg.validate();
  if (fewshot.empty()) throw DataError("pretrain_teacher: empty few-shot set");
  if (base_classes.empty()) throw DataError("pretrain_teacher: no base classes");

  std::map<int, int> local;
  for (int i = 0; i < static_cast<int>(base_classes.size()); ++i) {
    local[base_classes[i]] = i;
  }
  for (const auto& s : fewshot) {
    if (!local.count(s.label)) {
      throw DataError("few-shot sample labelled with non-base class " +
                      std::to_string(s.label));
    }
  }

  const auto part =
      model::partition_parameters(model::Stage::teacher_pretrain, teacher, nullptr);
  const int nb = static_cast<int>(base_classes.size());
  const int d = teacher.cfg.text.output_dim;
  std::vector<data::TokenSeq> tokens(nb);
  for (int i = 0; i < nb; ++i) {
    tokens[i] = data::tokenize(vocab, template_str, class_names[base_classes[i]]);
  }

  const model::TowerView itv = teacher.image_view();
  const model::TowerView ttv = teacher.text_view();
  const model::PromptView vps = teacher.visual_prompts();
  const model::PromptView tps = teacher.textual_prompts();

  const int batch = cfg.batch_size;
  const int steps_per_epoch = static_cast<int>(fewshot.size()) / batch;
  if (steps_per_epoch < 1) {
    throw DataError("batch size exceeds the few-shot set size");
  }
  const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;

  RngStream shuffle_rng(cfg.seed, "sample.stage1.shuffle");
  RngStream aug_rng(cfg.seed, "augment.stage1");
  SgdState sgd;
  TrainingLog log;
  log.seed = cfg.seed;

  const bool per_step = refresh == TextRefresh::per_step;
  int64_t gstep = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(static_cast<int>(fewshot.size()));

    std::vector<Vec> epoch_rows;
    if (!per_step) {
      for (int i = 0; i < nb; ++i) {
        const Vec feat = model::text_forward(ttv, tps, tokens[i], nullptr);
        costs.add_text(Phase::stage1, 1);
        epoch_rows.push_back(core::l2_normalize(feat));
      }
    }

    double epoch_loss = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      model::GradMap grads;
      std::vector<model::Trace> text_traces(per_step ? nb : 0);
      std::vector<Vec> text_feats(nb), rows(nb), d_rows(nb, Vec(d, 0.0));
      if (per_step) {
        for (int i = 0; i < nb; ++i) {
          text_feats[i] = model::text_forward(ttv, tps, tokens[i], &text_traces[i]);
          costs.add_text(Phase::stage1, 1);
          rows[i] = core::l2_normalize(text_feats[i]);
        }
      } else {
        rows = epoch_rows;
      }

      double batch_loss = 0.0;
      model::Trace image_trace;
      for (int b = 0; b < batch; ++b) {
        const auto& sample = fewshot[perm[step * batch + b]];
        const std::vector<float> img =
            cfg.augment
                ? data::augment(sample.image, teacher.cfg.image.image_side, aug_rng)
                : sample.image;
        const Vec feat = model::vision_forward(itv, vps, img, &image_trace);
        costs.add_teacher_image(Phase::stage1, 1);
        const Vec u = core::l2_normalize(feat);
        const Vec q = logits_against(u, rows);
        const int y = local.at(sample.label);
        batch_loss += core::cross_entropy(q, y, cfg.tau) / batch;

        Vec dq = core::cross_entropy_grad(q, y, cfg.tau);
        for (auto& g : dq) g /= batch;
        Vec du(d, 0.0);
        for (int i = 0; i < nb; ++i) K().axpy(dq[i], rows[i].data(), du.data(), d);
        const Vec dfeat = core::l2_normalize_backward(feat, du);
        model::encoder_backward(itv, vps, image_trace, dfeat, grads,
                                /*weight_grads=*/false);
        if (per_step) {
          for (int i = 0; i < nb; ++i) K().axpy(dq[i], u.data(), d_rows[i].data(), d);
        }
      }
      if (per_step) {
        for (int i = 0; i < nb; ++i) {
          const Vec dtf = core::l2_normalize_backward(text_feats[i], d_rows[i]);
          model::encoder_backward(ttv, tps, text_traces[i], dtf, grads,
                                  /*weight_grads=*/false);
        }
      }

      const double lr_t = learning_rate_at(cfg, gstep, total_steps);
      sgd_step(teacher.params, part.teacher_trainable, grads, lr_t, cfg.momentum, sgd);
      log.steps.push_back({gstep, epoch, batch_loss, lr_t});
      epoch_loss += batch_loss;
      ++gstep;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.mean_train_loss = epoch_loss / steps_per_epoch;
    er.eval_loss = teacher_eval_loss(teacher, fewshot, base_classes, class_names,
                                     vocab, template_str, cfg.tau, costs);
    er.frozen_checksum =
        Sha256::hex(teacher.params.checksum(part.teacher_frozen));
    log.epochs.push_back(er);
  }
  return log;
}

TrainingLog distill_student(const model::Model& teacher, model::Model& student,
                            const cache::ClassVectorTable& table,
                            const data::UnlabeledPool& pool, const TrainConfig& cfg,
                            const DistillVariant& variant,
                            bool allow_fingerprint_mismatch,
                            eval::CostCounter& costs, const data::Vocabulary* vocab,
                            const std::string* template_str) {
  cfg.validate();
  if (pool.images.empty()) throw DataError("distill_student: empty unlabeled pool");
  if (table.fingerprint != cache::teacher_fingerprint(teacher) &&
      !allow_fingerprint_mismatch) {
    throw CacheIntegrityError(
        "class-vector cache fingerprint does not match the loaded teacher");
  }

  const bool own_text = variant.text_branch == model::TextBranchMode::own_text_encoder;
  const bool logit_mode = variant.mode == model::DistillMode::logit_kl;
  const core::FeatureLoss feat_kind = variant.mode == model::DistillMode::feature_l1
                                          ? core::FeatureLoss::l1
                                          : core::FeatureLoss::mse;
  if (own_text && !logit_mode) {
    throw ConfigError("own-text-encoder distillation is defined for logit_kl only");
  }
  if (own_text && (!vocab || !template_str)) {
    throw ConfigError("own-text-encoder distillation needs a vocabulary and template");
  }
  const bool uses_projector = !own_text;
  if (uses_projector) {
    if (student.cfg.projector_layers < 1) {
      throw ConfigError("shared-cache distillation requires a student projector");
    }
    if (student.cfg.projector_out != table.d) {
      throw ConfigError("projector output dim " +
                        std::to_string(student.cfg.projector_out) +
                        " does not match class-vector dim " + std::to_string(table.d));
    }
  }

  const auto part = model::partition_parameters(model::Stage::student_distill, teacher,
                                                &student, variant.trainable,
                                                variant.text_branch);
  const bool weight_grads = variant.trainable == model::TrainableSet::full_finetune;
  const bool encoder_grads =
      variant.trainable != model::TrainableSet::projector_only;

  const model::TowerView t_itv = teacher.image_view();
  const model::PromptView t_vps = teacher.visual_prompts();
  const model::TowerView s_itv = student.image_view();
  const model::PromptView s_vps = student.visual_prompts();

  // Teacher-side text features for the own-text variant: the teacher's own
  // rows, recomputed here instead of read from the shared table, and paid for
  // in stage-2 text forwards.
  std::vector<Vec> teacher_rows;
  std::vector<data::TokenSeq> class_tokens;
  if (own_text) {
    const model::TowerView t_ttv = teacher.text_view();
    const model::PromptView t_tps = teacher.textual_prompts();
    for (const auto& name : table.class_names) {
      class_tokens.push_back(data::tokenize(*vocab, *template_str, name));
      const Vec feat = model::text_forward(t_ttv, t_tps, class_tokens.back(), nullptr);
      costs.add_text(Phase::stage2, 1);
      teacher_rows.push_back(core::l2_normalize(feat));
    }
  }

  const int batch = cfg.batch_size;
  const int steps_per_epoch = static_cast<int>(pool.images.size()) / batch;
  if (steps_per_epoch < 1) throw DataError("batch size exceeds the pool size");
  const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;
  const int n = table.n;
  const int d_s = student.cfg.image.output_dim;

  // Teacher features over the un-augmented pool, computed once for the
  // per-epoch eval metric (the teacher is frozen, so they never change).
  std::vector<Vec> pool_teacher_feat;
  pool_teacher_feat.reserve(pool.images.size());
  for (const auto& img : pool.images) {
    pool_teacher_feat.push_back(model::vision_forward(t_itv, t_vps, img, nullptr));
    costs.add_teacher_image(Phase::aux, 1);
  }

  RngStream shuffle_rng(cfg.seed, "sample.stage2.shuffle");
  RngStream aug_rng(cfg.seed, "augment.stage2");
  SgdState sgd;
  TrainingLog log;
  log.seed = cfg.seed;

  const model::TowerView s_ttv = own_text ? student.text_view() : model::TowerView{};
  const model::PromptView s_tps = own_text ? student.textual_prompts() : model::PromptView{};

  int64_t gstep = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(static_cast<int>(pool.images.size()));
    double epoch_loss = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      model::GradMap grads;
      double batch_loss = 0.0;

      std::vector<model::Trace> stext_traces(own_text ? n : 0);
      std::vector<Vec> stext_feats(own_text ? n : 0), student_rows(own_text ? n : 0);
      std::vector<Vec> d_student_rows;
      if (own_text) {
        for (int i = 0; i < n; ++i) {
          stext_feats[i] =
              model::text_forward(s_ttv, s_tps, class_tokens[i], &stext_traces[i]);
          costs.add_text(Phase::stage2, 1);
          student_rows[i] = core::l2_normalize(stext_feats[i]);
        }
        d_student_rows.assign(n, Vec(d_s, 0.0));
      }

      model::Trace strace;
      model::ProjectorTrace ptrace;
      for (int b = 0; b < batch; ++b) {
        const auto& raw = pool.images[perm[step * batch + b]];
        const std::vector<float> img =
            cfg.augment ? data::augment(raw, pool.image_side, aug_rng) : raw;

        const Vec t_feat = model::vision_forward(t_itv, t_vps, img, nullptr);
        costs.add_teacher_image(Phase::stage2, 1);
        const Vec s_feat =
            model::vision_forward(s_itv, s_vps, img, encoder_grads ? &strace : nullptr);
        costs.add_student_image(Phase::stage2, 1);

        Vec d_s_feat;
        if (own_text) {
          const Vec u_t = core::l2_normalize(t_feat);
          const Vec u_s = core::l2_normalize(s_feat);
          const Vec q_t = logits_against(u_t, teacher_rows);
          const Vec q_s = logits_against(u_s, student_rows);
          batch_loss += core::kd_loss(q_t, q_s, cfg.tau) / batch;
          Vec dq = core::kd_loss_grad_student(q_t, q_s, cfg.tau);
          for (auto& g : dq) g /= batch;
          Vec du(d_s, 0.0);
          for (int i = 0; i < n; ++i) {
            K().axpy(dq[i], student_rows[i].data(), du.data(), d_s);
            K().axpy(dq[i], u_s.data(), d_student_rows[i].data(), d_s);
          }
          d_s_feat = core::l2_normalize_backward(s_feat, du);
        } else if (logit_mode) {
          const Vec p = model::project(student.params, "projector", s_feat, &ptrace);
          const Vec u_s = core::l2_normalize(p);
          const Vec u_t = core::l2_normalize(t_feat);
          const Vec q_t = core::similarity_logits(u_t, table.w.data(), n, table.d);
          const Vec q_s = core::similarity_logits(u_s, table.w.data(), n, table.d);
          batch_loss += core::kd_loss(q_t, q_s, cfg.tau) / batch;
          Vec dq = core::kd_loss_grad_student(q_t, q_s, cfg.tau);
          for (auto& g : dq) g /= batch;
          Vec du(table.d);
          K().gemm_nn_wf32(dq.data(), table.w.data(), du.data(), 1, table.d, n, false);
          const Vec dp = core::l2_normalize_backward(p, du);
          d_s_feat = model::project_backward(student.params, "projector", ptrace, dp, grads);
        } else {
          // Feature distillation: post-projector, pre-normalization student
          // features against pre-normalization teacher features.
          const Vec p = model::project(student.params, "projector", s_feat, &ptrace);
          batch_loss += core::feature_kd_loss(t_feat, p, feat_kind) / batch;
          Vec dp = core::feature_kd_loss_grad_student(t_feat, p, feat_kind);
          for (auto& g : dp) g /= batch;
          d_s_feat = model::project_backward(student.params, "projector", ptrace, dp, grads);
        }

        if (encoder_grads) {
          model::encoder_backward(s_itv, s_vps, strace, d_s_feat, grads, weight_grads);
        }
      }
      if (own_text) {
        for (int i = 0; i < n; ++i) {
          const Vec dtf =
              core::l2_normalize_backward(stext_feats[i], d_student_rows[i]);
          model::encoder_backward(s_ttv, s_tps, stext_traces[i], dtf, grads,
                                  weight_grads);
        }
      }

      const double lr_t = learning_rate_at(cfg, gstep, total_steps);
      sgd_step(student.params, part.student_trainable, grads, lr_t, cfg.momentum, sgd);
      log.steps.push_back({gstep, epoch, batch_loss, lr_t});
      epoch_loss += batch_loss;
      ++gstep;
    }

    // Frozen-snapshot loss over the whole un-augmented pool.
    std::vector<Vec> eval_student_rows;
    if (own_text) {
      for (int i = 0; i < n; ++i) {
        const Vec feat = model::text_forward(s_ttv, s_tps, class_tokens[i], nullptr);
        costs.add_text(Phase::aux, 1);
        eval_student_rows.push_back(core::l2_normalize(feat));
      }
    }
    double eval_loss = 0.0;
    for (size_t i = 0; i < pool.images.size(); ++i) {
      const Vec s_feat = model::vision_forward(s_itv, s_vps, pool.images[i], nullptr);
      costs.add_student_image(Phase::aux, 1);
      const Vec& t_feat = pool_teacher_feat[i];
      if (own_text) {
        const Vec q_t = logits_against(core::l2_normalize(t_feat), teacher_rows);
        const Vec q_s = logits_against(core::l2_normalize(s_feat), eval_student_rows);
        eval_loss += core::kd_loss(q_t, q_s, cfg.tau);
      } else if (logit_mode) {
        const Vec p = model::project(student.params, "projector", s_feat, nullptr);
        const Vec q_t = core::similarity_logits(core::l2_normalize(t_feat),
                                                table.w.data(), n, table.d);
        const Vec q_s = core::similarity_logits(core::l2_normalize(p), table.w.data(),
                                                n, table.d);
        eval_loss += core::kd_loss(q_t, q_s, cfg.tau);
      } else {
        const Vec p = model::project(student.params, "projector", s_feat, nullptr);
        eval_loss += core::feature_kd_loss(t_feat, p, feat_kind);
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.mean_train_loss = epoch_loss / steps_per_epoch;
    er.eval_loss = eval_loss / static_cast<double>(pool.images.size());
    er.frozen_checksum = combined_frozen_checksum(teacher, &student, &part.student_frozen);
    log.epochs.push_back(er);
  }
  return log;
}

}  // namespace pd::train
