#include "eval/metrics.hpp"

#include <set>
#include <sstream>

namespace pd::eval {

namespace {

using core::Vec;

int predict(const Vec& raw_feature, const cache::ClassVectorTable& table) {
  const Vec u = core::l2_normalize(raw_feature);
  const Vec q = core::similarity_logits(u, table.w.data(), table.n, table.d);
  return core::argmax(q);
}

}  // namespace

ImageBranch ImageBranch::from_model(const model::Model& m, Role role) {
  ImageBranch b;
  b.role_ = role;
  b.img_cfg_ = m.cfg.image;
  for (const auto& name : m.params.names_with_prefix("image.")) {
    const model::Tensor& src = m.params.at(name);
    b.bundle_.add(name, src.dims).data = src.data;
  }
  for (const auto& name : m.params.names_with_prefix("prompts.visual.")) {
    const model::Tensor& src = m.params.at(name);
    b.bundle_.add(name, src.dims).data = src.data;
  }
  if (m.cfg.projector_layers > 0) {
    b.has_projector_ = true;
    for (const auto& name : m.params.names_with_prefix("projector.")) {
      const model::Tensor& src = m.params.at(name);
      b.bundle_.add(name, src.dims).data = src.data;
    }
  }
  return b;
}

core::Vec ImageBranch::raw_feature(std::span<const float> image) const {
  const model::TowerView tower = model::make_tower_view(bundle_, "image", img_cfg_);
  const model::PromptView prompts = model::make_prompt_view(bundle_, "prompts.visual");
  Vec feat = model::vision_forward(tower, prompts, image, nullptr);
  if (has_projector_) {
    feat = model::project(bundle_, "projector", feat, nullptr);
  }
  return feat;
}

int ImageBranch::output_dim() const {
  if (has_projector_) {
    int n = model::projector_num_layers(bundle_, "projector");
    return bundle_.at("projector.fc" + std::to_string(n - 1) + ".w").dim(0);
  }
  return img_cfg_.output_dim;
}

double top1_accuracy(const FeatureFn& feature,
                     const std::vector<data::LabeledSample>& samples,
                     const cache::ClassVectorTable& table) {
  if (samples.empty()) throw DataError("top1_accuracy: empty sample set");
  int correct = 0;
  for (const auto& s : samples) {
    if (predict(feature(s.image), table) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double top1_accuracy(const ImageBranch& scorer,
                     const std::vector<data::LabeledSample>& samples,
                     const cache::ClassVectorTable& table, CostCounter& costs,
                     Phase phase) {
  return top1_accuracy(
      [&](std::span<const float> img) {
        scorer.count_forward(costs, phase);
        return scorer.raw_feature(img);
      },
      samples, table);
}

EvalReport evaluate_base_to_novel(const ImageBranch& student,
                                  const cache::ClassVectorTable& table,
                                  const std::vector<data::LabeledSample>& test,
                                  const data::ClassSplit& split,
                                  const std::vector<std::string>& class_names,
                                  bool novel_full_table, CostCounter& costs,
                                  Phase phase) {
  if (test.empty()) throw DataError("evaluate_base_to_novel: empty test set");
  const auto validation = cache::validate_cache(table, class_names, student.output_dim());
  if (!validation.ok()) {
    throw DataError("class-vector table fails validation: " + validation.violations[0]);
  }

  // Novel-only sub-table for the flagged protocol variant.
  cache::ClassVectorTable novel_table;
  if (!novel_full_table) {
    novel_table.d = table.d;
    novel_table.n = static_cast<int>(split.novel.size());
    for (int c : split.novel) {
      novel_table.class_names.push_back(table.class_names[c]);
      const float* r = table.row(c);
      novel_table.w.insert(novel_table.w.end(), r, r + table.d);
    }
  }
  std::set<int> novel_set(split.novel.begin(), split.novel.end());

  std::vector<int64_t> per_class_correct(table.n, 0), per_class_total(table.n, 0);
  int64_t base_correct = 0, base_total = 0, novel_correct = 0, novel_total = 0;
  for (const auto& s : test) {
    student.count_forward(costs, phase);
    const Vec feat = student.raw_feature(s.image);
    const bool is_novel = novel_set.count(s.label) != 0;
    int predicted;
    if (is_novel && !novel_full_table) {
      const int local = predict(feat, novel_table);
      predicted = split.novel[local];
    } else {
      predicted = predict(feat, table);
    }
    const bool correct = predicted == s.label;
    per_class_total[s.label]++;
    if (correct) per_class_correct[s.label]++;
    if (is_novel) {
      novel_total++;
      if (correct) novel_correct++;
    } else {
      base_total++;
      if (correct) base_correct++;
    }
  }

  EvalReport rep;
  rep.sample_count = static_cast<int>(test.size());
  rep.novel_full_table = novel_full_table;
  rep.base_acc = base_total ? static_cast<double>(base_correct) / base_total : 0.0;
  rep.novel_acc = novel_total ? static_cast<double>(novel_correct) / novel_total : 0.0;
  rep.hm = (rep.base_acc > 0.0 && rep.novel_acc > 0.0)
               ? core::harmonic_mean(rep.base_acc, rep.novel_acc)
               : 0.0;
  rep.per_class_acc.resize(table.n, 0.0);
  for (int c = 0; c < table.n; ++c) {
    rep.per_class_acc[c] = per_class_total[c]
                               ? static_cast<double>(per_class_correct[c]) /
                                     per_class_total[c]
                               : 0.0;
  }
  return rep;
}

double agreement_rate(const ImageBranch& student, const ImageBranch& teacher,
                      const std::vector<std::vector<float>>& images,
                      const cache::ClassVectorTable& table, CostCounter& costs,
                      Phase phase) {
  if (images.empty()) throw DataError("agreement_rate: empty image set");
  int64_t agree = 0;
  for (const auto& img : images) {
    student.count_forward(costs, phase);
    teacher.count_forward(costs, phase);
    const int ps = predict(student.raw_feature(img), table);
    const int pt = predict(teacher.raw_feature(img), table);
    if (ps == pt) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(images.size());
}

CostReport cost_report(const CostCounter& counter, int64_t expected_classes) {
  CostReport r;
  r.stage1 = counter.at(Phase::stage1);
  r.cache_phase = counter.at(Phase::cache);
  r.stage2 = counter.at(Phase::stage2);
  r.inference = counter.at(Phase::inference);
  r.aux = counter.at(Phase::aux);
  r.total = counter.total();
  r.stage2_text_free = r.stage2.text_forwards == 0;
  r.inference_text_free = r.inference.text_forwards == 0;
  r.expected_cache_text = expected_classes;
  r.cache_text_matches =
      expected_classes < 0 || r.cache_phase.text_forwards == expected_classes;
  return r;
}

std::string cost_report_text(const CostReport& r) {
  std::ostringstream out;
  out << "forward-pass counts (teacher-img / student-img / text)\n";
  auto line = [&](const char* name, const PhaseCounts& c) {
    out << "  " << name << ": " << c.image_forwards_teacher << " / "
        << c.image_forwards_student << " / " << c.text_forwards << "\n";
  };
  line("stage1   ", r.stage1);
  line("cache    ", r.cache_phase);
  line("stage2   ", r.stage2);
  line("inference", r.inference);
  line("aux      ", r.aux);
  line("total    ", r.total);
  out << "  stage2 text-free: " << (r.stage2_text_free ? "yes" : "no")
      << ", inference text-free: " << (r.inference_text_free ? "yes" : "no");
  if (r.expected_cache_text >= 0) {
    out << ", cache text == classes: " << (r.cache_text_matches ? "yes" : "no");
  }
  out << "\n";
  return out.str();
}

}  // namespace pd::eval
