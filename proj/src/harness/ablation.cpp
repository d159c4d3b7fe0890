#include "harness/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "train/trainer.hpp"
#include "util/io.hpp"

namespace pd::harness {

namespace {

std::vector<AblationValue> axis_values(const ExperimentConfig& base,
                                       const std::string& axis) {
  std::vector<AblationValue> vals;
  auto push = [&](const std::string& label, ExperimentConfig cfg) {
    vals.push_back({label, std::move(cfg), {}, 0.0, 0.0});
  };
  if (axis == "kd_form") {
    for (auto mode : {model::DistillMode::logit_kl, model::DistillMode::feature_l1,
                      model::DistillMode::feature_mse}) {
      ExperimentConfig c = base;
      c.variant.mode = mode;
      const char* label = mode == model::DistillMode::logit_kl ? "logit_kl"
                          : mode == model::DistillMode::feature_l1 ? "feature_l1"
                                                                   : "feature_mse";
      push(label, c);
    }
  } else if (axis == "method") {
    {
      ExperimentConfig c = base;
      c.variant = {};
      push("prompts_and_projector", c);
    }
    {
      ExperimentConfig c = base;
      c.variant = {};
      c.variant.trainable = model::TrainableSet::projector_only;
      push("projector_only", c);
    }
    {
      ExperimentConfig c = base;
      c.variant = {};
      c.variant.trainable = model::TrainableSet::full_finetune;
      push("full_finetune", c);
    }
    {
      ExperimentConfig c = base;
      c.variant = {};
      c.variant.text_branch = model::TextBranchMode::own_text_encoder;
      push("own_text_encoder", c);
    }
  } else if (axis == "projector_layers") {
    for (int layers : {1, 2, 3}) {
      ExperimentConfig c = base;
      c.projector_layers = layers;
      push(std::to_string(layers) + "-layer", c);
    }
  } else if (axis == "temperature") {
    for (double tau : {0.5, 1.0, 2.0, 4.0}) {
      ExperimentConfig c = base;
      c.stage2.tau = tau;
      char label[32];
      std::snprintf(label, sizeof(label), "tau=%g", tau);
      push(label, c);
    }
  } else if (axis == "images_per_class") {
    for (int cap : {1, 4, 16, 64, 0}) {
      ExperimentConfig c = base;
      c.pool_per_class_cap = cap;
      push(cap == 0 ? "all" : std::to_string(cap), c);
    }
  } else if (axis == "teacher_capacity") {
    {
      ExperimentConfig c = base;
      c.teacher = {4, 32, 2, 32};
      push("teacher_small", c);
    }
    {
      ExperimentConfig c = base;
      c.teacher = {6, 64, 4, 64};
      push("teacher_large", c);
    }
  } else if (axis == "epochs") {
    for (int e : {20, 40, 60}) {
      ExperimentConfig c = base;
      c.stage2.epochs = e;
      push(std::to_string(e) + "ep", c);
    }
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  return vals;
}

}  // namespace

std::vector<std::string> ablation_axes() {
  return {"kd_form",          "method", "projector_layers", "temperature",
          "images_per_class", "teacher_capacity", "epochs"};
}

AblationReport run_ablation(const ExperimentConfig& base, const std::string& axis,
                            const std::filesystem::path& run_root, bool resume) {
  AblationReport rep;
  rep.axis = axis;
  rep.values = axis_values(base, axis);

  for (auto& v : rep.values) {
    v.manifest = run_pipeline(v.cfg, run_root,
                              resume ? StageId::eval : StageId::stage1);
    if (!v.manifest.ok()) {
      throw Error("ablation value '" + v.label + "' failed; see manifest in " +
                  v.manifest.run_dir.string());
    }
    double hm = 0.0, tacc = 0.0;
    for (const auto& sr : v.manifest.seeds) {
      hm += sr.report.hm;
      tacc += sr.teacher_test_acc;
    }
    v.mean_hm = hm / static_cast<double>(v.manifest.seeds.size());
    v.mean_teacher_acc = tacc / static_cast<double>(v.manifest.seeds.size());
  }

  std::stable_sort(rep.values.begin(), rep.values.end(),
                   [](const AblationValue& a, const AblationValue& b) {
                     return a.mean_hm > b.mean_hm;
                   });

  std::ostringstream csv;
  csv << "axis,value,variant,seed,base_acc,novel_acc,hm,agreement,text_forwards_stage2\n";
  std::ostringstream tab;
  tab << "ablation axis: " << axis << "  (sorted by mean HM)\n";
  tab << "value                   mean_HM   teacher_acc\n";
  for (const auto& v : rep.values) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-22s  %-8.4f  %-8.4f\n", v.label.c_str(),
                  v.mean_hm, v.mean_teacher_acc);
    tab << buf;
    for (const auto& sr : v.manifest.seeds) {
      csv << axis << "," << v.label << "," << train::variant_string(v.cfg.variant)
          << "," << sr.seed << "," << sr.report.base_acc << "," << sr.report.novel_acc
          << "," << sr.report.hm << "," << sr.agreement << ","
          << sr.costs.at(eval::Phase::stage2).text_forwards << "\n";
    }
  }
  rep.csv = csv.str();
  rep.table_text = tab.str();

  const std::filesystem::path out_dir =
      run_root / ("ablate_" + axis + "_" + config_hash(base).substr(0, 8));
  std::filesystem::create_directories(out_dir);
  atomic_write_text(out_dir / "comparison.csv", rep.csv);
  atomic_write_text(out_dir / "comparison.txt", rep.table_text);
  return rep;
}

}  // namespace pd::harness
