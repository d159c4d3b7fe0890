#include "harness/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <ctime>
#include <iostream>
#include <sstream>

#include "cache/class_vectors.hpp"
#include "data/tokenizer.hpp"
#include "train/trainer.hpp"
#include "util/io.hpp"
#include "util/rng.hpp"

namespace pd::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int stage_rank(StageId s) { return static_cast<int>(s); }

std::string now_iso() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

void save_costs(const eval::CostCounter& cc, const fs::path& path) {
  atomic_write_text(path, cc.serialize());
}

eval::CostCounter load_costs(const fs::path& path) {
  const auto bytes = read_file(path);
  return eval::CostCounter::deserialize(std::string(bytes.begin(), bytes.end()));
}

std::vector<std::vector<float>> test_images_of(const data::SyntheticDataset& ds) {
  std::vector<std::vector<float>> imgs;
  imgs.reserve(ds.test.size());
  for (const auto& s : ds.test) imgs.push_back(s.image);
  return imgs;
}

}  // namespace

fs::path run_dir_for(const ExperimentConfig& cfg, const fs::path& run_root) {
  return run_root / config_hash(cfg).substr(0, 16);
}

RunManifest run_pipeline(const ExperimentConfig& cfg, const fs::path& run_root,
                         StageId force_from, StageId upto) {
  cfg.validate();
  const data::SyntheticDataset ds = data::generate_synthetic_dataset(cfg.dataset);
  const data::Vocabulary vocab = data::Vocabulary::build(cfg.template_str, ds.class_names);
  if (vocab.size() > cfg.text_vocab_size) {
    throw ConfigError("vocabulary needs " + std::to_string(vocab.size()) +
                      " entries but text.vocab_size is " +
                      std::to_string(cfg.text_vocab_size));
  }
  const data::ClassSplit split = data::base_novel_split(ds.class_names);
  const data::TokenSeq template_ids =
      data::template_token_ids(vocab, cfg.template_str);
  const auto test_images = test_images_of(ds);
  // Agreement is the observable form of the imitation objective, so it is
  // measured on the same unlabeled domain images the student distills from.
  const data::UnlabeledPool agreement_pool =
      data::unlabeled_pool(ds.train, cfg.dataset.image_side, cfg.pool_scope,
                           cfg.pool_per_class_cap, split);
  const std::string snapshot = dump_config(cfg);

  RunManifest man;
  man.config_hash = config_hash(cfg);
  man.variant = train::variant_string(cfg.variant);
  man.run_dir = run_dir_for(cfg, run_root);
  fs::create_directories(man.run_dir);
  atomic_write_text(man.run_dir / "config.cfg", snapshot);
  man.created_at = now_iso();

  for (const uint64_t seed : cfg.seeds) {
    SeedRun sr;
    sr.seed = seed;
    sr.stage1_hash = stage1_scope_hash(cfg, seed).substr(0, 16);
    const fs::path s1dir = run_root / "stage1" / sr.stage1_hash;
    const fs::path sdir = man.run_dir / ("seed" + std::to_string(seed));
    fs::create_directories(s1dir);
    fs::create_directories(sdir);
    sr.teacher_ckpt = s1dir / "teacher.pkdc";
    sr.cache_file = s1dir / "class_vectors.pkdw";
    sr.stage1_log = s1dir / "stage1.log";
    sr.student_ckpt = sdir / "student.pkdc";
    sr.stage2_log = sdir / "stage2.log";

    StageStatus* failing = nullptr;
    try {
      model::Model teacher = model::build_model(
          cfg.teacher_model_config(), derive_seed(seed, "model.teacher"), template_ids);

      // ---- Stage I: teacher prompt pretraining -------------------------
      failing = &sr.stage1;
      bool reused = false;
      if (stage_rank(force_from) > stage_rank(StageId::stage1)) {
        try {
          model::load_checkpoint_into(teacher, sr.teacher_ckpt);
          sr.costs.merge(load_costs(s1dir / "costs.stage1.txt"));
          sr.stage1.state = "reused";
          reused = true;
        } catch (const Error&) {
          reused = false;
        }
      }
      if (!reused) {
        const auto fewshot =
            data::few_shot_sample(ds.train, cfg.shots, split.base, seed);
        train::TrainConfig c1 = cfg.stage1;
        c1.seed = derive_seed(seed, "train.stage1");
        eval::CostCounter cc;
        train::TrainingLog log =
            train::pretrain_teacher(teacher, fewshot, split.base, ds.class_names,
                                    vocab, cfg.template_str, c1, cfg.text_refresh, cc);
        log.config_snapshot = snapshot;
        model::save_checkpoint(teacher.params, sr.teacher_ckpt);
        train::export_training_log(log, sr.stage1_log);
        save_costs(cc, s1dir / "costs.stage1.txt");
        sr.costs.merge(cc);
        sr.stage1.state = "done";
      }
      if (stage_rank(upto) <= stage_rank(StageId::stage1)) {
        man.seeds.push_back(sr);
        man.updated_at = now_iso();
        save_manifest(man, man.run_dir / "manifest.json");
        continue;
      }

      // ---- Cache: compute and persist the shared class vectors ---------
      failing = &sr.cache_stage;
      cache::ClassVectorTable table;
      reused = false;
      if (stage_rank(force_from) > stage_rank(StageId::cache)) {
        try {
          table = cache::load_cache(sr.cache_file);
          if (table.fingerprint != cache::teacher_fingerprint(teacher)) {
            throw CacheIntegrityError("cache fingerprint does not match teacher");
          }
          sr.costs.merge(load_costs(s1dir / "costs.cache.txt"));
          sr.cache_stage.state = "reused";
          reused = true;
        } catch (const Error&) {
          reused = false;
        }
      }
      if (!reused) {
        eval::CostCounter cc;
        std::vector<std::string> warnings;
        table = cache::compute_class_vectors(teacher, ds.class_names, vocab,
                                             cfg.template_str, cc, eval::Phase::cache,
                                             &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        cache::save_cache(table, sr.cache_file);
        // Score against the persisted bytes from here on.
        table = cache::load_cache(sr.cache_file);
        save_costs(cc, s1dir / "costs.cache.txt");
        sr.costs.merge(cc);
        sr.cache_stage.state = "done";
      }
      if (stage_rank(upto) <= stage_rank(StageId::cache)) {
        man.seeds.push_back(sr);
        man.updated_at = now_iso();
        save_manifest(man, man.run_dir / "manifest.json");
        continue;
      }

      // ---- Stage II: student prompt distillation -----------------------
      failing = &sr.stage2;
      model::Model student = model::build_model(
          cfg.student_model_config(), derive_seed(seed, "model.student"), template_ids);

      // Reference points before any student training.
      eval::CostCounter cc_eval;
      const auto teacher_branch =
          eval::ImageBranch::from_model(teacher, eval::ImageBranch::Role::teacher);
      {
        const auto s0 =
            eval::ImageBranch::from_model(student, eval::ImageBranch::Role::student);
        const auto rep0 = eval::evaluate_base_to_novel(
            s0, table, ds.test, split, ds.class_names, cfg.eval_novel_full_table,
            cc_eval, eval::Phase::aux);
        sr.baseline_base_acc = rep0.base_acc;
        sr.baseline_novel_acc = rep0.novel_acc;
        sr.baseline_agreement = eval::agreement_rate(s0, teacher_branch, agreement_pool.images,
                                                     table, cc_eval, eval::Phase::aux);
        const auto rep_t = eval::evaluate_base_to_novel(
            teacher_branch, table, ds.test, split, ds.class_names,
            cfg.eval_novel_full_table, cc_eval, eval::Phase::aux);
        sr.teacher_base_acc = rep_t.base_acc;
        sr.teacher_novel_acc = rep_t.novel_acc;
        const double nb = static_cast<double>(split.base.size());
        const double nn = static_cast<double>(split.novel.size());
        sr.teacher_test_acc =
            (rep_t.base_acc * nb + rep_t.novel_acc * nn) / (nb + nn);
      }

      reused = false;
      if (stage_rank(force_from) > stage_rank(StageId::stage2)) {
        try {
          model::load_checkpoint_into(student, sr.student_ckpt);
          sr.costs.merge(load_costs(sdir / "costs.stage2.txt"));
          sr.stage2.state = "reused";
          reused = true;
        } catch (const Error&) {
          reused = false;
        }
      }
      if (!reused) {
        const data::UnlabeledPool pool =
            data::unlabeled_pool(ds.train, cfg.dataset.image_side, cfg.pool_scope,
                                 cfg.pool_per_class_cap, split);
        train::TrainConfig c2 = cfg.stage2;
        c2.seed = derive_seed(seed, "train.stage2");
        eval::CostCounter cc;
        train::TrainingLog log = train::distill_student(
            teacher, student, table, pool, c2, cfg.variant,
            cfg.allow_fingerprint_mismatch, cc, &vocab, &cfg.template_str);
        log.config_snapshot = snapshot;
        model::save_checkpoint(student.params, sr.student_ckpt);
        train::export_training_log(log, sr.stage2_log);
        save_costs(cc, sdir / "costs.stage2.txt");
        sr.costs.merge(cc);
        sr.stage2.state = "done";
      }
      if (stage_rank(upto) <= stage_rank(StageId::stage2)) {
        sr.costs.merge(cc_eval);
        man.seeds.push_back(sr);
        man.updated_at = now_iso();
        save_manifest(man, man.run_dir / "manifest.json");
        continue;
      }

      // ---- Eval: base-to-novel report, agreement, cost accounting ------
      failing = &sr.eval_stage;
      const auto s_branch =
          eval::ImageBranch::from_model(student, eval::ImageBranch::Role::student);
      eval::CostCounter cc2;
      sr.report = eval::evaluate_base_to_novel(s_branch, table, ds.test, split,
                                               ds.class_names,
                                               cfg.eval_novel_full_table, cc2,
                                               eval::Phase::inference);
      sr.report.seed = seed;
      sr.agreement = eval::agreement_rate(s_branch, teacher_branch, agreement_pool.images,
                                          table, cc2, eval::Phase::aux);
      sr.costs.merge(cc2);
      sr.costs.merge(cc_eval);
      sr.eval_stage.state = "done";
      failing = nullptr;
    } catch (const Error& e) {
      if (failing) {
        failing->state = "failed";
        failing->error = e.what();
      }
      std::cerr << "seed " << seed << " failed: " << e.what() << "\n";
    }
    // Downstream stages of a failed seed stay "pending"; mark them skipped.
    if (!sr.ok()) {
      for (StageStatus* st :
           {&sr.stage1, &sr.cache_stage, &sr.stage2, &sr.eval_stage}) {
        if (st->state == "pending") st->state = "skipped";
      }
    }
    man.seeds.push_back(sr);
    man.updated_at = now_iso();
    save_manifest(man, man.run_dir / "manifest.json");
  }

  if (stage_rank(upto) >= stage_rank(StageId::eval) && man.ok()) {
    atomic_write_text(man.run_dir / "report.csv", report_csv(cfg, man));
    atomic_write_text(man.run_dir / "report.txt", report_text(cfg, man));
  }
  return man;
}

std::string report_csv(const ExperimentConfig& cfg, const RunManifest& man) {
  std::ostringstream out;
  out << "variant,seed,base_acc,novel_acc,hm,agreement,text_forwards_stage2\n";
  for (const auto& sr : man.seeds) {
    out << train::variant_string(cfg.variant) << "," << sr.seed << ","
        << fmt(sr.report.base_acc) << "," << fmt(sr.report.novel_acc) << ","
        << fmt(sr.report.hm) << "," << fmt(sr.agreement) << ","
        << sr.costs.at(eval::Phase::stage2).text_forwards << "\n";
  }
  return out.str();
}

std::string report_text(const ExperimentConfig& cfg, const RunManifest& man) {
  std::ostringstream out;
  out << "run " << man.config_hash.substr(0, 16) << "  variant "
      << train::variant_string(cfg.variant) << "\n";
  out << "novel scoring table: " << (cfg.eval_novel_full_table ? "full (N-way)" : "novel-only")
      << "\n\n";
  out << "seed      base     novel    hm       agree    t.base   t.novel  base0    novel0\n";
  auto row = [&](const SeedRun& sr) {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "%-8llu  %-7.4f  %-7.4f  %-7.4f  %-7.4f  %-7.4f  %-7.4f  %-7.4f  %-7.4f\n",
                  static_cast<unsigned long long>(sr.seed), sr.report.base_acc,
                  sr.report.novel_acc, sr.report.hm, sr.agreement, sr.teacher_base_acc,
                  sr.teacher_novel_acc, sr.baseline_base_acc, sr.baseline_novel_acc);
    out << buf;
  };
  double mean_hm = 0, min_hm = 1e9, max_hm = -1e9;
  for (const auto& sr : man.seeds) {
    row(sr);
    mean_hm += sr.report.hm;
    min_hm = std::min(min_hm, sr.report.hm);
    max_hm = std::max(max_hm, sr.report.hm);
  }
  if (!man.seeds.empty()) {
    mean_hm /= static_cast<double>(man.seeds.size());
    char buf[120];
    std::snprintf(buf, sizeof(buf), "\nmean HM %.4f  (spread %.4f over %zu seeds)\n",
                  mean_hm, max_hm - min_hm, man.seeds.size());
    out << buf;
  }
  out << "\n";
  for (const auto& sr : man.seeds) {
    out << "seed " << sr.seed << " costs:\n"
        << eval::cost_report_text(
               eval::cost_report(sr.costs, cfg.dataset.num_classes));
  }
  return out.str();
}

void save_manifest(const RunManifest& man, const fs::path& path) {
  // Manifest completeness: every artifact a stage reports as produced must
  // exist and pass its format validation before we write the manifest.
  for (const auto& sr : man.seeds) {
    if (sr.stage1.state == "done" || sr.stage1.state == "reused") {
      model::load_checkpoint(sr.teacher_ckpt);
    }
    if (sr.cache_stage.state == "done" || sr.cache_stage.state == "reused") {
      cache::load_cache(sr.cache_file);
    }
    if (sr.stage2.state == "done" || sr.stage2.state == "reused") {
      model::load_checkpoint(sr.student_ckpt);
    }
  }
  json j;
  j["config_hash"] = man.config_hash;
  j["variant"] = man.variant;
  j["run_dir"] = man.run_dir.string();
  j["created_at"] = man.created_at;
  j["updated_at"] = man.updated_at;
  j["seeds"] = json::array();
  for (const auto& sr : man.seeds) {
    json s;
    s["seed"] = sr.seed;
    s["stage1_hash"] = sr.stage1_hash;
    s["teacher_ckpt"] = sr.teacher_ckpt.string();
    s["cache_file"] = sr.cache_file.string();
    s["stage1_log"] = sr.stage1_log.string();
    s["student_ckpt"] = sr.student_ckpt.string();
    s["stage2_log"] = sr.stage2_log.string();
    auto stage = [](const StageStatus& st) {
      json o;
      o["state"] = st.state;
      o["error"] = st.error;
      return o;
    };
    s["stages"]["stage1"] = stage(sr.stage1);
    s["stages"]["cache"] = stage(sr.cache_stage);
    s["stages"]["stage2"] = stage(sr.stage2);
    s["stages"]["eval"] = stage(sr.eval_stage);
    s["costs"] = sr.costs.serialize();
    s["report"]["base_acc"] = sr.report.base_acc;
    s["report"]["novel_acc"] = sr.report.novel_acc;
    s["report"]["hm"] = sr.report.hm;
    s["report"]["sample_count"] = sr.report.sample_count;
    s["report"]["novel_full_table"] = sr.report.novel_full_table;
    s["agreement"] = sr.agreement;
    s["baseline_base_acc"] = sr.baseline_base_acc;
    s["baseline_novel_acc"] = sr.baseline_novel_acc;
    s["baseline_agreement"] = sr.baseline_agreement;
    s["teacher_base_acc"] = sr.teacher_base_acc;
    s["teacher_novel_acc"] = sr.teacher_novel_acc;
    s["teacher_test_acc"] = sr.teacher_test_acc;
    j["seeds"].push_back(s);
  }
  atomic_write_text(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  const json j = json::parse(std::string(bytes.begin(), bytes.end()));
  RunManifest man;
  man.config_hash = j.at("config_hash").get<std::string>();
  man.variant = j.value("variant", "");
  man.run_dir = j.at("run_dir").get<std::string>();
  man.created_at = j.value("created_at", "");
  man.updated_at = j.value("updated_at", "");
  for (const auto& s : j.at("seeds")) {
    SeedRun sr;
    sr.seed = s.at("seed").get<uint64_t>();
    sr.stage1_hash = s.value("stage1_hash", "");
    sr.teacher_ckpt = s.value("teacher_ckpt", "");
    sr.cache_file = s.value("cache_file", "");
    sr.stage1_log = s.value("stage1_log", "");
    sr.student_ckpt = s.value("student_ckpt", "");
    sr.stage2_log = s.value("stage2_log", "");
    auto stage = [&](const char* name, StageStatus& st) {
      if (s.contains("stages") && s["stages"].contains(name)) {
        st.state = s["stages"][name].value("state", "pending");
        st.error = s["stages"][name].value("error", "");
      }
    };
    stage("stage1", sr.stage1);
    stage("cache", sr.cache_stage);
    stage("stage2", sr.stage2);
    stage("eval", sr.eval_stage);
    sr.costs = eval::CostCounter::deserialize(s.value("costs", ""));
    if (s.contains("report")) {
      sr.report.base_acc = s["report"].value("base_acc", 0.0);
      sr.report.novel_acc = s["report"].value("novel_acc", 0.0);
      sr.report.hm = s["report"].value("hm", 0.0);
      sr.report.sample_count = s["report"].value("sample_count", 0);
      sr.report.novel_full_table = s["report"].value("novel_full_table", true);
      sr.report.seed = sr.seed;
    }
    sr.agreement = s.value("agreement", 0.0);
    sr.baseline_base_acc = s.value("baseline_base_acc", 0.0);
    sr.baseline_novel_acc = s.value("baseline_novel_acc", 0.0);
    sr.baseline_agreement = s.value("baseline_agreement", 0.0);
    sr.teacher_base_acc = s.value("teacher_base_acc", 0.0);
    sr.teacher_novel_acc = s.value("teacher_novel_acc", 0.0);
    sr.teacher_test_acc = s.value("teacher_test_acc", 0.0);
    man.seeds.push_back(sr);
  }
  return man;
}

}  // namespace pd::harness
