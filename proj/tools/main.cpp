// promptdistill CLI: two-stage prompt distillation pipeline for dual-encoder
// models. Subcommands mirror the pipeline stages so each one is runnable
// standalone against persisted artifacts.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "harness/ablation.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "util/errors.hpp"

namespace fs = std::filesystem;
using namespace pd;

namespace {

void usage() {
  std::cout <<
      "usage: promptdistill <command> [options] [--<section.key> <value> ...]\n"
      "\n"
      "commands:\n"
      "  pretrain   run Stage I (teacher prompt pretraining) only\n"
      "  cache      compute and persist the class-vector cache\n"
      "  distill    run Stage II (student prompt distillation)\n"
      "  eval       evaluate persisted artifacts and write reports\n"
      "  pipeline   run all stages end to end\n"
      "  ablate     sweep one axis (--axis <name>), seeds shared\n"
      "  report     print the report for a config's run directory\n"
      "\n"
      "options:\n"
      "  --config FILE   layered config file (key = value lines)\n"
      "  --resume        reuse existing valid artifacts (pipeline)\n"
      "  --axis NAME     ablation axis: kd_form method projector_layers\n"
      "                  temperature images_per_class teacher_capacity epochs\n"
      "  --<key> VALUE   override any config key, e.g. --stage2.epochs 40\n"
      "\n"
      "run directory root: ./runs (override with PROMPTDISTILL_RUN_ROOT)\n";
}

fs::path run_root() {
  if (const char* env = std::getenv("PROMPTDISTILL_RUN_ROOT")) return env;
  return "runs";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return 1;
  }
  const std::string cmd = argv[1];
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    usage();
    return 0;
  }

  fs::path config_path;
  bool resume = false;
  std::string axis;
  std::vector<std::pair<std::string, std::string>> overrides;

  try {
    for (int i = 2; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config") {
        if (++i >= argc) throw ConfigError("--config needs a file path");
        config_path = argv[i];
      } else if (arg == "--resume") {
        resume = true;
      } else if (arg == "--axis") {
        if (++i >= argc) throw ConfigError("--axis needs a value");
        axis = argv[i];
      } else if (arg.rfind("--", 0) == 0 && arg.find('.') != std::string::npos) {
        if (++i >= argc) throw ConfigError("flag " + arg + " needs a value");
        overrides.emplace_back(arg.substr(2), argv[i]);
      } else {
        throw ConfigError("unknown argument '" + arg + "'");
      }
    }

    const harness::ExperimentConfig cfg =
        harness::parse_config_file(config_path, overrides);
    const fs::path root = run_root();

    if (cmd == "pipeline" || cmd == "pretrain" || cmd == "cache" ||
        cmd == "distill" || cmd == "eval") {
      harness::StageId upto = harness::StageId::eval;
      harness::StageId force_from = harness::StageId::stage1;
      if (cmd == "pretrain") {
        upto = harness::StageId::stage1;
        force_from = harness::StageId::stage1;
      } else if (cmd == "cache") {
        upto = harness::StageId::cache;
        force_from = harness::StageId::cache;
      } else if (cmd == "distill") {
        upto = harness::StageId::stage2;
        force_from = harness::StageId::stage2;
      } else if (cmd == "eval") {
        force_from = harness::StageId::eval;
      } else {
        force_from = resume ? harness::StageId::eval : harness::StageId::stage1;
      }
      const auto man = harness::run_pipeline(cfg, root, force_from, upto);
      std::cout << "run directory: " << man.run_dir.string() << "\n";
      if (upto == harness::StageId::eval && man.ok()) {
        std::cout << harness::report_text(cfg, man);
      }
      return man.ok() ? 0 : 2;
    }

    if (cmd == "ablate") {
      if (axis.empty()) {
        std::string axes;
        for (const auto& a : harness::ablation_axes()) axes += a + " ";
        throw ConfigError("ablate needs --axis <name>; axes: " + axes);
      }
      const auto rep = harness::run_ablation(cfg, axis, root, /*resume=*/true);
      std::cout << rep.table_text;
      return 0;
    }

    if (cmd == "report") {
      const fs::path dir = harness::run_dir_for(cfg, root);
      const auto man = harness::load_manifest(dir / "manifest.json");
      std::cout << harness::report_text(cfg, man);
      const auto csv = dir / "report.csv";
      if (fs::exists(csv)) {
        std::cout << "\ncsv: " << csv.string() << "\n";
      }
      return man.ok() ? 0 : 2;
    }

    usage();
    throw ConfigError("unknown command '" + cmd + "'");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
