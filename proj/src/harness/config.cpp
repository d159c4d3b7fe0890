#include "harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "data/tokenizer.hpp"
#include "util/io.hpp"
#include "util/sha256.hpp"

namespace pd::harness {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

template <typename E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> items;
  std::string to_string(E e) const {
    for (const auto& [v, n] : items) {
      if (v == e) return n;
    }
    return "?";
  }
  E from_string(const std::string& key, const std::string& s) const {
    for (const auto& [v, n] : items) {
      if (s == n) return v;
    }
    std::string opts;
    for (const auto& [v, n] : items) opts += std::string(n) + " ";
    throw ConfigError("key '" + key + "' expects one of {" + opts + "}, got '" + s + "'");
  }
};

const EnumNames<train::LrSchedule> kSchedule{
    {{train::LrSchedule::constant, "constant"}, {train::LrSchedule::cosine, "cosine"}}};
const EnumNames<train::TextRefresh> kRefresh{
    {{train::TextRefresh::per_step, "per_step"},
     {train::TextRefresh::per_epoch, "per_epoch"}}};
const EnumNames<model::DistillMode> kMode{
    {{model::DistillMode::logit_kl, "logit_kl"},
     {model::DistillMode::feature_l1, "feature_l1"},
     {model::DistillMode::feature_mse, "feature_mse"}}};
const EnumNames<model::TrainableSet> kTrainable{
    {{model::TrainableSet::prompts_and_projector, "prompts_and_projector"},
     {model::TrainableSet::projector_only, "projector_only"},
     {model::TrainableSet::full_finetune, "full_finetune"}}};
const EnumNames<model::TextBranchMode> kTextBranch{
    {{model::TextBranchMode::shared_cache, "shared_cache"},
     {model::TextBranchMode::own_text_encoder, "own_text_encoder"}}};
const EnumNames<data::PoolScope> kScope{
    {{data::PoolScope::full, "full"}, {data::PoolScope::base_only, "base_only"}}};

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::map<std::string, KeyHandler> make_handlers() {
  std::map<std::string, KeyHandler> h;
  auto add_int = [&](const std::string& key, auto member) {
    h[key] = {[member, key](ExperimentConfig& c, const std::string& k,
                            const std::string& v) { c.*member = parse_int(k, v); },
              [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    (void)key;
  };
  (void)add_int;

  auto add = [&](const std::string& key, auto setter, auto getter) {
    h[key] = {setter, getter};
  };

  // dataset
  add("dataset.num_classes",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.num_classes = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.dataset.num_classes); });
  add("dataset.images_per_class",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.images_per_class = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.dataset.images_per_class); });
  add("dataset.test_per_class",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.test_per_class = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.dataset.test_per_class); });
  add("dataset.image_side",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.image_side = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.dataset.image_side); });
  add("dataset.noise_std",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.noise_std = parse_double(k, v);
      },
      [](const ExperimentConfig& c) { return fmt_double(c.dataset.noise_std); });
  add("dataset.seed",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.dataset.seed = parse_u64(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.dataset.seed); });

  // towers
  auto add_tower = [&](const std::string& section, ExperimentConfig::Tower ExperimentConfig::*tower) {
    add(section + ".layers",
        [tower](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*tower).layers = parse_int(k, v);
        },
        [tower](const ExperimentConfig& c) { return std::to_string((c.*tower).layers); });
    add(section + ".width",
        [tower](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*tower).width = parse_int(k, v);
        },
        [tower](const ExperimentConfig& c) { return std::to_string((c.*tower).width); });
    add(section + ".heads",
        [tower](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*tower).heads = parse_int(k, v);
        },
        [tower](const ExperimentConfig& c) { return std::to_string((c.*tower).heads); });
    add(section + ".dim",
        [tower](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*tower).dim = parse_int(k, v);
        },
        [tower](const ExperimentConfig& c) { return std::to_string((c.*tower).dim); });
  };
  add_tower("teacher", &ExperimentConfig::teacher);
  add_tower("student", &ExperimentConfig::student);

  // prompts / projector
  add("prompt.depth",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.prompt_depth = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.prompt_depth); });
  add("prompt.length",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.prompt_length = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.prompt_length); });
  add("projector.layers",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.projector_layers = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.projector_layers); });

  // training stages
  auto add_stage = [&](const std::string& section, train::TrainConfig ExperimentConfig::*stage) {
    add(section + ".epochs",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).epochs = parse_int(k, v);
        },
        [stage](const ExperimentConfig& c) { return std::to_string((c.*stage).epochs); });
    add(section + ".batch_size",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).batch_size = parse_int(k, v);
        },
        [stage](const ExperimentConfig& c) { return std::to_string((c.*stage).batch_size); });
    add(section + ".lr",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).lr = parse_double(k, v);
        },
        [stage](const ExperimentConfig& c) { return fmt_double((c.*stage).lr); });
    add(section + ".momentum",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).momentum = parse_double(k, v);
        },
        [stage](const ExperimentConfig& c) { return fmt_double((c.*stage).momentum); });
    add(section + ".tau",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).tau = parse_double(k, v);
        },
        [stage](const ExperimentConfig& c) { return fmt_double((c.*stage).tau); });
    add(section + ".schedule",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).schedule = kSchedule.from_string(k, v);
        },
        [stage](const ExperimentConfig& c) {
          return kSchedule.to_string((c.*stage).schedule);
        });
    add(section + ".augment",
        [stage](ExperimentConfig& c, const std::string& k, const std::string& v) {
          (c.*stage).augment = parse_bool(k, v);
        },
        [stage](const ExperimentConfig& c) {
          return (c.*stage).augment ? "true" : "false";
        });
  };
  add_stage("stage1", &ExperimentConfig::stage1);
  add_stage("stage2", &ExperimentConfig::stage2);
  add("stage1.shots",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.shots = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.shots); });
  add("stage1.text_refresh",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.text_refresh = kRefresh.from_string(k, v);
      },
      [](const ExperimentConfig& c) { return kRefresh.to_string(c.text_refresh); });

  // distillation variant
  add("distill.mode",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.variant.mode = kMode.from_string(k, v);
      },
      [](const ExperimentConfig& c) { return kMode.to_string(c.variant.mode); });
  add("distill.trainable",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.variant.trainable = kTrainable.from_string(k, v);
      },
      [](const ExperimentConfig& c) { return kTrainable.to_string(c.variant.trainable); });
  add("distill.text_branch",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.variant.text_branch = kTextBranch.from_string(k, v);
      },
      [](const ExperimentConfig& c) {
        return kTextBranch.to_string(c.variant.text_branch);
      });

  // pool / eval / cache
  add("pool.scope",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.pool_scope = kScope.from_string(k, v);
      },
      [](const ExperimentConfig& c) { return kScope.to_string(c.pool_scope); });
  add("pool.per_class_cap",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.pool_per_class_cap = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.pool_per_class_cap); });
  add("eval.novel_table",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        if (v == "full") {
          c.eval_novel_full_table = true;
        } else if (v == "novel_only") {
          c.eval_novel_full_table = false;
        } else {
          throw ConfigError("key '" + k + "' expects full|novel_only, got '" + v + "'");
        }
      },
      [](const ExperimentConfig& c) {
        return c.eval_novel_full_table ? "full" : "novel_only";
      });
  add("cache.template",
      [](ExperimentConfig& c, const std::string&, const std::string& v) {
        c.template_str = v;
      },
      [](const ExperimentConfig& c) { return c.template_str; });
  add("cache.allow_fingerprint_mismatch",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.allow_fingerprint_mismatch = parse_bool(k, v);
      },
      [](const ExperimentConfig& c) {
        return c.allow_fingerprint_mismatch ? "true" : "false";
      });

  // seeds
  add("run.seeds",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        std::vector<uint64_t> seeds;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item = trim(item);
          if (item.empty()) continue;
          seeds.push_back(parse_u64(k, item));
        }
        if (seeds.empty()) throw ConfigError("key '" + k + "' needs at least one seed");
        c.seeds = seeds;
      },
      [](const ExperimentConfig& c) {
        std::string s;
        for (size_t i = 0; i < c.seeds.size(); ++i) {
          if (i) s += ",";
          s += std::to_string(c.seeds[i]);
        }
        return s;
      });

  // plumbing
  add("image.patch_size",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.image_patch_size = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.image_patch_size); });
  add("image.max_seq_len",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.image_max_seq_len = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.image_max_seq_len); });
  add("text.vocab_size",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.text_vocab_size = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.text_vocab_size); });
  add("text.max_seq_len",
      [](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.text_max_seq_len = parse_int(k, v);
      },
      [](const ExperimentConfig& c) { return std::to_string(c.text_max_seq_len); });

  return h;
}

const std::map<std::string, KeyHandler>& handlers() {
  static const std::map<std::string, KeyHandler> h = make_handlers();
  return h;
}

void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto it = handlers().find(key);
  if (it == handlers().end()) throw ConfigError("unknown key '" + key + "'");
  it->second.set(cfg, key, value);
}

}  // namespace

void ExperimentConfig::validate() const {
  dataset.validate();
  auto check_tower = [](const char* what, const Tower& t) {
    if (t.layers < 1 || t.width < 1 || t.heads < 1 || t.dim < 1) {
      throw ConfigError(std::string(what) + ": layers/width/heads/dim must be >= 1");
    }
    if (t.width % t.heads != 0) {
      throw ConfigError(std::string(what) + ": width must be divisible by heads");
    }
  };
  check_tower("teacher", teacher);
  check_tower("student", student);
  if (prompt_depth < 1) throw ConfigError("prompt.depth must be >= 1");
  if (prompt_length < 1) throw ConfigError("prompt.length must be >= 1");
  if (projector_layers < 1 || projector_layers > 3) {
    throw ConfigError("projector.layers must be 1..3");
  }
  stage1.validate();
  stage2.validate();
  if (shots < 1) throw ConfigError("stage1.shots must be >= 1");
  if (pool_per_class_cap < 0) throw ConfigError("pool.per_class_cap must be >= 0");
  if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (image_patch_size < 1 || dataset.image_side % image_patch_size != 0) {
    throw ConfigError("image.patch_size must divide dataset.image_side");
  }
  // Model-level invariants (sequence budgets, head divisibility, ...).
  teacher_model_config().validate();
  student_model_config().validate();
  // Template must parse and its prefix must match the prompt length.
  const auto words = data::template_words(template_str);
  if (static_cast<int>(words.size()) != prompt_length) {
    throw ConfigError("template prefix has " + std::to_string(words.size()) +
                      " words but prompt.length is " + std::to_string(prompt_length));
  }
}

model::ModelConfig ExperimentConfig::teacher_model_config() const {
  model::ModelConfig m;
  m.image.num_layers = teacher.layers;
  m.image.width = teacher.width;
  m.image.num_heads = teacher.heads;
  m.image.patch_grid = dataset.image_side / image_patch_size;
  m.image.image_side = dataset.image_side;
  m.image.max_seq_len = image_max_seq_len;
  m.image.output_dim = teacher.dim;
  m.text.num_layers = teacher.layers;
  m.text.width = teacher.width;
  m.text.num_heads = teacher.heads;
  m.text.vocab_size = text_vocab_size;
  m.text.max_seq_len = text_max_seq_len;
  m.text.output_dim = teacher.dim;
  m.prompts.depth = prompt_depth;
  m.prompts.length = prompt_length;
  m.projector_layers = 0;
  return m;
}

model::ModelConfig ExperimentConfig::student_model_config() const {
  model::ModelConfig m;
  m.image.num_layers = student.layers;
  m.image.width = student.width;
  m.image.num_heads = student.heads;
  m.image.patch_grid = dataset.image_side / image_patch_size;
  m.image.image_side = dataset.image_side;
  m.image.max_seq_len = image_max_seq_len;
  m.image.output_dim = student.dim;
  m.text.num_layers = student.layers;
  m.text.width = student.width;
  m.text.num_heads = student.heads;
  m.text.vocab_size = text_vocab_size;
  m.text.max_seq_len = text_max_seq_len;
  m.text.output_dim = student.dim;
  m.prompts.depth = prompt_depth;
  m.prompts.length = prompt_length;
  m.projector_layers = projector_layers;
  m.projector_hidden = student.dim;
  m.projector_out = teacher.dim;
  return m;
}

ExperimentConfig parse_config(const std::string& file_text,
                              const std::vector<std::pair<std::string, std::string>>&
                                  overrides) {
  ExperimentConfig cfg;
  std::istringstream in(file_text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + " is not 'key = value': " + t);
    }
    apply_kv(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  for (const auto& [k, v] : overrides) apply_kv(cfg, k, v);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path,
                                   const std::vector<std::pair<std::string, std::string>>&
                                       overrides) {
  if (path.empty()) return parse_config("", overrides);
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), overrides);
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, h] : handlers()) {
    out << key << " = " << h.get(cfg) << "\n";
  }
  return out.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = dump_config(cfg);
  return sha256_hex(dump.data(), dump.size());
}

std::string stage1_scope_hash(const ExperimentConfig& cfg, uint64_t seed) {
  static const char* kPrefixes[] = {"dataset.", "teacher.",  "prompt.",
                                    "stage1.",  "cache.template", "text.",
                                    "image."};
  std::ostringstream out;
  const std::string dump = dump_config(cfg);
  std::istringstream in(dump);
  std::string line;
  while (std::getline(in, line)) {
    for (const char* p : kPrefixes) {
      if (line.rfind(p, 0) == 0) {
        out << line << "\n";
        break;
      }
    }
  }
  out << "run.seed = " << seed << "\n";
  const std::string scoped = out.str();
  return sha256_hex(scoped.data(), scoped.size());
}

}  // namespace pd::harness
