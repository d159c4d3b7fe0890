#include "cache/class_vectors.hpp"

#include <cmath>
#include <cstring>
#include <set>

#include "core/math.hpp"
#include "util/io.hpp"

namespace pd::cache {

namespace {
constexpr char kMagic[4] = {'P', 'K', 'D', 'W'};
constexpr uint32_t kVersion = 1;
constexpr double kRowNormTol = 1e-6;

void check_row_norms(const ClassVectorTable& t) {
  for (int i = 0; i < t.n; ++i) {
    double s = 0.0;
    const float* r = t.row(i);
    for (int j = 0; j < t.d; ++j) s += static_cast<double>(r[j]) * r[j];
    if (std::abs(std::sqrt(s) - 1.0) > kRowNormTol) {
      throw CacheIntegrityError("class vector row " + std::to_string(i) +
                                " is not unit norm");
    }
  }
}
}  // namespace

std::array<uint8_t, 32> teacher_fingerprint(const model::Model& teacher) {
  return teacher.params.checksum();
}

ClassVectorTable compute_class_vectors(const model::Model& teacher,
                                       const std::vector<std::string>& class_names,
                                       const data::Vocabulary& vocab,
                                       const std::string& template_str,
                                       eval::CostCounter& costs, eval::Phase phase,
                                       std::vector<std::string>* warnings) {
  if (class_names.size() < 2) {
    throw ConfigError("class vector table needs at least 2 classes");
  }
  ClassVectorTable table;
  table.n = static_cast<int>(class_names.size());
  table.d = teacher.cfg.text.output_dim;
  table.class_names = class_names;
  table.fingerprint = teacher_fingerprint(teacher);
  table.w.resize(static_cast<size_t>(table.n) * table.d);

  const model::TowerView text = teacher.text_view();
  const model::PromptView prompts = teacher.textual_prompts();
  std::set<std::string> seen;
  for (int i = 0; i < table.n; ++i) {
    const auto& name = class_names[i];
    if (!seen.insert(name).second && warnings) {
      warnings->push_back("duplicate class name '" + name +
                          "' produces a duplicate class vector row");
    }
    const data::TokenSeq tokens = data::tokenize(vocab, template_str, name);
    const core::Vec feat = model::text_forward(text, prompts, tokens, nullptr);
    costs.add_text(phase, 1);
    const core::Vec unit = core::l2_normalize(feat);
    float* row = table.w.data() + static_cast<size_t>(i) * table.d;
    for (int j = 0; j < table.d; ++j) row[j] = static_cast<float>(unit[j]);
  }
  return table;
}

void save_cache(const ClassVectorTable& table, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(table.n));
  w.u32(static_cast<uint32_t>(table.d));
  w.bytes(table.fingerprint.data(), table.fingerprint.size());
  w.u32(static_cast<uint32_t>(table.class_names.size()));
  for (const auto& name : table.class_names) w.str(name);
  w.bytes(table.w.data(), table.w.size() * sizeof(float));
  atomic_write_file(path, w.data());
}

ClassVectorTable load_cache(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CacheIntegrityError(e.what());
  }
  try {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
      throw CacheIntegrityError("bad cache magic in " + path.string());
    }
    if (r.u32() != kVersion) {
      throw CacheIntegrityError("unsupported cache version in " + path.string());
    }
    ClassVectorTable t;
    t.n = static_cast<int>(r.u32());
    t.d = static_cast<int>(r.u32());
    if (t.n < 2 || t.d < 1) {
      throw CacheIntegrityError("implausible cache dimensions");
    }
    r.bytes(t.fingerprint.data(), t.fingerprint.size());
    const uint32_t name_count = r.u32();
    if (name_count != static_cast<uint32_t>(t.n)) {
      throw CacheIntegrityError("cache name count does not match row count");
    }
    for (uint32_t i = 0; i < name_count; ++i) t.class_names.push_back(r.str());
    t.w.resize(static_cast<size_t>(t.n) * t.d);
    r.bytes(t.w.data(), t.w.size() * sizeof(float));
    if (!r.done()) throw CacheIntegrityError("trailing bytes in cache file");
    for (float v : t.w) {
      if (!std::isfinite(v)) throw CacheIntegrityError("non-finite cache value");
    }
    check_row_norms(t);
    return t;
  } catch (const IoError& e) {
    // Truncated reads surface as IoError; fold them into the cache contract.
    throw CacheIntegrityError(std::string(e.what()) + " in " + path.string());
  }
}

ValidationReport validate_cache(const ClassVectorTable& table,
                                const std::vector<std::string>& expected_names,
                                int expected_dim) {
  ValidationReport rep;
  for (int i = 0; i < table.n; ++i) {
    double s = 0.0;
    const float* r = table.row(i);
    for (int j = 0; j < table.d; ++j) s += static_cast<double>(r[j]) * r[j];
    if (std::abs(std::sqrt(s) - 1.0) > kRowNormTol) {
      rep.violations.push_back("row " + std::to_string(i) + " norm deviates from 1 by " +
                               std::to_string(std::abs(std::sqrt(s) - 1.0)));
    }
  }
  if (static_cast<int>(expected_names.size()) != table.n) {
    rep.violations.push_back("table has " + std::to_string(table.n) +
                             " classes, split expects " +
                             std::to_string(expected_names.size()));
  } else {
    for (int i = 0; i < table.n; ++i) {
      if (table.class_names[i] != expected_names[i]) {
        rep.violations.push_back("class name mismatch at index " + std::to_string(i) +
                                 ": table '" + table.class_names[i] + "' vs split '" +
                                 expected_names[i] + "'");
        break;
      }
    }
  }
  if (expected_dim > 0 && expected_dim != table.d) {
    rep.violations.push_back("table dimension " + std::to_string(table.d) +
                             " does not match student projector output " +
                             std::to_string(expected_dim));
  }
  return rep;
}

}  // namespace pd::cache
