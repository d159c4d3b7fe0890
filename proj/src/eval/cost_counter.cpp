#include "eval/cost_counter.hpp"

#include <sstream>

#include "util/errors.hpp"

namespace pd::eval {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::stage1: return "stage1";
    case Phase::cache: return "cache";
    case Phase::stage2: return "stage2";
    case Phase::inference: return "inference";
    case Phase::aux: return "aux";
  }
  return "?";
}

namespace {
Phase phase_from_name(const std::string& s) {
  if (s == "stage1") return Phase::stage1;
  if (s == "cache") return Phase::cache;
  if (s == "stage2") return Phase::stage2;
  if (s == "inference") return Phase::inference;
  if (s == "aux") return Phase::aux;
  throw IoError("unknown cost phase: " + s);
}
}  // namespace

PhaseCounts CostCounter::total() const {
  PhaseCounts t;
  for (const auto& [p, c] : counts_) {
    t.image_forwards_teacher += c.image_forwards_teacher;
    t.image_forwards_student += c.image_forwards_student;
    t.text_forwards += c.text_forwards;
  }
  return t;
}

void CostCounter::merge(const CostCounter& other) {
  for (const auto& [p, c] : other.counts_) {
    counts_[p].image_forwards_teacher += c.image_forwards_teacher;
    counts_[p].image_forwards_student += c.image_forwards_student;
    counts_[p].text_forwards += c.text_forwards;
  }
}

std::string CostCounter::serialize() const {
  std::ostringstream out;
  for (const auto& [p, c] : counts_) {
    out << phase_name(p) << " " << c.image_forwards_teacher << " "
        << c.image_forwards_student << " " << c.text_forwards << "\n";
  }
  return out.str();
}

CostCounter CostCounter::deserialize(const std::string& text) {
  CostCounter cc;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    PhaseCounts c;
    if (!(ls >> name >> c.image_forwards_teacher >> c.image_forwards_student >>
          c.text_forwards)) {
      throw IoError("bad cost counter line: " + line);
    }
    const Phase p = phase_from_name(name);
    cc.counts_[p].image_forwards_teacher += c.image_forwards_teacher;
    cc.counts_[p].image_forwards_student += c.image_forwards_student;
    cc.counts_[p].text_forwards += c.text_forwards;
  }
  return cc;
}

}  // namespace pd::eval
