#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace pd::eval {

// Audited encoder forward-pass counts. Forward counts carry the efficiency
// claim at desk scale: the cache phase performs exactly N text forwards and
// the distillation and inference phases perform zero.
//
// stage1/cache/stage2/inference are the pipeline phases; "aux" covers
// measurement passes outside the pipeline proper (agreement rate, untrained
// baselines, per-epoch loss evaluation) so the pipeline-phase counts stay
// exact.
enum class Phase { stage1, cache, stage2, inference, aux };

const char* phase_name(Phase p);

struct PhaseCounts {
  int64_t image_forwards_teacher = 0;
  int64_t image_forwards_student = 0;
  int64_t text_forwards = 0;
};

class CostCounter {
 public:
  void add_teacher_image(Phase p, int64_t n = 1) { counts_[p].image_forwards_teacher += n; }
  void add_student_image(Phase p, int64_t n = 1) { counts_[p].image_forwards_student += n; }
  void add_text(Phase p, int64_t n = 1) { counts_[p].text_forwards += n; }

  PhaseCounts at(Phase p) const {
    auto it = counts_.find(p);
    return it == counts_.end() ? PhaseCounts{} : it->second;
  }
  PhaseCounts total() const;

  // Deterministic merge: counts sum.
  void merge(const CostCounter& other);

  // One "phase teacher student text" line per phase, for persistence.
  std::string serialize() const;
  static CostCounter deserialize(const std::string& text);

 private:
  std::map<Phase, PhaseCounts> counts_;
};

}  // namespace pd::eval
