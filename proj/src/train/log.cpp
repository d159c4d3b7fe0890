#include "train/log.hpp"

#include <cstdio>
#include <sstream>

#include "util/io.hpp"

namespace pd::train {

bool TrainingLog::frozen_checksums_constant() const {
  for (size_t i = 1; i < epochs.size(); ++i) {
    if (epochs[i].frozen_checksum != epochs[0].frozen_checksum) return false;
  }
  return true;
}

void export_training_log(const TrainingLog& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# seed = " << log.seed << "\n";
  std::istringstream cfg(log.config_snapshot);
  std::string line;
  while (std::getline(cfg, line)) out << "# " << line << "\n";
  out << "# columns: step epoch loss lr frozen_checksum\n";
  char buf[64];
  for (const auto& s : log.steps) {
    const std::string* checksum = nullptr;
    for (const auto& e : log.epochs) {
      if (e.epoch == s.epoch) {
        checksum = &e.frozen_checksum;
        break;
      }
    }
    std::snprintf(buf, sizeof(buf), "%.17g", s.loss);
    out << s.step << " " << s.epoch << " " << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", s.lr);
    out << " " << buf << " " << (checksum ? *checksum : "-") << "\n";
  }
  out << "# columns: epoch mean_train_loss eval_loss frozen_checksum\n";
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.mean_train_loss);
    out << "epoch " << e.epoch << " " << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", e.eval_loss);
    out << " " << buf << " " << e.frozen_checksum << "\n";
  }
  atomic_write_text(path, out.str());
}

}  // namespace pd::train
