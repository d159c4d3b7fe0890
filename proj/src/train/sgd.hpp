#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "model/params.hpp"
#include "util/errors.hpp"

namespace pd::train {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 0.005;
  double momentum = 0.9;
  double tau = 1.0;
  uint64_t seed = 0;
  LrSchedule schedule = LrSchedule::cosine;
  bool augment = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  }
};

// constant -> lr; cosine -> lr * 0.5 * (1 + cos(pi * step / total_steps)).
double learning_rate_at(const TrainConfig& cfg, int64_t step, int64_t total_steps);

struct SgdState {
  std::map<std::string, std::vector<double>> velocity;
};

// Classical momentum: v <- mu v + g; p <- p - lr_t v. Only names in the
// trainable set are touched; a gradient for anything else is a shape error.
void sgd_step(model::ParamStore& params, const std::set<std::string>& trainable,
              const model::GradMap& grads, double lr_t, double momentum,
              SgdState& state);

}  // namespace pd::train
