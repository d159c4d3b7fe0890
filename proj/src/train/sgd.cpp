#include "train/sgd.hpp"

#include <cmath>

namespace pd::train {

double learning_rate_at(const TrainConfig& cfg, int64_t step, int64_t total_steps) {
  if (total_steps < 1) throw DomainError("total_steps must be >= 1");
  if (step < 0 || step >= total_steps) {
    throw DomainError("step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + ")");
  }
  switch (cfg.schedule) {
    case LrSchedule::constant:
      return cfg.lr;
    case LrSchedule::cosine:
      return cfg.lr * 0.5 *
             (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
  }
  throw ConfigError("unknown lr schedule");
}

void sgd_step(model::ParamStore& params, const std::set<std::string>& trainable,
              const model::GradMap& grads, double lr_t, double momentum,
              SgdState& state) {
  if (!(lr_t > 0.0)) throw DomainError("sgd_step: lr must be > 0");
  for (const auto& [name, g] : grads) {
    if (!trainable.count(name)) {
      throw ShapeError("gradient for non-trainable parameter " + name);
    }
    if (static_cast<int64_t>(g.size()) != params.at(name).numel()) {
      throw ShapeError("gradient size mismatch for " + name);
    }
  }
  for (const auto& name : trainable) {
    model::Tensor& p = params.at(name);
    const int64_t n = p.numel();
    auto vit = state.velocity.find(name);
    if (vit == state.velocity.end()) {
      vit = state.velocity.emplace(name, std::vector<double>(n, 0.0)).first;
    }
    std::vector<double>& v = vit->second;
    const auto git = grads.find(name);
    const std::vector<double>* g = git == grads.end() ? nullptr : &git->second;
    for (int64_t i = 0; i < n; ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      v[i] = momentum * v[i] + gi;
      p.data[i] = static_cast<float>(static_cast<double>(p.data[i]) - lr_t * v[i]);
    }
  }
}

}  // namespace pd::train
