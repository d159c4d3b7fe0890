#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "model/config.hpp"
#include "model/encoder.hpp"
#include "model/params.hpp"

namespace pd::model {

enum class PromptBranch { visual, textual };

// Ablation enums shared by the partition logic and the training loops.
enum class DistillMode { logit_kl, feature_l1, feature_mse };
enum class TrainableSet { prompts_and_projector, projector_only, full_finetune };
enum class TextBranchMode { shared_cache, own_text_encoder };

struct ModelConfig {
  EncoderConfig image;
  EncoderConfig text;
  PromptConfig prompts;
  int projector_layers = 0;  // 0 = no projector (teacher); 1..3 otherwise
  int projector_hidden = 0;  // defaults to image.output_dim when 0
  int projector_out = 0;     // teacher feature dimension d_t

  void validate() const;
};

// A dual-encoder model: image/text towers, prompt sets for both branches,
// and (for students) the feature projector. All tensors live in one flat
// named store; the trainable/frozen split is decided by partition_parameters.
struct Model {
  ModelConfig cfg;
  ParamStore params;

  TowerView image_view() const { return make_tower_view(params, "image", cfg.image); }
  TowerView text_view() const { return make_tower_view(params, "text", cfg.text); }
  PromptView visual_prompts() const { return make_prompt_view(params, "prompts.visual"); }
  PromptView textual_prompts() const { return make_prompt_view(params, "prompts.textual"); }
};

// Deterministically seeded tower parameters. Two calls with the same
// (config, seed) produce bit-identical tensors.
ParamStore build_encoder(const EncoderConfig& cfg, uint64_t seed);

void build_tower(ParamStore& store, const std::string& prefix,
                 const EncoderConfig& cfg, uint64_t seed);

// Level-0 textual prompts copy the embedding rows of the template tokens;
// everything else draws from N(0, 0.02).
void init_prompts(ParamStore& store, const std::string& prefix, PromptBranch branch,
                  const PromptConfig& pc, int width, uint64_t seed,
                  const Tensor* tok_embed, const std::vector<int>* template_tokens);

void build_projector(ParamStore& store, const std::string& prefix, int in_dim,
                     int hidden, int out_dim, int layers, uint64_t seed);

Model build_model(const ModelConfig& cfg, uint64_t seed,
                  const std::vector<int>& template_tokens);

// Two-to-three affine maps with a rectifier between them.
struct ProjectorTrace {
  Vec input;
  std::vector<Vec> pre;  // pre-activation per affine map
};

int projector_num_layers(const ParamStore& params, const std::string& prefix);
Vec project(const ParamStore& params, const std::string& prefix,
            std::span<const double> in, ProjectorTrace* trace);
// Returns d(input); weight gradients accumulate into grads.
Vec project_backward(const ParamStore& params, const std::string& prefix,
                     const ProjectorTrace& trace, std::span<const double> dout,
                     GradMap& grads);

enum class Stage { teacher_pretrain, student_distill, full_finetune };

struct ParameterPartition {
  std::set<std::string> teacher_trainable, teacher_frozen;
  std::set<std::string> student_trainable, student_frozen;
};

// The trainable/frozen split that defines prompt distillation: Stage I trains
// the teacher's prompt sets (both branches); Stage II trains only the student
// visual prompts and the projector, with ablation variants from the
// TrainableSet/TextBranchMode knobs.
ParameterPartition partition_parameters(
    Stage stage, const Model& teacher, const Model* student,
    TrainableSet trainable = TrainableSet::prompts_and_projector,
    TextBranchMode text_branch = TextBranchMode::shared_cache);

// Checkpoint file ("PKDC"): count-prefixed list of named float32 tensors,
// little-endian, row-major. Save then load is bit-exact.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);
// Copies values into an already-built model, validating names and shapes.
void load_checkpoint_into(Model& model, const std::filesystem::path& path);

}  // namespace pd::model
