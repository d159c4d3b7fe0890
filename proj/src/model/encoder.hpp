#pragma once

#include <span>
#include <string>
#include <vector>

#include "model/config.hpp"
#include "model/params.hpp"

namespace pd::model {

using Vec = std::vector<double>;

// Raw-pointer views over one tower's tensors, built once per forward/backward
// call so the hot loops avoid name lookups. Views are invalidated by any
// structural change to the ParamStore (in-place value updates are fine).

struct LayerView {
  const float *ln1_g = nullptr, *ln1_b = nullptr;
  const float *wq = nullptr, *bq = nullptr, *wk = nullptr, *bk = nullptr;
  const float *wv = nullptr, *bv = nullptr, *wo = nullptr, *bo = nullptr;
  const float *ln2_g = nullptr, *ln2_b = nullptr;
  const float *w1 = nullptr, *b1 = nullptr, *w2 = nullptr, *b2 = nullptr;
};

struct TowerView {
  const EncoderConfig* cfg = nullptr;
  std::string prefix;  // e.g. "image" / "text"
  const float* patch_w = nullptr;  // [width x patch_dim]
  const float* patch_b = nullptr;  // [width]
  const float* cls = nullptr;      // [width]
  const float* tok_embed = nullptr;  // [vocab x width]
  const float* pos = nullptr;        // [max_seq_len x width]
  std::vector<LayerView> layers;
  const float *lnf_g = nullptr, *lnf_b = nullptr;
  const float* out_w = nullptr;  // [output_dim x width]
  const float* out_b = nullptr;  // [output_dim]
};

struct PromptView {
  std::string prefix;  // e.g. "prompts.visual"
  int depth = 0;       // allocated levels
  int length = 0;      // M
  int width = 0;
  std::vector<const float*> levels;  // each [M x width]
};

TowerView make_tower_view(const ParamStore& params, const std::string& prefix,
                          const EncoderConfig& cfg);
PromptView make_prompt_view(const ParamStore& params, const std::string& prefix);

// Per-layer activations captured during the forward pass, everything the
// hand-written backward needs.
struct LayerTrace {
  Vec x_in;                      // S x W, after any deep prompt replacement
  Vec ln1_xhat;                  // S x W
  Vec ln1_inv;                   // S
  Vec q, k, v;                   // S x W each
  Vec attn_p;                    // H x S x S (softmax rows)
  Vec attn_concat;               // S x W
  Vec x_mid;                     // S x W
  Vec ln2_xhat;                  // S x W
  Vec ln2_inv;                   // S
  Vec mlp_pre;                   // S x Hd
  Vec mlp_act;                   // S x Hd
};

struct Trace {
  int seq_len = 0;
  int pool_index = 0;
  int slot_begin = 0;  // first prompt slot position in the sequence
  int eff_depth = 0;   // prompt levels actually injected
  std::vector<int> token_ids;      // text branch
  Vec patch_pixels;                // image branch: P x patch_dim
  Vec x0;                          // S x W after embedding + prompts + pos
  std::vector<LayerTrace> layers;
  Vec x_final;                     // S x W entering the final LN
  Vec lnf_xhat;                    // W (pooled row only)
  double lnf_inv = 0.0;
  Vec lnf_out;                     // W
};

// Effective prompt depth after clamping to the tower's layer count.
int effective_depth(const PromptView& prompts, const EncoderConfig& cfg);

// Image forward: patchify -> embed -> [cls | prompt slots | patches] (+pos)
// -> transformer with deep prompt replacement -> class-token pooling ->
// final LN -> linear head. Returns the unnormalized feature (output_dim).
Vec vision_forward(const TowerView& tower, const PromptView& prompts,
                   std::span<const float> image, Trace* trace);

// Text forward: token embeddings with the first M positions replaced by
// level-0 prompts (+pos), deep replacement as above, final-token pooling.
Vec text_forward(const TowerView& tower, const PromptView& prompts,
                 const std::vector<int>& tokens, Trace* trace);

// Backward through either branch. dfeat is the gradient at the encoder
// output. Prompt gradients always accumulate; weight/embedding gradients are
// skipped unless weight_grads is set (only the full-finetune path needs
// them).
void encoder_backward(const TowerView& tower, const PromptView& prompts,
                      const Trace& trace, std::span<const double> dfeat,
                      GradMap& grads, bool weight_grads);

}  // namespace pd::model
