#pragma once

#include <string>

#include "util/errors.hpp"

namespace pd::model {

// One dual-encoder tower. patch_grid/image_side apply to the image branch,
// vocab_size to the text branch; exactly one of them must be set.
struct EncoderConfig {
  int num_layers = 0;
  int width = 0;
  int num_heads = 0;
  int patch_grid = 0;   // image tokens per side (image branch only)
  int image_side = 0;   // input image side in pixels (image branch only)
  int vocab_size = 0;   // text branch only
  int max_seq_len = 0;
  int output_dim = 0;   // d, the joint embedding dimension
  int mlp_ratio = 4;

  bool is_image() const { return patch_grid > 0; }
  int num_patches() const { return patch_grid * patch_grid; }
  int patch_size() const { return image_side / patch_grid; }
  int patch_dim() const { return patch_size() * patch_size(); }
  int mlp_hidden() const { return mlp_ratio * width; }

  void validate(const std::string& what) const {
    if (num_layers < 1) throw ConfigError(what + ": num_layers must be >= 1");
    if (width < 1) throw ConfigError(what + ": width must be >= 1");
    if (num_heads < 1) throw ConfigError(what + ": num_heads must be >= 1");
    if (width % num_heads != 0) {
      throw ConfigError(what + ": width must be divisible by num_heads");
    }
    if (max_seq_len < 2) throw ConfigError(what + ": max_seq_len must be >= 2");
    if (output_dim < 1) throw ConfigError(what + ": output_dim must be >= 1");
    if (mlp_ratio < 1) throw ConfigError(what + ": mlp_ratio must be >= 1");
    if (patch_grid > 0) {
      if (image_side < 1 || image_side % patch_grid != 0) {
        throw ConfigError(what + ": image_side must be a positive multiple of patch_grid");
      }
      if (vocab_size != 0) {
        throw ConfigError(what + ": image branch must not set vocab_size");
      }
    } else {
      if (vocab_size < 2) throw ConfigError(what + ": text branch needs vocab_size >= 2");
    }
  }
};

struct PromptConfig {
  int depth = 9;   // configured J; clamped to num_layers per tower at use
  int length = 4;  // M

  void validate() const {
    if (depth < 1) throw ConfigError("prompt depth must be >= 1");
    if (length < 1) throw ConfigError("prompt length must be >= 1");
  }
};

}  // namespace pd::model
