#include "model/model.hpp"

#include <cmath>

#include "kernels/kernels.hpp"
#include "util/rng.hpp"

namespace pd::model {

namespace {

const kern::KernelTable& K() { return kern::kernels(); }

void fill_linear(Tensor& w, RngStream& rng, int fan_in) {
  const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
  rng.fill_normal(w.data, 0.0, std);
}

void fill_embed(Tensor& t, RngStream& rng) { rng.fill_normal(t.data, 0.0, 0.02); }

void fill_ones(Tensor& t) {
  for (auto& v : t.data) v = 1.0f;
}

}  // namespace

void ModelConfig::validate() const {
  image.validate("image encoder");
  text.validate("text encoder");
  prompts.validate();
  if (image.output_dim != text.output_dim) {
    throw ConfigError("image and text towers must share output_dim");
  }
  if (projector_layers < 0 || projector_layers > 3) {
    throw ConfigError("projector_layers must be in [0, 3]");
  }
  if (projector_layers > 0 && projector_out < 1) {
    throw ConfigError("projector_out must be set when a projector is present");
  }
  if (1 + prompts.length + image.num_patches() > image.max_seq_len) {
    throw ConfigError("image max_seq_len too small for cls + prompts + patches");
  }
}

void build_tower(ParamStore& store, const std::string& prefix,
                 const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate(prefix.empty() ? "encoder" : prefix);
  RngStream rng(seed, "init." + (prefix.empty() ? std::string("encoder") : prefix));
  auto name = [&](const std::string& n) { return join_name(prefix, n); };

  const int W = cfg.width;
  const int Hd = cfg.mlp_hidden();
  if (cfg.is_image()) {
    fill_linear(store.add(name("patch_embed.w"), {W, cfg.patch_dim()}), rng,
                cfg.patch_dim());
    store.add(name("patch_embed.b"), {W});
    fill_embed(store.add(name("cls"), {W}), rng);
  } else {
    fill_embed(store.add(name("tok_embed"), {cfg.vocab_size, W}), rng);
  }
  fill_embed(store.add(name("pos"), {cfg.max_seq_len, W}), rng);

  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string lp = "layers." + std::to_string(l) + ".";
    fill_ones(store.add(name(lp + "ln1.g"), {W}));
    store.add(name(lp + "ln1.b"), {W});
    fill_linear(store.add(name(lp + "attn.wq"), {W, W}), rng, W);
    store.add(name(lp + "attn.bq"), {W});
    fill_linear(store.add(name(lp + "attn.wk"), {W, W}), rng, W);
    store.add(name(lp + "attn.bk"), {W});
    fill_linear(store.add(name(lp + "attn.wv"), {W, W}), rng, W);
    store.add(name(lp + "attn.bv"), {W});
    fill_linear(store.add(name(lp + "attn.wo"), {W, W}), rng, W);
    store.add(name(lp + "attn.bo"), {W});
    fill_ones(store.add(name(lp + "ln2.g"), {W}));
    store.add(name(lp + "ln2.b"), {W});
    fill_linear(store.add(name(lp + "mlp.w1"), {Hd, W}), rng, W);
    store.add(name(lp + "mlp.b1"), {Hd});
    fill_linear(store.add(name(lp + "mlp.w2"), {W, Hd}), rng, Hd);
    store.add(name(lp + "mlp.b2"), {W});
  }
  fill_ones(store.add(name("ln_f.g"), {W}));
  store.add(name("ln_f.b"), {W});
  fill_linear(store.add(name("out.w"), {cfg.output_dim, W}), rng, W);
  store.add(name("out.b"), {cfg.output_dim});
}

ParamStore build_encoder(const EncoderConfig& cfg, uint64_t seed) {
  ParamStore store;
  build_tower(store, "", cfg, seed);
  return store;
}

void init_prompts(ParamStore& store, const std::string& prefix, PromptBranch branch,
                  const PromptConfig& pc, int width, uint64_t seed,
                  const Tensor* tok_embed, const std::vector<int>* template_tokens) {
  pc.validate();
  RngStream rng(seed, "init." + prefix);
  const int M = pc.length;
  for (int l = 0; l < pc.depth; ++l) {
    Tensor& t = store.add(prefix + ".level" + std::to_string(l), {M, width});
    if (branch == PromptBranch::textual && l == 0) {
      if (!template_tokens || !tok_embed) {
        throw ConfigError("textual prompts need template tokens and an embedding table");
      }
      if (static_cast<int>(template_tokens->size()) != M) {
        throw ConfigError("template token count " +
                          std::to_string(template_tokens->size()) +
                          " does not equal prompt length " + std::to_string(M));
      }
      if (tok_embed->dim(1) != width) {
        throw ConfigError("embedding width does not match prompt width");
      }
      for (int m = 0; m < M; ++m) {
        const int id = (*template_tokens)[m];
        if (id < 0 || id >= tok_embed->dim(0)) {
          throw ConfigError("template token id out of embedding range");
        }
        for (int i = 0; i < width; ++i) {
          t.data[m * width + i] = tok_embed->data[static_cast<size_t>(id) * width + i];
        }
      }
    } else {
      rng.fill_normal(t.data, 0.0, 0.02);
    }
  }
}

void build_projector(ParamStore& store, const std::string& prefix, int in_dim,
                     int hidden, int out_dim, int layers, uint64_t seed) {
  if (layers < 1 || layers > 3) throw ConfigError("projector layers must be 1..3");
  RngStream rng(seed, "init." + prefix);
  std::vector<int> dims;
  dims.push_back(in_dim);
  for (int l = 0; l < layers - 1; ++l) dims.push_back(hidden);
  dims.push_back(out_dim);
  for (int l = 0; l < layers; ++l) {
    Tensor& w = store.add(prefix + ".fc" + std::to_string(l) + ".w",
                          {dims[l + 1], dims[l]});
    Tensor& b = store.add(prefix + ".fc" + std::to_string(l) + ".b", {dims[l + 1]});
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    rng.fill_uniform(w.data, -bound, bound);
    rng.fill_uniform(b.data, -bound, bound);
  }
}

Model build_model(const ModelConfig& cfg, uint64_t seed,
                  const std::vector<int>& template_tokens) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  build_tower(m.params, "image", cfg.image, seed);
  build_tower(m.params, "text", cfg.text, seed);
  init_prompts(m.params, "prompts.visual", PromptBranch::visual, cfg.prompts,
               cfg.image.width, seed, nullptr, nullptr);
  init_prompts(m.params, "prompts.textual", PromptBranch::textual, cfg.prompts,
               cfg.text.width, seed, &m.params.at("text.tok_embed"), &template_tokens);
  if (cfg.projector_layers > 0) {
    const int hidden = cfg.projector_hidden > 0 ? cfg.projector_hidden
                                                : cfg.image.output_dim;
    build_projector(m.params, "projector", cfg.image.output_dim, hidden,
                    cfg.projector_out, cfg.projector_layers, seed);
  }
  return m;
}

int projector_num_layers(const ParamStore& params, const std::string& prefix) {
  int n = 0;
  while (params.has(prefix + ".fc" + std::to_string(n) + ".w")) ++n;
  return n;
}

Vec project(const ParamStore& params, const std::string& prefix,
            std::span<const double> in, ProjectorTrace* trace) {
  const int layers = projector_num_layers(params, prefix);
  if (layers == 0) throw ConfigError("no projector under prefix " + prefix);
  Vec x(in.begin(), in.end());
  if (trace) {
    trace->input = x;
    trace->pre.clear();
  }
  for (int l = 0; l < layers; ++l) {
    const Tensor& w = params.at(prefix + ".fc" + std::to_string(l) + ".w");
    const Tensor& b = params.at(prefix + ".fc" + std::to_string(l) + ".b");
    const int out_dim = w.dim(0);
    const int in_dim = w.dim(1);
    if (static_cast<int>(x.size()) != in_dim) {
      throw ShapeError("projector input dim " + std::to_string(x.size()) +
                       " does not match fc" + std::to_string(l) + " weight " +
                       std::to_string(in_dim));
    }
    Vec y(out_dim);
    K().gemm_nt_wf32(x.data(), w.data.data(), y.data(), 1, out_dim, in_dim);
    for (int i = 0; i < out_dim; ++i) y[i] += static_cast<double>(b.data[i]);
    if (trace) trace->pre.push_back(y);
    if (l + 1 < layers) {
      for (auto& v : y) v = v > 0.0 ? v : 0.0;  // rectifier between maps
    }
    x = std::move(y);
  }
  return x;
}

Vec project_backward(const ParamStore& params, const std::string& prefix,
                     const ProjectorTrace& trace, std::span<const double> dout,
                     GradMap& grads) {
  const int layers = static_cast<int>(trace.pre.size());
  Vec dy(dout.begin(), dout.end());
  for (int l = layers - 1; l >= 0; --l) {
    const std::string wn = prefix + ".fc" + std::to_string(l) + ".w";
    const std::string bn = prefix + ".fc" + std::to_string(l) + ".b";
    const Tensor& w = params.at(wn);
    const int out_dim = w.dim(0);
    const int in_dim = w.dim(1);
    if (static_cast<int>(dy.size()) != out_dim) {
      throw ShapeError("projector backward dimension mismatch at fc" + std::to_string(l));
    }
    // Input to this affine map: rectified previous pre-activation, or the
    // projector input for the first map.
    Vec xin(in_dim);
    if (l == 0) {
      xin.assign(trace.input.begin(), trace.input.end());
    } else {
      const Vec& prev = trace.pre[l - 1];
      for (int i = 0; i < in_dim; ++i) xin[i] = prev[i] > 0.0 ? prev[i] : 0.0;
    }
    auto& dw = grad_buffer(grads, wn, static_cast<int64_t>(out_dim) * in_dim);
    auto& db = grad_buffer(grads, bn, out_dim);
    for (int f = 0; f < out_dim; ++f) {
      db[f] += dy[f];
      K().axpy(dy[f], xin.data(), dw.data() + static_cast<size_t>(f) * in_dim, in_dim);
    }
    Vec dx(in_dim);
    K().gemm_nn_wf32(dy.data(), w.data.data(), dx.data(), 1, in_dim, out_dim, false);
    if (l > 0) {
      const Vec& prev = trace.pre[l - 1];
      for (int i = 0; i < in_dim; ++i) {
        if (prev[i] <= 0.0) dx[i] = 0.0;
      }
    }
    dy = std::move(dx);
  }
  return dy;
}

ParameterPartition partition_parameters(Stage stage, const Model& teacher,
                                        const Model* student, TrainableSet trainable,
                                        TextBranchMode text_branch) {
  ParameterPartition part;
  auto split = [](const Model& m, const std::vector<std::string>& trainable_prefixes,
                  std::set<std::string>& train, std::set<std::string>& frozen) {
    for (const auto& name : m.params.names()) {
      bool is_trainable = false;
      for (const auto& p : trainable_prefixes) {
        if (p == "*" ||
            (name.size() >= p.size() && name.compare(0, p.size(), p) == 0)) {
          is_trainable = true;
          break;
        }
      }
      (is_trainable ? train : frozen).insert(name);
    }
  };

  switch (stage) {
    case Stage::teacher_pretrain:
      split(teacher, {"prompts."}, part.teacher_trainable, part.teacher_frozen);
      if (student) split(*student, {}, part.student_trainable, part.student_frozen);
      break;
    case Stage::student_distill: {
      split(teacher, {}, part.teacher_trainable, part.teacher_frozen);
      if (!student) throw ConfigError("student_distill partition needs a student model");
      std::vector<std::string> prefixes;
      switch (trainable) {
        case TrainableSet::prompts_and_projector:
          if (text_branch == TextBranchMode::own_text_encoder) {
            // The student's own text features replace the shared table; the
            // projector is outside that logit path and stays frozen.
            prefixes = {"prompts.visual", "prompts.textual"};
          } else {
            prefixes = {"prompts.visual", "projector."};
          }
          break;
        case TrainableSet::projector_only:
          prefixes = {"projector."};
          break;
        case TrainableSet::full_finetune:
          prefixes = {"*"};
          break;
      }
      split(*student, prefixes, part.student_trainable, part.student_frozen);
      break;
    }
    case Stage::full_finetune: {
      split(teacher, {}, part.teacher_trainable, part.teacher_frozen);
      if (!student) throw ConfigError("full_finetune partition needs a student model");
      split(*student, {"*"}, part.student_trainable, part.student_frozen);
      break;
    }
    default:
      throw ConfigError("unknown training stage");
  }
  return part;
}

}  // namespace pd::model
