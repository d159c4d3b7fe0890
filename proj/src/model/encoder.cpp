#include "model/encoder.hpp"

#include <cmath>
#include <cstring>

#include "kernels/kernels.hpp"

namespace pd::model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

const kern::KernelTable& K() { return kern::kernels(); }

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = gamma * xhat + beta per row; xhat and 1/sigma are kept for backward.
void layer_norm(const double* x, int s, int w, const float* g, const float* b,
                double* y, double* xhat, double* inv) {
  for (int r = 0; r < s; ++r) {
    const double* xr = x + static_cast<size_t>(r) * w;
    double* yr = y + static_cast<size_t>(r) * w;
    double* hr = xhat + static_cast<size_t>(r) * w;
    double mean = 0.0;
    for (int i = 0; i < w; ++i) mean += xr[i];
    mean /= w;
    double var = 0.0;
    for (int i = 0; i < w; ++i) {
      const double d = xr[i] - mean;
      var += d * d;
    }
    var /= w;
    const double iv = 1.0 / std::sqrt(var + kLnEps);
    inv[r] = iv;
    for (int i = 0; i < w; ++i) {
      hr[i] = (xr[i] - mean) * iv;
      yr[i] = static_cast<double>(g[i]) * hr[i] + static_cast<double>(b[i]);
    }
  }
}

// dx += backward(dy); dg/db accumulate when non-null.
void layer_norm_backward(const double* dy, const double* xhat, const double* inv,
                         const float* g, int s, int w, double* dx, double* dg,
                         double* db) {
  for (int r = 0; r < s; ++r) {
    const double* dyr = dy + static_cast<size_t>(r) * w;
    const double* hr = xhat + static_cast<size_t>(r) * w;
    double* dxr = dx + static_cast<size_t>(r) * w;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < w; ++i) {
      const double dxh = dyr[i] * static_cast<double>(g[i]);
      m1 += dxh;
      m2 += dxh * hr[i];
    }
    m1 /= w;
    m2 /= w;
    const double iv = inv[r];
    for (int i = 0; i < w; ++i) {
      const double dxh = dyr[i] * static_cast<double>(g[i]);
      dxr[i] += iv * (dxh - m1 - hr[i] * m2);
    }
    if (dg) {
      for (int i = 0; i < w; ++i) {
        dg[i] += dyr[i] * hr[i];
        db[i] += dyr[i];
      }
    }
  }
}

void recompute_ln_out(const double* xhat, const float* g, const float* b, int s,
                      int w, double* y) {
  for (int r = 0; r < s; ++r) {
    for (int i = 0; i < w; ++i) {
      y[static_cast<size_t>(r) * w + i] =
          static_cast<double>(g[i]) * xhat[static_cast<size_t>(r) * w + i] +
          static_cast<double>(b[i]);
    }
  }
}

void linear(const double* x, int s, int in, int out, const float* w, const float* b,
            double* y) {
  K().gemm_nt_wf32(x, w, y, s, out, in);
  for (int r = 0; r < s; ++r) {
    double* yr = y + static_cast<size_t>(r) * out;
    for (int j = 0; j < out; ++j) yr[j] += static_cast<double>(b[j]);
  }
}

void add_colsum(const double* dy, int s, int w, double* db) {
  for (int r = 0; r < s; ++r) {
    const double* dyr = dy + static_cast<size_t>(r) * w;
    for (int j = 0; j < w; ++j) db[j] += dyr[j];
  }
}

void transpose(const double* a, int rows, int cols, double* out) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<size_t>(c) * rows + r] = a[static_cast<size_t>(r) * cols + c];
    }
  }
}

// dW (out x in) += dY^T X, db += column sums of dY.
void linear_weight_grads(const double* dy, const double* x, int s, int out, int in,
                         Vec& scratch, double* dw, double* db) {
  scratch.resize(static_cast<size_t>(out) * s);
  transpose(dy, s, out, scratch.data());
  K().gemm_nn(scratch.data(), x, dw, out, in, s, /*accumulate=*/true);
  add_colsum(dy, s, out, db);
}

void pack_head(const Vec& x, int s, int w, int off, int dh, Vec& out) {
  out.resize(static_cast<size_t>(s) * dh);
  for (int r = 0; r < s; ++r) {
    std::memcpy(out.data() + static_cast<size_t>(r) * dh,
                x.data() + static_cast<size_t>(r) * w + off, sizeof(double) * dh);
  }
}

void unpack_head(const Vec& xh, int s, int w, int off, int dh, Vec& out) {
  for (int r = 0; r < s; ++r) {
    std::memcpy(out.data() + static_cast<size_t>(r) * w + off,
                xh.data() + static_cast<size_t>(r) * dh, sizeof(double) * dh);
  }
}

void softmax_rows_inplace(double* scores, int rows, int cols, double scale) {
  for (int r = 0; r < rows; ++r) {
    double* row = scores + static_cast<size_t>(r) * cols;
    double mx = row[0] * scale;
    for (int c = 0; c < cols; ++c) {
      row[c] *= scale;
      if (row[c] > mx) mx = row[c];
    }
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) row[c] *= inv;
  }
}

// Core transformer stack over an assembled tr.x0; fills the trace and returns
// the unnormalized output feature.
Vec run_tower(const TowerView& t, const PromptView& pr, Trace& tr) {
  const EncoderConfig& cfg = *t.cfg;
  const int S = tr.seq_len;
  const int W = cfg.width;
  const int H = cfg.num_heads;
  const int dh = W / H;
  const int Hd = cfg.mlp_hidden();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  tr.eff_depth = effective_depth(pr, cfg);
  tr.layers.resize(cfg.num_layers);

  Vec x = tr.x0;
  Vec a, qh, kh, vh, oh, attn_out, ln2_out, mlp_out;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerView& lv = t.layers[l];
    LayerTrace& lt = tr.layers[l];
    if (l >= 1 && l < tr.eff_depth) {
      const float* lev = pr.levels[l];
      for (int m = 0; m < pr.length; ++m) {
        double* row = x.data() + static_cast<size_t>(tr.slot_begin + m) * W;
        for (int i = 0; i < W; ++i) row[i] = static_cast<double>(lev[m * W + i]);
      }
    }
    lt.x_in = x;

    lt.ln1_xhat.resize(static_cast<size_t>(S) * W);
    lt.ln1_inv.resize(S);
    a.resize(static_cast<size_t>(S) * W);
    layer_norm(x.data(), S, W, lv.ln1_g, lv.ln1_b, a.data(), lt.ln1_xhat.data(),
               lt.ln1_inv.data());

    lt.q.resize(static_cast<size_t>(S) * W);
    lt.k.resize(static_cast<size_t>(S) * W);
    lt.v.resize(static_cast<size_t>(S) * W);
    linear(a.data(), S, W, W, lv.wq, lv.bq, lt.q.data());
    linear(a.data(), S, W, W, lv.wk, lv.bk, lt.k.data());
    linear(a.data(), S, W, W, lv.wv, lv.bv, lt.v.data());

    lt.attn_p.resize(static_cast<size_t>(H) * S * S);
    lt.attn_concat.resize(static_cast<size_t>(S) * W);
    oh.resize(static_cast<size_t>(S) * dh);
    for (int h = 0; h < H; ++h) {
      pack_head(lt.q, S, W, h * dh, dh, qh);
      pack_head(lt.k, S, W, h * dh, dh, kh);
      pack_head(lt.v, S, W, h * dh, dh, vh);
      double* P = lt.attn_p.data() + static_cast<size_t>(h) * S * S;
      K().gemm_nt(qh.data(), kh.data(), P, S, S, dh);
      softmax_rows_inplace(P, S, S, scale);
      K().gemm_nn(P, vh.data(), oh.data(), S, dh, S, /*accumulate=*/false);
      unpack_head(oh, S, W, h * dh, dh, lt.attn_concat);
    }

    attn_out.resize(static_cast<size_t>(S) * W);
    linear(lt.attn_concat.data(), S, W, W, lv.wo, lv.bo, attn_out.data());
    lt.x_mid.resize(static_cast<size_t>(S) * W);
    for (size_t i = 0; i < lt.x_mid.size(); ++i) lt.x_mid[i] = x[i] + attn_out[i];

    lt.ln2_xhat.resize(static_cast<size_t>(S) * W);
    lt.ln2_inv.resize(S);
    ln2_out.resize(static_cast<size_t>(S) * W);
    layer_norm(lt.x_mid.data(), S, W, lv.ln2_g, lv.ln2_b, ln2_out.data(),
               lt.ln2_xhat.data(), lt.ln2_inv.data());

    lt.mlp_pre.resize(static_cast<size_t>(S) * Hd);
    linear(ln2_out.data(), S, W, Hd, lv.w1, lv.b1, lt.mlp_pre.data());
    lt.mlp_act.resize(static_cast<size_t>(S) * Hd);
    for (size_t i = 0; i < lt.mlp_act.size(); ++i) lt.mlp_act[i] = gelu(lt.mlp_pre[i]);

    mlp_out.resize(static_cast<size_t>(S) * W);
    linear(lt.mlp_act.data(), S, Hd, W, lv.w2, lv.b2, mlp_out.data());
    for (size_t i = 0; i < x.size(); ++i) x[i] = lt.x_mid[i] + mlp_out[i];
  }

  tr.x_final = x;
  const double* pooled = x.data() + static_cast<size_t>(tr.pool_index) * W;
  tr.lnf_xhat.resize(W);
  tr.lnf_out.resize(W);
  double inv = 0.0;
  layer_norm(pooled, 1, W, t.lnf_g, t.lnf_b, tr.lnf_out.data(), tr.lnf_xhat.data(),
             &inv);
  tr.lnf_inv = inv;

  Vec feat(cfg.output_dim);
  linear(tr.lnf_out.data(), 1, W, cfg.output_dim, t.out_w, t.out_b, feat.data());
  return feat;
}

Trace& scratch_trace() {
  thread_local Trace tr;
  return tr;
}

void check_prompts(const PromptView& pr, const EncoderConfig& cfg) {
  if (pr.width != cfg.width) {
    throw ShapeError("prompt width " + std::to_string(pr.width) +
                     " does not match encoder width " + std::to_string(cfg.width));
  }
  if (pr.depth < 1 || pr.length < 1) {
    throw ShapeError("prompt set must have depth >= 1 and length >= 1");
  }
}

}  // namespace

TowerView make_tower_view(const ParamStore& params, const std::string& prefix,
                          const EncoderConfig& cfg) {
  TowerView t;
  t.cfg = &cfg;
  t.prefix = prefix;
  auto f = [&](const std::string& n) { return params.at(join_name(prefix, n)).data.data(); };
  if (cfg.is_image()) {
    t.patch_w = f("patch_embed.w");
    t.patch_b = f("patch_embed.b");
    t.cls = f("cls");
  } else {
    t.tok_embed = f("tok_embed");
  }
  t.pos = f("pos");
  t.layers.resize(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string lp = "layers." + std::to_string(l) + ".";
    LayerView& v = t.layers[l];
    v.ln1_g = f(lp + "ln1.g");
    v.ln1_b = f(lp + "ln1.b");
    v.wq = f(lp + "attn.wq");
    v.bq = f(lp + "attn.bq");
    v.wk = f(lp + "attn.wk");
    v.bk = f(lp + "attn.bk");
    v.wv = f(lp + "attn.wv");
    v.bv = f(lp + "attn.bv");
    v.wo = f(lp + "attn.wo");
    v.bo = f(lp + "attn.bo");
    v.ln2_g = f(lp + "ln2.g");
    v.ln2_b = f(lp + "ln2.b");
    v.w1 = f(lp + "mlp.w1");
    v.b1 = f(lp + "mlp.b1");
    v.w2 = f(lp + "mlp.w2");
    v.b2 = f(lp + "mlp.b2");
  }
  t.lnf_g = f("ln_f.g");
  t.lnf_b = f("ln_f.b");
  t.out_w = f("out.w");
  t.out_b = f("out.b");
  return t;
}

PromptView make_prompt_view(const ParamStore& params, const std::string& prefix) {
  PromptView pv;
  pv.prefix = prefix;
  for (int l = 0;; ++l) {
    const std::string name = prefix + ".level" + std::to_string(l);
    if (!params.has(name)) break;
    const Tensor& t = params.at(name);
    if (t.dims.size() != 2) throw ShapeError("prompt tensor must be rank 2: " + name);
    if (l == 0) {
      pv.length = t.dim(0);
      pv.width = t.dim(1);
    } else if (t.dim(0) != pv.length || t.dim(1) != pv.width) {
      throw ShapeError("inconsistent prompt level shape: " + name);
    }
    pv.levels.push_back(t.data.data());
  }
  pv.depth = static_cast<int>(pv.levels.size());
  if (pv.depth == 0) throw ConfigError("no prompt levels under prefix " + prefix);
  return pv;
}

int effective_depth(const PromptView& prompts, const EncoderConfig& cfg) {
  return prompts.depth < cfg.num_layers ? prompts.depth : cfg.num_layers;
}

Vec vision_forward(const TowerView& tower, const PromptView& prompts,
                   std::span<const float> image, Trace* trace) {
  const EncoderConfig& cfg = *tower.cfg;
  if (!cfg.is_image()) throw ShapeError("vision_forward on a text tower");
  check_prompts(prompts, cfg);
  const int side = cfg.image_side;
  if (static_cast<int>(image.size()) != side * side) {
    throw ShapeError("image size " + std::to_string(image.size()) +
                     " does not match configured side " + std::to_string(side));
  }
  const int M = prompts.length;
  const int P = cfg.num_patches();
  const int W = cfg.width;
  const int S = 1 + M + P;
  if (S > cfg.max_seq_len) {
    throw LengthError("image sequence length " + std::to_string(S) +
                      " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }

  Trace& tr = trace ? *trace : scratch_trace();
  tr.seq_len = S;
  tr.pool_index = 0;  // class token
  tr.slot_begin = 1;
  tr.token_ids.clear();

  // Patchify: row-major patch grid, row-major pixels within each patch.
  const int ps = cfg.patch_size();
  const int grid = cfg.patch_grid;
  const int pdim = cfg.patch_dim();
  tr.patch_pixels.resize(static_cast<size_t>(P) * pdim);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      double* dst = tr.patch_pixels.data() + (static_cast<size_t>(gy) * grid + gx) * pdim;
      for (int py = 0; py < ps; ++py) {
        for (int px = 0; px < ps; ++px) {
          dst[py * ps + px] =
              static_cast<double>(image[(gy * ps + py) * side + gx * ps + px]);
        }
      }
    }
  }

  tr.x0.assign(static_cast<size_t>(S) * W, 0.0);
  // class token
  for (int i = 0; i < W; ++i) tr.x0[i] = static_cast<double>(tower.cls[i]);
  // level-0 visual prompts extend the sequence at slots [1, M]
  const float* lev0 = prompts.levels[0];
  for (int m = 0; m < M; ++m) {
    double* row = tr.x0.data() + static_cast<size_t>(1 + m) * W;
    for (int i = 0; i < W; ++i) row[i] = static_cast<double>(lev0[m * W + i]);
  }
  // patch tokens
  K().gemm_nt_wf32(tr.patch_pixels.data(), tower.patch_w,
                   tr.x0.data() + static_cast<size_t>(1 + M) * W, P, W, pdim);
  for (int p = 0; p < P; ++p) {
    double* row = tr.x0.data() + static_cast<size_t>(1 + M + p) * W;
    for (int i = 0; i < W; ++i) row[i] += static_cast<double>(tower.patch_b[i]);
  }
  // positional embedding over the whole assembled sequence
  for (int s = 0; s < S; ++s) {
    double* row = tr.x0.data() + static_cast<size_t>(s) * W;
    const float* pos = tower.pos + static_cast<size_t>(s) * W;
    for (int i = 0; i < W; ++i) row[i] += static_cast<double>(pos[i]);
  }

  return run_tower(tower, prompts, tr);
}

Vec text_forward(const TowerView& tower, const PromptView& prompts,
                 const std::vector<int>& tokens, Trace* trace) {
  const EncoderConfig& cfg = *tower.cfg;
  if (cfg.is_image()) throw ShapeError("text_forward on an image tower");
  check_prompts(prompts, cfg);
  const int M = prompts.length;
  const int S = static_cast<int>(tokens.size());
  const int W = cfg.width;
  if (S > cfg.max_seq_len - M) {
    throw LengthError("token sequence length " + std::to_string(S) +
                      " exceeds max_seq_len - M = " +
                      std::to_string(cfg.max_seq_len - M));
  }
  if (S < M + 1) {
    throw LengthError("token sequence must be longer than the prompt prefix");
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " out of vocabulary");
    }
  }

  Trace& tr = trace ? *trace : scratch_trace();
  tr.seq_len = S;
  tr.pool_index = S - 1;  // end-of-sequence position
  tr.slot_begin = 0;
  tr.token_ids = tokens;
  tr.patch_pixels.clear();

  tr.x0.assign(static_cast<size_t>(S) * W, 0.0);
  for (int s = 0; s < S; ++s) {
    const float* row = tower.tok_embed + static_cast<size_t>(tokens[s]) * W;
    double* dst = tr.x0.data() + static_cast<size_t>(s) * W;
    for (int i = 0; i < W; ++i) dst[i] = static_cast<double>(row[i]);
  }
  // Level-0 textual prompts replace the template prefix embeddings.
  const float* lev0 = prompts.levels[0];
  for (int m = 0; m < M; ++m) {
    double* dst = tr.x0.data() + static_cast<size_t>(m) * W;
    for (int i = 0; i < W; ++i) dst[i] = static_cast<double>(lev0[m * W + i]);
  }
  for (int s = 0; s < S; ++s) {
    double* row = tr.x0.data() + static_cast<size_t>(s) * W;
    const float* pos = tower.pos + static_cast<size_t>(s) * W;
    for (int i = 0; i < W; ++i) row[i] += static_cast<double>(pos[i]);
  }

  return run_tower(tower, prompts, tr);
}

void encoder_backward(const TowerView& tower, const PromptView& prompts,
                      const Trace& tr, std::span<const double> dfeat,
                      GradMap& grads, bool weight_grads) {
  const EncoderConfig& cfg = *tower.cfg;
  const int S = tr.seq_len;
  const int W = cfg.width;
  const int H = cfg.num_heads;
  const int dh = W / H;
  const int Hd = cfg.mlp_hidden();
  const int M = prompts.length;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::string& px = tower.prefix;
  if (static_cast<int>(dfeat.size()) != cfg.output_dim) {
    throw ShapeError("encoder_backward: output gradient dimension mismatch");
  }

  // Output head.
  Vec dy(W);
  K().gemm_nn_wf32(dfeat.data(), tower.out_w, dy.data(), 1, W, cfg.output_dim, false);
  if (weight_grads) {
    auto& dow = grad_buffer(grads, join_name(px, "out.w"),
                            static_cast<int64_t>(cfg.output_dim) * W);
    auto& dob = grad_buffer(grads, join_name(px, "out.b"), cfg.output_dim);
    for (int f = 0; f < cfg.output_dim; ++f) {
      dob[f] += dfeat[f];
      K().axpy(dfeat[f], tr.lnf_out.data(), dow.data() + static_cast<size_t>(f) * W, W);
    }
  }

  // Final LN (pooled row only).
  Vec dx(static_cast<size_t>(S) * W, 0.0);
  {
    double* dgf = nullptr;
    double* dbf = nullptr;
    if (weight_grads) {
      dgf = grad_buffer(grads, join_name(px, "ln_f.g"), W).data();
      dbf = grad_buffer(grads, join_name(px, "ln_f.b"), W).data();
    }
    layer_norm_backward(dy.data(), tr.lnf_xhat.data(), &tr.lnf_inv, tower.lnf_g, 1, W,
                        dx.data() + static_cast<size_t>(tr.pool_index) * W, dgf, dbf);
  }

  Vec scratch, ln_out, dact(static_cast<size_t>(S) * Hd), dpre(static_cast<size_t>(S) * Hd);
  Vec dln2(static_cast<size_t>(S) * W), dconcat(static_cast<size_t>(S) * W);
  Vec dq(static_cast<size_t>(S) * W), dk(static_cast<size_t>(S) * W),
      dv(static_cast<size_t>(S) * W), da(static_cast<size_t>(S) * W);
  Vec qh, kh, vh, doh(static_cast<size_t>(S) * dh);
  Vec dP(static_cast<size_t>(S) * S), dsc(static_cast<size_t>(S) * S),
      tbuf(static_cast<size_t>(S) * S);
  Vec dqh(static_cast<size_t>(S) * dh), dkh(static_cast<size_t>(S) * dh),
      dvh(static_cast<size_t>(S) * dh);

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerView& lv = tower.layers[l];
    const LayerTrace& lt = tr.layers[l];
    const std::string lp = join_name(px, "layers." + std::to_string(l)) + ".";

    // MLP branch: x_out = x_mid + mlp_out, dx currently holds dx_out.
    if (weight_grads) {
      auto& dw2 = grad_buffer(grads, lp + "mlp.w2", static_cast<int64_t>(W) * Hd);
      auto& db2 = grad_buffer(grads, lp + "mlp.b2", W);
      linear_weight_grads(dx.data(), lt.mlp_act.data(), S, W, Hd, scratch,
                          dw2.data(), db2.data());
    }
    K().gemm_nn_wf32(dx.data(), lv.w2, dact.data(), S, Hd, W, false);
    for (size_t i = 0; i < dpre.size(); ++i) {
      dpre[i] = dact[i] * gelu_grad(lt.mlp_pre[i]);
    }
    if (weight_grads) {
      ln_out.resize(static_cast<size_t>(S) * W);
      recompute_ln_out(lt.ln2_xhat.data(), lv.ln2_g, lv.ln2_b, S, W, ln_out.data());
      auto& dw1 = grad_buffer(grads, lp + "mlp.w1", static_cast<int64_t>(Hd) * W);
      auto& db1 = grad_buffer(grads, lp + "mlp.b1", Hd);
      linear_weight_grads(dpre.data(), ln_out.data(), S, Hd, W, scratch, dw1.data(),
                          db1.data());
    }
    K().gemm_nn_wf32(dpre.data(), lv.w1, dln2.data(), S, W, Hd, false);
    {
      double* dg = nullptr;
      double* db = nullptr;
      if (weight_grads) {
        dg = grad_buffer(grads, lp + "ln2.g", W).data();
        db = grad_buffer(grads, lp + "ln2.b", W).data();
      }
      layer_norm_backward(dln2.data(), lt.ln2_xhat.data(), lt.ln2_inv.data(), lv.ln2_g,
                          S, W, dx.data(), dg, db);
    }
    // dx now holds dx_mid.

    // Attention branch: x_mid = x_in + attn_out.
    if (weight_grads) {
      auto& dwo = grad_buffer(grads, lp + "attn.wo", static_cast<int64_t>(W) * W);
      auto& dbo = grad_buffer(grads, lp + "attn.bo", W);
      linear_weight_grads(dx.data(), lt.attn_concat.data(), S, W, W, scratch,
                          dwo.data(), dbo.data());
    }
    K().gemm_nn_wf32(dx.data(), lv.wo, dconcat.data(), S, W, W, false);

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int h = 0; h < H; ++h) {
      const double* P = lt.attn_p.data() + static_cast<size_t>(h) * S * S;
      pack_head(lt.q, S, W, h * dh, dh, qh);
      pack_head(lt.k, S, W, h * dh, dh, kh);
      pack_head(lt.v, S, W, h * dh, dh, vh);
      pack_head(dconcat, S, W, h * dh, dh, doh);
      // dP = doh vh^T
      K().gemm_nt(doh.data(), vh.data(), dP.data(), S, S, dh);
      // dvh = P^T doh
      transpose(P, S, S, tbuf.data());
      K().gemm_nn(tbuf.data(), doh.data(), dvh.data(), S, dh, S, false);
      // softmax backward, then the 1/sqrt(dh) score scale
      for (int r = 0; r < S; ++r) {
        const double* Pr = P + static_cast<size_t>(r) * S;
        const double* dPr = dP.data() + static_cast<size_t>(r) * S;
        double* dscr = dsc.data() + static_cast<size_t>(r) * S;
        const double dot = K().dot(dPr, Pr, S);
        for (int c = 0; c < S; ++c) dscr[c] = Pr[c] * (dPr[c] - dot) * scale;
      }
      K().gemm_nn(dsc.data(), kh.data(), dqh.data(), S, dh, S, false);
      transpose(dsc.data(), S, S, tbuf.data());
      K().gemm_nn(tbuf.data(), qh.data(), dkh.data(), S, dh, S, false);
      unpack_head(dqh, S, W, h * dh, dh, dq);
      unpack_head(dkh, S, W, h * dh, dh, dk);
      unpack_head(dvh, S, W, h * dh, dh, dv);
    }

    if (weight_grads) {
      ln_out.resize(static_cast<size_t>(S) * W);
      recompute_ln_out(lt.ln1_xhat.data(), lv.ln1_g, lv.ln1_b, S, W, ln_out.data());
      auto& dwq = grad_buffer(grads, lp + "attn.wq", static_cast<int64_t>(W) * W);
      auto& dbq = grad_buffer(grads, lp + "attn.bq", W);
      linear_weight_grads(dq.data(), ln_out.data(), S, W, W, scratch, dwq.data(),
                          dbq.data());
      auto& dwk = grad_buffer(grads, lp + "attn.wk", static_cast<int64_t>(W) * W);
      auto& dbk = grad_buffer(grads, lp + "attn.bk", W);
      linear_weight_grads(dk.data(), ln_out.data(), S, W, W, scratch, dwk.data(),
                          dbk.data());
      auto& dwv = grad_buffer(grads, lp + "attn.wv", static_cast<int64_t>(W) * W);
      auto& dbv = grad_buffer(grads, lp + "attn.bv", W);
      linear_weight_grads(dv.data(), ln_out.data(), S, W, W, scratch, dwv.data(),
                          dbv.data());
    }
    K().gemm_nn_wf32(dq.data(), lv.wq, da.data(), S, W, W, false);
    K().gemm_nn_wf32(dk.data(), lv.wk, da.data(), S, W, W, true);
    K().gemm_nn_wf32(dv.data(), lv.wv, da.data(), S, W, W, true);
    {
      double* dg = nullptr;
      double* db = nullptr;
      if (weight_grads) {
        dg = grad_buffer(grads, lp + "ln1.g", W).data();
        db = grad_buffer(grads, lp + "ln1.b", W).data();
      }
      layer_norm_backward(da.data(), lt.ln1_xhat.data(), lt.ln1_inv.data(), lv.ln1_g,
                          S, W, dx.data(), dg, db);
    }
    // dx now holds dx_in for this layer.

    if (l >= 1 && l < tr.eff_depth) {
      auto& dlev = grad_buffer(grads, prompts.prefix + ".level" + std::to_string(l),
                               static_cast<int64_t>(M) * prompts.width);
      for (int m = 0; m < M; ++m) {
        double* row = dx.data() + static_cast<size_t>(tr.slot_begin + m) * W;
        for (int i = 0; i < W; ++i) {
          dlev[m * W + i] += row[i];
          row[i] = 0.0;
        }
      }
    }
  }

  // Embedding assembly backward; dx == d x0.
  {
    auto& dlev0 = grad_buffer(grads, prompts.prefix + ".level0",
                              static_cast<int64_t>(M) * prompts.width);
    for (int m = 0; m < M; ++m) {
      const double* row = dx.data() + static_cast<size_t>(tr.slot_begin + m) * W;
      for (int i = 0; i < W; ++i) dlev0[m * W + i] += row[i];
    }
  }
  if (!weight_grads) return;

  {
    auto& dpos = grad_buffer(grads, join_name(px, "pos"),
                             static_cast<int64_t>(cfg.max_seq_len) * W);
    for (int s = 0; s < S; ++s) {
      // Prompt slots received their embedding gradient above and were part of
      // the assembled sequence, so the positional rows still get all of dx0.
      const double* row = dx.data() + static_cast<size_t>(s) * W;
      for (int i = 0; i < W; ++i) dpos[static_cast<size_t>(s) * W + i] += row[i];
    }
  }
  if (cfg.is_image()) {
    auto& dcls = grad_buffer(grads, join_name(px, "cls"), W);
    for (int i = 0; i < W; ++i) dcls[i] += dx[i];
    const int P = cfg.num_patches();
    const int pdim = cfg.patch_dim();
    auto& dpw = grad_buffer(grads, join_name(px, "patch_embed.w"),
                            static_cast<int64_t>(W) * pdim);
    auto& dpb = grad_buffer(grads, join_name(px, "patch_embed.b"), W);
    const double* dpt = dx.data() + static_cast<size_t>(1 + M) * W;
    linear_weight_grads(dpt, tr.patch_pixels.data(), P, W, pdim, scratch, dpw.data(),
                        dpb.data());
  } else {
    auto& dtok = grad_buffer(grads, join_name(px, "tok_embed"),
                             static_cast<int64_t>(cfg.vocab_size) * W);
    for (int s = M; s < S; ++s) {
      const double* row = dx.data() + static_cast<size_t>(s) * W;
      double* dst = dtok.data() + static_cast<size_t>(tr.token_ids[s]) * W;
      for (int i = 0; i < W; ++i) dst[i] += row[i];
    }
  }
}

}  // namespace pd::model
