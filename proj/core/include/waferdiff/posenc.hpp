#pragma once

// Fixed sinusoidal embeddings plus the trainable, gated die-position encoder.

#include "waferdiff/common.hpp"
#include "waferdiff/nn.hpp"

namespace wd {

// Interleaved sin/cos embedding: component 2i is sin(pos / 10000^(2i/dim)),
// component 2i+1 the matching cos.
inline VecD sincos_embedding(double position, int dim) {
  if (dim <= 0 || dim % 2 != 0)
    throw ShapeError("sincos_embedding needs a positive even dim");
  VecD out(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = std::sin(position * freq);
    out[2 * i + 1] = std::cos(position * freq);
  }
  return out;
}

// Feature-level positional matrix: column l is sincos_embedding(l, C).
template <typename S>
Mat<S> feature_pe(int channels, int seq_len) {
  if (seq_len <= 0) throw ShapeError("feature_pe needs a positive length");
  Mat<S> pe(channels, seq_len);
  for (int l = 0; l < seq_len; ++l)
    pe.col(l) = sincos_embedding(l, channels).cast<S>();
  return pe;
}

// Raw die coordinates followed by their sinusoidal expansions:
// [d_x, d_y, sincos(d_x, D_s/2), sincos(d_y, D_s/2)], total 2 + D_s entries.
inline VecD die_feature_vector(int die_x, int die_y, int sincos_dim) {
  if (sincos_dim <= 0 || sincos_dim % 4 != 0)
    throw ShapeError("die_feature_vector needs sincos_dim divisible by 4");
  VecD v(2 + sincos_dim);
  v[0] = die_x;
  v[1] = die_y;
  v.segment(2, sincos_dim / 2) = sincos_embedding(die_x, sincos_dim / 2);
  v.segment(2 + sincos_dim / 2, sincos_dim / 2) =
      sincos_embedding(die_y, sincos_dim / 2);
  return v;
}

struct DiePeConfig {
  int sincos_dim = 64;   // D_s
  int hidden_dim = 256;  // H_pe
  int channels = 4;
  int seq_len = 32;

  int coord_dim() const { return 2 + sincos_dim; }
  int out_dim() const { return channels * seq_len; }
};

// Gated residual MLP over the die feature vector:
//   e_die = reshape(W_out (base(v) + silu(g) * res(v)), C x L)
// The gate starts at exactly 0, so only the linear branch speaks at init.
template <typename S>
struct DiePe {
  DiePeConfig cfg;
  Linear<S> base;  // coord_dim -> hidden, no bias
  Linear<S> res1;  // coord_dim -> hidden
  Linear<S> res2;  // hidden -> hidden
  Linear<S> out;   // hidden -> C*L, no bias
  Mat<S> gate;     // 1x1 scalar
  Mat<S> g_gate;

  static DiePe init(const DiePeConfig& cfg, Rng& rng) {
    DiePe pe;
    pe.cfg = cfg;
    pe.base = Linear<S>::kaiming(cfg.hidden_dim, cfg.coord_dim(), rng, false);
    pe.res1 = Linear<S>::kaiming(cfg.hidden_dim, cfg.coord_dim(), rng);
    pe.res2 = Linear<S>::kaiming(cfg.hidden_dim, cfg.hidden_dim, rng);
    pe.out = Linear<S>::kaiming(cfg.out_dim(), cfg.hidden_dim, rng, false);
    pe.gate = Mat<S>::Zero(1, 1);
    pe.g_gate = Mat<S>::Zero(1, 1);
    return pe;
  }

  struct Cache {
    Mat<S> v;         // n x coord_dim
    Mat<S> res_pre;   // n x hidden, before silu
    Mat<S> res_act;   // n x hidden
    Mat<S> res_out;   // n x hidden (second layer output)
    Mat<S> combined;  // n x hidden
  };

  // Rows of v -> rows of flattened (C*L) embeddings.
  Mat<S> forward(const Mat<S>& v, Cache* cache = nullptr) const {
    Mat<S> res_pre = res1.forward(v);
    Mat<S> res_act = silu(res_pre);
    Mat<S> res_out = res2.forward(res_act);
    const S gate_act = silu(gate(0, 0));
    Mat<S> combined = base.forward(v) + gate_act * res_out;
    Mat<S> e = out.forward(combined);
    if (cache) {
      cache->v = v;
      cache->res_pre = std::move(res_pre);
      cache->res_act = std::move(res_act);
      cache->res_out = std::move(res_out);
      cache->combined = std::move(combined);
    }
    return e;
  }

  Mat<S> flat_embedding(int die_x, int die_y) const {
    Mat<S> v(1, cfg.coord_dim());
    v.row(0) = die_feature_vector(die_x, die_y, cfg.sincos_dim).cast<S>();
    return forward(v);
  }

  // Spec-shaped single-die variant.
  Mat<S> embedding(int die_x, int die_y) const {
    Mat<S> flat = flat_embedding(die_x, die_y);
    return Eigen::Map<const Mat<S>>(flat.data(), cfg.channels, cfg.seq_len);
  }

  // d_e: n x (C*L) upstream gradient. Accumulates parameter gradients.
  void backward(const Cache& cache, const Mat<S>& d_e) {
    Mat<S> d_combined = out.backward(cache.combined, d_e);
    const S gate_act = silu(gate(0, 0));
    g_gate(0, 0) += silu_grad(gate(0, 0)) *
                    (d_combined.array() * cache.res_out.array()).sum();
    Mat<S> d_res_out = gate_act * d_combined;
    Mat<S> d_res_act = res2.backward(cache.res_act, d_res_out);
    Mat<S> d_res_pre = d_res_act.array() * silu_grad_m(cache.res_pre).array();
    res1.backward(cache.v, d_res_pre);
    base.backward(cache.v, d_combined);
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    base.collect(refs, prefix + ".base");
    res1.collect(refs, prefix + ".res1");
    res2.collect(refs, prefix + ".res2");
    out.collect(refs, prefix + ".out");
    refs.push_back({prefix + ".gate", &gate, &g_gate});
  }

  void zero_grad() {
    base.zero_grad();
    res1.zero_grad();
    res2.zero_grad();
    out.zero_grad();
    g_gate.setZero();
  }
};

}  // namespace wd
