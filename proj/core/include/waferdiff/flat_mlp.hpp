#pragma once

// Ablation denoiser: a flat residual MLP over the whole latent vector, with
// additive timestep conditioning. Mirrors the transformer denoiser's
// interface (forward / backward / predict_noise / collect) so the trainer
// and scorer can swap between the two.

#include "waferdiff/common.hpp"
#include "waferdiff/nn.hpp"
#include "waferdiff/dit1d.hpp"  // timestep_sincos

#include <vector>

namespace wd {

struct FlatMlpConfig {
  int channels = 4;
  int seq_len = 32;
  int hidden_dim = 256;
  int depth = 3;  // number of residual blocks
  int t_sincos_dim = 256;

  int flat_dim() const { return channels * seq_len; }

  void validate() const {
    if (channels < 1 || seq_len < 1 || hidden_dim < 1 || depth < 1)
      throw ShapeError("flat-mlp config: all dimensions must be positive");
    if (t_sincos_dim <= 0 || t_sincos_dim % 2 != 0)
      throw ShapeError("flat-mlp config: timestep feature width must be even");
  }
};

template <typename S>
struct FlatMlp {
  FlatMlpConfig cfg;
  Linear<S> in_proj;           // (C*L) -> H
  Linear<S> temb1, temb2;      // sincos -> H -> H
  std::vector<Linear<S>> f1s;  // H -> H
  std::vector<Linear<S>> f2s;  // H -> H
  Linear<S> out_proj;          // H -> (C*L); zero-init
  mutable std::uint64_t eval_count = 0;

  static FlatMlp init(const FlatMlpConfig& cfg, Rng& rng) {
    cfg.validate();
    FlatMlp m;
    m.cfg = cfg;
    m.in_proj = Linear<S>::kaiming(cfg.hidden_dim, cfg.flat_dim(), rng);
    m.temb1 = Linear<S>::kaiming(cfg.hidden_dim, cfg.t_sincos_dim, rng);
    m.temb2 = Linear<S>::kaiming(cfg.hidden_dim, cfg.hidden_dim, rng);
    for (int i = 0; i < cfg.depth; ++i) {
      m.f1s.push_back(Linear<S>::kaiming(cfg.hidden_dim, cfg.hidden_dim, rng));
      m.f2s.push_back(Linear<S>::kaiming(cfg.hidden_dim, cfg.hidden_dim, rng));
    }
    m.out_proj = Linear<S>::zeros(cfg.flat_dim(), cfg.hidden_dim);
    return m;
  }

  struct Cache {
    Index n = 0;
    Mat<S> t_sincos;
    Mat<S> temb_pre;
    Mat<S> temb_act;
    Mat<S> zt;           // flat input
    Mat<S> h0;           // after in_proj + temb add
    std::vector<Mat<S>> block_in;   // input h of each residual block
    std::vector<Mat<S>> block_pre;  // f1 output (pre-activation)
    std::vector<Mat<S>> block_act;  // silu(f1 output)
    Mat<S> h_out;
  };

  Mat<S> forward(const Mat<S>& zt_flat, const std::vector<int>& ts,
                 Cache* cache = nullptr) const {
    if (zt_flat.cols() != cfg.flat_dim())
      throw ShapeError("flat-mlp forward: flat input width != C*L");
    if (zt_flat.rows() != static_cast<Index>(ts.size()))
      throw ShapeError("flat-mlp forward: one timestep per sample required");
    eval_count += static_cast<std::uint64_t>(zt_flat.rows());

    Mat<S> t_sin = timestep_sincos<S>(ts, cfg.t_sincos_dim);
    Mat<S> temb_pre = temb1.forward(t_sin);
    Mat<S> temb_act = silu(temb_pre);
    Mat<S> temb = temb2.forward(temb_act);

    Mat<S> h = in_proj.forward(zt_flat) + temb;
    if (cache) {
      cache->n = zt_flat.rows();
      cache->t_sincos = std::move(t_sin);
      cache->temb_pre = std::move(temb_pre);
      cache->temb_act = std::move(temb_act);
      cache->zt = zt_flat;
      cache->h0 = h;
      cache->block_in.clear();
      cache->block_pre.clear();
      cache->block_act.clear();
    }
    for (int i = 0; i < cfg.depth; ++i) {
      Mat<S> pre = f1s[i].forward(h);
      Mat<S> act = silu(pre);
      if (cache) {
        cache->block_in.push_back(h);
        cache->block_pre.push_back(pre);
        cache->block_act.push_back(act);
      }
      h += f2s[i].forward(act);
    }
    if (!h.allFinite())
      throw NumericError("non-finite activation in flat-mlp denoiser");
    if (cache) cache->h_out = h;
    return out_proj.forward(h);
  }

  Mat<S> predict_noise(const Mat<S>& zt, int t) const {
    if (zt.rows() != cfg.channels || zt.cols() != cfg.seq_len)
      throw ShapeError("predict_noise: Zt must be C x L");
    Mat<S> flat = Eigen::Map<const Mat<S>>(zt.data(), 1, cfg.flat_dim());
    Mat<S> out = forward(flat, {t});
    return Eigen::Map<const Mat<S>>(out.data(), cfg.channels, cfg.seq_len);
  }

  Mat<S> backward(Cache& cache, const Mat<S>& d_eps) {
    Mat<S> d_h = out_proj.backward(cache.h_out, d_eps);
    for (int i = cfg.depth - 1; i >= 0; --i) {
      Mat<S> d_act = f2s[i].backward(cache.block_act[i], d_h);
      Mat<S> d_pre =
          d_act.array() * silu_grad_m(cache.block_pre[i]).array();
      d_h += f1s[i].backward(cache.block_in[i], d_pre);
    }
    // h0 = in_proj(zt) + temb: the gradient splits additively.
    Mat<S> d_temb_act = temb2.backward(cache.temb_act, d_h);
    Mat<S> d_temb_pre =
        d_temb_act.array() * silu_grad_m(cache.temb_pre).array();
    temb1.backward(cache.t_sincos, d_temb_pre);
    return in_proj.backward(cache.zt, d_h);
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    in_proj.collect(refs, prefix + ".in");
    temb1.collect(refs, prefix + ".tembed.l1");
    temb2.collect(refs, prefix + ".tembed.l2");
    for (std::size_t i = 0; i < f1s.size(); ++i) {
      f1s[i].collect(refs, prefix + ".block" + std::to_string(i) + ".f1");
      f2s[i].collect(refs, prefix + ".block" + std::to_string(i) + ".f2");
    }
    out_proj.collect(refs, prefix + ".out");
  }

  void zero_grad() {
    in_proj.zero_grad();
    temb1.zero_grad();
    temb2.zero_grad();
    for (auto& l : f1s) l.zero_grad();
    for (auto& l : f2s) l.zero_grad();
    out_proj.zero_grad();
  }
};

}  // namespace wd
