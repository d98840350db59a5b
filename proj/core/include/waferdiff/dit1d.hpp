#pragma once

// 1D diffusion-transformer denoiser: strided patch embedding, timestep-
// conditioned adaLN-Zero blocks, modulated final projection, unpatchify.
//
// Layout conventions (shared with the rest of the pipeline):
//   - flat latent batch: n x (C*L), entry (c, l) at column c*L + l
//   - token batch: (n*Np) x d, sample i's token j at row i*Np + j
//   - per-sample conditioning: n x d (or n x 6d for modulation vectors)

#include "waferdiff/common.hpp"
#include "waferdiff/nn.hpp"
#include "waferdiff/posenc.hpp"

#include <vector>

namespace wd {

struct DitConfig {
  int channels = 4;    // C
  int seq_len = 32;    // L
  int patch_size = 2;  // p
  int hidden_dim = 256;  // d
  int heads = 4;
  int depth = 3;
  int ffn_mult = 4;
  int t_sincos_dim = 256;  // width of the sinusoidal timestep features

  int num_patches() const {  // N_p = ceil(L / p)
    return (seq_len + patch_size - 1) / patch_size;
  }
  int head_dim() const { return hidden_dim / heads; }
  int patch_in() const { return channels * patch_size; }
  int flat_dim() const { return channels * seq_len; }

  void validate() const {
    if (channels < 1 || seq_len < 1 || hidden_dim < 1 || heads < 1 ||
        depth < 1 || ffn_mult < 1)
      throw ShapeError("dit config: all dimensions must be positive");
    if (patch_size < 1 || patch_size > seq_len)
      throw ShapeError("dit config: patch size must lie in [1, L]");
    if (hidden_dim % heads != 0)
      throw ShapeError("dit config: heads must divide the hidden width");
    if (t_sincos_dim <= 0 || t_sincos_dim % 2 != 0)
      throw ShapeError("dit config: timestep feature width must be even");
  }
};

// Sinusoidal timestep features, one row per timestep.
template <typename S>
Mat<S> timestep_sincos(const std::vector<int>& ts, int dim) {
  Mat<S> out(static_cast<Index>(ts.size()), dim);
  for (std::size_t i = 0; i < ts.size(); ++i)
    out.row(static_cast<Index>(i)) =
        sincos_embedding(static_cast<double>(ts[i]), dim).cast<S>().transpose();
  return out;
}

template <typename S>
struct DitBlock {
  Linear<S> wq, wk, wv, wo;
  Linear<S> ffn1, ffn2;
  Linear<S> mod;  // d -> 6d producing (a1, g1, b1, a2, g2, b2); zero-init

  static DitBlock init(const DitConfig& cfg, Rng& rng) {
    DitBlock blk;
    const int d = cfg.hidden_dim;
    blk.wq = Linear<S>::kaiming(d, d, rng);
    blk.wk = Linear<S>::kaiming(d, d, rng);
    blk.wv = Linear<S>::kaiming(d, d, rng);
    blk.wo = Linear<S>::kaiming(d, d, rng);
    blk.ffn1 = Linear<S>::kaiming(d * cfg.ffn_mult, d, rng);
    blk.ffn2 = Linear<S>::kaiming(d, d * cfg.ffn_mult, rng);
    blk.mod = Linear<S>::zeros(6 * d, d);
    return blk;
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    wq.collect(refs, prefix + ".attn.wq");
    wk.collect(refs, prefix + ".attn.wk");
    wv.collect(refs, prefix + ".attn.wv");
    wo.collect(refs, prefix + ".attn.wo");
    ffn1.collect(refs, prefix + ".ffn.f1");
    ffn2.collect(refs, prefix + ".ffn.f2");
    mod.collect(refs, prefix + ".mod");
  }

  void zero_grad() {
    wq.zero_grad();
    wk.zero_grad();
    wv.zero_grad();
    wo.zero_grad();
    ffn1.zero_grad();
    ffn2.zero_grad();
    mod.zero_grad();
  }
};

template <typename S>
struct Dit1d {
  DitConfig cfg;
  Linear<S> patch_proj;        // (C*p) -> d
  Mat<S> patch_pe;             // Np x d fixed sincos, not a parameter
  Linear<S> temb1, temb2;      // t_sincos_dim -> d -> d
  std::vector<DitBlock<S>> blocks;
  Linear<S> final_mod;   // d -> 2d producing (g, b); zero-init
  Linear<S> final_proj;  // d -> p*C; zero-init
  mutable std::uint64_t eval_count = 0;  // (sample, timestep) evaluations

  static Dit1d init(const DitConfig& cfg, Rng& rng) {
    cfg.validate();
    Dit1d m;
    m.cfg = cfg;
    m.patch_proj = Linear<S>::kaiming(cfg.hidden_dim, cfg.patch_in(), rng);
    m.patch_pe.resize(cfg.num_patches(), cfg.hidden_dim);
    for (int j = 0; j < cfg.num_patches(); ++j)
      m.patch_pe.row(j) =
          sincos_embedding(j, cfg.hidden_dim).cast<S>().transpose();
    m.temb1 = Linear<S>::kaiming(cfg.hidden_dim, cfg.t_sincos_dim, rng);
    m.temb2 = Linear<S>::kaiming(cfg.hidden_dim, cfg.hidden_dim, rng);
    m.blocks.reserve(cfg.depth);
    for (int i = 0; i < cfg.depth; ++i)
      m.blocks.push_back(DitBlock<S>::init(cfg, rng));
    m.final_mod = Linear<S>::zeros(2 * cfg.hidden_dim, cfg.hidden_dim);
    m.final_proj = Linear<S>::zeros(cfg.patch_size * cfg.channels,
                                    cfg.hidden_dim);
    return m;
  }

  struct BlockCache {
    Mat<S> x_in;
    typename RowNorm<S>::Cache ln1;
    Mat<S> xm1;
    Mat<S> q, k, v;
    Mat<S> attn_w;     // (n*heads*Np) x Np softmax rows
    Mat<S> attn_cat;   // before the output projection
    Mat<S> x_mid;
    typename RowNorm<S>::Cache ln2;
    Mat<S> xm2;
    Mat<S> ffn_pre;
    Mat<S> ffn_act;
    Mat<S> mod_out;    // n x 6d
    Mat<S> branch1;    // attention branch output (wo applied)
    Mat<S> branch2;    // ffn branch output
  };

  struct Cache {
    Index n = 0;
    Mat<S> t_sincos;
    Mat<S> temb_pre;
    Mat<S> temb_act;
    Mat<S> c;
    Mat<S> silu_c;
    Mat<S> d_silu_c;   // accumulated during backward
    Mat<S> patch_x;    // (n*Np) x (C*p)
    std::vector<BlockCache> blocks;
    Mat<S> h_out;      // tokens after the last block
    typename RowNorm<S>::Cache lnf;
    Mat<S> xmf;
    Mat<S> final_mod_out;  // n x 2d
  };

  // ---- small modulation helpers -------------------------------------------

  // out = x * diag(1 + g_i) + b_i per sample; g/b live in mod.cols [g_off, b_off).
  static void apply_scale_shift(const Mat<S>& x, const Mat<S>& mod, int g_off,
                                int b_off, int np, Mat<S>& out) {
    const Index d = x.cols();
    out.resize(x.rows(), d);
    for (Index i = 0; i < mod.rows(); ++i) {
      Vec<S> scale =
          mod.row(i).segment(g_off, d).transpose().array() + S{1};
      out.middleRows(i * np, np).noalias() =
          x.middleRows(i * np, np) * scale.asDiagonal();
      out.middleRows(i * np, np).rowwise() += mod.row(i).segment(b_off, d);
    }
  }

  // Backward of apply_scale_shift: accumulates dg/db into d_mod, returns dx.
  static Mat<S> scale_shift_backward(const Mat<S>& x_normed, const Mat<S>& mod,
                                     int g_off, int b_off, int np,
                                     const Mat<S>& d_out, Mat<S>& d_mod) {
    const Index d = x_normed.cols();
    Mat<S> dx(x_normed.rows(), d);
    for (Index i = 0; i < mod.rows(); ++i) {
      auto rows = Eigen::seqN(i * np, np);
      d_mod.row(i).segment(g_off, d) +=
          (d_out(rows, Eigen::all).array() * x_normed(rows, Eigen::all).array())
              .colwise()
              .sum()
              .matrix();
      d_mod.row(i).segment(b_off, d) +=
          d_out(rows, Eigen::all).colwise().sum();
      Vec<S> scale =
          mod.row(i).segment(g_off, d).transpose().array() + S{1};
      dx.middleRows(i * np, np).noalias() =
          d_out.middleRows(i * np, np) * scale.asDiagonal();
    }
    return dx;
  }

  // h += branch * diag(a_i) per sample (the adaLN-Zero gate).
  static void apply_gate(Mat<S>& h, const Mat<S>& branch, const Mat<S>& mod,
                         int a_off, int np) {
    const Index d = h.cols();
    for (Index i = 0; i < mod.rows(); ++i) {
      Vec<S> gate = mod.row(i).segment(a_off, d).transpose();
      h.middleRows(i * np, np).noalias() +=
          branch.middleRows(i * np, np) * gate.asDiagonal();
    }
  }

  // Backward of apply_gate: da into d_mod, returns d_branch. d_h passes through.
  static Mat<S> gate_backward(const Mat<S>& branch, const Mat<S>& mod,
                              int a_off, int np, const Mat<S>& d_h,
                              Mat<S>& d_mod) {
    const Index d = branch.cols();
    Mat<S> d_branch(branch.rows(), d);
    for (Index i = 0; i < mod.rows(); ++i) {
      auto rows = Eigen::seqN(i * np, np);
      d_mod.row(i).segment(a_off, d) +=
          (d_h(rows, Eigen::all).array() * branch(rows, Eigen::all).array())
              .colwise()
              .sum()
              .matrix();
      Vec<S> gate = mod.row(i).segment(a_off, d).transpose();
      d_branch.middleRows(i * np, np).noalias() =
          d_h.middleRows(i * np, np) * gate.asDiagonal();
    }
    return d_branch;
  }

  // ---- patch layout --------------------------------------------------------

  Mat<S> gather_patches(const Mat<S>& z_flat) const {
    const int np = cfg.num_patches(), p = cfg.patch_size;
    const int ch = cfg.channels, sl = cfg.seq_len;
    Mat<S> x = Mat<S>::Zero(z_flat.rows() * np, cfg.patch_in());
    for (Index i = 0; i < z_flat.rows(); ++i)
      for (int j = 0; j < np; ++j)
        for (int c = 0; c < ch; ++c)
          for (int q = 0; q < p; ++q) {
            const int l = j * p + q;
            if (l < sl) x(i * np + j, c * p + q) = z_flat(i, c * sl + l);
          }
    return x;
  }

  Mat<S> scatter_patches(const Mat<S>& y, Index n) const {
    const int np = cfg.num_patches(), p = cfg.patch_size;
    const int ch = cfg.channels, sl = cfg.seq_len;
    Mat<S> z = Mat<S>::Zero(n, cfg.flat_dim());
    for (Index i = 0; i < n; ++i)
      for (int j = 0; j < np; ++j)
        for (int c = 0; c < ch; ++c)
          for (int q = 0; q < p; ++q) {
            const int l = j * p + q;
            if (l < sl) z(i, c * sl + l) = y(i * np + j, c * p + q);
          }
    return z;
  }

  // ---- forward -------------------------------------------------------------

  // zt_flat: n x (C*L); ts: one timestep per row. Returns predicted noise in
  // the same flat layout. Pass a cache to enable backward().
  Mat<S> forward(const Mat<S>& zt_flat, const std::vector<int>& ts,
                 Cache* cache = nullptr) const {
    if (zt_flat.cols() != cfg.flat_dim())
      throw ShapeError("dit forward: flat input width != C*L");
    if (zt_flat.rows() != static_cast<Index>(ts.size()))
      throw ShapeError("dit forward: one timestep per sample required");
    const Index n = zt_flat.rows();
    const int np = cfg.num_patches();
    eval_count += static_cast<std::uint64_t>(n);

    // Timestep conditioning c, shared by every block's modulation MLP.
    Mat<S> t_sin = timestep_sincos<S>(ts, cfg.t_sincos_dim);
    Mat<S> temb_pre = temb1.forward(t_sin);
    Mat<S> temb_act = silu(temb_pre);
    Mat<S> c = temb2.forward(temb_act);
    Mat<S> silu_c = silu(c);

    // Patchify and add the fixed patch-position encoding.
    Mat<S> patch_x = gather_patches(zt_flat);
    Mat<S> h = patch_proj.forward(patch_x);
    for (Index i = 0; i < n; ++i) h.middleRows(i * np, np) += patch_pe;

    if (cache) {
      cache->n = n;
      cache->t_sincos = std::move(t_sin);
      cache->temb_pre = std::move(temb_pre);
      cache->temb_act = std::move(temb_act);
      cache->c = c;
      cache->silu_c = silu_c;
      cache->patch_x = std::move(patch_x);
      cache->blocks.assign(static_cast<std::size_t>(cfg.depth), {});
    }

    for (int bi = 0; bi < cfg.depth; ++bi) {
      BlockCache scratch;
      BlockCache& bc = cache ? cache->blocks[bi] : scratch;
      h = run_block(blocks[bi], h, silu_c, np, bc);
      if (!h.allFinite())
        throw NumericError("non-finite activation after block " +
                           std::to_string(bi));
    }

    // Final modulated norm + zero-init projection, then unpatchify.
    typename RowNorm<S>::Cache lnf;
    Mat<S> hn = RowNorm<S>::forward(h, &lnf);
    Mat<S> fmod = final_mod.forward(silu_c);
    Mat<S> xmf;
    apply_scale_shift(hn, fmod, 0, cfg.hidden_dim, np, xmf);
    Mat<S> y = final_proj.forward(xmf);
    if (cache) {
      cache->h_out = std::move(h);
      cache->lnf = std::move(lnf);
      cache->xmf = std::move(xmf);
      cache->final_mod_out = std::move(fmod);
    }
    return scatter_patches(y, n);
  }

  // Spec-shaped single-sample entry: Zt as C x L, plus one timestep.
  Mat<S> predict_noise(const Mat<S>& zt, int t) const {
    if (zt.rows() != cfg.channels || zt.cols() != cfg.seq_len)
      throw ShapeError("predict_noise: Zt must be C x L");
    Mat<S> flat = Eigen::Map<const Mat<S>>(zt.data(), 1, cfg.flat_dim());
    Mat<S> out = forward(flat, {t});
    return Eigen::Map<const Mat<S>>(out.data(), cfg.channels, cfg.seq_len);
  }

  // ---- backward ------------------------------------------------------------

  // d_eps: n x (C*L). Accumulates parameter gradients; returns dL/dZt.
  Mat<S> backward(Cache& cache, const Mat<S>& d_eps) {
    const Index n = cache.n;
    const int np = cfg.num_patches();
    const int d = cfg.hidden_dim;

    Mat<S> dy = gather_patches(d_eps);  // unpatchify is a pure scatter
    Mat<S> d_xmf = final_proj.backward(cache.xmf, dy);
    cache.d_silu_c = Mat<S>::Zero(n, d);
    Mat<S> d_fmod = Mat<S>::Zero(n, 2 * d);
    Mat<S> d_hn = scale_shift_backward(cache.lnf.y, cache.final_mod_out, 0, d,
                                       np, d_xmf, d_fmod);
    cache.d_silu_c += final_mod.backward(cache.silu_c, d_fmod);
    Mat<S> d_h = RowNorm<S>::backward(cache.lnf, d_hn);

    for (int bi = cfg.depth - 1; bi >= 0; --bi)
      d_h = block_backward(blocks[bi], cache.blocks[bi], cache, d_h, np);

    // Timestep-conditioning path (every block's mod layer already added its
    // share into d_silu_c).
    Mat<S> d_c = cache.d_silu_c.array() * silu_grad_m(cache.c).array();
    Mat<S> d_temb_act = temb2.backward(cache.temb_act, d_c);
    Mat<S> d_temb_pre =
        d_temb_act.array() * silu_grad_m(cache.temb_pre).array();
    temb1.backward(cache.t_sincos, d_temb_pre);

    // Patch path. The fixed patch PE adds nothing to the gradient.
    Mat<S> d_patch_x = patch_proj.backward(cache.patch_x, d_h);
    return scatter_patches(d_patch_x, n);
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    patch_proj.collect(refs, prefix + ".patch");
    temb1.collect(refs, prefix + ".tembed.l1");
    temb2.collect(refs, prefix + ".tembed.l2");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(refs, prefix + ".block" + std::to_string(i));
    final_mod.collect(refs, prefix + ".final.mod");
    final_proj.collect(refs, prefix + ".final.proj");
  }

  void zero_grad() {
    patch_proj.zero_grad();
    temb1.zero_grad();
    temb2.zero_grad();
    for (auto& b : blocks) b.zero_grad();
    final_mod.zero_grad();
    final_proj.zero_grad();
  }

 private:
  Mat<S> run_block(const DitBlock<S>& blk, const Mat<S>& x,
                   const Mat<S>& silu_c, int np, BlockCache& bc) const {
    const int d = cfg.hidden_dim;
    const int dh = cfg.head_dim();
    const Index n = silu_c.rows();
    const S inv_sqrt_dh = S{1} / std::sqrt(static_cast<S>(dh));

    bc.x_in = x;
    bc.mod_out = blk.mod.forward(silu_c);  // (a1 g1 b1 a2 g2 b2)

    // Attention branch.
    Mat<S> xn = RowNorm<S>::forward(x, &bc.ln1);
    apply_scale_shift(xn, bc.mod_out, d, 2 * d, np, bc.xm1);
    bc.q = blk.wq.forward(bc.xm1);
    bc.k = blk.wk.forward(bc.xm1);
    bc.v = blk.wv.forward(bc.xm1);
    bc.attn_w.resize(n * cfg.heads * np, np);
    bc.attn_cat.resize(n * np, d);
    for (Index i = 0; i < n; ++i)
      for (int hd = 0; hd < cfg.heads; ++hd) {
        auto q = bc.q.block(i * np, hd * dh, np, dh);
        auto k = bc.k.block(i * np, hd * dh, np, dh);
        auto v = bc.v.block(i * np, hd * dh, np, dh);
        Mat<S> scores = (q * k.transpose()) * inv_sqrt_dh;
        // Row-stable softmax.
        Vec<S> row_max = scores.rowwise().maxCoeff();
        scores = (scores.colwise() - row_max).array().exp().matrix();
        Vec<S> row_sum = scores.rowwise().sum();
        for (Index r = 0; r < scores.rows(); ++r) scores.row(r) /= row_sum[r];
        bc.attn_w.middleRows((i * cfg.heads + hd) * np, np) = scores;
        bc.attn_cat.block(i * np, hd * dh, np, dh).noalias() = scores * v;
      }
    bc.branch1 = blk.wo.forward(bc.attn_cat);
    Mat<S> h = x;
    apply_gate(h, bc.branch1, bc.mod_out, 0, np);
    bc.x_mid = h;

    // Feed-forward branch.
    Mat<S> xn2 = RowNorm<S>::forward(h, &bc.ln2);
    apply_scale_shift(xn2, bc.mod_out, 4 * d, 5 * d, np, bc.xm2);
    bc.ffn_pre = blk.ffn1.forward(bc.xm2);
    bc.ffn_act = silu(bc.ffn_pre);
    bc.branch2 = blk.ffn2.forward(bc.ffn_act);
    apply_gate(h, bc.branch2, bc.mod_out, 3 * d, np);
    return h;
  }

  Mat<S> block_backward(DitBlock<S>& blk, BlockCache& bc, Cache& cache,
                        const Mat<S>& d_out, int np) {
    const int d = cfg.hidden_dim;
    const int dh = cfg.head_dim();
    const Index n = cache.n;
    const S inv_sqrt_dh = S{1} / std::sqrt(static_cast<S>(dh));
    Mat<S> d_mod = Mat<S>::Zero(n, 6 * d);

    // FFN branch (gate a2 at offset 3d, scale g2 at 4d, shift b2 at 5d).
    Mat<S> d_h = d_out;  // residual passthrough
    Mat<S> d_branch2 = gate_backward(bc.branch2, bc.mod_out, 3 * d, np, d_out,
                                     d_mod);
    Mat<S> d_ffn_act = blk.ffn2.backward(bc.ffn_act, d_branch2);
    Mat<S> d_ffn_pre = d_ffn_act.array() * silu_grad_m(bc.ffn_pre).array();
    Mat<S> d_xm2 = blk.ffn1.backward(bc.xm2, d_ffn_pre);
    Mat<S> d_xn2 = scale_shift_backward(bc.ln2.y, bc.mod_out, 4 * d, 5 * d, np,
                                        d_xm2, d_mod);
    d_h += RowNorm<S>::backward(bc.ln2, d_xn2);

    // Attention branch (gate a1 at 0, scale g1 at d, shift b1 at 2d).
    Mat<S> d_branch1 =
        gate_backward(bc.branch1, bc.mod_out, 0, np, d_h, d_mod);
    Mat<S> d_attn_cat = blk.wo.backward(bc.attn_cat, d_branch1);
    Mat<S> d_q(n * np, d), d_k(n * np, d), d_v(n * np, d);
    for (Index i = 0; i < n; ++i)
      for (int hd = 0; hd < cfg.heads; ++hd) {
        auto attn = bc.attn_w.middleRows((i * cfg.heads + hd) * np, np);
        auto d_o = d_attn_cat.block(i * np, hd * dh, np, dh);
        auto q = bc.q.block(i * np, hd * dh, np, dh);
        auto k = bc.k.block(i * np, hd * dh, np, dh);
        auto v = bc.v.block(i * np, hd * dh, np, dh);
        d_v.block(i * np, hd * dh, np, dh).noalias() = attn.transpose() * d_o;
        Mat<S> d_attn = d_o * v.transpose();
        Vec<S> row_dot = (d_attn.array() * attn.array()).rowwise().sum();
        Mat<S> d_scores =
            (attn.array() * (d_attn.colwise() - row_dot).array()).matrix() *
            inv_sqrt_dh;
        d_q.block(i * np, hd * dh, np, dh).noalias() = d_scores * k;
        d_k.block(i * np, hd * dh, np, dh).noalias() =
            d_scores.transpose() * q;
      }
    Mat<S> d_xm1 = blk.wq.backward(bc.xm1, d_q);
    d_xm1 += blk.wk.backward(bc.xm1, d_k);
    d_xm1 += blk.wv.backward(bc.xm1, d_v);
    Mat<S> d_xn1 = scale_shift_backward(bc.ln1.y, bc.mod_out, d, 2 * d, np,
                                        d_xm1, d_mod);
    d_h += RowNorm<S>::backward(bc.ln1, d_xn1);

    cache.d_silu_c += blk.mod.backward(cache.silu_c, d_mod);
    return d_h;
  }
};

}  // namespace wd
