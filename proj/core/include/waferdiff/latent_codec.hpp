#pragma once

// MLP encoder/decoder between feature space R^F and latent space R^{D_r},
// plus the row-major latent <-> token reshaping.

#include "waferdiff/common.hpp"
#include "waferdiff/nn.hpp"

namespace wd {

struct CodecConfig {
  int input_dim = 0;     // F
  int hidden_dim = 128;
  int latent_dim = 128;  // D_r
  int channels = 4;      // C

  int seq_len() const {  // L = ceil(D_r / C)
    return (latent_dim + channels - 1) / channels;
  }
  int padded() const { return channels * seq_len() - latent_dim; }

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || latent_dim < 1 || channels < 1)
      throw ShapeError("codec config: all dimensions must be positive");
  }
};

// encode: h = rownorm(W2 silu(W1 x + b1) + b2); decode mirrors without the norm.
template <typename S>
struct Codec {
  CodecConfig cfg;
  Linear<S> enc1, enc2, dec1, dec2;

  static Codec init(const CodecConfig& cfg, Rng& rng) {
    cfg.validate();
    Codec c;
    c.cfg = cfg;
    c.enc1 = Linear<S>::kaiming(cfg.hidden_dim, cfg.input_dim, rng);
    c.enc2 = Linear<S>::kaiming(cfg.latent_dim, cfg.hidden_dim, rng);
    c.dec1 = Linear<S>::kaiming(cfg.hidden_dim, cfg.latent_dim, rng);
    c.dec2 = Linear<S>::kaiming(cfg.input_dim, cfg.hidden_dim, rng);
    return c;
  }

  struct Cache {
    Mat<S> x;
    Mat<S> enc_pre;   // before silu
    Mat<S> enc_act;
    Mat<S> norm_in;   // before the latent norm
    typename RowNorm<S>::Cache norm;
    Mat<S> h;
    Mat<S> dec_pre;
    Mat<S> dec_act;
  };

  // x: n x F -> h: n x D_r.
  Mat<S> encode(const Mat<S>& x, Cache* cache = nullptr) const {
    if (x.cols() != cfg.input_dim)
      throw ShapeError("encode: input width does not match the codec");
    Mat<S> enc_pre = enc1.forward(x);
    Mat<S> enc_act = silu(enc_pre);
    Mat<S> norm_in = enc2.forward(enc_act);
    typename RowNorm<S>::Cache norm_cache;
    Mat<S> h = RowNorm<S>::forward(norm_in, cache ? &norm_cache : nullptr);
    if (cache) {
      cache->x = x;
      cache->enc_pre = std::move(enc_pre);
      cache->enc_act = std::move(enc_act);
      cache->norm_in = std::move(norm_in);
      cache->norm = std::move(norm_cache);
      cache->h = h;
    }
    return h;
  }

  // h: n x D_r -> x_hat: n x F.
  Mat<S> decode(const Mat<S>& h, Cache* cache = nullptr) const {
    if (h.cols() != cfg.latent_dim)
      throw ShapeError("decode: latent width does not match the codec");
    Mat<S> dec_pre = dec1.forward(h);
    Mat<S> dec_act = silu(dec_pre);
    Mat<S> x_hat = dec2.forward(dec_act);
    if (cache) {
      cache->dec_pre = std::move(dec_pre);
      cache->dec_act = std::move(dec_act);
    }
    return x_hat;
  }

  // Backward through decode(encode(x)) given dL/dx_hat. Accumulates gradients
  // for all four layers; returns nothing (inputs are data, not parameters).
  void backward_autoencoder(const Cache& cache, const Mat<S>& d_xhat) {
    Mat<S> d_dec_act = dec2.backward(cache.dec_act, d_xhat);
    Mat<S> d_dec_pre = d_dec_act.array() * silu_grad_m(cache.dec_pre).array();
    Mat<S> d_h = dec1.backward(cache.h, d_dec_pre);
    backward_encode(cache, d_h);
  }

  // Backward through encode alone given dL/dh.
  void backward_encode(const Cache& cache, const Mat<S>& d_h) {
    Mat<S> d_norm_in = RowNorm<S>::backward(cache.norm, d_h);
    Mat<S> d_enc_act = enc2.backward(cache.enc_act, d_norm_in);
    Mat<S> d_enc_pre = d_enc_act.array() * silu_grad_m(cache.enc_pre).array();
    enc1.backward(cache.x, d_enc_pre);
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    enc1.collect(refs, prefix + ".enc1");
    enc2.collect(refs, prefix + ".enc2");
    dec1.collect(refs, prefix + ".dec1");
    dec2.collect(refs, prefix + ".dec2");
  }

  void zero_grad() {
    enc1.zero_grad();
    enc2.zero_grad();
    dec1.zero_grad();
    dec2.zero_grad();
  }
};

// Ablation stand-in for the autoencoder: per-feature standardization with the
// training-set statistics, then zero-pad or truncate to the latent width.
template <typename S>
struct Standardizer {
  CodecConfig cfg;   // input_dim, latent_dim, channels used
  Mat<S> mean;       // 1 x F
  Mat<S> std;        // 1 x F, floored

  Mat<S> encode(const Mat<S>& x) const {
    if (x.cols() != cfg.input_dim)
      throw ShapeError("encode: input width does not match the standardizer");
    Mat<S> z = (x.rowwise() - mean.row(0)).array().rowwise() /
               std.row(0).array();
    Mat<S> h = Mat<S>::Zero(x.rows(), cfg.latent_dim);
    const Index copy = std::min<Index>(cfg.input_dim, cfg.latent_dim);
    h.leftCols(copy) = z.leftCols(copy);
    return h;
  }

  // Inverse on the copied coordinates; truncated features come back as the
  // training mean (zero in standardized units).
  Mat<S> decode(const Mat<S>& h) const {
    Mat<S> z = Mat<S>::Zero(h.rows(), cfg.input_dim);
    const Index copy = std::min<Index>(cfg.input_dim, cfg.latent_dim);
    z.leftCols(copy) = h.leftCols(copy);
    return (z.array().rowwise() * std.row(0).array()).rowwise() + mean.row(0).array();
  }
};

// Row-major reshape of a latent row to C x L tokens, zero-padding the tail.
template <typename S>
Mat<S> tokenize(const Vec<S>& h, int channels) {
  if (channels < 1) throw ShapeError("tokenize: channels must be positive");
  const int latent = static_cast<int>(h.size());
  const int seq_len = (latent + channels - 1) / channels;
  Mat<S> z = Mat<S>::Zero(channels, seq_len);
  for (int i = 0; i < latent; ++i) z(i / seq_len, i % seq_len) = h[i];
  return z;
}

template <typename S>
Vec<S> detokenize(const Mat<S>& z, int latent_dim) {
  const int channels = static_cast<int>(z.rows());
  const int seq_len = static_cast<int>(z.cols());
  if (latent_dim < 1 || latent_dim > channels * seq_len)
    throw ShapeError("detokenize: latent_dim outside [1, C*L]");
  Vec<S> h(latent_dim);
  for (int i = 0; i < latent_dim; ++i) h[i] = z(i / seq_len, i % seq_len);
  return h;
}

// Batched layout: one sample per row, tokens flattened row-major so entry
// (c, l) sits at column c*L + l. All model code shares this convention.
template <typename S>
Mat<S> tokenize_batch(const Mat<S>& h, int channels) {
  if (channels < 1) throw ShapeError("tokenize: channels must be positive");
  const int latent = static_cast<int>(h.cols());
  const int seq_len = (latent + channels - 1) / channels;
  Mat<S> z = Mat<S>::Zero(h.rows(), channels * seq_len);
  z.leftCols(latent) = h;  // row-major flat index i == c*L + l for i < D_r
  return z;
}

template <typename S>
Mat<S> detokenize_batch(const Mat<S>& z, int latent_dim) {
  if (latent_dim < 1 || latent_dim > z.cols())
    throw ShapeError("detokenize: latent_dim outside [1, C*L]");
  return z.leftCols(latent_dim);
}

}  // namespace wd
