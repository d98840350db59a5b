#pragma once

// The trained model as one unit: encoder (MLP codec or standardizer),
// denoiser (transformer or flat MLP), optional die / feature position
// encodings, and the noise schedule. Checkpointing serializes exactly this.

#include "waferdiff/common.hpp"
#include "waferdiff/diffusion.hpp"
#include "waferdiff/dit1d.hpp"
#include "waferdiff/flat_mlp.hpp"
#include "waferdiff/latent_codec.hpp"
#include "waferdiff/posenc.hpp"

#include <string>
#include <vector>

namespace wd {

enum class EncoderKind { autoencoder, standardizer };
enum class DenoiserKind { dit, flat_mlp };

inline std::string to_string(EncoderKind k) {
  return k == EncoderKind::autoencoder ? "autoencoder" : "standardizer";
}
inline std::string to_string(DenoiserKind k) {
  return k == DenoiserKind::dit ? "dit" : "flat-mlp";
}

inline EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "autoencoder") return EncoderKind::autoencoder;
  if (s == "standardizer") return EncoderKind::standardizer;
  throw ConfigError("unknown encoder kind: " + s);
}
inline DenoiserKind denoiser_kind_from(const std::string& s) {
  if (s == "dit") return DenoiserKind::dit;
  if (s == "flat-mlp" || s == "flat_mlp") return DenoiserKind::flat_mlp;
  throw ConfigError("unknown denoiser kind: " + s);
}

template <typename S>
struct ModelBundle {
  EncoderKind encoder_kind = EncoderKind::autoencoder;
  Codec<S> codec;                // active when encoder_kind == autoencoder
  Standardizer<S> standardizer;  // active otherwise

  DenoiserKind denoiser_kind = DenoiserKind::dit;
  Dit1d<S> dit;   // active when denoiser_kind == dit
  FlatMlp<S> mlp; // active otherwise

  bool die_pe_enabled = true;
  bool feature_pe_enabled = true;
  DiePe<S> die_pe;          // active when die_pe_enabled
  Mat<S> feature_pe_flat;   // 1 x (C*L) when enabled, else empty

  NoiseSchedule schedule;

  int channels() const { return codec_config().channels; }
  int seq_len() const { return codec_config().seq_len(); }
  int flat_dim() const { return channels() * seq_len(); }
  int input_dim() const { return codec_config().input_dim; }

  const CodecConfig& codec_config() const {
    return encoder_kind == EncoderKind::autoencoder ? codec.cfg
                                                    : standardizer.cfg;
  }

  // Features -> flat tokenized latents (no position encodings).
  Mat<S> encode_batch(const Mat<S>& x) const {
    Mat<S> h = encoder_kind == EncoderKind::autoencoder
                   ? codec.encode(x)
                   : standardizer.encode(x);
    return tokenize_batch(h, channels());
  }

  // Flat tokenized latents -> features.
  Mat<S> decode_batch(const Mat<S>& z_flat) const {
    Mat<S> h = detokenize_batch(z_flat, codec_config().latent_dim);
    return encoder_kind == EncoderKind::autoencoder ? codec.decode(h)
                                                    : standardizer.decode(h);
  }

  // Raw die coordinates (n x 2) -> die-feature rows for the position encoder.
  Mat<S> die_features(const Mat<S>& die_xy) const {
    if (die_xy.cols() != 2)
      throw ShapeError("die_features: expected n x 2 coordinates");
    Mat<S> v(die_xy.rows(), die_pe.cfg.coord_dim());
    for (Index i = 0; i < die_xy.rows(); ++i)
      v.row(i) = die_feature_vector(static_cast<int>(die_xy(i, 0)),
                                    static_cast<int>(die_xy(i, 1)),
                                    die_pe.cfg.sincos_dim)
                     .template cast<S>()
                     .transpose();
    return v;
  }

  // Summed position encodings per sample, flat layout. Zero when disabled.
  Mat<S> pe_batch(const Mat<S>& die_xy) const {
    Mat<S> pe = Mat<S>::Zero(die_xy.rows(), flat_dim());
    if (die_pe_enabled) pe += die_pe.forward(die_features(die_xy));
    if (feature_pe_enabled) pe.rowwise() += feature_pe_flat.row(0);
    return pe;
  }

  // Z0 in the layout the denoiser consumes: latents plus position encodings.
  Mat<S> build_z0(const Mat<S>& x, const Mat<S>& die_xy) const {
    return encode_batch(x) + pe_batch(die_xy);
  }

  // Batched denoiser dispatch.
  Mat<S> denoise(const Mat<S>& zt_flat, const std::vector<int>& ts) const {
    return denoiser_kind == DenoiserKind::dit ? dit.forward(zt_flat, ts)
                                              : mlp.forward(zt_flat, ts);
  }

  std::uint64_t denoiser_eval_count() const {
    return denoiser_kind == DenoiserKind::dit ? dit.eval_count
                                              : mlp.eval_count;
  }

  void collect(std::vector<ParamRef<S>>& refs) {
    if (encoder_kind == EncoderKind::autoencoder) codec.collect(refs, "codec");
    if (denoiser_kind == DenoiserKind::dit)
      dit.collect(refs, "dit");
    else
      mlp.collect(refs, "mlp");
    if (die_pe_enabled) die_pe.collect(refs, "die_pe");
  }

  std::uint64_t param_count() {
    std::vector<ParamRef<S>> refs;
    collect(refs);
    std::uint64_t total = 0;
    for (const auto& r : refs)
      total += static_cast<std::uint64_t>(r.value->size());
    return total;
  }
};

// Flattened (1 x C*L) copy of the fixed feature-position matrix.
template <typename S>
Mat<S> feature_pe_row(int channels, int seq_len) {
  Mat<S> pe = feature_pe<S>(channels, seq_len);
  return Eigen::Map<const Mat<S>>(pe.data(), 1, channels * seq_len);
}

}  // namespace wd
