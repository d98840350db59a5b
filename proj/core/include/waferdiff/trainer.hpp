#pragma once

// Two-phase training. Phase 1 fits the feature autoencoder (or, in the
// ablation arm, per-feature standardization statistics). Phase 2 freezes the
// encoder and trains the denoiser plus the die-position encoder on the
// noise-prediction objective. Every random draw comes from a stream derived
// from the run seed, so runs are bit-reproducible.

#include "waferdiff/bundle.hpp"
#include "waferdiff/common.hpp"
#include "waferdiff/diffusion.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace wd {

struct TrainConfig {
  int ae_epochs = 50;
  int dit_epochs = 200;
  int batch_size = 2048;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  int num_steps = 1000;  // diffusion horizon T
  std::uint64_t seed = 42;

  void validate() const {
    if (ae_epochs < 0 || dit_epochs < 0)
      throw ConfigError("train config: epoch counts must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(lr > 0) || !(weight_decay >= 0))
      throw ConfigError("train config: lr must be > 0 and weight_decay >= 0");
    if (num_steps < 1) throw ConfigError("train config: num_steps must be >= 1");
  }
};

struct PipelineConfig {
  CodecConfig codec;
  DitConfig dit;
  FlatMlpConfig mlp;
  DiePeConfig die_pe;
  TrainConfig train;
  bool autoencoder_enabled = true;
  bool die_pe_enabled = true;
  bool feature_pe_enabled = true;
  DenoiserKind denoiser = DenoiserKind::dit;

  // The latent token grid is owned by the codec config; everything downstream
  // follows it.
  void sync_shapes() {
    dit.channels = codec.channels;
    dit.seq_len = codec.seq_len();
    mlp.channels = codec.channels;
    mlp.seq_len = codec.seq_len();
    die_pe.channels = codec.channels;
    die_pe.seq_len = codec.seq_len();
  }

  void validate() const {
    codec.validate();
    if (denoiser == DenoiserKind::dit)
      dit.validate();
    else
      mlp.validate();
    train.validate();
  }
};

struct TrainLog {
  std::vector<double> phase1_losses;  // one entry per autoencoder epoch
  std::vector<double> phase2_losses;  // one entry per denoiser epoch
};

// Fixed salts for deriving per-purpose seed streams from the run seed.
namespace seed_salt {
constexpr std::uint64_t kAeInit = 0x11;
constexpr std::uint64_t kAeShuffle = 0x12;
constexpr std::uint64_t kDenoiserInit = 0x21;
constexpr std::uint64_t kDiePeInit = 0x22;
constexpr std::uint64_t kDenoiserShuffle = 0x23;
constexpr std::uint64_t kTimestepDraw = 0x24;
constexpr std::uint64_t kNoiseDraw = 0x25;
}  // namespace seed_salt

namespace detail {

template <typename S>
Mat<S> gather_rows(const Mat<S>& x, const std::vector<Index>& idx,
                   std::size_t begin, std::size_t end) {
  Mat<S> out(static_cast<Index>(end - begin), x.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Index>(i - begin)) = x.row(idx[i]);
  return out;
}

inline std::string loss_line(int phase, int epoch, double loss) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "phase=%d epoch=%d loss=%.9g", phase, epoch,
                loss);
  return buf;
}

}  // namespace detail

// Phase 1: reconstruction-MSE training of the feature autoencoder.
template <typename S>
Codec<S> train_autoencoder(const Mat<S>& x, const CodecConfig& ccfg,
                           const TrainConfig& tcfg, std::ostream* log = nullptr,
                           std::vector<double>* epoch_losses = nullptr) {
  ccfg.validate();
  tcfg.validate();
  if (x.rows() < 1) throw ShapeError("train_autoencoder: empty training set");
  if (x.cols() != ccfg.input_dim)
    throw ShapeError("train_autoencoder: input width != codec input_dim");

  Rng init_rng(mix_seed(tcfg.seed, seed_salt::kAeInit));
  Rng shuffle_rng(mix_seed(tcfg.seed, seed_salt::kAeShuffle));
  Codec<S> codec = Codec<S>::init(ccfg, init_rng);

  std::vector<ParamRef<S>> params;
  codec.collect(params, "codec");
  AdamW<S> opt(params, tcfg.lr, tcfg.weight_decay);

  std::vector<Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});

  for (int epoch = 0; epoch < tcfg.ae_epochs; ++epoch) {
    shuffle_rng.shuffle(idx);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b = 0; b < idx.size();
         b += static_cast<std::size_t>(tcfg.batch_size), ++batch_index) {
      const std::size_t e =
          std::min(idx.size(), b + static_cast<std::size_t>(tcfg.batch_size));
      Mat<S> xb = detail::gather_rows(x, idx, b, e);
      typename Codec<S>::Cache cache;
      Mat<S> h = codec.encode(xb, &cache);
      Mat<S> xhat = codec.decode(h, &cache);
      Mat<S> diff = xhat - xb;
      const double loss =
          diff.template cast<double>().array().square().mean();
      if (!std::isfinite(loss))
        throw NumericError("phase=1 epoch=" + std::to_string(epoch) +
                           " batch=" + std::to_string(batch_index) +
                           ": loss is non-finite");
      loss_sum += loss * static_cast<double>(xb.rows());
      Mat<S> d_xhat =
          diff * static_cast<S>(2.0 / static_cast<double>(diff.size()));
      codec.zero_grad();
      codec.backward_autoencoder(cache, d_xhat);
      opt.step(params);
    }
    const double epoch_loss = loss_sum / static_cast<double>(x.rows());
    if (epoch_losses) epoch_losses->push_back(epoch_loss);
    if (log) *log << detail::loss_line(1, epoch, epoch_loss) << "\n";
  }
  return codec;
}

// Ablation arm of phase 1: fit per-feature mean/std on the training set.
template <typename S>
Standardizer<S> fit_standardizer(const Mat<S>& x, const CodecConfig& ccfg,
                                 double sigma_floor = 1e-6) {
  ccfg.validate();
  if (x.rows() < 1) throw ShapeError("fit_standardizer: empty training set");
  if (x.cols() != ccfg.input_dim)
    throw ShapeError("fit_standardizer: input width != configured input_dim");
  Standardizer<S> st;
  st.cfg = ccfg;
  st.mean = x.colwise().mean();
  Mat<S> centered = x.rowwise() - st.mean.row(0);
  st.std = (centered.array().square().colwise().sum() /
            static_cast<S>(x.rows()))
               .sqrt()
               .matrix();
  st.std = st.std.array().max(static_cast<S>(sigma_floor)).matrix();
  return st;
}

// Phase 2 inner loop, shared by both denoiser kinds. `h` holds the frozen
// encoder outputs (flat tokenized latents, no position encodings).
template <typename S, typename Den>
void train_denoiser_loop(Den& den, DiePe<S>* die_pe, const Mat<S>& h,
                         const Mat<S>& die_v, const Mat<S>& feature_pe_flat,
                         const NoiseSchedule& sched, const TrainConfig& tcfg,
                         std::ostream* log = nullptr,
                         std::vector<double>* epoch_losses = nullptr) {
  const Index n = h.rows();
  const Index width = h.cols();
  Rng shuffle_rng(mix_seed(tcfg.seed, seed_salt::kDenoiserShuffle));
  Rng t_rng(mix_seed(tcfg.seed, seed_salt::kTimestepDraw));
  Rng noise_rng(mix_seed(tcfg.seed, seed_salt::kNoiseDraw));

  std::vector<ParamRef<S>> params;
  den.collect(params, "denoiser");
  if (die_pe) die_pe->collect(params, "die_pe");
  AdamW<S> opt(params, tcfg.lr, tcfg.weight_decay);

  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});

  for (int epoch = 0; epoch < tcfg.dit_epochs; ++epoch) {
    shuffle_rng.shuffle(idx);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b = 0; b < idx.size();
         b += static_cast<std::size_t>(tcfg.batch_size), ++batch_index) {
      const std::size_t e =
          std::min(idx.size(), b + static_cast<std::size_t>(tcfg.batch_size));
      const Index m = static_cast<Index>(e - b);

      Mat<S> z0 = detail::gather_rows(h, idx, b, e);
      typename DiePe<S>::Cache pe_cache;
      if (die_pe) {
        Mat<S> vb = detail::gather_rows(die_v, idx, b, e);
        z0 += die_pe->forward(vb, &pe_cache);
      }
      if (feature_pe_flat.size() > 0)
        z0.rowwise() += feature_pe_flat.row(0);

      std::vector<int> ts(static_cast<std::size_t>(m));
      for (auto& t : ts)
        t = 1 + static_cast<int>(t_rng.below(
                    static_cast<std::uint64_t>(sched.num_steps)));
      Mat<S> eps(m, width);
      noise_rng.fill_normal(eps);
      Mat<S> zt = forward_sample_rows(z0, ts, eps, sched);

      typename Den::Cache cache;
      Mat<S> pred = den.forward(zt, ts, &cache);
      Mat<S> diff = pred - eps;
      const double loss =
          diff.template cast<double>().array().square().mean();
      if (!std::isfinite(loss))
        throw NumericError("phase=2 epoch=" + std::to_string(epoch) +
                           " batch=" + std::to_string(batch_index) +
                           ": loss is non-finite");
      loss_sum += loss * static_cast<double>(m);

      Mat<S> d_pred =
          diff * static_cast<S>(2.0 / static_cast<double>(diff.size()));
      den.zero_grad();
      if (die_pe) die_pe->zero_grad();
      Mat<S> d_zt = den.backward(cache, d_pred);
      if (die_pe) {
        // Zt = sqrt(abar_t) Z0 + ...; only the position encoding is trainable
        // upstream of Z0.
        Mat<S> d_z0(m, width);
        for (Index i = 0; i < m; ++i)
          d_z0.row(i) =
              d_zt.row(i) *
              static_cast<S>(std::sqrt(
                  sched.alpha_bar[ts[static_cast<std::size_t>(i)]]));
        die_pe->backward(pe_cache, d_z0);
      }
      opt.step(params);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (epoch_losses) epoch_losses->push_back(epoch_loss);
    if (log) *log << detail::loss_line(2, epoch, epoch_loss) << "\n";
  }
}

// Full two-phase pipeline. `die_xy` carries one (x, y) die coordinate pair
// per training row; it may be empty when the die encoding is disabled.
template <typename S>
ModelBundle<S> train_pipeline(const Mat<S>& x_train, const Mat<S>& die_xy,
                              PipelineConfig cfg, std::ostream* log = nullptr,
                              TrainLog* train_log = nullptr) {
  cfg.sync_shapes();
  cfg.validate();
  if (cfg.die_pe_enabled && die_xy.rows() != x_train.rows())
    throw ShapeError("train_pipeline: die coordinates must match rows");

  ModelBundle<S> bundle;
  bundle.schedule = cosine_schedule(cfg.train.num_steps);
  bundle.die_pe_enabled = cfg.die_pe_enabled;
  bundle.feature_pe_enabled = cfg.feature_pe_enabled;
  bundle.denoiser_kind = cfg.denoiser;

  // Phase 1: encoder.
  if (cfg.autoencoder_enabled) {
    bundle.encoder_kind = EncoderKind::autoencoder;
    bundle.codec = train_autoencoder<S>(
        x_train, cfg.codec, cfg.train, log,
        train_log ? &train_log->phase1_losses : nullptr);
  } else {
    bundle.encoder_kind = EncoderKind::standardizer;
    bundle.standardizer = fit_standardizer<S>(x_train, cfg.codec);
  }

  // Frozen encoder outputs for phase 2.
  Mat<S> h = bundle.encode_batch(x_train);

  if (cfg.feature_pe_enabled)
    bundle.feature_pe_flat =
        feature_pe_row<S>(cfg.codec.channels, cfg.codec.seq_len());

  Mat<S> die_v;
  if (cfg.die_pe_enabled) {
    Rng pe_rng(mix_seed(cfg.train.seed, seed_salt::kDiePeInit));
    bundle.die_pe = DiePe<S>::init(cfg.die_pe, pe_rng);
    die_v = bundle.die_features(die_xy);
  }

  Rng den_rng(mix_seed(cfg.train.seed, seed_salt::kDenoiserInit));
  DiePe<S>* pe_ptr = cfg.die_pe_enabled ? &bundle.die_pe : nullptr;
  auto* losses = train_log ? &train_log->phase2_losses : nullptr;
  if (cfg.denoiser == DenoiserKind::dit) {
    bundle.dit = Dit1d<S>::init(cfg.dit, den_rng);
    train_denoiser_loop<S>(bundle.dit, pe_ptr, h, die_v,
                           bundle.feature_pe_flat, bundle.schedule, cfg.train,
                           log, losses);
  } else {
    bundle.mlp = FlatMlp<S>::init(cfg.mlp, den_rng);
    train_denoiser_loop<S>(bundle.mlp, pe_ptr, h, die_v,
                           bundle.feature_pe_flat, bundle.schedule, cfg.train,
                           log, losses);
  }
  return bundle;
}

}  // namespace wd
