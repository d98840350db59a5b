#pragma once

// Resolved run configuration shared by every CLI subcommand. Values start at
// the pipeline defaults, may be replaced from a JSON config file, and are
// finally overridden by explicit command-line flags.

#include "waferdiff/bundle.hpp"
#include "waferdiff/dataio.hpp"
#include "waferdiff/scoring.hpp"
#include "waferdiff/trainer.hpp"

#include <iosfwd>
#include <string>

namespace wd {

struct RunConfig {
  // Paths (synth writes `out`; train reads `data`, writes `checkpoint`;
  // score/eval/explain read both and write `out`).
  std::string data_path;
  std::string checkpoint_dir;
  std::string out_path;

  std::uint64_t seed = 42;

  // Synthetic data generation.
  SynthConfig synth;

  // Preprocessing.
  std::string feature_regex = ".*";
  double r_na = 0.3;
  double sigma_floor = 1e-6;
  double normal_train_frac = 0.5;

  // Encoder.
  bool autoencoder = true;
  int codec_hidden = 128;
  int latent_dim = 128;
  int channels = 4;

  // Denoiser.
  std::string denoiser = "dit";
  int patch_size = 2;
  int dit_hidden = 256;
  int heads = 4;
  int depth = 3;
  int ffn_mult = 4;
  int mlp_hidden = 256;
  int mlp_depth = 3;

  // Position encodings.
  bool die_pe = true;
  bool feature_pe = true;
  int die_pe_sincos = 64;
  int die_pe_hidden = 256;

  // Training.
  int ae_epochs = 50;
  int dit_epochs = 200;
  int batch_size = 2048;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  int num_steps = 1000;

  // Scoring / evaluation / attribution.
  int t_start = 100;
  int t_end = 550;
  int t_step = 50;
  int t_rec = 50;
  bool subtract_pe = true;
  double yield_frac = 0.95;
  int top_k = 3;

  void validate() const;
};

// JSON (de)serialization. Loading starts from defaults and overlays only the
// keys present; unknown keys raise ConfigError.
RunConfig config_from_json_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string config_to_json_text(const RunConfig& cfg);

// Derived pieces consumed by the pipeline.
PipelineConfig make_pipeline_config(const RunConfig& cfg, int input_dim);
EvalGrid make_eval_grid(const RunConfig& cfg);

}  // namespace wd
