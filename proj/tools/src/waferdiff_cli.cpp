// waferdiff: diffusion-based anomaly screening for parametric wafer test
// data. Subcommands: synth, train, score, eval, explain.
//
// Precedence: built-in defaults < --config file < explicit flags.

#include "waferdiff/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

void add_flags(CLI::App* sub, wd::RunConfig& cfg, bool& print_config) {
  std::string ignored;  // --config is consumed by the pre-pass
  sub->add_option("--config", ignored, "JSON config file (flags override it)");
  sub->add_option("--seed", cfg.seed, "run seed for every derived RNG stream");
  sub->add_option("--data", cfg.data_path, "input dataset CSV");
  sub->add_option("--checkpoint", cfg.checkpoint_dir, "checkpoint directory");
  sub->add_option("--out", cfg.out_path, "output file or directory");
  sub->add_flag("--print-config", print_config,
                "print the resolved configuration and exit");

  // Preprocessing.
  sub->add_option("--feature-regex", cfg.feature_regex,
                  "keep features whose name matches this regex");
  sub->add_option("--r-na", cfg.r_na,
                  "drop feature columns with missing fraction above this");
  sub->add_option("--sigma-floor", cfg.sigma_floor,
                  "floor for the within-wafer standard deviation");
  sub->add_option("--normal-train-frac", cfg.normal_train_frac,
                  "fraction of normal devices used for training");

  // Ablation switches.
  sub->add_flag_callback("--no-die-pe", [&cfg] { cfg.die_pe = false; },
                         "disable the die-position encoding");
  sub->add_flag_callback("--no-feature-pe", [&cfg] { cfg.feature_pe = false; },
                         "disable the feature-position encoding");
  sub->add_flag_callback("--no-autoencoder",
                         [&cfg] { cfg.autoencoder = false; },
                         "replace the autoencoder with standardization");
  sub->add_flag_callback("--no-subtract-pe",
                         [&cfg] { cfg.subtract_pe = false; },
                         "keep position encodings in decoded reconstructions");
  sub->add_option("--denoiser", cfg.denoiser, "denoiser kind: dit | flat-mlp")
      ->check(CLI::IsMember({"dit", "flat-mlp"}));

  // Model shape.
  sub->add_option("--latent-dim", cfg.latent_dim, "latent width D_r");
  sub->add_option("--channels", cfg.channels, "latent token channels C");
  sub->add_option("--codec-hidden", cfg.codec_hidden,
                  "autoencoder hidden width");
  sub->add_option("--patch", cfg.patch_size, "denoiser patch size p");
  sub->add_option("--dit-hidden", cfg.dit_hidden,
                  "transformer hidden width d");
  sub->add_option("--heads", cfg.heads, "attention heads");
  sub->add_option("--depth", cfg.depth, "transformer depth");
  sub->add_option("--ffn-mult", cfg.ffn_mult, "feed-forward expansion factor");
  sub->add_option("--mlp-hidden", cfg.mlp_hidden, "flat-mlp hidden width");
  sub->add_option("--mlp-depth", cfg.mlp_depth, "flat-mlp residual blocks");
  sub->add_option("--die-pe-sincos", cfg.die_pe_sincos,
                  "die encoder sinusoidal feature width");
  sub->add_option("--die-pe-hidden", cfg.die_pe_hidden,
                  "die encoder hidden width");

  // Training.
  sub->add_option("--ae-epochs", cfg.ae_epochs, "autoencoder epochs");
  sub->add_option("--dit-epochs", cfg.dit_epochs, "denoiser epochs");
  sub->add_option("--batch-size", cfg.batch_size, "training batch size");
  sub->add_option("--lr", cfg.lr, "learning rate");
  sub->add_option("--weight-decay", cfg.weight_decay,
                  "decoupled weight decay");
  sub->add_option("--num-steps", cfg.num_steps, "diffusion horizon T");

  // Scoring / evaluation / attribution.
  sub->add_option("--t-start", cfg.t_start, "first scoring timestep");
  sub->add_option("--t-end", cfg.t_end, "last scoring timestep (inclusive)");
  sub->add_option("--t-step", cfg.t_step, "scoring timestep stride");
  sub->add_option("--t-rec", cfg.t_rec, "reverse-chain start for explain");
  sub->add_option("--yield", cfg.yield_frac,
                  "yield fraction for the recall threshold");
  sub->add_option("--top-k", cfg.top_k, "programs listed per flagged device");

  // Synthetic data.
  sub->add_option("--wafers", cfg.synth.n_wafers, "wafer count");
  sub->add_option("--wafer-diameter", cfg.synth.wafer_diameter_dies,
                  "wafer diameter in dies");
  sub->add_option("--features", cfg.synth.n_features, "feature count F");
  sub->add_option("--anomaly-rate", cfg.synth.anomaly_rate,
                  "fraction of anomalous dies");
  sub->add_option("--shift", cfg.synth.shift_magnitude,
                  "anomaly shift in within-wafer standard deviations");
  sub->add_option("--shifted-features", cfg.synth.n_shifted_features,
                  "features shifted per anomalous die");
  sub->add_option("--radial-trend", cfg.synth.radial_trend_strength,
                  "strength of the radial spatial trend");
}

}  // namespace

int main(int argc, char** argv) {
  // First pass: locate --config so the file loads before flags override it.
  std::string config_path;
  {
    CLI::App pre;
    pre.set_help_flag();
    pre.set_help_all_flag();
    pre.allow_extras();
    pre.add_option("--config", config_path);
    try {
      pre.parse(argc, argv);
    } catch (const CLI::ParseError&) {
      // Full parse below reports any real problem.
    }
  }

  wd::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = wd::load_config_file(config_path);
  } catch (const wd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const wd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  bool print_config = false;
  CLI::App app{
      "waferdiff: diffusion-based anomaly screening for wafer test data"};
  app.require_subcommand(1);
  add_flags(app.add_subcommand("synth", "generate a synthetic wafer dataset"),
            cfg, print_config);
  add_flags(app.add_subcommand("train", "two-phase training -> checkpoint"),
            cfg, print_config);
  add_flags(app.add_subcommand("score", "write per-device anomaly scores"),
            cfg, print_config);
  add_flags(app.add_subcommand("eval", "imbalance-aware metrics as JSON"),
            cfg, print_config);
  add_flags(
      app.add_subcommand("explain", "per-program residual attribution"),
      cfg, print_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (print_config) {
    std::cout << wd::config_to_json_text(cfg);
    return 0;
  }
  return wd::run_command(app.get_subcommands().front()->get_name(), cfg);
}
