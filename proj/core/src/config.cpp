#include "waferdiff/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace wd {

using nlohmann::json;

void RunConfig::validate() const {
  if (!(r_na >= 0.0 && r_na <= 1.0))
    throw ConfigError("r_na must lie in [0, 1]");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
  if (!(normal_train_frac > 0.0 && normal_train_frac < 1.0))
    throw ConfigError("normal_train_frac must lie in (0, 1)");
  if (!(yield_frac > 0.0 && yield_frac < 1.0))
    throw ConfigError("yield_frac must lie in (0, 1)");
  if (denoiser != "dit" && denoiser != "flat-mlp")
    throw ConfigError("denoiser must be 'dit' or 'flat-mlp'");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (t_rec < 1) throw ConfigError("t_rec must be >= 1");
  if (t_rec > num_steps)
    throw ConfigError("t_rec must not exceed num_steps");
  if (synth.n_wafers < 1 || synth.wafer_diameter_dies < 1 ||
      synth.n_features < 1)
    throw ConfigError("synth: wafer count, diameter, features must be >= 1");
  if (!(synth.anomaly_rate >= 0.0 && synth.anomaly_rate < 1.0))
    throw ConfigError("synth: anomaly_rate must lie in [0, 1)");
  if (synth.n_shifted_features < 0 ||
      synth.n_shifted_features > synth.n_features)
    throw ConfigError("synth: n_shifted_features must lie in [0, n_features]");
  // Model/grid/training ranges are validated by their owning configs.
  make_pipeline_config(*this, /*input_dim=*/1).validate();
  make_eval_grid(*this).validate(num_steps);
}

namespace {

// Overlay helper: read a key if present, with type checking; track consumed
// keys so unknown ones can be reported.
template <typename T>
void take(const json& j, std::set<std::string>& seen, const char* key,
          T& out) {
  if (!j.contains(key)) return;
  seen.insert(key);
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key has the wrong type: ") + key);
  }
}

void check_unknown(const json& j, const std::set<std::string>& seen,
                   const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!seen.count(key))
      throw ConfigError("unknown config key: " + scope + key);
  }
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  RunConfig cfg;
  std::set<std::string> seen;
  take(j, seen, "data", cfg.data_path);
  take(j, seen, "checkpoint", cfg.checkpoint_dir);
  take(j, seen, "out", cfg.out_path);
  take(j, seen, "seed", cfg.seed);
  take(j, seen, "feature_regex", cfg.feature_regex);
  take(j, seen, "r_na", cfg.r_na);
  take(j, seen, "sigma_floor", cfg.sigma_floor);
  take(j, seen, "normal_train_frac", cfg.normal_train_frac);
  take(j, seen, "autoencoder", cfg.autoencoder);
  take(j, seen, "codec_hidden", cfg.codec_hidden);
  take(j, seen, "latent_dim", cfg.latent_dim);
  take(j, seen, "channels", cfg.channels);
  take(j, seen, "denoiser", cfg.denoiser);
  take(j, seen, "patch_size", cfg.patch_size);
  take(j, seen, "dit_hidden", cfg.dit_hidden);
  take(j, seen, "heads", cfg.heads);
  take(j, seen, "depth", cfg.depth);
  take(j, seen, "ffn_mult", cfg.ffn_mult);
  take(j, seen, "mlp_hidden", cfg.mlp_hidden);
  take(j, seen, "mlp_depth", cfg.mlp_depth);
  take(j, seen, "die_pe", cfg.die_pe);
  take(j, seen, "feature_pe", cfg.feature_pe);
  take(j, seen, "die_pe_sincos", cfg.die_pe_sincos);
  take(j, seen, "die_pe_hidden", cfg.die_pe_hidden);
  take(j, seen, "ae_epochs", cfg.ae_epochs);
  take(j, seen, "dit_epochs", cfg.dit_epochs);
  take(j, seen, "batch_size", cfg.batch_size);
  take(j, seen, "lr", cfg.lr);
  take(j, seen, "weight_decay", cfg.weight_decay);
  take(j, seen, "num_steps", cfg.num_steps);
  take(j, seen, "t_start", cfg.t_start);
  take(j, seen, "t_end", cfg.t_end);
  take(j, seen, "t_step", cfg.t_step);
  take(j, seen, "t_rec", cfg.t_rec);
  take(j, seen, "subtract_pe", cfg.subtract_pe);
  take(j, seen, "yield_frac", cfg.yield_frac);
  take(j, seen, "top_k", cfg.top_k);

  if (j.contains("synth")) {
    seen.insert("synth");
    const json& js = j.at("synth");
    if (!js.is_object())
      throw ConfigError("config key 'synth' must be an object");
    std::set<std::string> seen_s;
    take(js, seen_s, "n_wafers", cfg.synth.n_wafers);
    take(js, seen_s, "wafer_diameter_dies", cfg.synth.wafer_diameter_dies);
    take(js, seen_s, "n_features", cfg.synth.n_features);
    take(js, seen_s, "anomaly_rate", cfg.synth.anomaly_rate);
    take(js, seen_s, "shift_magnitude", cfg.synth.shift_magnitude);
    take(js, seen_s, "n_shifted_features", cfg.synth.n_shifted_features);
    take(js, seen_s, "radial_trend_strength",
         cfg.synth.radial_trend_strength);
    check_unknown(js, seen_s, "synth.");
  }
  check_unknown(j, seen, "");
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

std::string config_to_json_text(const RunConfig& cfg) {
  json j;
  j["data"] = cfg.data_path;
  j["checkpoint"] = cfg.checkpoint_dir;
  j["out"] = cfg.out_path;
  j["seed"] = cfg.seed;
  j["feature_regex"] = cfg.feature_regex;
  j["r_na"] = cfg.r_na;
  j["sigma_floor"] = cfg.sigma_floor;
  j["normal_train_frac"] = cfg.normal_train_frac;
  j["autoencoder"] = cfg.autoencoder;
  j["codec_hidden"] = cfg.codec_hidden;
  j["latent_dim"] = cfg.latent_dim;
  j["channels"] = cfg.channels;
  j["denoiser"] = cfg.denoiser;
  j["patch_size"] = cfg.patch_size;
  j["dit_hidden"] = cfg.dit_hidden;
  j["heads"] = cfg.heads;
  j["depth"] = cfg.depth;
  j["ffn_mult"] = cfg.ffn_mult;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["mlp_depth"] = cfg.mlp_depth;
  j["die_pe"] = cfg.die_pe;
  j["feature_pe"] = cfg.feature_pe;
  j["die_pe_sincos"] = cfg.die_pe_sincos;
  j["die_pe_hidden"] = cfg.die_pe_hidden;
  j["ae_epochs"] = cfg.ae_epochs;
  j["dit_epochs"] = cfg.dit_epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["num_steps"] = cfg.num_steps;
  j["t_start"] = cfg.t_start;
  j["t_end"] = cfg.t_end;
  j["t_step"] = cfg.t_step;
  j["t_rec"] = cfg.t_rec;
  j["subtract_pe"] = cfg.subtract_pe;
  j["yield_frac"] = cfg.yield_frac;
  j["top_k"] = cfg.top_k;
  j["synth"] = json{
      {"n_wafers", cfg.synth.n_wafers},
      {"wafer_diameter_dies", cfg.synth.wafer_diameter_dies},
      {"n_features", cfg.synth.n_features},
      {"anomaly_rate", cfg.synth.anomaly_rate},
      {"shift_magnitude", cfg.synth.shift_magnitude},
      {"n_shifted_features", cfg.synth.n_shifted_features},
      {"radial_trend_strength", cfg.synth.radial_trend_strength},
  };
  return j.dump(2) + "\n";
}

PipelineConfig make_pipeline_config(const RunConfig& cfg, int input_dim) {
  PipelineConfig p;
  p.codec.input_dim = input_dim;
  p.codec.hidden_dim = cfg.codec_hidden;
  p.codec.latent_dim = cfg.latent_dim;
  p.codec.channels = cfg.channels;
  p.dit.patch_size = cfg.patch_size;
  p.dit.hidden_dim = cfg.dit_hidden;
  p.dit.heads = cfg.heads;
  p.dit.depth = cfg.depth;
  p.dit.ffn_mult = cfg.ffn_mult;
  p.mlp.hidden_dim = cfg.mlp_hidden;
  p.mlp.depth = cfg.mlp_depth;
  p.die_pe.sincos_dim = cfg.die_pe_sincos;
  p.die_pe.hidden_dim = cfg.die_pe_hidden;
  p.train.ae_epochs = cfg.ae_epochs;
  p.train.dit_epochs = cfg.dit_epochs;
  p.train.batch_size = cfg.batch_size;
  p.train.lr = cfg.lr;
  p.train.weight_decay = cfg.weight_decay;
  p.train.num_steps = cfg.num_steps;
  p.train.seed = cfg.seed;
  p.autoencoder_enabled = cfg.autoencoder;
  p.die_pe_enabled = cfg.die_pe;
  p.feature_pe_enabled = cfg.feature_pe;
  p.denoiser = denoiser_kind_from(cfg.denoiser);
  p.sync_shapes();
  return p;
}

EvalGrid make_eval_grid(const RunConfig& cfg) {
  EvalGrid g;
  g.t_start = cfg.t_start;
  g.t_end = cfg.t_end;
  g.dt = cfg.t_step;
  return g;
}

}  // namespace wd
