#include "waferdiff/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

namespace wd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json codec_config_json(const CodecConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"hidden_dim", c.hidden_dim},
              {"latent_dim", c.latent_dim},
              {"channels", c.channels}};
}

CodecConfig codec_config_from(const json& j) {
  CodecConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.channels = j.at("channels").get<int>();
  return c;
}

json dit_config_json(const DitConfig& c) {
  return json{{"channels", c.channels},   {"seq_len", c.seq_len},
              {"patch_size", c.patch_size}, {"hidden_dim", c.hidden_dim},
              {"heads", c.heads},         {"depth", c.depth},
              {"ffn_mult", c.ffn_mult},   {"t_sincos_dim", c.t_sincos_dim}};
}

DitConfig dit_config_from(const json& j) {
  DitConfig c;
  c.channels = j.at("channels").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.depth = j.at("depth").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.t_sincos_dim = j.at("t_sincos_dim").get<int>();
  return c;
}

json mlp_config_json(const FlatMlpConfig& c) {
  return json{{"channels", c.channels},
              {"seq_len", c.seq_len},
              {"hidden_dim", c.hidden_dim},
              {"depth", c.depth},
              {"t_sincos_dim", c.t_sincos_dim}};
}

FlatMlpConfig mlp_config_from(const json& j) {
  FlatMlpConfig c;
  c.channels = j.at("channels").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.t_sincos_dim = j.at("t_sincos_dim").get<int>();
  return c;
}

json die_pe_config_json(const DiePeConfig& c) {
  return json{{"sincos_dim", c.sincos_dim},
              {"hidden_dim", c.hidden_dim},
              {"channels", c.channels},
              {"seq_len", c.seq_len}};
}

DiePeConfig die_pe_config_from(const json& j) {
  DiePeConfig c;
  c.sincos_dim = j.at("sincos_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.channels = j.at("channels").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  return c;
}

// Every serialized tensor: the trainable parameters plus, in the
// standardizer arm, the fitted statistics.
std::vector<ParamRef<float>> tensor_refs(ModelBundle<float>& model) {
  std::vector<ParamRef<float>> refs;
  model.collect(refs);
  if (model.encoder_kind == EncoderKind::standardizer) {
    refs.push_back({"standardizer.mean", &model.standardizer.mean, nullptr});
    refs.push_back({"standardizer.std", &model.standardizer.std, nullptr});
  }
  return refs;
}

void write_tensor(const fs::path& path, const MatF& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!out) throw IoError("short write: " + path.string());
}

void read_tensor(const fs::path& path, MatF& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * m.size()))
    throw IoError("short read: " + path.string());
  char extra;
  if (in.read(&extra, 1))
    throw ConfigError("tensor file larger than declared shape: " +
                      path.string());
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + dir);

  // collect() is non-const by design (it exposes gradient slots); the values
  // are only read here.
  auto& model = const_cast<ModelBundle<float>&>(ckpt.model);
  auto refs = tensor_refs(model);

  json tensors = json::object();
  for (const auto& r : refs) {
    tensors[r.name] = json{{"file", r.name + ".bin"},
                           {"rows", r.value->rows()},
                           {"cols", r.value->cols()}};
    write_tensor(fs::path(dir) / (r.name + ".bin"), *r.value);
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model"] = json{
      {"encoder", to_string(ckpt.model.encoder_kind)},
      {"denoiser", to_string(ckpt.model.denoiser_kind)},
      {"die_pe_enabled", ckpt.model.die_pe_enabled},
      {"feature_pe_enabled", ckpt.model.feature_pe_enabled},
      {"num_steps", ckpt.model.schedule.num_steps},
      {"codec", codec_config_json(ckpt.model.codec_config())},
  };
  if (ckpt.model.denoiser_kind == DenoiserKind::dit)
    manifest["model"]["dit"] = dit_config_json(ckpt.model.dit.cfg);
  else
    manifest["model"]["mlp"] = mlp_config_json(ckpt.model.mlp.cfg);
  if (ckpt.model.die_pe_enabled)
    manifest["model"]["die_pe"] = die_pe_config_json(ckpt.model.die_pe.cfg);
  manifest["preprocess"] = json{
      {"feature_names", ckpt.preprocess.feature_names},
      {"feature_regex", ckpt.preprocess.feature_regex},
      {"r_na", ckpt.preprocess.r_na},
      {"sigma_floor", ckpt.preprocess.sigma_floor},
      {"normal_train_frac", ckpt.preprocess.normal_train_frac},
      {"split_seed", ckpt.preprocess.split_seed},
      {"subtract_pe", ckpt.preprocess.subtract_pe},
      {"t_rec", ckpt.preprocess.t_rec},
  };
  manifest["tensors"] = std::move(tensors);

  std::ofstream out(fs::path(dir) / "manifest.json",
                    std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in: " + dir);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("short write: manifest.json in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint manifest: " +
                         manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint manifest: ") +
                      e.what());
  }

  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ConfigError("unsupported checkpoint format version");

    Checkpoint ckpt;
    const json& jm = manifest.at("model");
    ckpt.model.encoder_kind = encoder_kind_from(jm.at("encoder").get<std::string>());
    ckpt.model.denoiser_kind =
        denoiser_kind_from(jm.at("denoiser").get<std::string>());
    ckpt.model.die_pe_enabled = jm.at("die_pe_enabled").get<bool>();
    ckpt.model.feature_pe_enabled = jm.at("feature_pe_enabled").get<bool>();
    ckpt.model.schedule = cosine_schedule(jm.at("num_steps").get<int>());

    const CodecConfig ccfg = codec_config_from(jm.at("codec"));
    ccfg.validate();
    Rng shape_rng(0);  // values are overwritten by the tensor files below
    if (ckpt.model.encoder_kind == EncoderKind::autoencoder) {
      ckpt.model.codec = Codec<float>::init(ccfg, shape_rng);
    } else {
      ckpt.model.standardizer.cfg = ccfg;
      ckpt.model.standardizer.mean = MatF::Zero(1, ccfg.input_dim);
      ckpt.model.standardizer.std = MatF::Ones(1, ccfg.input_dim);
    }
    if (ckpt.model.denoiser_kind == DenoiserKind::dit) {
      ckpt.model.dit = Dit1d<float>::init(dit_config_from(jm.at("dit")),
                                          shape_rng);
    } else {
      ckpt.model.mlp = FlatMlp<float>::init(mlp_config_from(jm.at("mlp")),
                                            shape_rng);
    }
    if (ckpt.model.die_pe_enabled)
      ckpt.model.die_pe =
          DiePe<float>::init(die_pe_config_from(jm.at("die_pe")), shape_rng);
    if (ckpt.model.feature_pe_enabled)
      ckpt.model.feature_pe_flat =
          feature_pe_row<float>(ccfg.channels, ccfg.seq_len());

    const json& jp = manifest.at("preprocess");
    ckpt.preprocess.feature_names =
        jp.at("feature_names").get<std::vector<std::string>>();
    ckpt.preprocess.feature_regex = jp.at("feature_regex").get<std::string>();
    ckpt.preprocess.r_na = jp.at("r_na").get<double>();
    ckpt.preprocess.sigma_floor = jp.at("sigma_floor").get<double>();
    ckpt.preprocess.normal_train_frac =
        jp.at("normal_train_frac").get<double>();
    ckpt.preprocess.split_seed = jp.at("split_seed").get<std::uint64_t>();
    ckpt.preprocess.subtract_pe = jp.at("subtract_pe").get<bool>();
    ckpt.preprocess.t_rec = jp.at("t_rec").get<int>();

    // The manifest must list exactly the tensors this topology owns.
    auto refs = tensor_refs(ckpt.model);
    const json& jt = manifest.at("tensors");
    std::set<std::string> expected, listed;
    for (const auto& r : refs) expected.insert(r.name);
    for (const auto& [name, meta] : jt.items()) {
      (void)meta;
      listed.insert(name);
    }
    if (expected != listed)
      throw ConfigError(
          "checkpoint tensor list does not match the declared topology");

    for (auto& r : refs) {
      const json& meta = jt.at(r.name);
      if (meta.at("rows").get<Index>() != r.value->rows() ||
          meta.at("cols").get<Index>() != r.value->cols())
        throw ConfigError("tensor shape mismatch for " + r.name);
      read_tensor(fs::path(dir) / meta.at("file").get<std::string>(),
                  *r.value);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid checkpoint manifest: ") + e.what());
  }
}

}  // namespace wd
