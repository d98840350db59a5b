#pragma once

// On-disk model format: a directory holding manifest.json plus one raw
// little-endian float32 .bin file per tensor (row-major). The manifest also
// carries the preprocessing recipe so scoring reproduces training exactly.

#include "waferdiff/bundle.hpp"

#include <string>
#include <vector>

namespace wd {

struct PreprocessInfo {
  std::vector<std::string> feature_names;  // post-selection, post-filter order
  std::string feature_regex = ".*";
  double r_na = 0.3;
  double sigma_floor = 1e-6;
  double normal_train_frac = 0.5;
  std::uint64_t split_seed = 42;
  bool subtract_pe = true;
  int t_rec = 50;
};

struct Checkpoint {
  ModelBundle<float> model;
  PreprocessInfo preprocess;
};

constexpr int kCheckpointFormatVersion = 1;

// Writes manifest.json plus one .bin per tensor into `dir` (created if
// needed). Throws IoError on filesystem failure.
void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);

// Rebuilds the bundle from `dir`. Throws ConfigError on version, tensor-set,
// or shape mismatches; IoError on filesystem failure.
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace wd
