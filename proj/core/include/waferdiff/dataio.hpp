#pragma once

// Tabular wafer test data: loading, validation, preprocessing, splitting, and
// the synthetic generator used for tests and demos.

#include "waferdiff/common.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace wd {

struct DeviceRecord {
  std::string lot_key;
  std::string wf_key;
  int die_x = 0;
  int die_y = 0;
  Label label = Label::normal;
  std::vector<double> features;  // NaN marks a missing entry before filtering
};

struct ProgramBlock {
  std::string name;
  std::size_t start = 0;
  std::size_t length = 0;  // number of features the program contributes
};

struct DatasetTable {
  std::vector<DeviceRecord> records;
  std::vector<std::string> feature_names;
  std::vector<ProgramBlock> program_blocks;

  std::size_t feature_count() const { return feature_names.size(); }
  std::size_t size() const { return records.size(); }
};

// Contiguous runs of the prefix before the first "__" in each feature name
// (the whole name when there is no delimiter).
std::vector<ProgramBlock> infer_program_blocks(
    const std::vector<std::string>& names);

// CSV with mandatory columns lot_key, wf_key, die_x, die_y, label; every other
// column is a feature. Empty cells are missing values.
DatasetTable load_table(const std::string& path);

// Writes the same schema; numbers carry 9 significant digits.
void save_table(const DatasetTable& table, const std::string& path);

// Keeps feature columns whose name matches the ECMAScript regular expression
// (searched anywhere in the name; anchor with ^/$ for exact matches).
DatasetTable select_features(const DatasetTable& table,
                             const std::string& pattern);

// Drops feature columns whose missing fraction exceeds r_na, then drops any
// record still carrying a missing value.
DatasetTable filter_missing(const DatasetTable& table, double r_na);

// Per-feature statistics of one (lot_key, wf_key) group.
struct GroupStats {
  std::map<std::pair<std::string, std::string>,
           std::pair<std::vector<double>, std::vector<double>>>
      groups;  // key -> (means, floored population stds)
};

// Z-scores every feature within its (lot_key, wf_key) group using the
// population standard deviation floored at sigma_floor. Die coordinates and
// labels pass through untouched.
DatasetTable within_wafer_zscore(const DatasetTable& table, double sigma_floor,
                                 GroupStats* stats_out = nullptr);

struct TrainTestSplit {
  DatasetTable train;  // normals only
  DatasetTable test;   // held-out normals plus every anomaly
};

// Shuffles the normal records with the seeded generator and keeps
// normal_train_frac of them for training; anomalies all land in test.
TrainTestSplit split_train_test(const DatasetTable& table,
                                double normal_train_frac, std::uint64_t seed);

struct SynthConfig {
  int n_wafers = 5;
  int wafer_diameter_dies = 24;
  int n_features = 64;
  double anomaly_rate = 0.01;
  double shift_magnitude = 5.0;  // in within-wafer standard deviations
  int n_shifted_features = 8;
  double radial_trend_strength = 1.0;
  std::uint64_t seed = 42;
};

// Circular wafers on an integer grid; normal dies draw from a correlated
// low-rank Gaussian plus a radial trend, anomalous dies get an additive shift
// on a per-die random feature subset. Deterministic per seed.
DatasetTable synth_wafers(const SynthConfig& config);

}  // namespace wd
