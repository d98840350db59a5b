#include "waferdiff/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace wd {

namespace {

constexpr int kWafersPerLot = 5;
constexpr double kIdioNoise = 0.5;  // diagonal noise on top of the low-rank part

std::string key_of(const char* stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02d", stem, index);
  return buf;
}

}  // namespace

DatasetTable synth_wafers(const SynthConfig& config) {
  if (config.n_wafers < 1 || config.wafer_diameter_dies < 1 ||
      config.n_features < 1)
    throw RangeError("synth_wafers: wafer count, diameter, and feature count "
                     "must be positive");
  if (!(config.anomaly_rate >= 0.0 && config.anomaly_rate < 1.0))
    throw RangeError("synth_wafers: anomaly_rate must lie in [0, 1)");
  if (config.n_shifted_features < 1 ||
      config.n_shifted_features > config.n_features)
    throw RangeError("synth_wafers: n_shifted_features must lie in [1, F]");
  if (config.shift_magnitude < 0.0 || config.radial_trend_strength < 0.0)
    throw RangeError("synth_wafers: magnitudes must be non-negative");

  const int f_count = config.n_features;
  const int diameter = config.wafer_diameter_dies;
  const double center = (diameter - 1) / 2.0;
  const double radius = diameter / 2.0;

  DatasetTable table;
  table.feature_names.reserve(f_count);
  // Four near-equal contiguous program blocks.
  const int base_len = f_count / 4;
  const int remainder = f_count % 4;
  int feature_id = 0;
  for (int b = 0; b < 4 && feature_id < f_count; ++b) {
    const int len = base_len + (b < remainder ? 1 : 0);
    for (int j = 0; j < len; ++j, ++feature_id) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "p%d__f%03d", b, feature_id);
      table.feature_names.push_back(buf);
    }
  }
  table.program_blocks = infer_program_blocks(table.feature_names);

  // Population structure shared by all wafers: per-feature offsets, a low-rank
  // loading matrix (correlations), and the radial trend direction.
  Rng master(config.seed);
  const int rank = std::min(16, f_count);
  std::vector<double> offset(f_count), trend(f_count);
  MatD loading(f_count, rank);
  for (double& v : offset) v = master.normal();
  master.fill_normal(loading);
  loading *= 1.0 / std::sqrt(static_cast<double>(rank));
  for (double& v : trend) v = master.normal();

  // Enumerate dies and draw their measurements wafer by wafer.
  struct Die {
    int wafer;
    int x, y;
  };
  std::vector<Die> dies;
  for (int w = 0; w < config.n_wafers; ++w)
    for (int y = 0; y < diameter; ++y)
      for (int x = 0; x < diameter; ++x) {
        const double dx = x - center, dy = y - center;
        if (dx * dx + dy * dy <= radius * radius) dies.push_back({w, x, y});
      }

  table.records.reserve(dies.size());
  VecD latent(rank), idio(f_count);
  for (const Die& die : dies) {
    // One stream per die keeps values independent of enumeration details.
    const std::uint64_t salt = (std::uint64_t{1} << 56) |
                               (static_cast<std::uint64_t>(die.wafer) << 32) |
                               (static_cast<std::uint64_t>(die.y) << 16) |
                               static_cast<std::uint64_t>(die.x);
    Rng rng(mix_seed(config.seed, salt));
    for (int k = 0; k < rank; ++k) latent[k] = rng.normal();
    for (int f = 0; f < f_count; ++f) idio[f] = rng.normal();
    const double dx = die.x - center, dy = die.y - center;
    const double radial = std::sqrt(dx * dx + dy * dy) / radius;

    DeviceRecord rec;
    rec.lot_key = key_of("LOT", die.wafer / kWafersPerLot + 1);
    rec.wf_key = key_of("W", die.wafer % kWafersPerLot + 1);
    rec.die_x = die.x;
    rec.die_y = die.y;
    rec.features.resize(f_count);
    const VecD correlated = loading * latent;
    for (int f = 0; f < f_count; ++f)
      rec.features[f] = offset[f] + correlated[f] + kIdioNoise * idio[f] +
                        config.radial_trend_strength * radial * trend[f];
    table.records.push_back(std::move(rec));
  }

  // Anomalies: a random die subset gets an additive shift, sized in units of
  // the within-wafer population std measured before any shift is applied.
  const auto n_anomalies = static_cast<std::size_t>(
      std::llround(config.anomaly_rate * static_cast<double>(dies.size())));
  if (n_anomalies == 0) return table;

  std::vector<std::size_t> order(dies.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pick(mix_seed(config.seed, 1));
  pick.shuffle(order);

  GroupStats stats;
  within_wafer_zscore(table, 1e-12, &stats);

  std::vector<std::size_t> shuffled_features(f_count);
  for (std::size_t k = 0; k < n_anomalies; ++k) {
    DeviceRecord& rec = table.records[order[k]];
    rec.label = Label::anomalous;
    const auto& sigma = stats.groups.at({rec.lot_key, rec.wf_key}).second;
    Rng feat(mix_seed(config.seed, (std::uint64_t{2} << 56) | order[k]));
    std::iota(shuffled_features.begin(), shuffled_features.end(),
              std::size_t{0});
    feat.shuffle(shuffled_features);
    for (int j = 0; j < config.n_shifted_features; ++j) {
      const std::size_t f = shuffled_features[j];
      rec.features[f] += config.shift_magnitude * sigma[f];
    }
  }
  return table;
}

}  // namespace wd
