// Table loading/saving, preprocessing (selection, missing-value filter,
// within-wafer z-score), the train/test split, and the synthetic generator.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "waferdiff/dataio.hpp"

using namespace wd;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

DeviceRecord rec(const std::string& lot, const std::string& wf, int x, int y,
                 Label label, std::vector<double> f) {
  DeviceRecord r;
  r.lot_key = lot;
  r.wf_key = wf;
  r.die_x = x;
  r.die_y = y;
  r.label = label;
  r.features = std::move(f);
  return r;
}

DatasetTable three_feature_table() {
  DatasetTable t;
  t.feature_names = {"pA__v0", "pA__v1", "pB__v0"};
  t.program_blocks = infer_program_blocks(t.feature_names);
  t.records.push_back(rec("L1", "W1", 0, 0, Label::normal, {1.0, 2.0, 3.0}));
  t.records.push_back(rec("L1", "W1", 1, 0, Label::normal, {2.0, 3.0, 4.0}));
  t.records.push_back(rec("L1", "W1", 2, 0, Label::anomalous, {3.0, 4.0, 5.0}));
  return t;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("wd_dataio_" + std::to_string(++counter) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("program blocks come from the name prefix before '__'") {
  const auto blocks =
      infer_program_blocks({"pA__x", "pA__y", "pB__z", "loose", "pB__w"});
  REQUIRE(blocks.size() == 4);
  CHECK(blocks[0].name == "pA");
  CHECK(blocks[0].start == 0);
  CHECK(blocks[0].length == 2);
  CHECK(blocks[1].name == "pB");
  CHECK(blocks[1].length == 1);
  CHECK(blocks[2].name == "loose");  // no delimiter: whole name
  CHECK(blocks[3].name == "pB");     // non-adjacent run starts a new block
  CHECK(blocks[3].start == 4);
}

TEST_CASE("save/load round-trips records, labels, and missing cells") {
  TempDir tmp;
  DatasetTable t = three_feature_table();
  t.records[1].features[2] = kNaN;  // becomes an empty CSV cell

  const auto file = (tmp.path / "t.csv").string();
  save_table(t, file);
  const DatasetTable back = load_table(file);

  REQUIRE(back.size() == 3);
  REQUIRE(back.feature_names == t.feature_names);
  CHECK(back.program_blocks.size() == 2);
  CHECK(back.records[0].lot_key == "L1");
  CHECK(back.records[2].label == Label::anomalous);
  CHECK(back.records[0].features == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(std::isnan(back.records[1].features[2]));
  CHECK(back.records[1].features[0] == 2.0);
  CHECK(back.records[2].die_x == 2);
}

TEST_CASE("load rejects malformed tables") {
  TempDir tmp;
  const auto file = (tmp.path / "bad.csv").string();

  auto write = [&](const std::string& body) {
    std::ofstream out(file);
    out << body;
  };

  write("lot_key,wf_key,die_x,die_y,f0\nL,W,0,0,1\n");  // label missing
  CHECK_THROWS_AS(load_table(file), SchemaError);

  write("lot_key,wf_key,die_x,die_y,label,f0\nL,W,0,0,weird,1\n");
  CHECK_THROWS_AS(load_table(file), ParseError);

  write("lot_key,wf_key,die_x,die_y,label,f0\nL,W,0,0,normal,abc\n");
  CHECK_THROWS_AS(load_table(file), ParseError);

  write("lot_key,wf_key,die_x,die_y,label,f0\nL,W,0,0,normal\n");  // short row
  CHECK_THROWS_AS(load_table(file), ParseError);

  CHECK_THROWS_AS(load_table((tmp.path / "nope.csv").string()), IoError);
}

TEST_CASE("select_features filters by regex search") {
  const DatasetTable t = three_feature_table();

  const DatasetTable all = select_features(t, ".*");
  CHECK(all.feature_names == t.feature_names);
  CHECK(all.records[0].features == t.records[0].features);

  const DatasetTable pa = select_features(t, "pA__.*");
  CHECK(pa.feature_names == std::vector<std::string>{"pA__v0", "pA__v1"});
  REQUIRE(pa.program_blocks.size() == 1);
  CHECK(pa.records[2].features == std::vector<double>{3.0, 4.0});

  CHECK_THROWS_AS(select_features(t, "zzz"), EmptySelectionError);
  CHECK_THROWS_AS(select_features(t, "["), ParseError);
}

TEST_CASE("filter_missing drops columns first, then incomplete rows") {
  DatasetTable t;
  t.feature_names = {"a", "b"};
  t.program_blocks = infer_program_blocks(t.feature_names);
  // Column a: 2/5 missing (40%). Column b: 3/5 missing (60%).
  t.records.push_back(rec("L", "W", 0, 0, Label::normal, {kNaN, 1.0}));
  t.records.push_back(rec("L", "W", 1, 0, Label::normal, {1.0, kNaN}));
  t.records.push_back(rec("L", "W", 2, 0, Label::normal, {2.0, kNaN}));
  t.records.push_back(rec("L", "W", 3, 0, Label::normal, {kNaN, kNaN}));
  t.records.push_back(rec("L", "W", 4, 0, Label::normal, {3.0, 2.0}));

  const DatasetTable kept = filter_missing(t, 0.5);
  CHECK(kept.feature_names == std::vector<std::string>{"a"});  // b dropped
  CHECK(kept.size() == 3);  // rows with a missing 'a' dropped afterwards
  for (const auto& r : kept.records)
    for (double v : r.features) CHECK_FALSE(std::isnan(v));

  const DatasetTable untouched = filter_missing(three_feature_table(), 0.3);
  CHECK(untouched.size() == 3);
  CHECK(untouched.feature_names.size() == 3);

  CHECK_THROWS_AS(filter_missing(t, 0.1), EmptySelectionError);
  CHECK_THROWS_AS(filter_missing(t, -0.1), RangeError);
}

TEST_CASE("within_wafer_zscore matches the hand-computed group values") {
  DatasetTable t;
  t.feature_names = {"f"};
  t.program_blocks = infer_program_blocks(t.feature_names);
  t.records.push_back(rec("L", "W1", 0, 0, Label::normal, {1.0}));
  t.records.push_back(rec("L", "W1", 1, 0, Label::normal, {2.0}));
  t.records.push_back(rec("L", "W1", 2, 0, Label::normal, {3.0}));
  t.records.push_back(rec("L", "W2", 0, 0, Label::normal, {5.0}));
  t.records.push_back(rec("L", "W2", 1, 0, Label::normal, {5.0}));
  t.records.push_back(rec("L", "W2", 2, 0, Label::normal, {5.0}));

  GroupStats stats;
  const DatasetTable z = within_wafer_zscore(t, 1e-6, &stats);

  // Group [1,2,3]: population std sqrt(2/3) = 0.816496580927726.
  CHECK(z.records[0].features[0] ==
        doctest::Approx(-1.224744871391589).epsilon(1e-12));
  CHECK(z.records[1].features[0] == doctest::Approx(0.0));
  CHECK(z.records[2].features[0] ==
        doctest::Approx(1.224744871391589).epsilon(1e-12));
  // Constant group: zero numerator over the floored denominator.
  CHECK(z.records[3].features[0] == 0.0);
  CHECK(z.records[4].features[0] == 0.0);

  CHECK(stats.groups.at({"L", "W1"}).first[0] == doctest::Approx(2.0));
  CHECK(stats.groups.at({"L", "W1"}).second[0] ==
        doctest::Approx(0.816496580927726).epsilon(1e-12));
  CHECK(stats.groups.at({"L", "W2"}).second[0] == 1e-6);  // floored

  // Coordinates and labels pass through untouched.
  CHECK(z.records[2].die_x == 2);
  CHECK(z.records[2].label == Label::normal);
}

TEST_CASE("within_wafer_zscore properties over random groups") {
  Rng rng(17);
  DatasetTable t;
  t.feature_names = {"f0", "f1", "f2"};
  t.program_blocks = infer_program_blocks(t.feature_names);
  for (int w = 0; w < 3; ++w)
    for (int i = 0; i < 40; ++i)
      t.records.push_back(rec("L", "W" + std::to_string(w), i, 0,
                              Label::normal,
                              {rng.normal() * 3 + w, rng.normal(), rng.normal()}));

  const DatasetTable z = within_wafer_zscore(t, 1e-6);
  for (int w = 0; w < 3; ++w) {
    for (std::size_t f = 0; f < 3; ++f) {
      double mean = 0.0, var = 0.0;
      for (int i = 0; i < 40; ++i)
        mean += z.records[static_cast<std::size_t>(w * 40 + i)].features[f];
      mean /= 40.0;
      for (int i = 0; i < 40; ++i) {
        const double d =
            z.records[static_cast<std::size_t>(w * 40 + i)].features[f] - mean;
        var += d * d;
      }
      var /= 40.0;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
  }

  DatasetTable with_nan = t;
  with_nan.records[0].features[1] = kNaN;
  CHECK_THROWS_AS(within_wafer_zscore(with_nan, 1e-6), SchemaError);
}

TEST_CASE("split_train_test partitions normals and keeps all anomalies out") {
  DatasetTable t;
  t.feature_names = {"f"};
  t.program_blocks = infer_program_blocks(t.feature_names);
  for (int i = 0; i < 100; ++i)
    t.records.push_back(rec("L", "W", i, 0, Label::normal, {1.0 * i}));
  for (int i = 0; i < 2; ++i)
    t.records.push_back(rec("L", "W", i, 1, Label::anomalous, {100.0 + i}));

  const TrainTestSplit s = split_train_test(t, 0.5, 42);
  CHECK(s.train.size() == 50);
  CHECK(s.test.size() == 52);

  for (const auto& r : s.train.records) CHECK(r.label == Label::normal);

  // Disjoint and exhaustive over the die coordinates (unique per record here).
  std::set<std::pair<int, int>> seen;
  for (const auto& r : s.train.records) seen.insert({r.die_x, r.die_y});
  for (const auto& r : s.test.records) {
    CHECK(seen.count({r.die_x, r.die_y}) == 0);
    seen.insert({r.die_x, r.die_y});
  }
  CHECK(seen.size() == 102);

  // Determinism and seed sensitivity.
  const TrainTestSplit again = split_train_test(t, 0.5, 42);
  REQUIRE(again.train.size() == s.train.size());
  bool same = true;
  for (std::size_t i = 0; i < s.train.size(); ++i)
    same = same && (again.train.records[i].die_x == s.train.records[i].die_x);
  CHECK(same);
  const TrainTestSplit other = split_train_test(t, 0.5, 43);
  bool differ = false;
  for (std::size_t i = 0; i < s.train.size(); ++i)
    differ = differ || (other.train.records[i].die_x != s.train.records[i].die_x);
  CHECK(differ);

  CHECK_THROWS_AS(split_train_test(t, 1.0, 42), RangeError);
  CHECK_THROWS_AS(split_train_test(t, 0.0, 42), RangeError);

  DatasetTable tiny;
  tiny.feature_names = {"f"};
  tiny.program_blocks = infer_program_blocks(tiny.feature_names);
  tiny.records.push_back(rec("L", "W", 0, 0, Label::normal, {1.0}));
  tiny.records.push_back(rec("L", "W", 1, 0, Label::anomalous, {2.0}));
  CHECK_THROWS_AS(split_train_test(tiny, 0.5, 42), SchemaError);
}

TEST_CASE("synth_wafers lays out circular wafers with four program blocks") {
  SynthConfig cfg;
  cfg.n_wafers = 2;
  cfg.wafer_diameter_dies = 15;
  cfg.n_features = 10;
  cfg.anomaly_rate = 0.0;
  const DatasetTable t = synth_wafers(cfg);

  REQUIRE(t.feature_count() == 10);
  REQUIRE(t.program_blocks.size() == 4);  // 3+3+2+2
  CHECK(t.program_blocks[0].length == 3);
  CHECK(t.program_blocks[3].length == 2);

  // Every die inside the circle, labels all normal, two wafers' worth of rows.
  const double center = (15 - 1) / 2.0, radius = 15 / 2.0;
  std::size_t per_wafer = 0;
  for (const auto& r : t.records) {
    const double dx = r.die_x - center, dy = r.die_y - center;
    CHECK(dx * dx + dy * dy <= radius * radius);
    CHECK(r.label == Label::normal);
    if (r.wf_key == t.records[0].wf_key) ++per_wafer;
  }
  CHECK(t.size() == 2 * per_wafer);
}

TEST_CASE("synth_wafers anomaly count follows the rate") {
  SynthConfig cfg;
  cfg.n_wafers = 5;
  cfg.wafer_diameter_dies = 20;
  cfg.n_features = 12;
  cfg.anomaly_rate = 0.01;
  const DatasetTable t = synth_wafers(cfg);

  std::size_t anomalies = 0;
  for (const auto& r : t.records)
    if (r.label == Label::anomalous) ++anomalies;
  const auto expected = static_cast<std::size_t>(
      std::llround(cfg.anomaly_rate * static_cast<double>(t.size())));
  CHECK(anomalies == expected);
  CHECK(anomalies > 0);
}

TEST_CASE("synth_wafers is byte-deterministic per seed") {
  TempDir tmp;
  SynthConfig cfg;
  cfg.n_wafers = 2;
  cfg.wafer_diameter_dies = 12;
  cfg.n_features = 8;
  cfg.anomaly_rate = 0.02;

  const auto a = (tmp.path / "a.csv").string();
  const auto b = (tmp.path / "b.csv").string();
  save_table(synth_wafers(cfg), a);
  save_table(synth_wafers(cfg), b);
  CHECK(slurp(a) == slurp(b));
  CHECK_FALSE(slurp(a).empty());

  SynthConfig other = cfg;
  other.seed = 43;
  save_table(synth_wafers(other), b);
  CHECK(slurp(a) != slurp(b));
}

TEST_CASE("synth_wafers radial trend moves edge dies away from center dies") {
  SynthConfig cfg;
  cfg.n_wafers = 6;
  cfg.wafer_diameter_dies = 21;
  cfg.n_features = 6;
  cfg.anomaly_rate = 0.0;
  cfg.radial_trend_strength = 3.0;

  auto edge_center_gap = [](const DatasetTable& t, int diameter) {
    const double center = (diameter - 1) / 2.0, radius = diameter / 2.0;
    VecD inner = VecD::Zero(t.feature_names.size());
    VecD outer = VecD::Zero(t.feature_names.size());
    double n_in = 0, n_out = 0;
    for (const auto& r : t.records) {
      const double dx = r.die_x - center, dy = r.die_y - center;
      const double rad = std::sqrt(dx * dx + dy * dy) / radius;
      for (std::size_t f = 0; f < t.feature_names.size(); ++f)
        (rad < 0.4 ? inner : outer)(static_cast<Index>(f)) += r.features[f];
      (rad < 0.4 ? n_in : n_out) += 1.0;
    }
    return ((outer / n_out) - (inner / n_in)).norm();
  };

  const double with_trend = edge_center_gap(synth_wafers(cfg), 21);
  SynthConfig flat = cfg;
  flat.radial_trend_strength = 0.0;
  const double without = edge_center_gap(synth_wafers(flat), 21);
  CHECK(with_trend > 5.0 * without);  // strong trend dominates sampling noise
}
