#include "waferdiff/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <regex>
#include <sstream>

namespace wd {

namespace {

constexpr const char* kIdColumns[] = {"lot_key", "wf_key", "die_x", "die_y",
                                      "label"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_feature(const std::string& cell, std::size_t row,
                     const std::string& col) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw ParseError("row " + std::to_string(row) + ", column '" + col +
                     "': cannot parse '" + cell + "' as a number");
  return value;
}

int parse_coord(const std::string& cell, std::size_t row,
                const std::string& col) {
  int value = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc{} || ptr != end)
    throw ParseError("row " + std::to_string(row) + ", column '" + col +
                     "': cannot parse '" + cell + "' as an integer");
  return value;
}

Label parse_label(const std::string& cell, std::size_t row) {
  if (cell == "normal" || cell == "0") return Label::normal;
  if (cell == "anomalous" || cell == "1") return Label::anomalous;
  throw ParseError("row " + std::to_string(row) + ": unknown label '" + cell +
                   "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void validate_blocks(const DatasetTable& t) {
  std::size_t pos = 0;
  for (const auto& b : t.program_blocks) {
    if (b.start != pos || b.length == 0)
      throw SchemaError("program blocks must be contiguous and non-empty");
    pos += b.length;
  }
  if (pos != t.feature_count())
    throw SchemaError("program blocks do not cover all features");
}

}  // namespace

std::vector<ProgramBlock> infer_program_blocks(
    const std::vector<std::string>& names) {
  std::vector<ProgramBlock> blocks;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto delim = names[i].find("__");
    std::string program =
        delim == std::string::npos ? names[i] : names[i].substr(0, delim);
    if (!blocks.empty() && blocks.back().name == program) {
      ++blocks.back().length;
    } else {
      blocks.push_back({std::move(program), i, 1});
    }
  }
  return blocks;
}

DatasetTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("'" + path + "' is empty");
  const auto header = split_csv_line(line);

  // Locate the mandatory identifier columns; everything else is a feature.
  std::map<std::string, std::size_t> id_pos;
  std::vector<std::size_t> feature_pos;
  DatasetTable table;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const bool is_id = std::find(std::begin(kIdColumns), std::end(kIdColumns),
                                 header[i]) != std::end(kIdColumns);
    if (is_id) {
      if (!id_pos.emplace(header[i], i).second)
        throw SchemaError("duplicate column '" + header[i] + "'");
    } else {
      feature_pos.push_back(i);
      table.feature_names.push_back(header[i]);
    }
  }
  for (const char* col : kIdColumns)
    if (!id_pos.count(col))
      throw SchemaError("'" + path + "' is missing mandatory column '" + col +
                        "'");

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    DeviceRecord rec;
    rec.lot_key = cells[id_pos["lot_key"]];
    rec.wf_key = cells[id_pos["wf_key"]];
    rec.die_x = parse_coord(cells[id_pos["die_x"]], row, "die_x");
    rec.die_y = parse_coord(cells[id_pos["die_y"]], row, "die_y");
    rec.label = parse_label(cells[id_pos["label"]], row);
    rec.features.reserve(feature_pos.size());
    for (std::size_t f = 0; f < feature_pos.size(); ++f)
      rec.features.push_back(
          parse_feature(cells[feature_pos[f]], row, table.feature_names[f]));
    table.records.push_back(std::move(rec));
  }

  table.program_blocks = infer_program_blocks(table.feature_names);
  validate_blocks(table);
  return table;
}

void save_table(const DatasetTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  out << "lot_key,wf_key,die_x,die_y,label";
  for (const auto& name : table.feature_names) out << ',' << name;
  out << '\n';
  for (const auto& rec : table.records) {
    out << rec.lot_key << ',' << rec.wf_key << ',' << rec.die_x << ','
        << rec.die_y << ','
        << (rec.label == Label::anomalous ? "anomalous" : "normal");
    for (double v : rec.features) out << ',' << format_number(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

DatasetTable select_features(const DatasetTable& table,
                             const std::string& pattern) {
  std::regex re;
  try {
    re = std::regex(pattern);
  } catch (const std::regex_error& e) {
    throw ParseError("invalid feature regex '" + pattern + "': " + e.what());
  }

  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < table.feature_count(); ++f)
    if (std::regex_search(table.feature_names[f], re)) keep.push_back(f);
  if (keep.empty())
    throw EmptySelectionError("feature regex '" + pattern +
                              "' matches no columns");

  DatasetTable out;
  for (std::size_t f : keep) out.feature_names.push_back(table.feature_names[f]);
  out.records.reserve(table.size());
  for (const auto& rec : table.records) {
    DeviceRecord r = rec;
    r.features.clear();
    r.features.reserve(keep.size());
    for (std::size_t f : keep) r.features.push_back(rec.features[f]);
    out.records.push_back(std::move(r));
  }
  out.program_blocks = infer_program_blocks(out.feature_names);
  return out;
}

DatasetTable filter_missing(const DatasetTable& table, double r_na) {
  if (!(r_na >= 0.0 && r_na <= 1.0))
    throw RangeError("r_na must lie in [0, 1]");
  if (table.records.empty())
    throw EmptySelectionError("filter_missing on an empty table");

  const std::size_t n = table.size();
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < table.feature_count(); ++f) {
    std::size_t missing = 0;
    for (const auto& rec : table.records)
      if (std::isnan(rec.features[f])) ++missing;
    if (static_cast<double>(missing) / static_cast<double>(n) <= r_na)
      keep.push_back(f);
  }
  if (keep.empty())
    throw EmptySelectionError("every feature exceeds the missing-value budget");

  DatasetTable out;
  for (std::size_t f : keep) out.feature_names.push_back(table.feature_names[f]);
  for (const auto& rec : table.records) {
    DeviceRecord r = rec;
    r.features.clear();
    r.features.reserve(keep.size());
    bool complete = true;
    for (std::size_t f : keep) {
      if (std::isnan(rec.features[f])) {
        complete = false;
        break;
      }
      r.features.push_back(rec.features[f]);
    }
    if (complete) out.records.push_back(std::move(r));
  }
  if (out.records.empty())
    throw EmptySelectionError("no complete records after missing-value filter");
  out.program_blocks = infer_program_blocks(out.feature_names);
  return out;
}

DatasetTable within_wafer_zscore(const DatasetTable& table, double sigma_floor,
                                 GroupStats* stats_out) {
  if (!(sigma_floor > 0.0)) throw RangeError("sigma_floor must be positive");

  const std::size_t f_count = table.feature_count();
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>>
      groups;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& rec = table.records[i];
    for (double v : rec.features)
      if (std::isnan(v))
        throw SchemaError("within_wafer_zscore requires complete features");
    groups[{rec.lot_key, rec.wf_key}].push_back(i);
  }

  DatasetTable out = table;
  if (stats_out) stats_out->groups.clear();
  for (const auto& [key, idx] : groups) {
    const double n = static_cast<double>(idx.size());
    std::vector<double> mean(f_count, 0.0), sigma(f_count, 0.0);
    for (std::size_t i : idx)
      for (std::size_t f = 0; f < f_count; ++f)
        mean[f] += table.records[i].features[f];
    for (double& m : mean) m /= n;
    for (std::size_t i : idx)
      for (std::size_t f = 0; f < f_count; ++f) {
        const double d = table.records[i].features[f] - mean[f];
        sigma[f] += d * d;
      }
    for (double& s : sigma) s = std::max(std::sqrt(s / n), sigma_floor);
    for (std::size_t i : idx)
      for (std::size_t f = 0; f < f_count; ++f)
        out.records[i].features[f] =
            (table.records[i].features[f] - mean[f]) / sigma[f];
    if (stats_out) stats_out->groups[key] = {std::move(mean), std::move(sigma)};
  }
  return out;
}

TrainTestSplit split_train_test(const DatasetTable& table,
                                double normal_train_frac, std::uint64_t seed) {
  if (!(normal_train_frac > 0.0 && normal_train_frac < 1.0))
    throw RangeError(
        "normal_train_frac must lie strictly in (0, 1): the test split has to "
        "keep some normal devices");

  std::vector<std::size_t> normal_idx, anomaly_idx;
  for (std::size_t i = 0; i < table.size(); ++i)
    (table.records[i].label == Label::normal ? normal_idx : anomaly_idx)
        .push_back(i);
  if (normal_idx.size() < 2)
    throw SchemaError("split_train_test needs at least two normal records");

  Rng rng(seed);
  rng.shuffle(normal_idx);
  const double n = static_cast<double>(normal_idx.size());
  auto n_train = static_cast<std::size_t>(n * normal_train_frac + 0.5);
  n_train = std::clamp<std::size_t>(n_train, 1, normal_idx.size() - 1);

  TrainTestSplit split;
  split.train.feature_names = split.test.feature_names = table.feature_names;
  split.train.program_blocks = split.test.program_blocks = table.program_blocks;
  for (std::size_t i = 0; i < n_train; ++i)
    split.train.records.push_back(table.records[normal_idx[i]]);
  for (std::size_t i = n_train; i < normal_idx.size(); ++i)
    split.test.records.push_back(table.records[normal_idx[i]]);
  for (std::size_t i : anomaly_idx)
    split.test.records.push_back(table.records[i]);
  return split;
}

}  // namespace wd
