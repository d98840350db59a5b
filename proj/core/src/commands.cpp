#include "waferdiff/commands.hpp"

#include "waferdiff/checkpoint.hpp"
#include "waferdiff/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

namespace wd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Salt namespace for per-device reconstruction noise streams; scoring streams
// use the bare device index, so the two never collide under one run seed.
constexpr std::uint64_t kReconstructSaltBase = 1ull << 56;

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

MatF features_matrix(const DatasetTable& table) {
  MatF x(static_cast<Index>(table.size()),
         static_cast<Index>(table.feature_count()));
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t f = 0; f < table.feature_count(); ++f)
      x(static_cast<Index>(i), static_cast<Index>(f)) =
          static_cast<float>(table.records[i].features[f]);
  return x;
}

MatF die_matrix(const DatasetTable& table) {
  MatF d(static_cast<Index>(table.size()), 2);
  for (std::size_t i = 0; i < table.size(); ++i) {
    d(static_cast<Index>(i), 0) = static_cast<float>(table.records[i].die_x);
    d(static_cast<Index>(i), 1) = static_cast<float>(table.records[i].die_y);
  }
  return d;
}

// Training-time preprocessing chain.
DatasetTable preprocess_fresh(const DatasetTable& raw, const RunConfig& cfg,
                              GroupStats* stats = nullptr) {
  DatasetTable t = select_features(raw, cfg.feature_regex);
  t = filter_missing(t, cfg.r_na);
  return within_wafer_zscore(t, cfg.sigma_floor, stats);
}

// Scoring-time preprocessing: reproduce the training recipe, then force the
// column set and order the checkpoint was trained on.
DatasetTable preprocess_for_checkpoint(const DatasetTable& raw,
                                       const PreprocessInfo& pp,
                                       GroupStats* stats = nullptr) {
  DatasetTable t = select_features(raw, pp.feature_regex);

  std::map<std::string, std::size_t> pos;
  for (std::size_t f = 0; f < t.feature_names.size(); ++f)
    pos[t.feature_names[f]] = f;
  std::vector<std::size_t> order;
  order.reserve(pp.feature_names.size());
  for (const auto& name : pp.feature_names) {
    auto it = pos.find(name);
    if (it == pos.end())
      throw ConfigError("data lacks feature required by the checkpoint: " +
                        name);
    order.push_back(it->second);
  }

  DatasetTable projected;
  projected.feature_names = pp.feature_names;
  projected.program_blocks = infer_program_blocks(pp.feature_names);
  for (const auto& rec : t.records) {
    DeviceRecord out = rec;
    out.features.clear();
    out.features.reserve(order.size());
    bool complete = true;
    for (std::size_t f : order) {
      const double v = rec.features[f];
      if (std::isnan(v)) complete = false;
      out.features.push_back(v);
    }
    if (complete) projected.records.push_back(std::move(out));
  }
  if (projected.records.empty())
    throw SchemaError("no complete records remain after projection");
  return within_wafer_zscore(projected, pp.sigma_floor, stats);
}

struct ScoredTest {
  Checkpoint ckpt;
  DatasetTable test;
  GroupStats stats;
  std::vector<double> scores;
};

// load checkpoint + data, rebuild the held-out partition, score it.
ScoredTest score_held_out(const RunConfig& cfg) {
  require(!cfg.data_path.empty(), "missing --data");
  require(!cfg.checkpoint_dir.empty(), "missing --checkpoint");
  ScoredTest st;
  st.ckpt = load_checkpoint(cfg.checkpoint_dir);
  DatasetTable raw = load_table(cfg.data_path);
  DatasetTable pre = preprocess_for_checkpoint(raw, st.ckpt.preprocess,
                                               &st.stats);
  TrainTestSplit split = split_train_test(
      pre, st.ckpt.preprocess.normal_train_frac, st.ckpt.preprocess.split_seed);
  st.test = std::move(split.test);
  MatF x = features_matrix(st.test);
  MatF die_xy = die_matrix(st.test);
  st.scores = score_devices(st.ckpt.model, x, die_xy, make_eval_grid(cfg),
                            cfg.seed);
  return st;
}

LabeledScores to_labeled(const ScoredTest& st) {
  LabeledScores ls;
  ls.scores = st.scores;
  ls.labels.reserve(st.test.size());
  for (const auto& rec : st.test.records) ls.labels.push_back(rec.label);
  return ls;
}

json metrics_json(const LabeledScores& ls, double yield_frac) {
  const RecallAtYield ry = recall_at_yield(ls, yield_frac);
  std::size_t n_normal = 0, n_anomaly = 0;
  for (Label l : ls.labels) (l == Label::normal ? n_normal : n_anomaly)++;
  json j;
  j["auroc"] = auroc(ls);
  j["aucpr"] = aucpr(ls);
  j["recalled_count"] = ry.recalled_count;
  j["recalled_any"] = ry.recalled_any;
  j["threshold"] = ry.threshold;
  j["n_normal"] = n_normal;
  j["n_anomaly"] = n_anomaly;
  return j;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("short write: " + path.string());
}

// Mirrors stream output into a second buffer (console + log file capture).
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return 0;
    const int ra = a_->sputc(static_cast<char>(ch));
    const int rb = b_->sputc(static_cast<char>(ch));
    return (ra == traits_type::eof() || rb == traits_type::eof())
               ? traits_type::eof()
               : ch;
  }
  int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

}  // namespace

void cmd_synth(const RunConfig& cfg) {
  require(!cfg.out_path.empty(), "synth: missing --out");
  SynthConfig scfg = cfg.synth;
  scfg.seed = cfg.seed;
  DatasetTable table = synth_wafers(scfg);
  save_table(table, cfg.out_path);
  std::cout << "wrote " << table.size() << " device records to "
            << cfg.out_path << "\n";
}

void cmd_train(const RunConfig& cfg) {
  require(!cfg.data_path.empty(), "train: missing --data");
  require(!cfg.checkpoint_dir.empty(), "train: missing --checkpoint");

  DatasetTable raw = load_table(cfg.data_path);
  DatasetTable pre = preprocess_fresh(raw, cfg);
  TrainTestSplit split =
      split_train_test(pre, cfg.normal_train_frac, cfg.seed);

  MatF x = features_matrix(split.train);
  MatF die_xy = die_matrix(split.train);
  PipelineConfig pcfg =
      make_pipeline_config(cfg, static_cast<int>(pre.feature_count()));

  std::ostringstream captured;
  TeeBuf tee(std::cout.rdbuf(), captured.rdbuf());
  std::ostream log(&tee);
  log << "training on " << x.rows() << " normal devices, "
      << pre.feature_count() << " features\n";
  ModelBundle<float> model = train_pipeline<float>(x, die_xy, pcfg, &log);

  Checkpoint ckpt;
  ckpt.model = std::move(model);
  ckpt.preprocess.feature_names = pre.feature_names;
  ckpt.preprocess.feature_regex = cfg.feature_regex;
  ckpt.preprocess.r_na = cfg.r_na;
  ckpt.preprocess.sigma_floor = cfg.sigma_floor;
  ckpt.preprocess.normal_train_frac = cfg.normal_train_frac;
  ckpt.preprocess.split_seed = cfg.seed;
  ckpt.preprocess.subtract_pe = cfg.subtract_pe;
  ckpt.preprocess.t_rec = cfg.t_rec;
  save_checkpoint(cfg.checkpoint_dir, ckpt);
  write_text_file(fs::path(cfg.checkpoint_dir) / "train_log.txt",
                  captured.str());
  std::cout << "checkpoint written to " << cfg.checkpoint_dir << "\n";
}

void cmd_score(const RunConfig& cfg) {
  require(!cfg.out_path.empty(), "score: missing --out");
  ScoredTest st = score_held_out(cfg);

  std::ostringstream csv;
  csv << "lot_key,wf_key,die_x,die_y,label,score\n";
  for (std::size_t i = 0; i < st.test.size(); ++i) {
    const auto& rec = st.test.records[i];
    csv << rec.lot_key << ',' << rec.wf_key << ',' << rec.die_x << ','
        << rec.die_y << ','
        << (rec.label == Label::anomalous ? "anomalous" : "normal") << ','
        << fmt9(st.scores[i]) << "\n";
  }
  write_text_file(cfg.out_path, csv.str());
  std::cout << "wrote " << st.test.size() << " scores to " << cfg.out_path
            << "\n";
}

void cmd_eval(const RunConfig& cfg) {
  ScoredTest st = score_held_out(cfg);
  const json j = metrics_json(to_labeled(st), cfg.yield_frac);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!cfg.out_path.empty()) write_text_file(cfg.out_path, text);
}

void cmd_explain(const RunConfig& cfg) {
  require(!cfg.out_path.empty(), "explain: missing --out");
  ScoredTest st = score_held_out(cfg);
  const ModelBundle<float>& model = st.ckpt.model;
  const PreprocessInfo& pp = st.ckpt.preprocess;

  const double threshold =
      recall_at_yield(to_labeled(st), cfg.yield_frac).threshold;
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < st.scores.size(); ++i)
    if (st.scores[i] > threshold) flagged.push_back(i);

  std::error_code ec;
  fs::create_directories(cfg.out_path, ec);
  if (ec) throw IoError("cannot create output directory: " + cfg.out_path);

  std::ostringstream csv, top;
  csv << "lot_key,wf_key,die_x,die_y,score,program,feature_count,"
         "mean_residual,residual_sum\n";

  if (!flagged.empty()) {
    // Reconstruct every flagged device in one batch.
    MatF x(static_cast<Index>(flagged.size()),
           static_cast<Index>(st.test.feature_count()));
    MatF die_xy(static_cast<Index>(flagged.size()), 2);
    for (std::size_t r = 0; r < flagged.size(); ++r) {
      const auto& rec = st.test.records[flagged[r]];
      for (std::size_t f = 0; f < rec.features.size(); ++f)
        x(static_cast<Index>(r), static_cast<Index>(f)) =
            static_cast<float>(rec.features[f]);
      die_xy(static_cast<Index>(r), 0) = static_cast<float>(rec.die_x);
      die_xy(static_cast<Index>(r), 1) = static_cast<float>(rec.die_y);
    }
    MatF pe = model.pe_batch(die_xy);
    MatF z0 = model.encode_batch(x) + pe;
    MatF zhat = reconstruct_latent(
        model, z0, pp.t_rec, mix_seed(cfg.seed, kReconstructSaltBase));
    MatF xhat(zhat.rows(), x.cols());
    {
      MatF z = zhat;
      if (pp.subtract_pe) z -= pe;
      xhat = model.decode_batch(z);
    }

    const auto& blocks = st.test.program_blocks;
    for (std::size_t r = 0; r < flagged.size(); ++r) {
      const auto& rec = st.test.records[flagged[r]];
      const double score = st.scores[flagged[r]];
      const std::string row_prefix = rec.lot_key + ',' + rec.wf_key + ',' +
                                     std::to_string(rec.die_x) + ',' +
                                     std::to_string(rec.die_y) + ',' +
                                     fmt9(score) + ',';
      VecD resid = per_feature_residual<float>(x.middleRows(r, 1),
                                               xhat.middleRows(r, 1));
      std::vector<ProgramScore> programs = per_program_scores(resid, blocks);

      double block_total = 0.0;
      for (const auto& ps : programs) {
        block_total += ps.residual_sum;
        csv << row_prefix << ps.name << ',' << ps.feature_count << ','
            << fmt17(ps.mean_residual) << ',' << fmt17(ps.residual_sum)
            << "\n";
      }
      csv << row_prefix << "__total__," << resid.size() << ','
          << fmt17(block_total / static_cast<double>(resid.size())) << ','
          << fmt17(resid.sum()) << "\n";

      std::vector<std::size_t> order(programs.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return programs[a].mean_residual >
                                programs[b].mean_residual;
                       });
      top << rec.lot_key << '/' << rec.wf_key << " die=(" << rec.die_x << ','
          << rec.die_y << ") score=" << fmt9(score) << " top:";
      const std::size_t k =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k),
                                order.size());
      for (std::size_t i = 0; i < k; ++i) {
        const auto& ps = programs[order[i]];
        top << (i ? ", " : " ") << ps.name << " (mean="
            << fmt9(ps.mean_residual) << ")";
      }
      top << "\n";
    }
  }

  write_text_file(fs::path(cfg.out_path) / "program_scores.csv", csv.str());
  write_text_file(fs::path(cfg.out_path) / "top_programs.txt", top.str());
  std::cout << "explained " << flagged.size() << " flagged devices (threshold "
            << fmt9(threshold) << ") into " << cfg.out_path << "\n";
}

int run_command(const std::string& command, const RunConfig& cfg) {
  try {
    cfg.validate();
    if (command == "synth")
      cmd_synth(cfg);
    else if (command == "train")
      cmd_train(cfg);
    else if (command == "score")
      cmd_score(cfg);
    else if (command == "eval")
      cmd_eval(cfg);
    else if (command == "explain")
      cmd_explain(cfg);
    else
      throw UsageError("unknown command: " + command);
    return 0;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace wd
