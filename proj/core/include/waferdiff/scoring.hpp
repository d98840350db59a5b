#pragma once

// Timestep-grid anomaly scoring and reconstruction-based residual
// attribution. Scores are averages, over a fixed timestep grid, of the
// squared noise-prediction error summed over every latent entry.

#include "waferdiff/bundle.hpp"
#include "waferdiff/common.hpp"
#include "waferdiff/dataio.hpp"
#include "waferdiff/diffusion.hpp"

#include <string>
#include <vector>

namespace wd {

struct EvalGrid {
  int t_start = 100;
  int t_end = 550;
  int dt = 50;

  std::vector<int> timesteps() const {
    if (t_start < 1) throw RangeError("eval grid: t_start must be >= 1");
    if (t_end < t_start) throw RangeError("eval grid: t_end must be >= t_start");
    if (dt < 1) throw RangeError("eval grid: step must be >= 1");
    std::vector<int> ts;
    for (int t = t_start; t <= t_end; t += dt) ts.push_back(t);
    return ts;
  }

  void validate(int num_steps) const {
    timesteps();
    if (t_end > num_steps)
      throw RangeError("eval grid: t_end exceeds the diffusion horizon");
  }
};

// Score one device from its flat latent row (position encodings included).
// Draws one fresh noise sample per grid timestep from `rng`, in grid order;
// performs exactly timesteps().size() denoiser evaluations.
template <typename S, typename Den>
double anomaly_score(const Den& den, const Mat<S>& z0_flat,
                     const NoiseSchedule& sched, const EvalGrid& grid,
                     Rng& rng) {
  grid.validate(sched.num_steps);
  if (z0_flat.rows() != 1)
    throw ShapeError("anomaly_score: expected a single flat latent row");
  const std::vector<int> ts = grid.timesteps();
  Mat<S> eps(1, z0_flat.cols());
  double acc = 0.0;
  for (int t : ts) {
    rng.fill_normal(eps);
    Mat<S> zt = forward_sample(z0_flat, t, eps, sched);
    Mat<S> pred = den.forward(zt, {t});
    acc += (eps - pred).template cast<double>().array().square().sum();
  }
  return acc / static_cast<double>(ts.size());
}

// Batched scoring of a whole table. Device i draws its noise from the stream
// seeded with mix_seed(seed, i), in grid order — the same draws the
// one-device scorer above would make — so chunked evaluation matches
// per-device evaluation up to floating-point reassociation.
template <typename S>
std::vector<double> score_devices(const ModelBundle<S>& bundle,
                                  const Mat<S>& x, const Mat<S>& die_xy,
                                  const EvalGrid& grid, std::uint64_t seed,
                                  Index chunk_size = 1024) {
  grid.validate(bundle.schedule.num_steps);
  if (chunk_size < 1) throw RangeError("score_devices: chunk_size must be >= 1");
  const std::vector<int> ts = grid.timesteps();
  const Index n = x.rows();
  const Index width = bundle.flat_dim();
  Mat<S> z0 = bundle.build_z0(x, die_xy);

  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  for (Index a = 0; a < n; a += chunk_size) {
    const Index m = std::min(chunk_size, n - a);
    // Pre-draw every grid step's noise for each device, in grid order, so the
    // per-device streams see the same sequence as sequential scoring.
    std::vector<Mat<S>> eps(ts.size());
    for (auto& e : eps) e.resize(m, width);
    for (Index i = 0; i < m; ++i) {
      Rng dev_rng(mix_seed(seed, static_cast<std::uint64_t>(a + i)));
      for (std::size_t g = 0; g < ts.size(); ++g)
        dev_rng.fill_normal(eps[g].middleRows(i, 1));
    }
    for (std::size_t g = 0; g < ts.size(); ++g) {
      const std::vector<int> t_rows(static_cast<std::size_t>(m), ts[g]);
      Mat<S> zt = forward_sample_rows<S>(z0.middleRows(a, m), t_rows, eps[g],
                                         bundle.schedule);
      Mat<S> pred = bundle.denoise(zt, t_rows);
      Mat<S> diff = eps[g] - pred;
      for (Index i = 0; i < m; ++i)
        scores[static_cast<std::size_t>(a + i)] +=
            diff.row(i).template cast<double>().array().square().sum();
    }
  }
  for (auto& s : scores) s /= static_cast<double>(ts.size());
  return scores;
}

// Run the reverse chain from Z_{t_rec} := Z0 down to the clean estimate.
// Accepts one or many flat latent rows; the chain noise is drawn once per
// step for the whole batch.
template <typename S>
Mat<S> reconstruct_latent(const ModelBundle<S>& bundle, const Mat<S>& z0_flat,
                          int t_rec, std::uint64_t seed) {
  auto model = [&](const Mat<S>& zt, int t) {
    return bundle.denoise(
        zt, std::vector<int>(static_cast<std::size_t>(zt.rows()), t));
  };
  return reconstruct(z0_flat, t_rec, model, bundle.schedule, seed);
}

// Decode a reconstructed latent back to feature space. The encoder never saw
// the position encodings, so they are subtracted first by default.
template <typename S>
Mat<S> decode_reconstruction(const ModelBundle<S>& bundle,
                             const Mat<S>& zhat_flat, const Mat<S>& pe_row,
                             bool subtract_pe = true) {
  Mat<S> z = zhat_flat;
  if (subtract_pe && pe_row.size() > 0) {
    if (pe_row.cols() != z.cols())
      throw ShapeError("decode_reconstruction: PE row width mismatch");
    z.rowwise() -= pe_row.row(0);
  }
  return bundle.decode_batch(z);
}

// Squared per-feature reconstruction residual.
template <typename S>
VecD per_feature_residual(const Mat<S>& x_row, const Mat<S>& xhat_row) {
  if (x_row.rows() != 1 || xhat_row.rows() != 1 ||
      x_row.cols() != xhat_row.cols())
    throw ShapeError("per_feature_residual: expected matching single rows");
  return (x_row - xhat_row)
      .template cast<double>()
      .array()
      .square()
      .matrix()
      .transpose();
}

// Map a residual from standardized units back to raw units: each feature's
// squared error scales by its wafer-group variance.
inline VecD denormalize_residual(const VecD& resid, const VecD& sigma) {
  if (resid.size() != sigma.size())
    throw ShapeError("denormalize_residual: width mismatch");
  return (resid.array() * sigma.array().square()).matrix();
}

struct ProgramScore {
  std::string name;
  Index feature_count = 0;
  double mean_residual = 0.0;  // residual_sum / feature_count
  double residual_sum = 0.0;   // exact share of the total residual
};

// Aggregate per-feature residuals over contiguous test-program blocks. The
// blocks must tile [0, F) exactly so the per-program sums conserve the total.
inline std::vector<ProgramScore> per_program_scores(
    const VecD& resid, const std::vector<ProgramBlock>& blocks) {
  std::size_t pos = 0;
  for (const auto& blk : blocks) {
    if (blk.start != pos || blk.length < 1)
      throw SchemaError("per_program_scores: blocks must partition the features");
    pos += blk.length;
  }
  if (pos != static_cast<std::size_t>(resid.size()))
    throw SchemaError("per_program_scores: blocks do not cover every feature");
  std::vector<ProgramScore> out;
  out.reserve(blocks.size());
  for (const auto& blk : blocks) {
    ProgramScore ps;
    ps.name = blk.name;
    ps.feature_count = static_cast<Index>(blk.length);
    ps.residual_sum = resid.segment(static_cast<Index>(blk.start),
                                    static_cast<Index>(blk.length))
                          .sum();
    ps.mean_residual = ps.residual_sum / static_cast<double>(blk.length);
    out.push_back(std::move(ps));
  }
  return out;
}

}  // namespace wd
