#pragma once

// Cosine noise schedule, closed-form forward corruption, the noise-prediction
// training loss, and the reverse chain used for reconstruction.

#include "waferdiff/common.hpp"

#include <vector>

namespace wd {

struct NoiseSchedule {
  int num_steps = 0;   // T
  VecD beta;           // beta[t-1] = beta_t, t in 1..T
  VecD alpha_bar;      // alpha_bar[t], t in 0..T, alpha_bar[0] = 1
  VecD posterior_var;  // posterior_var[t-1] = beta_t (1 - abar_{t-1}) / (1 - abar_t)

  void check_t(int t) const {
    if (t < 1 || t > num_steps)
      throw RangeError("timestep " + std::to_string(t) + " outside [1, " +
                       std::to_string(num_steps) + "]");
  }
};

// Squared-cosine schedule: abar(t) tracks f(t)/f(0) with
// f(t) = cos^2(((t/T + 0.008) / 1.008) * pi/2), betas clipped at 0.999, and
// abar stored as the running product of (1 - beta) so the product identity
// holds exactly even where the clip bites.
inline NoiseSchedule cosine_schedule(int num_steps) {
  if (num_steps < 1) throw RangeError("cosine_schedule needs T >= 1");
  constexpr double kShift = 0.008;
  constexpr double kMaxBeta = 0.999;
  const auto f = [&](double t) {
    const double u = (t / num_steps + kShift) / (1.0 + kShift);
    const double c = std::cos(u * kPi / 2.0);
    return c * c;
  };

  NoiseSchedule s;
  s.num_steps = num_steps;
  s.beta.resize(num_steps);
  s.alpha_bar.resize(num_steps + 1);
  s.posterior_var.resize(num_steps);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= num_steps; ++t) {
    const double ratio = f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
    s.beta[t - 1] = std::min(1.0 - ratio, kMaxBeta);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t - 1]);
    s.posterior_var[t - 1] =
        s.beta[t - 1] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
  }
  return s;
}

// Z_t = sqrt(abar_t) Z_0 + sqrt(1 - abar_t) eps. t = 0 returns Z_0 (testing
// convenience); shapes must agree.
template <typename S>
Mat<S> forward_sample(const Mat<S>& z0, int t, const Mat<S>& eps,
                      const NoiseSchedule& sched) {
  if (t != 0) sched.check_t(t);
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
    throw ShapeError("forward_sample: Z0 and eps shapes differ");
  const double abar = sched.alpha_bar[t];
  return static_cast<S>(std::sqrt(abar)) * z0 +
         static_cast<S>(std::sqrt(1.0 - abar)) * eps;
}

// Batched corruption with one timestep per row.
template <typename S>
Mat<S> forward_sample_rows(const Mat<S>& z0, const std::vector<int>& ts,
                           const Mat<S>& eps, const NoiseSchedule& sched) {
  if (z0.rows() != static_cast<Index>(ts.size()))
    throw ShapeError("forward_sample_rows: one timestep per row required");
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
    throw ShapeError("forward_sample_rows: Z0 and eps shapes differ");
  Mat<S> zt(z0.rows(), z0.cols());
  for (Index i = 0; i < z0.rows(); ++i) {
    if (ts[i] != 0) sched.check_t(ts[i]);
    const double abar = sched.alpha_bar[ts[i]];
    zt.row(i) = static_cast<S>(std::sqrt(abar)) * z0.row(i) +
                static_cast<S>(std::sqrt(1.0 - abar)) * eps.row(i);
  }
  return zt;
}

// Mean over the batch and every latent entry of (eps - eps_pred)^2. The model
// is any callable mapping (flat Z_t rows, timesteps) to flat eps predictions.
template <typename S, typename Model>
double ddpm_loss(Model&& model, const Mat<S>& z0_rows,
                 const std::vector<int>& ts, const Mat<S>& eps_rows,
                 const NoiseSchedule& sched) {
  Mat<S> zt = forward_sample_rows(z0_rows, ts, eps_rows, sched);
  Mat<S> pred = model(zt, ts);
  if (pred.rows() != eps_rows.rows() || pred.cols() != eps_rows.cols())
    throw ShapeError("ddpm_loss: model output shape mismatch");
  const double loss =
      (pred - eps_rows).template cast<double>().array().square().mean();
  if (!std::isfinite(loss)) throw NumericError("ddpm_loss is non-finite");
  return loss;
}

// One reverse-chain step:
//   mu = (Zt - beta_t / sqrt(1 - abar_t) * eps_theta) / sqrt(1 - beta_t)
//   Z_{t-1} = mu + sqrt(posterior_var_t) * xi,   xi forced to 0 at t = 1.
template <typename S, typename Model>
Mat<S> reverse_step(const Mat<S>& zt, int t, Model&& model,
                    const NoiseSchedule& sched, const Mat<S>& xi) {
  sched.check_t(t);
  if (zt.rows() != xi.rows() || zt.cols() != xi.cols())
    throw ShapeError("reverse_step: Zt and xi shapes differ");
  const double beta = sched.beta[t - 1];
  const double abar = sched.alpha_bar[t];
  Mat<S> eps_pred = model(zt, t);
  Mat<S> mu = (zt - static_cast<S>(beta / std::sqrt(1.0 - abar)) * eps_pred) *
              static_cast<S>(1.0 / std::sqrt(1.0 - beta));
  if (t == 1) return mu;
  return mu + static_cast<S>(std::sqrt(sched.posterior_var[t - 1])) * xi;
}

// Deterministic-start reconstruction: begin at Z_{T_rec} := Z0 (no forward
// noise) and walk the reverse chain down to t = 1.
template <typename S, typename Model>
Mat<S> reconstruct(const Mat<S>& z0, int t_rec, Model&& model,
                   const NoiseSchedule& sched, std::uint64_t seed) {
  sched.check_t(t_rec);
  Rng rng(seed);
  Mat<S> z = z0;
  Mat<S> xi(z0.rows(), z0.cols());
  for (int t = t_rec; t >= 1; --t) {
    if (t > 1)
      rng.fill_normal(xi);
    else
      xi.setZero();
    z = reverse_step(z, t, model, sched, xi);
  }
  return z;
}

}  // namespace wd
