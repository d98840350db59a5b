// Microbenchmarks for the hot paths: encoding, denoiser forward, scoring,
// and one full training step.

#include "waferdiff/scoring.hpp"
#include "waferdiff/trainer.hpp"

#include <benchmark/benchmark.h>

namespace {

wd::CodecConfig codec_cfg(int input_dim) {
  wd::CodecConfig c;
  c.input_dim = input_dim;
  c.hidden_dim = 128;
  c.latent_dim = 128;
  c.channels = 4;
  return c;
}

wd::DitConfig dit_cfg() {
  wd::DitConfig c;  // library defaults: d=256, depth 3, heads 4, p=2
  c.channels = 4;
  c.seq_len = 32;
  return c;
}

void bench_codec_encode(benchmark::State& state) {
  const int f = 256;
  const auto rows = static_cast<wd::Index>(state.range(0));
  wd::Rng rng(1);
  wd::Codec<float> codec = wd::Codec<float>::init(codec_cfg(f), rng);
  wd::MatF x(rows, f);
  rng.fill_normal(x);
  for (auto _ : state) benchmark::DoNotOptimize(codec.encode(x));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(bench_codec_encode)->Arg(64)->Arg(1024);

void bench_dit_forward(benchmark::State& state) {
  const auto rows = static_cast<wd::Index>(state.range(0));
  wd::Rng rng(2);
  wd::Dit1d<float> model = wd::Dit1d<float>::init(dit_cfg(), rng);
  wd::MatF zt(rows, model.cfg.flat_dim());
  rng.fill_normal(zt);
  std::vector<int> ts(static_cast<std::size_t>(rows), 250);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(zt, ts));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(bench_dit_forward)->Arg(1)->Arg(64)->Arg(256);

void bench_anomaly_score(benchmark::State& state) {
  wd::Rng rng(3);
  wd::Dit1d<float> model = wd::Dit1d<float>::init(dit_cfg(), rng);
  const wd::NoiseSchedule sched = wd::cosine_schedule(1000);
  const wd::EvalGrid grid;
  wd::MatF z0(1, model.cfg.flat_dim());
  rng.fill_normal(z0);
  for (auto _ : state) {
    wd::Rng dev_rng(wd::mix_seed(42, 0));
    benchmark::DoNotOptimize(
        wd::anomaly_score(model, z0, sched, grid, dev_rng));
  }
}
BENCHMARK(bench_anomaly_score);

void bench_train_step(benchmark::State& state) {
  const auto rows = static_cast<wd::Index>(state.range(0));
  wd::Rng rng(4);
  wd::Dit1d<float> model = wd::Dit1d<float>::init(dit_cfg(), rng);
  const wd::NoiseSchedule sched = wd::cosine_schedule(1000);
  wd::MatF z0(rows, model.cfg.flat_dim());
  rng.fill_normal(z0);
  std::vector<wd::ParamRef<float>> params;
  model.collect(params, "dit");
  wd::AdamW<float> opt(params, 1e-4, 5e-4);
  wd::Rng step_rng(5);
  std::vector<int> ts(static_cast<std::size_t>(rows));
  wd::MatF eps(rows, model.cfg.flat_dim());
  for (auto _ : state) {
    for (auto& t : ts) t = 1 + static_cast<int>(step_rng.below(1000));
    step_rng.fill_normal(eps);
    wd::MatF zt = wd::forward_sample_rows(z0, ts, eps, sched);
    typename wd::Dit1d<float>::Cache cache;
    wd::MatF pred = model.forward(zt, ts, &cache);
    wd::MatF d_pred =
        (pred - eps) * static_cast<float>(2.0 / static_cast<double>(pred.size()));
    model.zero_grad();
    benchmark::DoNotOptimize(model.backward(cache, d_pred));
    opt.step(params);
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(bench_train_step)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
