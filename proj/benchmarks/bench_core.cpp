#include <benchmark/benchmark.h>

#include <random>

#include "surfgest/detect.hpp"
#include "surfgest/dsp.hpp"
#include "surfgest/model.hpp"
#include "surfgest/synth.hpp"

using namespace surfgest;

namespace {

SampleBlock noise(std::size_t channels, std::size_t length) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  SampleBlock b(channels, length);
  for (auto& v : b.data) v = d(rng);
  return b;
}

void BM_FilterBlock(benchmark::State& state) {
  const auto cascade = dsp::design_bandpass({225.0, 375.0, 1000.0});
  const auto input = noise(4, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dsp::filter_block(cascade, input));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_FilterBlock)->Arg(1000)->Arg(120000);

void BM_StreamFilterChunks(benchmark::State& state) {
  const auto cascade = dsp::design_bandpass({225.0, 375.0, 1000.0});
  const auto chunk = noise(4, static_cast<std::size_t>(state.range(0)));
  dsp::StreamFilter f(cascade, 4);
  auto work = chunk;
  for (auto _ : state) {
    work = chunk;
    f.process_inplace(work);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_StreamFilterChunks)->Arg(10)->Arg(100);

void BM_DetectSession(benchmark::State& state) {
  synth::SynthConfig cfg;
  cfg.seed = 3;
  const auto [rec, truth] = synth::generate_session(cfg, 1, 1);
  const detect::DetectorConfig dcfg;
  for (auto _ : state) benchmark::DoNotOptimize(detect::detect_events(rec.samples, rec.sample_rate_hz, dcfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rec.samples.length));
}
BENCHMARK(BM_DetectSession)->Unit(benchmark::kMillisecond);

model::SepCnnConfig best_config() {
  model::SepCnnConfig c;
  c.in_channels = 4;
  c.input_length = 1250;
  c.num_blocks = 6;
  c.block_width = 32;
  c.kernel_size = 15;
  return c;
}

std::vector<float> batch_input(std::size_t n, const model::SepCnnConfig& c) {
  const auto b = noise(1, n * c.in_channels * c.input_length);
  return b.data;
}

void BM_ModelPredict(benchmark::State& state) {
  const auto cfg = best_config();
  const auto net = model::SepCnn<float>::build(cfg, 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = batch_input(n, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x, n));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelPredict)->Arg(1)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_ModelLossAndGrad(benchmark::State& state) {
  const auto cfg = best_config();
  auto net = model::SepCnn<float>::build(cfg, 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = batch_input(n, cfg);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % cfg.num_classes);
  std::vector<float> grad(net.count_parameters());
  std::mt19937_64 rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(net.loss_and_grad(x, y, grad, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelLossAndGrad)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
