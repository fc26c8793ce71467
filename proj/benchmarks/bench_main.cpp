#include <benchmark/benchmark.h>

#include "flowsr/analysis.hpp"
#include "flowsr/infer.hpp"
#include "flowsr/model.hpp"
#include "flowsr/ops.hpp"
#include "flowsr/train.hpp"

using flowsr::ModelConfig;
using flowsr::Rng;
using flowsr::SrFlowModel;
using flowsr::Tensor;

namespace {

ModelConfig compact_config() {
    ModelConfig cfg;
    cfg.flow_steps_g = 3;
    cfg.flow_steps_h = 3;
    cfg.st_hidden = 16;
    cfg.encoder_channels = 16;
    cfg.encoder_blocks = 2;
    return cfg;
}

void bm_conv3d(benchmark::State& state) {
    Rng rng(1);
    const Tensor x = rng.normal_tensor({8, 8, 8, 8});
    const Tensor w = rng.normal_tensor({8, 8, 3, 3, 3}, 0.1);
    const Tensor b = rng.normal_tensor({8}, 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(flowsr::conv3d(x, w, b, 1));
}
BENCHMARK(bm_conv3d)->Unit(benchmark::kMillisecond);

void bm_flow_forward(benchmark::State& state) {
    SrFlowModel model(compact_config(), 2);
    model.set_actnorm_initialized(true);
    Rng rng(3);
    const Tensor x = rng.normal_tensor({1, 16, 16, 16});
    for (auto _ : state) benchmark::DoNotOptimize(model.to_latent(x));
}
BENCHMARK(bm_flow_forward)->Unit(benchmark::kMillisecond);

void bm_flow_inverse(benchmark::State& state) {
    SrFlowModel model(compact_config(), 4);
    model.set_actnorm_initialized(true);
    Rng rng(5);
    const Tensor x = rng.normal_tensor({1, 16, 16, 16});
    const SrFlowModel::LatentState st = model.to_latent(x);
    for (auto _ : state) benchmark::DoNotOptimize(model.from_latent(st.z0, st.z_l));
}
BENCHMARK(bm_flow_inverse)->Unit(benchmark::kMillisecond);

void bm_train_step(benchmark::State& state) {
    SrFlowModel model(compact_config(), 6);
    Rng rng(7);
    std::vector<Tensor> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(rng.normal_tensor({1, 16, 16, 16}));
    model.init_actnorm(batch);
    Tensor vol = rng.normal_tensor({1, 32, 32, 32});
    Rng sampler(8);
    const std::vector<flowsr::BlockPair> pairs =
        flowsr::sample_block_pairs(vol, 0, 4, 16, sampler);
    for (auto _ : state) {
        benchmark::DoNotOptimize(flowsr::total_loss_backward(model, pairs, 1.0));
        model.zero_grads();
    }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

void bm_generate_tile(benchmark::State& state) {
    SrFlowModel model(compact_config(), 9);
    model.set_actnorm_initialized(true);
    Rng rng(10);
    const Tensor y = rng.normal_tensor({1, 12, 12, 12});  // core 8 plus a 2-wide halo
    const Tensor eps = rng.normal_tensor({4, 12, 12, 12});
    for (auto _ : state) benchmark::DoNotOptimize(model.generate(y, eps));
}
BENCHMARK(bm_generate_tile)->Unit(benchmark::kMillisecond);

void bm_crossing_cell(benchmark::State& state) {
    std::vector<double> mean(8, 0.0);
    std::vector<double> cov(64, 0.0);
    for (int i = 0; i < 8; ++i) cov[i * 8 + i] = 1.0;
    Rng rng(11);
    for (auto _ : state)
        benchmark::DoNotOptimize(flowsr::cell_crossing_probability(mean, cov, 0.0, 500, rng));
}
BENCHMARK(bm_crossing_cell)->Unit(benchmark::kMicrosecond);

void bm_trilinear_2x(benchmark::State& state) {
    Rng rng(12);
    const Tensor x = rng.normal_tensor({1, 32, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(flowsr::trilinear_upsample(x, 2));
}
BENCHMARK(bm_trilinear_2x)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
