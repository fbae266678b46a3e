#include <benchmark/benchmark.h>

#include "lmadapt/model.hpp"
#include "lmadapt/quant.hpp"
#include "lmadapt/rng.hpp"
#include "lmadapt/tensor.hpp"

using namespace lmadapt;

namespace {

Tensor random_f32(std::vector<int64_t> shape, uint64_t seed) {
    Tensor t(Dtype::F32, std::move(shape));
    fill_normal(t, RandomStream(seed), 0.0, 1.0);
    return t;
}

void BM_matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    Tensor a = random_f32({n, n}, 1), b = random_f32({n, n}, 2);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.raw());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_forward(benchmark::State& state) {
    ModelConfig cfg;
    cfg.vocab_size = 128;
    cfg.d_model = 64;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.head_dim = 16;
    cfg.d_ff = 128;
    cfg.max_seq = 128;
    TinyLM model = init_params(cfg, 0);
    std::vector<int32_t> tokens(static_cast<size_t>(state.range(0)));
    for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<int32_t>(i % 128);
    for (auto _ : state) {
        Tensor logits = forward(model, tokens);
        benchmark::DoNotOptimize(logits.raw());
    }
}
BENCHMARK(BM_forward)->Arg(16)->Arg(64);

void BM_int4_rtn(benchmark::State& state) {
    Tensor w = random_f32({256, 256}, 3);
    for (auto _ : state) {
        QuantizedTensor q = quant_int4_rtn(w, 128);
        benchmark::DoNotOptimize(q.qdata.raw());
    }
}
BENCHMARK(BM_int4_rtn);

void BM_gptq(benchmark::State& state) {
    Tensor w = random_f32({64, 64}, 4);
    Tensor x = random_f32({64, 128}, 5);
    Tensor h = hessian_from_calib(x, 0.01);
    for (auto _ : state) {
        QuantizedTensor q = gptq_quant(w, h, 64);
        benchmark::DoNotOptimize(q.qdata.raw());
    }
}
BENCHMARK(BM_gptq);

void BM_fp8_roundtrip(benchmark::State& state) {
    Tensor w = random_f32({512, 512}, 6);
    for (auto _ : state) {
        Tensor y = fp8_fakequant(w);
        benchmark::DoNotOptimize(y.raw());
    }
}
BENCHMARK(BM_fp8_roundtrip);

}  // namespace

BENCHMARK_MAIN();
