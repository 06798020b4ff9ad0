#include <benchmark/benchmark.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randes/harness.hpp"
#include "randes/schema.hpp"
#include "randes/superposition.hpp"
#include "randes/tensor.hpp"
#include "randes/transform.hpp"

using namespace randes;

namespace {

constexpr TransformMode kModes[] = {TransformMode::identity, TransformMode::shuffle,
                                    TransformMode::shift,    TransformMode::rsf,
                                    TransformMode::srsf,     TransformMode::rd};

Architecture bench_arch() {
    Architecture a;
    a.blocks = 4;
    a.width = 64;
    a.input_dim = 32;
    a.output_dim = 8;
    return a;
}

// One mid-size checkpoint family shared by every benchmark.
struct Fixture {
    TensorMap base;
    std::vector<TensorMap> models;
    std::vector<ModelInput> inputs;
    ModelSchema schema;

    Fixture() {
        base = random_lattice_checkpoint(bench_arch(), 1);
        for (uint64_t i = 0; i < 8; ++i) {
            models.push_back(random_lattice_checkpoint(bench_arch(), 2 + i));
        }
        inputs.resize(models.size());
        for (size_t i = 0; i < models.size(); ++i) {
            inputs[i].task_id = "task" + std::to_string(i);
            inputs[i].weights = &models[i];
        }
        schema = parse_schema(base, NamingConvention{});
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

TransformSpec spec_for(TransformMode mode) {
    TransformSpec s;
    s.mode = mode;
    s.global_seed = 42;
    s.model_index = 3;
    return s;
}

void BM_materialize(benchmark::State& state) {
    Fixture& f = fixture();
    TransformMode mode = kModes[state.range(0)];
    for (auto _ : state) {
        benchmark::DoNotOptimize(materialize(spec_for(mode), f.schema));
    }
    state.SetLabel(to_string(mode));
}
BENCHMARK(BM_materialize)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_apply(benchmark::State& state) {
    Fixture& f = fixture();
    TransformMode mode = kModes[state.range(0)];
    MaterializedTransform t = materialize(spec_for(mode), f.schema);
    TensorMap delta = sub(f.models[0], f.base);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply(t, delta));
    }
    state.SetLabel(to_string(mode));
    state.SetItemsProcessed(state.iterations() * delta.total_numel());
}
BENCHMARK(BM_apply)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_apply_inverse(benchmark::State& state) {
    Fixture& f = fixture();
    TransformMode mode = kModes[state.range(0)];
    MaterializedTransform t = materialize(spec_for(mode), f.schema);
    TensorMap transformed = apply(t, sub(f.models[0], f.base));
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_inverse(t, transformed));
    }
    state.SetLabel(to_string(mode));
    state.SetItemsProcessed(state.iterations() * transformed.total_numel());
}
BENCHMARK(BM_apply_inverse)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_compress(benchmark::State& state) {
    Fixture& f = fixture();
    size_t count = static_cast<size_t>(state.range(0));
    StoreConfig cfg;
    cfg.global_seed = 42;
    std::span<const ModelInput> models(f.inputs.data(), count);
    for (auto _ : state) {
        benchmark::DoNotOptimize(compress(f.base, models, cfg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(count) *
                            f.base.total_numel());
}
BENCHMARK(BM_compress)->RangeMultiplier(2)->Range(1, 8)->Unit(benchmark::kMicrosecond);

void BM_retrieve(benchmark::State& state) {
    Fixture& f = fixture();
    StoreConfig cfg;
    cfg.global_seed = 42;
    static SuperpositionStore store = compress(f.base, f.inputs, cfg);
    size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve(store, f.inputs[i % f.inputs.size()].task_id));
        ++i;
    }
    state.SetItemsProcessed(state.iterations() * f.base.total_numel());
}
BENCHMARK(BM_retrieve)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
