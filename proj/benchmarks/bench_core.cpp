#include <benchmark/benchmark.h>

#include "maes/model.hpp"
#include "maes/rng.hpp"
#include "maes/trainer.hpp"

using namespace maes;

namespace {

MaesAssembly serial_assembly() {
  AssemblyConfig cfg;
  cfg.solvers = {SolverSpec::for_task(TaskId::SerialRecall)};
  return MaesAssembly(cfg);
}

void BM_MemoryWrite(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  auto rng = make_rng(1, "bench-write");
  Tape tp(false);
  const Var m = tp.constant(Tensor::zeros(n, 10));
  const Var w = tp.constant(Tensor::one_hot(n, n / 2));
  const Var e = tp.constant(Tensor::full(10, 0.5));
  const Var a = tp.constant(Tensor::full(10, 0.25));
  for (auto _ : state) {
    benchmark::DoNotOptimize(memory_write(tp, m, w, e, a));
  }
}
BENCHMARK(BM_MemoryWrite)->Arg(30)->Arg(1024);

void BM_AttentionUpdate(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const ShiftKernel kernel = ShiftKernel::centered(1);
  Tape tp(false);
  const Var w = tp.constant(Tensor::one_hot(n, n / 2));
  const Var s = tp.constant(Tensor::vector({0.01, 0.01, 0.98}));
  const Var gamma = tp.constant(Tensor::scalar(20.0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        attention_sharpen(tp, attention_shift(tp, w, s, kernel), gamma));
  }
}
BENCHMARK(BM_AttentionUpdate)->Arg(30)->Arg(1024);

void BM_EncodeRollout(benchmark::State& state) {
  const std::size_t length = static_cast<std::size_t>(state.range(0));
  const std::size_t memory = static_cast<std::size_t>(state.range(1));
  const MaesAssembly assembly = serial_assembly();
  ParameterStore store;
  assembly.init_params(store, 7);
  GenConfig gen;
  gen.len_min = length;
  gen.len_max = length;
  auto rng = make_rng(2, "bench-encode");
  const TaskSample sample = generate_with_length(TaskId::SerialRecall, length, gen, rng);
  for (auto _ : state) {
    Tape tp(false);
    benchmark::DoNotOptimize(encode_bytes(tp, store, assembly, sample.main, memory));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * length));
}
BENCHMARK(BM_EncodeRollout)->Args({20, 30})->Args({1000, 1024});

void BM_TrainingIteration(benchmark::State& state) {
  const MaesAssembly assembly = serial_assembly();
  ParameterStore store;
  assembly.init_params(store, 9);
  GenConfig gen;
  auto rng = make_rng(3, "bench-train");
  AdamOptimizer optimizer(store, OptimConfig{});
  for (auto _ : state) {
    const TaskSample sample = generate(TaskId::SerialRecall, gen, rng);
    Tape tp;
    const ForwardResult fwd = full_forward(tp, store, assembly, "serial", sample, 30);
    const Var loss =
        bce_with_logits(tp, fwd.logits, flat_target_bits(sample), flat_mask_bits(sample));
    tp.backward(loss, store);
    optimizer.step();
  }
}
BENCHMARK(BM_TrainingIteration);

void BM_GeneralizationSample(benchmark::State& state) {
  const std::size_t length = static_cast<std::size_t>(state.range(0));
  const MaesAssembly assembly = serial_assembly();
  ParameterStore store;
  assembly.init_params(store, 11);
  GenConfig gen;
  gen.len_min = length;
  gen.len_max = length;
  auto rng = make_rng(4, "bench-eval");
  const TaskSample sample = generate_with_length(TaskId::SerialRecall, length, gen, rng);
  const std::size_t memory = length + 24;
  for (auto _ : state) {
    Tape tp(false);
    benchmark::DoNotOptimize(full_forward(tp, store, assembly, "serial", sample, memory));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * length));
}
BENCHMARK(BM_GeneralizationSample)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
