#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "maes/model.hpp"
#include "maes/rng.hpp"

using namespace maes;

namespace {

AssemblyConfig single_task_config(TaskId task) {
  AssemblyConfig cfg;
  cfg.solvers = {SolverSpec::for_task(task)};
  return cfg;
}

// Forces deterministic hard behavior: shift +1 every step, sharp attention,
// no erase, add-vector = e_0. Controller weights all zero, so recurrent
// dynamics stay inert and only the interface biases matter.
void craft_hard_shifter(ParameterStore& store, const std::string& prefix, bool writer) {
  const double big = 40.0;
  for (auto& e : store.entries()) {
    if (e.group == prefix) e.value.fill(0.0);
  }
  Tensor& bp = store.value(prefix + ".b_p");
  std::size_t pos = 0;
  if (writer) {
    bp[0] = big;  // add vector ~ [1, 0, ...]
    pos = 10;
    for (std::size_t j = 0; j < 10; ++j) bp[pos + j] = -big;  // erase ~ 0
    pos = 20;
  }
  bp[pos + 2] = big;      // shift distribution ~ one-hot at +1
  bp[pos + 3] = big;      // gamma ~ 41, extremely sharp
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("task defaults") {
  CHECK(default_handoff(TaskId::ReverseRecall) == HandoffMode::AttentionAtEnd);
  CHECK(default_handoff(TaskId::SerialRecall) == HandoffMode::AttentionAtStart);
  CHECK(default_handoff(TaskId::OddRecall) == HandoffMode::AttentionAtStart);
  CHECK(default_shift_radius(TaskId::OddRecall) == 2);
  CHECK(default_shift_radius(TaskId::Equality) == 1);
  CHECK(default_output_spec(TaskId::Comparison).kind == OutputSpec::Kind::Mlp);
  CHECK(default_output_spec(TaskId::SerialRecall).kind == OutputSpec::Kind::Linear);
}

TEST_CASE("encode") {
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 17);

  SUBCASE("empty sequence leaves the initial state") {
    Tape tp(false);
    const EncodeResult enc = encode(tp, store, assembly, {}, 12);
    CHECK(enc.attention_history.empty());
    for (double v : enc.memory.contents.value().data()) CHECK(v == 0.0);
    CHECK(enc.memory.attention.value()[0] == 1.0);
  }
  SUBCASE("single item writes only where the first attention has mass") {
    Tape tp(false);
    std::vector<std::uint8_t> seq{0xff};
    const EncodeResult enc = encode_bytes(tp, store, assembly, seq, 12);
    REQUIRE(enc.attention_history.size() == 1);
    const Tensor& w1 = enc.attention_history[0];
    const Tensor& mem = enc.memory.contents.value();
    for (std::size_t i = 0; i < 12; ++i) {
      double row_mag = 0.0;
      for (std::size_t j = 0; j < 10; ++j) row_mag = std::max(row_mag, std::abs(mem.at(i, j)));
      if (w1[i] < 1e-15) CHECK(row_mag < 1e-12);
    }
  }
  SUBCASE("non-binary input is rejected") {
    Tape tp(false);
    const std::vector<Tensor> bad{Tensor::full(8, 0.25)};
    CHECK_THROWS_AS(encode(tp, store, assembly, bad, 12), std::invalid_argument);
  }
  SUBCASE("wrong item width is rejected") {
    Tape tp(false);
    const std::vector<Tensor> bad{Tensor::zeros(7)};
    CHECK_THROWS_AS(encode(tp, store, assembly, bad, 12), std::invalid_argument);
  }
}

TEST_CASE("write uses the newly computed attention, read the previous one") {
  // Crafted encoder: shift +1 each step, no erase, add = e_0. Starting from
  // one-hot(0), step t writes at address t; address 0 stays empty because
  // the write happens after the attention moves.
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 1);
  craft_hard_shifter(store, "encoder", /*writer=*/true);

  Tape tp(false);
  std::vector<std::uint8_t> seq{0x01, 0x01};
  const EncodeResult enc = encode_bytes(tp, store, assembly, seq, 8);
  const Tensor& mem = enc.memory.contents.value();
  CHECK(std::abs(mem.at(0, 0)) < 1e-9);
  CHECK(mem.at(1, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mem.at(2, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(mem.at(3, 0)) < 1e-9);

  // recorded history holds the write attentions
  CHECK(enc.attention_history[0][1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(enc.attention_history[1][2] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("solver reads before shifting, from the handed attention") {
  // Crafted solver: logits = read vector (first 8 components), shift +1.
  // Handing different attention modes pins both the handoff contract and
  // the read-then-shift order.
  AssemblyConfig cfg = single_task_config(TaskId::SerialRecall);
  cfg.solvers[0].handoff = HandoffMode::AttentionAtEnd;
  const MaesAssembly assembly(cfg);
  ParameterStore store;
  assembly.init_params(store, 1);
  craft_hard_shifter(store, "solver.serial", /*writer=*/false);
  Tensor& wy = store.value("solver.serial.W_y");
  for (std::size_t j = 0; j < 8; ++j) wy.at(j, 13 + j) = 1.0;  // logits = r

  Tape tp(false);
  Tensor mem_contents = Tensor::zeros(6, 10);
  for (std::size_t i = 0; i < 6; ++i) mem_contents.at(i, 0) = static_cast<double>(i + 1);
  MemoryState handed{tp.constant(mem_contents), tp.constant(Tensor::one_hot(6, 2))};

  SUBCASE("attention-at-end starts from the encoder's final attention") {
    const SolveResult sol = solve(tp, store, assembly, "serial", handed, {}, 3);
    CHECK(sol.step_logits[0].value()[0] == doctest::Approx(3.0).epsilon(1e-9));  // row 2
    CHECK(sol.step_logits[1].value()[0] == doctest::Approx(4.0).epsilon(1e-9));  // row 3
    CHECK(sol.step_logits[2].value()[0] == doctest::Approx(5.0).epsilon(1e-9));  // row 4
    CHECK(sol.read_attention_history[0][2] == doctest::Approx(1.0));
  }
  SUBCASE("attention-at-start begins at address zero instead") {
    AssemblyConfig cfg2 = cfg;
    cfg2.solvers[0].handoff = HandoffMode::AttentionAtStart;
    const MaesAssembly assembly2(cfg2);
    const SolveResult sol = solve(tp, store, assembly2, "serial", handed, {}, 2);
    CHECK(sol.step_logits[0].value()[0] == doctest::Approx(1.0).epsilon(1e-9));  // row 0
    CHECK(sol.step_logits[1].value()[0] == doctest::Approx(2.0).epsilon(1e-9));  // row 1
  }
}

TEST_CASE("solve argument validation") {
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 3);
  Tape tp(false);
  const MemoryState handed = initial_memory(tp, 8, 10);
  CHECK_THROWS_AS(solve(tp, store, assembly, "serial", handed, {}, 0), std::invalid_argument);
  CHECK_THROWS_AS(solve(tp, store, assembly, "nope", handed, {}, 1), std::invalid_argument);
  const std::vector<std::uint8_t> aux{1, 2, 3};
  CHECK_THROWS_AS(solve(tp, store, assembly, "serial", handed, aux, 2), std::invalid_argument);
}

TEST_CASE("full_forward on an untrained zero model gives ln 2 loss") {
  const MaesAssembly assembly(single_task_config(TaskId::Comparison));
  ParameterStore store;
  assembly.init_params(store, 9);
  for (auto& e : store.entries()) e.value.fill(0.0);

  GenConfig gen;
  auto rng = make_rng(30, "zero-model");
  const TaskSample sample = generate_with_length(TaskId::Comparison, 5, gen, rng);
  Tape tp(false);
  const ForwardResult fwd = full_forward(tp, store, assembly, "comparison", sample, 16);
  for (double v : fwd.logits.value().data()) CHECK(v == 0.0);
  const Var loss =
      bce_with_logits(tp, fwd.logits, flat_target_bits(sample), flat_mask_bits(sample));
  CHECK(loss.value()[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("solver state is isolated from the encoder") {
  // Changing encoder h0 must not affect a solve on a fixed memory; changing
  // the solver's own h0 must.
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 21);

  Tensor mem_contents = Tensor::zeros(6, 10);
  mem_contents.at(1, 2) = 0.7;
  auto run_solver = [&]() {
    Tape tp(false);
    MemoryState handed{tp.constant(mem_contents), tp.constant(Tensor::one_hot(6, 3))};
    return solve(tp, store, assembly, "serial", handed, {}, 2).logits.value();
  };

  const Tensor base = run_solver();
  store.value("encoder.h0").fill(3.0);
  const Tensor after_encoder_change = run_solver();
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == after_encoder_change[i]);

  store.value("solver.serial.h0").fill(3.0);
  const Tensor after_solver_change = run_solver();
  double delta = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    delta = std::max(delta, std::abs(base[i] - after_solver_change[i]));
  }
  CHECK(delta > 0.0);
}

TEST_CASE("parameters transplant across memory sizes") {
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 33);
  GenConfig gen;
  auto rng = make_rng(31, "transplant");
  const TaskSample sample = generate_with_length(TaskId::SerialRecall, 4, gen, rng);

  for (std::size_t n : {30u, 80u, 256u, 1024u}) {
    Tape tp(false);
    CHECK_NOTHROW(full_forward(tp, store, assembly, "serial", sample, n));
  }
}

TEST_CASE("full MAES gradients match finite differences") {
  // L=5 unrolled rollout, N=8, every solver flavor: plain recall
  // (start handoff), reverse (gradient flows through the handed attention)
  // and comparison (aux input + MLP head).
  auto rng = make_rng(55, "full-grad");
  GenConfig gen;

  for (TaskId task : {TaskId::SerialRecall, TaskId::ReverseRecall, TaskId::Comparison}) {
    const MaesAssembly assembly(single_task_config(task));
    ParameterStore store;
    assembly.init_params(store, 101 + static_cast<int>(task));
    const TaskSample sample = generate_with_length(task, 5, gen, rng);
    const std::string solver(task_name(task));

    auto build = [&](Tape& tp, ParameterStore& ps) {
      const ForwardResult fwd = full_forward(tp, ps, assembly, solver, sample, 8);
      return bce_with_logits(tp, fwd.logits, flat_target_bits(sample), flat_mask_bits(sample));
    };
    const auto result = maes::testing::check_gradients(build, store);
    INFO(task_name(task), " worst: ", result.worst);
    CHECK(result.ok);
  }
}

TEST_CASE("solver writes are an explicit opt-in") {
  AssemblyConfig cfg = single_task_config(TaskId::SerialRecall);
  cfg.solver_writes = true;
  const MaesAssembly with_writes(cfg);
  const MaesAssembly without(single_task_config(TaskId::SerialRecall));
  CHECK(with_writes.param_count() > without.param_count());

  ParameterStore store;
  with_writes.init_params(store, 5);
  GenConfig gen;
  auto rng = make_rng(77, "writes");
  const TaskSample sample = generate_with_length(TaskId::SerialRecall, 3, gen, rng);
  Tape tp(false);
  CHECK_NOTHROW(full_forward(tp, store, with_writes, "serial", sample, 10));
}

TEST_CASE("repeated_element_probe") {
  const MaesAssembly assembly(single_task_config(TaskId::SerialRecall));
  ParameterStore store;
  assembly.init_params(store, 41);

  SUBCASE("single write has zero dispersion") {
    CHECK(repeated_element_probe(store, assembly, 0x5a, 1, 16) == 0.0);
  }
  SUBCASE("identical stores give identical statistics") {
    ParameterStore copy;
    assembly.init_params(copy, 41);
    const double a = repeated_element_probe(store, assembly, 0x5a, 12, 32);
    const double b = repeated_element_probe(copy, assembly, 0x5a, 12, 32);
    CHECK(a == b);
  }
}

TEST_SUITE_END();
