#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "maes/lstm.hpp"
#include "maes/rng.hpp"

using namespace maes;
using maes::testing::random_tensor;

namespace {

LstmModel tiny_model(std::size_t layers = 1, std::size_t hidden = 4) {
  LstmModel m;
  m.cfg.layers = layers;
  m.cfg.hidden = hidden;
  m.cfg.task = TaskId::SerialRecall;
  m.input_bits = 8;
  m.output_bits = 8;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("lstm");

TEST_CASE("lstm_step") {
  SUBCASE("zero parameters and state give zero cell and hidden") {
    const LstmModel model = tiny_model();
    ParameterStore store;
    model.init_params(store, 1);
    for (auto& e : store.entries()) e.value.fill(0.0);
    Tape tp;
    const LstmVars vars = bind_lstm(tp, store, model);
    LstmState st = lstm_initial_state(tp, model);
    lstm_step(tp, model, vars, tp.constant(Tensor::zeros(9)), st);
    for (double v : st.c[0].value().data()) CHECK(v == 0.0);
    for (double v : st.h[0].value().data()) CHECK(v == 0.0);
  }
  SUBCASE("saturated forget gate and closed input gate preserve the cell") {
    const LstmModel model = tiny_model();
    ParameterStore store;
    model.init_params(store, 1);
    for (auto& e : store.entries()) e.value.fill(0.0);
    Tensor& b = store.value("lstm.l0.b");
    const std::size_t H = model.cfg.hidden;
    for (std::size_t i = 0; i < H; ++i) b[i] = -20.0;           // input gate shut
    for (std::size_t i = H; i < 2 * H; ++i) b[i] = 20.0;        // forget gate open

    Tape tp;
    const LstmVars vars = bind_lstm(tp, store, model);
    LstmState st = lstm_initial_state(tp, model);
    st.c[0] = tp.constant(Tensor::vector({0.3, -0.6, 0.9, 0.05}));
    const Tensor before = st.c[0].value();
    lstm_step(tp, model, vars, tp.constant(Tensor::zeros(9)), st);
    lstm_step(tp, model, vars, tp.constant(Tensor::zeros(9)), st);
    for (std::size_t i = 0; i < H; ++i) {
      CHECK(st.c[0].value()[i] == doctest::Approx(before[i]).epsilon(1e-7));
    }
  }
  SUBCASE("random instance matches the gate-equation oracle") {
    const LstmModel model = tiny_model();
    ParameterStore store;
    model.init_params(store, 7);
    auto rng = make_rng(2, "lstm-oracle");
    const Tensor x = random_tensor(9, rng, 0.0, 1.0);

    Tape tp;
    const LstmVars vars = bind_lstm(tp, store, model);
    LstmState st = lstm_initial_state(tp, model);
    const Tensor h_prev = random_tensor(4, rng, -0.5, 0.5);
    const Tensor c_prev = random_tensor(4, rng, -0.5, 0.5);
    st.h[0] = tp.constant(h_prev);
    st.c[0] = tp.constant(c_prev);
    lstm_step(tp, model, vars, tp.constant(x), st);

    const Tensor& W = store.value("lstm.l0.W");
    const Tensor& b = store.value("lstm.l0.b");
    std::vector<double> in;
    for (double v : x.data()) in.push_back(v);
    for (double v : h_prev.data()) in.push_back(v);
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    for (std::size_t i = 0; i < 4; ++i) {
      auto pre = [&](std::size_t gate) {
        double z = b[gate * 4 + i];
        for (std::size_t j = 0; j < in.size(); ++j) z += W.at(gate * 4 + i, j) * in[j];
        return z;
      };
      const double gi = sig(pre(0));
      const double gf = sig(pre(1));
      const double gc = std::tanh(pre(2));
      const double go = sig(pre(3));
      const double c = gf * c_prev[i] + gi * gc;
      CHECK(st.c[0].value()[i] == doctest::Approx(c).epsilon(1e-12));
      CHECK(st.h[0].value()[i] == doctest::Approx(go * std::tanh(c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("lstm gradients match finite differences") {
  const LstmModel model = tiny_model(2, 3);
  ParameterStore store;
  model.init_params(store, 11);
  auto rng = make_rng(3, "lstm-grad");
  const Tensor x1 = random_tensor(9, rng, 0.0, 1.0);
  const Tensor x2 = random_tensor(9, rng, 0.0, 1.0);
  const Tensor target = Tensor::vector({1, 0, 1, 0, 0, 1, 1, 0});

  auto build = [&](Tape& tp, ParameterStore& ps) {
    const LstmVars vars = bind_lstm(tp, ps, model);
    LstmState st = lstm_initial_state(tp, model);
    lstm_step(tp, model, vars, tp.constant(x1), st);
    const Var logits = lstm_step(tp, model, vars, tp.constant(x2), st);
    return bce_with_logits(tp, logits, target, Tensor::full(8, 1.0));
  };
  const auto result = maes::testing::check_gradients(build, store);
  INFO(result.worst);
  CHECK(result.ok);
}

TEST_CASE("parameter counts grow with hidden size and dwarf the MAES budget") {
  LstmModel small = tiny_model(2, 32);
  LstmModel desk = tiny_model(2, 128);
  CHECK(desk.param_count() > small.param_count());
  CHECK(desk.param_count() > 2000);

  ParameterStore store;
  desk.init_params(store, 1);
  CHECK(store.total_scalar_count() == desk.param_count());
}

TEST_CASE("short smoke training declines from ln 2") {
  LstmConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 16;
  cfg.task = TaskId::SerialRecall;
  cfg.train.max_iters = 60;
  cfg.train.validate_every = 0;
  cfg.train.gen.len_min = 2;
  cfg.train.gen.len_max = 4;
  cfg.curriculum_start = 2;
  cfg.train.seed = 5;
  LstmEvalOptions eval;
  eval.length = 12;
  eval.batch_size = 4;
  eval.batch_count = 2;
  const LstmTrainResult r = train_lstm_baseline(cfg, eval);
  CHECK(r.report.iterations == 60);
  CHECK(r.report.final_ema < std::log(2.0) + 0.05);
  CHECK(r.generalization_accuracy > 0.2);
  CHECK(r.generalization_accuracy < 0.8);
}

TEST_SUITE_END();
