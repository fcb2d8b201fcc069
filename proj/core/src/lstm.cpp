#include "maes/lstm.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>

#include "maes/rng.hpp"

namespace maes {

void LstmConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("LstmConfig: layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("LstmConfig: hidden must be >= 1");
  train.validate();
  if (curriculum_start < train.gen.len_min) {
    throw std::invalid_argument("LstmConfig: curriculum_start below len_min");
  }
}

namespace {

std::string layer_key(std::size_t l, const char* suffix) {
  return "lstm.l" + std::to_string(l) + "." + suffix;
}

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

std::size_t LstmModel::param_count() const {
  std::size_t n = 0;
  std::size_t in = input_width();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    n += 4 * cfg.hidden * (in + cfg.hidden) + 4 * cfg.hidden;
    in = cfg.hidden;
  }
  n += output_bits * cfg.hidden + output_bits;
  return n;
}

void LstmModel::init_params(ParameterStore& store, std::uint64_t seed) const {
  auto rng = make_rng(seed, "lstm-init");
  std::size_t in = input_width();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    store.add(layer_key(l, "W"), "lstm", uniform_matrix(4 * cfg.hidden, in + cfg.hidden, rng));
    Tensor b = Tensor::zeros(4 * cfg.hidden);
    // forget-gate bias starts at 1 so early training retains state
    for (std::size_t i = cfg.hidden; i < 2 * cfg.hidden; ++i) b[i] = 1.0;
    store.add(layer_key(l, "b"), "lstm", std::move(b));
    in = cfg.hidden;
  }
  store.add("lstm.W_out", "lstm", uniform_matrix(output_bits, cfg.hidden, rng));
  store.add("lstm.b_out", "lstm", Tensor::zeros(output_bits));
}

LstmVars bind_lstm(Tape& tp, ParameterStore& store, const LstmModel& model) {
  LstmVars v;
  for (std::size_t l = 0; l < model.cfg.layers; ++l) {
    v.w.push_back(tp.param(store, layer_key(l, "W")));
    v.b.push_back(tp.param(store, layer_key(l, "b")));
  }
  v.w_out = tp.param(store, "lstm.W_out");
  v.b_out = tp.param(store, "lstm.b_out");
  return v;
}

LstmState lstm_initial_state(Tape& tp, const LstmModel& model) {
  LstmState st;
  for (std::size_t l = 0; l < model.cfg.layers; ++l) {
    st.h.push_back(tp.constant(Tensor::zeros(model.cfg.hidden)));
    st.c.push_back(tp.constant(Tensor::zeros(model.cfg.hidden)));
  }
  return st;
}

Var lstm_step(Tape& tp, const LstmModel& model, const LstmVars& vars, const Var& x,
              LstmState& state) {
  const std::size_t H = model.cfg.hidden;
  Var layer_in = x;
  for (std::size_t l = 0; l < model.cfg.layers; ++l) {
    const std::array<Var, 2> parts{layer_in, state.h[l]};
    const Var z = add(tp, matvec(tp, vars.w[l], concat(tp, parts)), vars.b[l]);
    const Var gate_in = sigmoid(tp, slice(tp, z, 0, H));
    const Var gate_forget = sigmoid(tp, slice(tp, z, H, H));
    const Var candidate = tanh_op(tp, slice(tp, z, 2 * H, H));
    const Var gate_out = sigmoid(tp, slice(tp, z, 3 * H, H));

    const Var c_new =
        add(tp, mul(tp, gate_forget, state.c[l]), mul(tp, gate_in, candidate));
    const Var h_new = mul(tp, gate_out, tanh_op(tp, c_new));
    state.c[l] = c_new;
    state.h[l] = h_new;
    layer_in = h_new;
  }
  return add(tp, matvec(tp, vars.w_out, layer_in), vars.b_out);
}

namespace {

Tensor framed_input(const Tensor& bits, bool solve_phase, std::size_t input_bits) {
  Tensor x = Tensor::zeros(input_bits + 1);
  for (std::size_t i = 0; i < bits.size(); ++i) x[i] = bits[i];
  x[input_bits] = solve_phase ? 1.0 : 0.0;
  return x;
}

Var lstm_forward_sample(Tape& tp, const LstmModel& model, ParameterStore& store,
                        const TaskSample& sample) {
  const LstmVars vars = bind_lstm(tp, store, model);
  LstmState st = lstm_initial_state(tp, model);
  const Tensor zero_bits = Tensor::zeros(model.input_bits);

  for (std::uint8_t item : sample.main) {
    const Var x = tp.constant(framed_input(item_bits(item), false, model.input_bits));
    lstm_step(tp, model, vars, x, st);
  }
  std::vector<Var> step_logits;
  step_logits.reserve(sample.steps());
  for (std::size_t t = 0; t < sample.steps(); ++t) {
    const Tensor bits = sample.aux ? item_bits((*sample.aux)[t]) : zero_bits;
    const Var x = tp.constant(framed_input(bits, true, model.input_bits));
    step_logits.push_back(lstm_step(tp, model, vars, x, st));
  }
  return concat(tp, step_logits);
}

struct LstmValResult {
  double accuracy = 0.0;
};

LstmValResult lstm_validate(const LstmModel& model, ParameterStore& store, TaskId task,
                            std::size_t batch, std::size_t length, std::uint64_t seed) {
  auto rng = make_rng(seed, "lstm-validate");
  GenConfig gen;
  gen.len_min = length;
  gen.len_max = length;
  std::size_t correct = 0, total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const TaskSample sample = generate_with_length(task, length, gen, rng);
    Tape tp(/*recording=*/false);
    const Var logits = lstm_forward_sample(tp, model, store, sample);
    const BitScore s = score_logits(logits.value(), sample);
    correct += s.correct;
    total += s.total;
  }
  LstmValResult r;
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

}  // namespace

double lstm_eval_accuracy(const LstmModel& model, ParameterStore& store,
                          const LstmEvalOptions& eval) {
  std::size_t correct = 0, total = 0;
  GenConfig gen;
  gen.len_min = eval.length;
  gen.len_max = eval.length;
  for (std::size_t b = 0; b < eval.batch_count; ++b) {
    auto rng = make_rng(eval.seed, "lstm-eval-batch", b);
    for (std::size_t i = 0; i < eval.batch_size; ++i) {
      const TaskSample sample = generate_with_length(model.cfg.task, eval.length, gen, rng);
      Tape tp(/*recording=*/false);
      const Var logits = lstm_forward_sample(tp, model, store, sample);
      const BitScore s = score_logits(logits.value(), sample);
      correct += s.correct;
      total += s.total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

LstmTrainResult train_lstm_baseline(const LstmConfig& cfg, const LstmEvalOptions& eval) {
  cfg.validate();
  LstmModel model;
  model.cfg = cfg;
  model.input_bits = 8;
  model.output_bits = task_target_width(cfg.task);

  ParameterStore store;
  model.init_params(store, cfg.train.seed);
  AdamOptimizer optimizer(store, cfg.train.optim);

  std::ofstream csv;
  if (!cfg.train.metrics_csv.empty()) {
    csv.open(cfg.train.metrics_csv);
    if (!csv) throw std::runtime_error("cannot open metrics csv: " + cfg.train.metrics_csv);
    csv << "iteration,loss,ema,val_loss,val_acc,wall_ms\n";
  }

  auto rng = make_rng(cfg.train.seed, "lstm-train");
  const double ema_decay = std::exp2(-1.0 / cfg.train.ema_half_life);
  double ema = 0.0;
  bool ema_init = false;

  std::size_t cap = std::min(cfg.curriculum_start, cfg.train.gen.len_max);
  double last_val_accuracy = 0.0;

  LstmTrainResult result;
  TrainReport& report = result.report;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0]() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  for (std::size_t iter = 1; iter <= cfg.train.max_iters; ++iter) {
    const std::size_t length =
        std::uniform_int_distribution<std::size_t>(cfg.train.gen.len_min, cap)(rng);

    Tape tp;
    std::vector<Var> losses;
    losses.reserve(cfg.train.batch_size);
    for (std::size_t b = 0; b < cfg.train.batch_size; ++b) {
      const TaskSample sample = generate_with_length(cfg.task, length, cfg.train.gen, rng);
      const Var logits = lstm_forward_sample(tp, model, store, sample);
      losses.push_back(
          bce_with_logits(tp, logits, flat_target_bits(sample), flat_mask_bits(sample)));
    }
    const Var loss = mean_of(tp, losses);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      throw TrainingDiverged(iter, "non-finite LSTM loss");
    }

    tp.backward(loss, store);
    optimizer.step();

    ema = ema_init ? ema_decay * ema + (1.0 - ema_decay) * loss_value : loss_value;
    ema_init = true;
    if (cfg.train.record_curves) report.loss_curve.push_back(loss_value);

    bool validated = false;
    if (cfg.train.validate_every > 0 && iter % cfg.train.validate_every == 0) {
      const LstmValResult val = lstm_validate(model, store, cfg.task, cfg.train.val_batch,
                                              cap, derive_seed(cfg.train.seed, "val", iter));
      last_val_accuracy = val.accuracy;
      validated = true;
      report.validation_curve.push_back({iter, 0.0, val.accuracy});
      if (val.accuracy >= cfg.curriculum_accuracy && cap < cfg.train.gen.len_max) {
        cap = std::min(cap + cfg.curriculum_step, cfg.train.gen.len_max);
      }
    }

    if (csv.is_open()) {
      csv << iter << ',' << loss_value << ',' << ema << ',';
      if (validated) csv << ',' << last_val_accuracy;
      else csv << ',';
      csv << ',' << wall_ms() << '\n';
    }

    report.iterations = iter;
    report.final_ema = ema;
    report.final_loss = loss_value;
    if (ema <= cfg.train.threshold) {
      report.converged = true;
      break;
    }
  }
  report.wall_ms = wall_ms();

  result.param_count = store.total_scalar_count();
  result.eval_length = eval.length;
  result.generalization_accuracy = lstm_eval_accuracy(model, store, eval);
  result.final_curriculum_cap = cap;
  result.final_curriculum_accuracy = last_val_accuracy;
  return result;
}

}  // namespace maes
