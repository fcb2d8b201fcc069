#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maes/trainer.hpp"

namespace maes {

/// Stacked-LSTM sequence baseline. It sees the main sequence during an
/// encode phase and produces outputs during a solve phase (zero or auxiliary
/// inputs), mirroring the MAES phase structure; one extra input bit flags
/// the phase. Hidden state is all the memory it gets.
struct LstmConfig {
  std::size_t layers = 2;        // paper-scale runs use 3
  std::size_t hidden = 128;      // paper-scale runs use 512
  TaskId task = TaskId::SerialRecall;
  TrainConfig train;             // same trainer surface as MAES

  // Simple curriculum: lengths start in [len_min, curriculum_start] and the
  // cap is raised by curriculum_step on validation success at the current
  // cap, up to train.gen.len_max.
  std::size_t curriculum_start = 5;
  std::size_t curriculum_step = 5;
  double curriculum_accuracy = 0.99;

  void validate() const;
};

/// Parameter layout and step function for one stack of LSTM cells plus a
/// linear output layer. Input width is input_bits + 1 (phase flag).
struct LstmModel {
  LstmConfig cfg;
  std::size_t input_bits = 8;
  std::size_t output_bits = 8;

  std::size_t input_width() const { return input_bits + 1; }
  std::size_t param_count() const;
  void init_params(ParameterStore& store, std::uint64_t seed) const;
};

struct LstmVars {
  std::vector<Var> w;  // per layer: [4H x (in + H)]
  std::vector<Var> b;  // per layer: [4H]
  Var w_out, b_out;
};

struct LstmState {
  std::vector<Var> h;
  std::vector<Var> c;
};

LstmVars bind_lstm(Tape& tp, ParameterStore& store, const LstmModel& model);
LstmState lstm_initial_state(Tape& tp, const LstmModel& model);

/// Standard gated update for the whole stack; returns output logits.
/// Gate order within each layer's 4H preactivation: input, forget, cell
/// candidate, output.
Var lstm_step(Tape& tp, const LstmModel& model, const LstmVars& vars, const Var& x,
              LstmState& state);

struct LstmTrainResult {
  TrainReport report;
  std::size_t param_count = 0;
  double generalization_accuracy = 0.0;  // at eval_length below
  std::size_t eval_length = 1000;
  std::size_t final_curriculum_cap = 0;
  double final_curriculum_accuracy = 0.0;
};

struct LstmEvalOptions {
  std::size_t length = 1000;
  std::size_t batch_size = 32;
  std::size_t batch_count = 10;
  std::uint64_t seed = 7;
};

LstmTrainResult train_lstm_baseline(const LstmConfig& cfg, const LstmEvalOptions& eval);

/// Forward-only accuracy of a trained LSTM at an arbitrary length.
double lstm_eval_accuracy(const LstmModel& model, ParameterStore& store,
                          const LstmEvalOptions& eval);

}  // namespace maes
