#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "maes/autodiff.hpp"
#include "maes/memory.hpp"
#include "maes/rng.hpp"

namespace maes {

/// Task-specific output network attached to a solver. The encoder carries
/// none: it stores, it does not answer.
struct OutputSpec {
  enum class Kind { None, Linear, Mlp };
  Kind kind = Kind::None;
  std::size_t dim_out = 0;
  std::size_t hidden = 10;  // Mlp only, ReLU activation

  static OutputSpec none() { return {}; }
  static OutputSpec linear(std::size_t d) { return {Kind::Linear, d, 0}; }
  static OutputSpec mlp(std::size_t hidden, std::size_t d) { return {Kind::Mlp, d, hidden}; }
};

struct ControllerConfig {
  std::size_t input_size = 8;
  std::size_t hidden_size = 5;
  std::size_t read_size = 10;
  ShiftKernel shift = ShiftKernel::centered(1);
  OutputSpec output = OutputSpec::none();
  /// When false the interface head emits only shift and sharpening
  /// parameters; the controller cannot touch memory contents.
  bool writes_memory = false;

  std::size_t concat_size() const { return input_size + hidden_size + read_size; }
  std::size_t interface_size() const {
    const std::size_t addressing = shift.width() + 1;  // s and gamma
    return writes_memory ? 2 * read_size + addressing : addressing;
  }

  void validate() const;
  std::size_t param_count() const;
};

/// Per-step interface parameters (the P_t bundle): erase/add vectors for the
/// memory update, a distribution over shift offsets and a sharpening
/// exponent. add/erase are unset for read-only controllers.
struct InterfaceParams {
  Var add;        // [M], tanh range
  Var erase;      // [M], sigmoid range
  Var shift_dist; // [kernel width], on the simplex
  Var gamma;      // scalar >= 1
};

/// Parameter handles for one controller, bound once per rollout so that
/// every time step shares the same leaves.
struct ControllerVars {
  ControllerConfig cfg;
  Var w_hidden, b_hidden;
  Var h0_raw;
  Var w_interface, b_interface;
  Var w_out1, b_out1;  // Linear: the only layer. Mlp: first layer.
  Var w_out2, b_out2;  // Mlp second layer.
};

/// Registers the controller's trainable tensors under `prefix.*` with group
/// label `prefix`. Weights uniform in [-0.1, 0.1], biases zero, seeded.
void init_controller_params(ParameterStore& store, std::string_view prefix,
                            const ControllerConfig& cfg, std::uint64_t seed);

ControllerVars bind_controller(Tape& tp, ParameterStore& store, std::string_view prefix,
                               const ControllerConfig& cfg);

/// Initial hidden state: sigmoid of a trainable preactivation, so the state
/// stays inside the sigmoid range like every later step.
Var initial_hidden(Tape& tp, const ControllerVars& c);

/// h_t = sigmoid(W_h [x, h_prev, r] + b_h)
Var rnn_step(Tape& tp, const ControllerVars& c, const Var& x, const Var& h_prev, const Var& r);

/// Affine map of [x, h_prev, r], split and activated per slice:
/// add -> tanh, erase -> sigmoid, shift -> softmax, gamma -> 1 + softplus.
InterfaceParams interface_head(Tape& tp, const ControllerVars& c, const Var& x,
                               const Var& h_prev, const Var& r);

/// Task logits from [x, h, r]. Rejected for controllers with no output head.
Var output_head(Tape& tp, const ControllerVars& c, const Var& x, const Var& h, const Var& r);

}  // namespace maes
