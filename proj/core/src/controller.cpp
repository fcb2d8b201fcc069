#include "maes/controller.hpp"

#include <array>
#include <stdexcept>

namespace maes {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

std::string key(std::string_view prefix, const char* suffix) {
  return std::string(prefix) + "." + suffix;
}

Var affine(Tape& tp, const Var& w, const Var& b, const Var& in) {
  return add(tp, matvec(tp, w, in), b);
}

}  // namespace

void ControllerConfig::validate() const {
  if (hidden_size == 0 || input_size == 0 || read_size == 0) {
    throw std::invalid_argument("ControllerConfig: sizes must be positive");
  }
  // The hidden state must not be big enough to act as a working memory of
  // its own; it stays smaller than a single input item.
  if (hidden_size >= input_size) {
    throw std::invalid_argument("ControllerConfig: hidden_size must be < input_size");
  }
  if (output.kind == OutputSpec::Kind::Mlp && output.hidden == 0) {
    throw std::invalid_argument("ControllerConfig: mlp hidden size must be positive");
  }
}

std::size_t ControllerConfig::param_count() const {
  const std::size_t in = concat_size();
  std::size_t n = hidden_size * in + hidden_size;  // W_h, b_h
  n += hidden_size;                                // h0
  n += interface_size() * in + interface_size();   // W_p, b_p
  switch (output.kind) {
    case OutputSpec::Kind::None:
      break;
    case OutputSpec::Kind::Linear:
      n += output.dim_out * in + output.dim_out;
      break;
    case OutputSpec::Kind::Mlp:
      n += output.hidden * in + output.hidden;
      n += output.dim_out * output.hidden + output.dim_out;
      break;
  }
  return n;
}

void init_controller_params(ParameterStore& store, std::string_view prefix,
                            const ControllerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, prefix);
  const std::size_t in = cfg.concat_size();
  const std::string group(prefix);

  store.add(key(prefix, "W_h"), group, uniform_matrix(cfg.hidden_size, in, rng));
  store.add(key(prefix, "b_h"), group, Tensor::zeros(cfg.hidden_size));
  store.add(key(prefix, "h0"), group, Tensor::zeros(cfg.hidden_size));
  store.add(key(prefix, "W_p"), group, uniform_matrix(cfg.interface_size(), in, rng));
  store.add(key(prefix, "b_p"), group, Tensor::zeros(cfg.interface_size()));

  switch (cfg.output.kind) {
    case OutputSpec::Kind::None:
      break;
    case OutputSpec::Kind::Linear:
      store.add(key(prefix, "W_y"), group, uniform_matrix(cfg.output.dim_out, in, rng));
      store.add(key(prefix, "b_y"), group, Tensor::zeros(cfg.output.dim_out));
      break;
    case OutputSpec::Kind::Mlp:
      store.add(key(prefix, "W_y1"), group, uniform_matrix(cfg.output.hidden, in, rng));
      store.add(key(prefix, "b_y1"), group, Tensor::zeros(cfg.output.hidden));
      store.add(key(prefix, "W_y2"), group,
                uniform_matrix(cfg.output.dim_out, cfg.output.hidden, rng));
      store.add(key(prefix, "b_y2"), group, Tensor::zeros(cfg.output.dim_out));
      break;
  }
}

ControllerVars bind_controller(Tape& tp, ParameterStore& store, std::string_view prefix,
                               const ControllerConfig& cfg) {
  cfg.validate();
  ControllerVars c;
  c.cfg = cfg;
  c.w_hidden = tp.param(store, key(prefix, "W_h"));
  c.b_hidden = tp.param(store, key(prefix, "b_h"));
  c.h0_raw = tp.param(store, key(prefix, "h0"));
  c.w_interface = tp.param(store, key(prefix, "W_p"));
  c.b_interface = tp.param(store, key(prefix, "b_p"));
  switch (cfg.output.kind) {
    case OutputSpec::Kind::None:
      break;
    case OutputSpec::Kind::Linear:
      c.w_out1 = tp.param(store, key(prefix, "W_y"));
      c.b_out1 = tp.param(store, key(prefix, "b_y"));
      break;
    case OutputSpec::Kind::Mlp:
      c.w_out1 = tp.param(store, key(prefix, "W_y1"));
      c.b_out1 = tp.param(store, key(prefix, "b_y1"));
      c.w_out2 = tp.param(store, key(prefix, "W_y2"));
      c.b_out2 = tp.param(store, key(prefix, "b_y2"));
      break;
  }
  return c;
}

Var initial_hidden(Tape& tp, const ControllerVars& c) { return sigmoid(tp, c.h0_raw); }

Var rnn_step(Tape& tp, const ControllerVars& c, const Var& x, const Var& h_prev, const Var& r) {
  const std::array<Var, 3> parts{x, h_prev, r};
  const Var in = concat(tp, parts);
  return sigmoid(tp, affine(tp, c.w_hidden, c.b_hidden, in));
}

InterfaceParams interface_head(Tape& tp, const ControllerVars& c, const Var& x,
                               const Var& h_prev, const Var& r) {
  const std::array<Var, 3> parts{x, h_prev, r};
  const Var in = concat(tp, parts);
  const Var raw = affine(tp, c.w_interface, c.b_interface, in);

  const std::size_t m = c.cfg.read_size;
  const std::size_t k = c.cfg.shift.width();
  InterfaceParams p;
  std::size_t pos = 0;
  if (c.cfg.writes_memory) {
    p.add = tanh_op(tp, slice(tp, raw, pos, m));
    pos += m;
    p.erase = sigmoid(tp, slice(tp, raw, pos, m));
    pos += m;
  }
  p.shift_dist = softmax(tp, slice(tp, raw, pos, k));
  pos += k;
  p.gamma = scale_shift(tp, softplus(tp, slice(tp, raw, pos, 1)), 1.0, 1.0);
  return p;
}

Var output_head(Tape& tp, const ControllerVars& c, const Var& x, const Var& h, const Var& r) {
  if (c.cfg.output.kind == OutputSpec::Kind::None) {
    throw std::invalid_argument("output_head: controller has no output network");
  }
  const std::array<Var, 3> parts{x, h, r};
  const Var in = concat(tp, parts);
  if (c.cfg.output.kind == OutputSpec::Kind::Linear) {
    return affine(tp, c.w_out1, c.b_out1, in);
  }
  const Var hid = relu(tp, affine(tp, c.w_out1, c.b_out1, in));
  return affine(tp, c.w_out2, c.b_out2, hid);
}

}  // namespace maes
