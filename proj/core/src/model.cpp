#include "maes/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maes {

HandoffMode default_handoff(TaskId task) {
  // Reverse walks the stored sequence from its far end; everything else
  // starts where the encoder started.
  return task == TaskId::ReverseRecall ? HandoffMode::AttentionAtEnd
                                       : HandoffMode::AttentionAtStart;
}

OutputSpec default_output_spec(TaskId task) {
  switch (task) {
    case TaskId::SerialRecall:
    case TaskId::ReverseRecall:
    case TaskId::OddRecall:
      return OutputSpec::linear(8);
    case TaskId::Comparison:
    case TaskId::Equality:
      // element-wise comparison of 8-bit words is XOR-like; a linear head
      // cannot represent it
      return OutputSpec::mlp(10, 1);
  }
  return OutputSpec::linear(8);
}

int default_shift_radius(TaskId task) {
  // Odd recall reads every other stored item, so its solver must be able to
  // jump two addresses per step.
  return task == TaskId::OddRecall ? 2 : 1;
}

SolverSpec SolverSpec::for_task(TaskId task, std::string name) {
  SolverSpec s;
  s.name = name.empty() ? std::string(task_name(task)) : std::move(name);
  s.task = task;
  s.handoff = default_handoff(task);
  s.shift_radius = default_shift_radius(task);
  s.output = default_output_spec(task);
  return s;
}

ControllerConfig AssemblyConfig::encoder_config() const {
  ControllerConfig c;
  c.input_size = input_bits;
  c.hidden_size = hidden_size;
  c.read_size = word_size;
  c.shift = ShiftKernel::centered(encoder_shift_radius);
  c.output = OutputSpec::none();
  c.writes_memory = true;
  return c;
}

ControllerConfig AssemblyConfig::solver_config(const SolverSpec& s) const {
  ControllerConfig c;
  c.input_size = input_bits;
  c.hidden_size = hidden_size;
  c.read_size = word_size;
  c.shift = ShiftKernel::centered(s.shift_radius);
  c.output = s.output;
  c.writes_memory = solver_writes;
  return c;
}

std::string solver_group(std::string_view solver_name) {
  return "solver." + std::string(solver_name);
}

MaesAssembly::MaesAssembly(AssemblyConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.encoder_config().validate();
  for (const SolverSpec& s : cfg_.solvers) {
    if (s.name.empty()) throw std::invalid_argument("MaesAssembly: solver needs a name");
    cfg_.solver_config(s).validate();
    std::size_t dups = 0;
    for (const SolverSpec& o : cfg_.solvers) {
      if (o.name == s.name) ++dups;
    }
    if (dups != 1) throw std::invalid_argument("MaesAssembly: duplicate solver '" + s.name + "'");
  }
  const std::size_t count = param_count();
  if (count >= kParamBudget) {
    throw std::invalid_argument("MaesAssembly: " + std::to_string(count) +
                                " trainable scalars exceeds the budget of " +
                                std::to_string(kParamBudget));
  }
}

const SolverSpec& MaesAssembly::solver(std::string_view name) const {
  for (const SolverSpec& s : cfg_.solvers) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("MaesAssembly: unknown solver '" + std::string(name) + "'");
}

bool MaesAssembly::has_solver(std::string_view name) const {
  for (const SolverSpec& s : cfg_.solvers) {
    if (s.name == name) return true;
  }
  return false;
}

std::size_t MaesAssembly::encoder_param_count() const {
  return cfg_.encoder_config().param_count();
}

std::size_t MaesAssembly::param_count() const {
  std::size_t n = encoder_param_count();
  for (const SolverSpec& s : cfg_.solvers) n += cfg_.solver_config(s).param_count();
  return n;
}

void MaesAssembly::init_params(ParameterStore& store, std::uint64_t seed) const {
  init_encoder_params(store, seed);
  for (const SolverSpec& s : cfg_.solvers) init_solver_params(store, s.name, seed);
}

void MaesAssembly::init_encoder_params(ParameterStore& store, std::uint64_t seed) const {
  init_controller_params(store, kEncoderGroup, cfg_.encoder_config(), seed);
}

void MaesAssembly::init_solver_params(ParameterStore& store, std::string_view name,
                                      std::uint64_t seed) const {
  const SolverSpec& s = solver(name);
  init_controller_params(store, solver_group(name), cfg_.solver_config(s), seed);
}

namespace {

struct StepState {
  Var hidden;
  Var attention;
  Var contents;
};

// One time step shared by encoder and solvers: read with the previous
// attention, update the controller, compute the new attention (shift then
// sharpen), then for writers update memory with the new attention. Returns
// logits when the controller has an output head; it sees the fresh hidden
// state and this step's read vector.
Var run_step(Tape& tp, const ControllerVars& ctrl, const Var& x, StepState& st) {
  MemoryState mem{st.contents, st.attention};
  const Var r = memory_read(tp, mem);
  const Var h = rnn_step(tp, ctrl, x, st.hidden, r);
  const InterfaceParams p = interface_head(tp, ctrl, x, st.hidden, r);

  Var w_new = attention_shift(tp, st.attention, p.shift_dist, ctrl.cfg.shift);
  w_new = attention_sharpen(tp, w_new, p.gamma);

  if (ctrl.cfg.writes_memory) {
    st.contents = memory_write_step(tp, st.contents, w_new, p.erase, p.add);
  }
  Var y;
  if (ctrl.cfg.output.kind != OutputSpec::Kind::None) {
    y = output_head(tp, ctrl, x, h, r);
  }
  st.hidden = h;
  st.attention = w_new;
  return y;
}

void check_item(const Tensor& item, std::size_t width) {
  if (item.rank() != 1 || item.size() != width) {
    throw std::invalid_argument("encode: item shape " + item.shape_str() + ", expected [" +
                                std::to_string(width) + "]");
  }
  for (double v : item.data()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("encode: input items must be 0/1 vectors");
    }
  }
}

}  // namespace

EncodeResult encode(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                    std::span<const Tensor> items, std::size_t memory_size,
                    bool keep_memory_snapshots) {
  const AssemblyConfig& cfg = assembly.config();
  const ControllerVars ctrl = bind_controller(tp, store, kEncoderGroup, cfg.encoder_config());

  StepState st;
  MemoryState mem = initial_memory(tp, memory_size, cfg.word_size);
  st.contents = mem.contents;
  st.attention = mem.attention;
  st.hidden = initial_hidden(tp, ctrl);

  EncodeResult out;
  out.attention_history.reserve(items.size());
  for (const Tensor& item : items) {
    check_item(item, cfg.input_bits);
    const Var x = tp.constant(item);
    run_step(tp, ctrl, x, st);
    out.attention_history.push_back(st.attention.value());
    if (keep_memory_snapshots) out.memory_snapshots.push_back(st.contents.value());
  }
  out.memory = MemoryState{st.contents, st.attention};
  return out;
}

EncodeResult encode_bytes(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                          std::span<const std::uint8_t> items, std::size_t memory_size,
                          bool keep_memory_snapshots) {
  std::vector<Tensor> bits;
  bits.reserve(items.size());
  for (std::uint8_t b : items) bits.push_back(item_bits(b));
  return encode(tp, store, assembly, bits, memory_size, keep_memory_snapshots);
}

SolveResult solve(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                  std::string_view solver_name, const MemoryState& handed,
                  std::span<const std::uint8_t> aux, std::size_t n_steps) {
  if (n_steps < 1) throw std::invalid_argument("solve: n_steps must be >= 1");
  if (!aux.empty() && aux.size() != n_steps) {
    throw std::invalid_argument("solve: aux length " + std::to_string(aux.size()) +
                                " != n_steps " + std::to_string(n_steps));
  }
  const SolverSpec& spec = assembly.solver(solver_name);
  const AssemblyConfig& cfg = assembly.config();
  const ControllerVars ctrl =
      bind_controller(tp, store, solver_group(solver_name), cfg.solver_config(spec));

  const std::size_t n_addresses = handed.addresses();
  StepState st;
  st.contents = handed.contents;
  st.attention = spec.handoff == HandoffMode::AttentionAtEnd
                     ? handed.attention
                     : tp.constant(Tensor::one_hot(n_addresses, 0));
  st.hidden = initial_hidden(tp, ctrl);

  const Tensor zero_input = Tensor::zeros(cfg.input_bits);
  SolveResult out;
  out.step_logits.reserve(n_steps);
  out.read_attention_history.reserve(n_steps);
  for (std::size_t t = 0; t < n_steps; ++t) {
    out.read_attention_history.push_back(st.attention.value());
    const Var x = tp.constant(aux.empty() ? zero_input : item_bits(aux[t]));
    out.step_logits.push_back(run_step(tp, ctrl, x, st));
  }
  out.logits = concat(tp, out.step_logits);
  return out;
}

ForwardResult full_forward(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                           std::string_view solver_name, const TaskSample& sample,
                           std::size_t memory_size, bool keep_memory_snapshots) {
  ForwardResult out;
  out.encoding = encode_bytes(tp, store, assembly, sample.main, memory_size,
                              keep_memory_snapshots);
  std::span<const std::uint8_t> aux;
  if (sample.aux) aux = *sample.aux;
  out.solving = solve(tp, store, assembly, solver_name, out.encoding.memory, aux,
                      sample.steps());
  out.logits = out.solving.logits;
  return out;
}

double repeated_element_probe(ParameterStore& store, const MaesAssembly& assembly,
                              std::uint8_t item, std::size_t length,
                              std::size_t memory_size) {
  Tape tp(/*recording=*/false);
  std::vector<std::uint8_t> seq(length, item);
  EncodeResult enc = encode_bytes(tp, store, assembly, seq, memory_size);

  std::vector<double> cumulative(memory_size, 0.0);
  for (const Tensor& w : enc.attention_history) {
    for (std::size_t i = 0; i < memory_size; ++i) cumulative[i] += w[i];
  }
  std::vector<std::size_t> written;
  for (std::size_t i = 0; i < memory_size; ++i) {
    if (cumulative[i] > 0.5) written.push_back(i);
  }

  const Tensor& mem = enc.memory.contents.value();
  const std::size_t cols = mem.cols();
  double dispersion = 0.0;
  for (std::size_t a = 0; a < written.size(); ++a) {
    for (std::size_t b = a + 1; b < written.size(); ++b) {
      double linf = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        linf = std::max(linf, std::abs(mem.at(written[a], j) - mem.at(written[b], j)));
      }
      dispersion = std::max(dispersion, linf);
    }
  }
  return dispersion;
}

}  // namespace maes
