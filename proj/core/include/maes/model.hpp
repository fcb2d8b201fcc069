#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maes/controller.hpp"
#include "maes/tasks.hpp"

namespace maes {

/// How a solver's read attention is initialized from the encoder:
/// at the encoder's starting attention, or at its final write attention
/// (the latter lets a solver walk the stored sequence backwards).
enum class HandoffMode { AttentionAtStart, AttentionAtEnd };

HandoffMode default_handoff(TaskId task);
OutputSpec default_output_spec(TaskId task);
int default_shift_radius(TaskId task);

struct SolverSpec {
  std::string name;
  TaskId task = TaskId::SerialRecall;
  HandoffMode handoff = HandoffMode::AttentionAtStart;
  int shift_radius = 1;
  OutputSpec output = OutputSpec::linear(8);

  static SolverSpec for_task(TaskId task, std::string name = "");
};

/// Static description of a full MAES: one encoder plus any number of task
/// solvers sharing its memory. Memory size N is deliberately absent — it is
/// a rollout-time argument, so one trained parameter set instantiates models
/// of any memory size.
struct AssemblyConfig {
  std::size_t input_bits = 8;
  std::size_t hidden_size = 5;
  std::size_t word_size = 10;
  int encoder_shift_radius = 1;
  /// Ablation switch: when true, solvers run the full erase/add memory
  /// update each step instead of reading only.
  bool solver_writes = false;
  std::vector<SolverSpec> solvers;

  ControllerConfig encoder_config() const;
  ControllerConfig solver_config(const SolverSpec& s) const;
};

inline constexpr std::size_t kParamBudget = 2000;
inline constexpr char kEncoderGroup[] = "encoder";

std::string solver_group(std::string_view solver_name);

/// Validated assembly. Construction enforces the parameter budget: every
/// MAES instance stays under kParamBudget trainable scalars regardless of
/// memory size.
class MaesAssembly {
 public:
  explicit MaesAssembly(AssemblyConfig cfg);

  const AssemblyConfig& config() const { return cfg_; }
  const SolverSpec& solver(std::string_view name) const;
  bool has_solver(std::string_view name) const;

  std::size_t param_count() const;          // encoder + all solver heads
  std::size_t encoder_param_count() const;

  void init_params(ParameterStore& store, std::uint64_t seed) const;
  void init_encoder_params(ParameterStore& store, std::uint64_t seed) const;
  void init_solver_params(ParameterStore& store, std::string_view name,
                          std::uint64_t seed) const;

 private:
  AssemblyConfig cfg_;
};

/// Everything a forward pass exposes for inspection: attention snapshots,
/// optional memory snapshots, logits. Encoder entries are write attentions
/// (the vector each item was stored with); solver entries are read
/// attentions (the vector each step's read used).
struct Rollout {
  std::vector<Tensor> encoder_write_attention;
  std::vector<Tensor> solver_read_attention;
  std::vector<Tensor> memory_snapshots;  // filled only on request
};

struct EncodeResult {
  MemoryState memory;                      // final contents + final write attention
  std::vector<Tensor> attention_history;   // w_1 .. w_L
  std::vector<Tensor> memory_snapshots;
};

/// Runs the encoder over the main input, one step per item: read with the
/// previous attention, controller, new attention (shift then sharpen), write
/// with the new attention. Items must be 0/1 vectors of width input_bits.
EncodeResult encode(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                    std::span<const Tensor> items, std::size_t memory_size,
                    bool keep_memory_snapshots = false);
EncodeResult encode_bytes(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                          std::span<const std::uint8_t> items, std::size_t memory_size,
                          bool keep_memory_snapshots = false);

struct SolveResult {
  std::vector<Var> step_logits;
  Var logits;  // concatenation over steps
  std::vector<Tensor> read_attention_history;
};

/// Runs one solver for n_steps from the encoder's memory. aux is consumed
/// one item per step when present; otherwise the solver sees zero inputs.
SolveResult solve(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                  std::string_view solver_name, const MemoryState& handed,
                  std::span<const std::uint8_t> aux, std::size_t n_steps);

struct ForwardResult {
  Var logits;
  EncodeResult encoding;
  SolveResult solving;
};

/// encode + solve for one task sample; n_steps equals the target length.
ForwardResult full_forward(Tape& tp, ParameterStore& store, const MaesAssembly& assembly,
                           std::string_view solver_name, const TaskSample& sample,
                           std::size_t memory_size, bool keep_memory_snapshots = false);

/// Feeds `length` copies of one item through the encoder and measures how
/// unevenly the written rows came out: max over written-row pairs of the
/// L-infinity distance between rows. Rows count as written when their
/// cumulative write attention exceeds 0.5. A forward-bias-free encoder
/// stores a repeated item identically everywhere, scoring ~0.
double repeated_element_probe(ParameterStore& store, const MaesAssembly& assembly,
                              std::uint8_t item, std::size_t length, std::size_t memory_size);

}  // namespace maes
