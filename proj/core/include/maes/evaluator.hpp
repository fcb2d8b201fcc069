#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maes/model.hpp"

namespace maes {

/// Task-size generalization measurement: accuracy of a trained model on
/// sequences far longer than training lengths, with a proportionally larger
/// memory instance.
struct GeneralizationSpec {
  std::size_t length = 1000;
  std::size_t memory_size = 1024;
  std::size_t batch_size = 32;
  std::size_t batch_count = 100;
  TaskId task = TaskId::SerialRecall;
  std::string solver;  // defaults to the task's name
  std::uint64_t seed = 7;
  int workers = 1;  // batches are independent; counts reduce exactly
};

struct EvalReport {
  double mean_bit_accuracy = 0.0;
  double stderr_batches = 0.0;   // over per-batch accuracies
  double exact_match_rate = 0.0; // sequences with every masked bit correct
  std::vector<double> per_batch_accuracy;
  std::uint64_t correct_bits = 0;
  std::uint64_t total_bits = 0;
  double wall_ms = 0.0;
};

/// Mean masked-bit accuracy over batch_count x batch_size random samples at
/// the spec length. Rejects memory_size <= length. Verifies via value hash
/// that evaluation left the parameters untouched.
EvalReport generalization_eval(const MaesAssembly& assembly, ParameterStore& store,
                               const GeneralizationSpec& spec);

void write_eval_csv(const std::string& path, const GeneralizationSpec& spec,
                    const EvalReport& report);

/// Attention history (rows = addresses, columns = time steps) as an 8-bit
/// P5 graymap plus a CSV of the raw values. Pixel values are min-max
/// normalized per export; the CSV preserves exact numbers.
void export_attention_map(const std::vector<Tensor>& attention_history,
                          const std::string& base_path);

/// Memory contents (rows = addresses, columns = word components), same pair
/// of files.
void export_memory_map(const Tensor& memory, const std::string& base_path);

struct ForwardBiasReport {
  double dispersion_a = 0.0;
  double dispersion_b = 0.0;
  double ratio_b_over_a = 0.0;
};

struct ProbeConfig {
  std::uint8_t item = 0xA5;
  std::size_t length = 20;
  std::size_t memory_size = 30;
};

/// Runs the repeated-element probe on two encoders and reports both
/// dispersions and their ratio. A forward-bias-free encoder stores the
/// repeated item near-identically at every written address.
ForwardBiasReport forward_bias_report(const MaesAssembly& assembly_a, ParameterStore& store_a,
                                      const MaesAssembly& assembly_b, ParameterStore& store_b,
                                      const ProbeConfig& probe);

}  // namespace maes
