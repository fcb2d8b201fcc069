#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "maes/tensor.hpp"

namespace maes {

enum class TaskId : std::uint8_t {
  SerialRecall = 0,
  ReverseRecall = 1,
  OddRecall = 2,
  Comparison = 3,
  Equality = 4,
};

inline constexpr TaskId kAllTasks[] = {TaskId::SerialRecall, TaskId::ReverseRecall,
                                       TaskId::OddRecall, TaskId::Comparison, TaskId::Equality};

std::string_view task_name(TaskId t);
std::optional<TaskId> task_from_name(std::string_view name);
bool task_has_aux(TaskId t);
std::size_t task_target_width(TaskId t);  // bits per output step

/// One training/evaluation instance. Items are 8-bit words, one byte each,
/// bit j of an item at (byte >> j) & 1. Width-8 target steps pack their bits
/// the same way; width-1 steps use the byte's LSB.
struct TaskSample {
  TaskId task = TaskId::SerialRecall;
  std::vector<std::uint8_t> main;
  std::optional<std::vector<std::uint8_t>> aux;
  std::vector<std::uint8_t> target;
  std::vector<std::uint8_t> mask;  // per target step, 0/1

  std::size_t length() const { return main.size(); }
  std::size_t steps() const { return target.size(); }
};

struct GenConfig {
  std::size_t len_min = 3;
  std::size_t len_max = 20;
  /// Probability that a position (comparison) or a whole sequence (equality)
  /// is kept equal under the corruption scheme.
  double equal_rate = 0.5;

  void validate() const;
};

// Generators draw the length uniformly from [len_min, len_max], then the
// items i.i.d. uniform over the 256 words. generate_with_length pins the
// length, which lets a trainer share one length across a batch.
TaskSample generate(TaskId task, const GenConfig& cfg, std::mt19937_64& rng);
TaskSample generate_with_length(TaskId task, std::size_t length, const GenConfig& cfg,
                                std::mt19937_64& rng);

/// Builds a sample for `task` on an already-drawn main sequence (joint
/// multi-task training derives every task's sample from one shared input).
/// Draws aux corruption from rng when the task needs an auxiliary sequence.
TaskSample sample_from_main(TaskId task, std::vector<std::uint8_t> main, const GenConfig& cfg,
                            std::mt19937_64& rng);

/// Recomputes the target by task definition from raw sequences. Independent
/// checker for the generators and the scoring path.
struct OracleResult {
  std::vector<std::uint8_t> target;
  std::vector<std::uint8_t> mask;
};
OracleResult oracle(TaskId task, const std::vector<std::uint8_t>& main,
                    const std::optional<std::vector<std::uint8_t>>& aux);

// Model-facing views.
Tensor item_bits(std::uint8_t item);                   // length-8 0/1 vector
Tensor flat_target_bits(const TaskSample& s);          // steps*width 0/1
Tensor flat_mask_bits(const TaskSample& s);            // per-step mask expanded to bits

// ---------------------------------------------------------------------------
// Fixture files: little-endian binary, header magic "MAES", version u16,
// task id u8; then per record: u16 L, L main bytes, aux-present flag byte,
// optional L aux bytes, u16 target length, target bytes, mask bytes.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kFixtureVersion = 1;

void write_fixtures(const std::string& path, TaskId task,
                    const std::vector<TaskSample>& samples);
std::vector<TaskSample> read_fixtures(const std::string& path);

}  // namespace maes
