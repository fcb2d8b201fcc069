#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maes/model.hpp"

namespace maes {

/// One (solver, task) pair trained in a stage. Joint multi-task training
/// attaches several pairs to one encoder; the per-sample loss is the
/// unweighted mean over their losses on the same input sequence.
struct AttachedSolver {
  std::string solver;
  TaskId task = TaskId::SerialRecall;
};

struct OptimConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;      // first-moment decay
  double beta2 = 0.999;    // squared-gradient decay
  double epsilon = 1e-8;
  double clip_norm = 10.0;  // global norm over unfrozen gradients
};

struct TrainConfig {
  std::size_t batch_size = 1;  // comparison/equality use 64
  std::size_t memory_size = 30;
  GenConfig gen;  // lengths 3..20 by default

  std::size_t validate_every = 100;
  std::size_t val_batch = 64;
  std::size_t val_length = 64;
  std::size_t val_memory = 80;

  double threshold = 1e-5;     // on the smoothed loss
  double ema_half_life = 100;  // iterations
  std::size_t max_iters = 100000;

  OptimConfig optim;
  std::uint64_t seed = 1;

  std::string metrics_csv;  // per-iteration stream; empty = off
  bool record_curves = true;

  void validate() const;
};

struct ValidationPoint {
  std::size_t iteration = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  bool converged = false;
  std::size_t iterations = 0;  // iterations executed (= convergence point when converged)
  double final_ema = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
  std::vector<ValidationPoint> validation_curve;
  double wall_ms = 0.0;
};

/// Raised when the loss goes non-finite; carries the iteration and a
/// parameter-norm snapshot for the post-mortem.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t iteration, std::string diagnostic)
      : std::runtime_error("training diverged at iteration " + std::to_string(iteration) +
                           ": " + diagnostic),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Adam-style adaptive optimizer over a ParameterStore. Frozen groups keep
/// receiving gradients but are never updated.
class AdamOptimizer {
 public:
  AdamOptimizer(ParameterStore& store, OptimConfig cfg);
  void step();

 private:
  ParameterStore& store_;
  OptimConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

/// Optimizes the unfrozen groups until the exponentially smoothed loss
/// reaches cfg.threshold or cfg.max_iters is hit. One batch per iteration;
/// all batch members share one freshly drawn length. Deterministic given
/// the seed.
TrainReport train(const MaesAssembly& assembly, ParameterStore& store,
                  std::span<const AttachedSolver> attached, const TrainConfig& cfg);

struct ValidationResult {
  double loss = 0.0;
  double accuracy = 0.0;  // fraction of masked bits predicted correctly
};

/// Forward-only evaluation on a fresh random batch.
ValidationResult validate(const MaesAssembly& assembly, ParameterStore& store,
                          std::string_view solver, TaskId task, std::size_t batch,
                          std::size_t length, std::size_t memory_size, std::uint64_t seed);

/// Masked-bit accuracy of logits against a sample's target.
struct BitScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  bool exact = true;
};
BitScore score_logits(const Tensor& logits, const TaskSample& sample);

}  // namespace maes
