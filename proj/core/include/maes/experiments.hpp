#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maes/trainer.hpp"

namespace maes {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Self-describing checkpoint: assembly configuration echo, training
/// provenance and the named parameter tensors. Binary little-endian;
/// save(load(f)) is byte-identical to f.
struct CheckpointMeta {
  AssemblyConfig config;
  std::string pipeline;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
};

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ParameterStore store;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Rejects loads whose model geometry differs from the target assembly.
/// Memory size never appears here: parameters are N-independent, so a
/// checkpoint trained at one memory size loads into any other.
void check_checkpoint_compatible(const AssemblyConfig& ckpt, const AssemblyConfig& target);

/// One training stage of a pipeline: an assembly (encoder + stage solvers),
/// optional warm start groups from an earlier checkpoint, frozen groups and
/// a trainer configuration.
struct StageSpec {
  std::string name;
  std::vector<SolverSpec> solvers;
  std::vector<AttachedSolver> attached;
  std::optional<std::string> checkpoint_in;       // path or earlier stage's output name
  std::vector<std::string> groups_from_checkpoint;  // default: encoder only
  std::vector<std::string> freeze;
  TrainConfig train;
  std::string checkpoint_out;
  bool solver_writes = false;
};

struct ExperimentPipeline {
  std::string name;
  std::vector<StageSpec> stages;
};

struct StageReport {
  std::string stage;
  TrainReport train;
  std::string checkpoint_path;
  std::size_t param_count = 0;
};

/// Executes stages in order inside out_dir. Dependencies are validated
/// before any training starts: a stage referencing a checkpoint must name
/// either an existing file or an earlier stage's output.
std::vector<StageReport> run_pipeline(const ExperimentPipeline& pipeline,
                                      const std::string& out_dir, std::uint64_t seed);

/// The five built-in regimes: serial end-to-end, its transfer suite, reverse
/// end-to-end, joint serial+reverse, and the joint encoder's transfer suite
/// over all five tasks.
std::vector<ExperimentPipeline> builtin_pipelines();
std::optional<ExperimentPipeline> find_builtin_pipeline(std::string_view name);

/// Parses the plain-text pipeline format (key = value lines, one [stage]
/// header per stage). Parse failures carry the offending line number.
ExperimentPipeline parse_pipeline_file(const std::string& path);
ExperimentPipeline parse_pipeline_text(const std::string& text, const std::string& origin);

inline constexpr std::uint64_t kDefaultSeed = 1;

}  // namespace maes
