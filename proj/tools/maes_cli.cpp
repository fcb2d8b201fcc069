// Command-line surface for training pipelines, transfer runs, evaluation,
// checkpoint inspection and fixture generation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "maes/evaluator.hpp"
#include "maes/experiments.hpp"
#include "maes/lstm.hpp"
#include "maes/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maes;

#ifndef MAES_BUILD_ID
#define MAES_BUILD_ID "unknown"
#endif

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MAES_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw std::invalid_argument("MAES_SEED is not a valid integer: " + std::string(env));
    }
  }
  return kDefaultSeed;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["build_id"] = MAES_BUILD_ID;
  fs::create_directories(dir);
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << "\n";
}

TaskId parse_task(const std::string& name) {
  const auto task = task_from_name(name);
  if (!task) {
    throw std::invalid_argument("unknown task '" + name +
                                "' (serial, reverse, odd, comparison, equality)");
  }
  return *task;
}

std::string handoff_name(HandoffMode m) {
  return m == HandoffMode::AttentionAtEnd ? "end" : "start";
}

std::string output_name(const OutputSpec& o) {
  switch (o.kind) {
    case OutputSpec::Kind::None: return "none";
    case OutputSpec::Kind::Linear: return "linear(" + std::to_string(o.dim_out) + ")";
    case OutputSpec::Kind::Mlp:
      return "mlp(" + std::to_string(o.hidden) + "," + std::to_string(o.dim_out) + ")";
  }
  return "?";
}

void print_stage_summary(std::ostream& os, const StageReport& r) {
  os << "[" << r.stage << "] converged=" << (r.train.converged ? "yes" : "no")
     << " iterations=" << r.train.iterations << " final_ema=" << r.train.final_ema
     << " params=" << r.param_count << " wall_ms=" << static_cast<long>(r.train.wall_ms)
     << "\n";
}

int cmd_train(const std::string& pipeline_name, const std::string& config_file,
              std::uint64_t seed, const std::string& out_dir) {
  ExperimentPipeline pipeline;
  if (!pipeline_name.empty()) {
    auto p = find_builtin_pipeline(pipeline_name);
    if (!p) {
      std::cerr << "unknown pipeline '" << pipeline_name << "'. available:\n";
      for (const auto& b : builtin_pipelines()) std::cerr << "  " << b.name << "\n";
      return 1;
    }
    pipeline = std::move(*p);
  } else {
    pipeline = parse_pipeline_file(config_file);
  }

  json cfg;
  cfg["pipeline"] = pipeline.name;
  cfg["stages"] = json::array();
  for (const auto& st : pipeline.stages) cfg["stages"].push_back(st.name);
  write_manifest(out_dir, "train", cfg, seed);

  const auto reports = run_pipeline(pipeline, out_dir, seed);

  std::ofstream summary(fs::path(out_dir) / "summary.txt");
  for (const auto& r : reports) {
    print_stage_summary(std::cout, r);
    print_stage_summary(summary, r);
  }
  return 0;
}

int cmd_transfer(const std::string& encoder_ckpt, const std::string& task_name_arg,
                 const std::string& handoff, int shift_radius, std::size_t batch,
                 std::size_t max_iters, std::uint64_t seed, const std::string& out_dir,
                 bool solver_writes) {
  const TaskId task = parse_task(task_name_arg);

  ExperimentPipeline p;
  p.name = "transfer_cli";
  StageSpec st;
  st.name = "transfer_" + task_name_arg;
  SolverSpec spec = SolverSpec::for_task(task);
  if (handoff == "start") spec.handoff = HandoffMode::AttentionAtStart;
  if (handoff == "end") spec.handoff = HandoffMode::AttentionAtEnd;
  if (shift_radius > 0) spec.shift_radius = shift_radius;
  st.solvers = {spec};
  st.attached = {{spec.name, task}};
  st.checkpoint_in = encoder_ckpt;
  st.freeze = {kEncoderGroup};
  st.solver_writes = solver_writes;
  st.train.batch_size = batch > 0 ? batch : (task_has_aux(task) ? 64 : 1);
  if (max_iters > 0) st.train.max_iters = max_iters;
  st.checkpoint_out = "transfer_" + task_name_arg + ".ckpt";
  p.stages = {st};

  json cfg;
  cfg["encoder"] = encoder_ckpt;
  cfg["task"] = task_name_arg;
  cfg["handoff"] = handoff_name(spec.handoff);
  cfg["shift_radius"] = spec.shift_radius;
  cfg["batch"] = st.train.batch_size;
  cfg["max_iters"] = st.train.max_iters;
  write_manifest(out_dir, "transfer", cfg, seed);

  const auto reports = run_pipeline(p, out_dir, seed);
  std::ofstream summary(fs::path(out_dir) / "summary.txt");
  for (const auto& r : reports) {
    print_stage_summary(std::cout, r);
    print_stage_summary(summary, r);
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& task_name_arg,
             const std::string& solver, std::size_t length, std::size_t memory,
             std::size_t batches, std::size_t batch_size, int workers, std::uint64_t seed,
             const std::string& export_dir, const std::string& out_csv) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  const MaesAssembly assembly(loaded.meta.config);
  ParameterStore store = loaded.store;

  GeneralizationSpec spec;
  spec.task = parse_task(task_name_arg);
  spec.solver = solver.empty() ? task_name_arg : solver;
  spec.length = length;
  spec.memory_size = memory;
  spec.batch_count = batches;
  spec.batch_size = batch_size;
  spec.workers = workers;
  spec.seed = seed;

  if (!assembly.has_solver(spec.solver)) {
    throw std::invalid_argument("checkpoint has no solver '" + spec.solver + "'");
  }
  if (spec.memory_size <= spec.length) {
    throw std::invalid_argument("memory size must exceed sequence length");
  }

  const EvalReport report = generalization_eval(assembly, store, spec);
  std::cout << "task=" << task_name_arg << " solver=" << spec.solver
            << " length=" << spec.length << " memory=" << spec.memory_size << "\n"
            << "bit_accuracy=" << report.mean_bit_accuracy
            << " stderr=" << report.stderr_batches
            << " exact_match=" << report.exact_match_rate
            << " wall_ms=" << static_cast<long>(report.wall_ms) << "\n";

  const fs::path csv_path = out_csv.empty() ? fs::path("eval.csv") : fs::path(out_csv);
  fs::create_directories(csv_path.has_parent_path() ? csv_path.parent_path() : ".");
  write_eval_csv(csv_path.string(), spec, report);

  json cfg;
  cfg["checkpoint"] = ckpt_path;
  cfg["task"] = task_name_arg;
  cfg["solver"] = spec.solver;
  cfg["length"] = spec.length;
  cfg["memory"] = spec.memory_size;
  cfg["batches"] = spec.batch_count;
  cfg["batch_size"] = spec.batch_size;
  write_manifest(csv_path.has_parent_path() ? csv_path.parent_path() : fs::path("."), "eval",
                 cfg, seed);

  if (!export_dir.empty()) {
    fs::create_directories(export_dir);
    GenConfig gen;
    gen.len_min = spec.length;
    gen.len_max = spec.length;
    auto rng = make_rng(seed, "export-maps");
    const TaskSample sample = generate_with_length(spec.task, spec.length, gen, rng);
    Tape tp(/*recording=*/false);
    const ForwardResult fwd =
        full_forward(tp, store, assembly, spec.solver, sample, spec.memory_size);
    export_attention_map(fwd.encoding.attention_history,
                         (fs::path(export_dir) / "write_attention").string());
    export_attention_map(fwd.solving.read_attention_history,
                         (fs::path(export_dir) / "read_attention").string());
    export_memory_map(fwd.encoding.memory.contents.value(),
                      (fs::path(export_dir) / "memory").string());
    std::cout << "maps exported to " << export_dir << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  const AssemblyConfig& cfg = loaded.meta.config;
  std::cout << "checkpoint: " << ckpt_path << "\n"
            << "provenance: pipeline=" << loaded.meta.pipeline
            << " seed=" << loaded.meta.seed << " iteration=" << loaded.meta.iteration << "\n"
            << "model: input_bits=" << cfg.input_bits << " hidden=" << cfg.hidden_size
            << " word_size=" << cfg.word_size
            << " solver_writes=" << (cfg.solver_writes ? "true" : "false") << "\n";
  for (const SolverSpec& s : cfg.solvers) {
    std::cout << "solver: " << s.name << " task=" << task_name(s.task)
              << " handoff=" << handoff_name(s.handoff) << " shift_radius=" << s.shift_radius
              << " output=" << output_name(s.output) << "\n";
  }
  std::cout << "parameters:\n";
  for (const auto& e : loaded.store.entries()) {
    std::cout << "  " << e.name << "  " << e.value.shape_str() << "  group=" << e.group
              << (e.frozen ? "  frozen" : "") << "\n";
  }
  std::cout << "total trainable scalars: " << loaded.store.total_scalar_count() << " (budget "
            << kParamBudget << ")\n";
  return 0;
}

int cmd_fixtures(const std::string& task_name_arg, std::size_t count, std::uint64_t seed,
                 const std::string& out, std::size_t len_min, std::size_t len_max) {
  const TaskId task = parse_task(task_name_arg);
  GenConfig gen;
  gen.len_min = len_min;
  gen.len_max = len_max;
  gen.validate();
  auto rng = make_rng(seed, "fixtures");
  std::vector<TaskSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) samples.push_back(generate(task, gen, rng));
  write_fixtures(out, task, samples);
  std::cout << "wrote " << count << " " << task_name_arg << " samples to " << out << "\n";

  json cfg;
  cfg["task"] = task_name_arg;
  cfg["count"] = count;
  cfg["len_min"] = len_min;
  cfg["len_max"] = len_max;
  cfg["out"] = out;
  const fs::path parent = fs::path(out).has_parent_path() ? fs::path(out).parent_path() : ".";
  write_manifest(parent, "fixtures", cfg, seed);
  return 0;
}

int cmd_pipelines() {
  std::cout << "built-in pipelines (build " << MAES_BUILD_ID << "):\n";
  for (const auto& p : builtin_pipelines()) {
    std::cout << "  " << p.name << "\n";
    for (const auto& st : p.stages) {
      std::cout << "    - " << st.name << ": tasks=";
      for (std::size_t i = 0; i < st.attached.size(); ++i) {
        if (i) std::cout << ",";
        std::cout << st.attached[i].solver;
      }
      if (st.checkpoint_in) std::cout << " from=" << *st.checkpoint_in;
      if (!st.freeze.empty()) std::cout << " freeze=" << st.freeze[0];
      std::cout << " out=" << st.checkpoint_out << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-augmented encoder-solver: training, transfer and evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;

  // train
  auto* train_cmd = app.add_subcommand("train", "run a training pipeline");
  std::string pipeline_name, config_file, out_dir = "runs/out";
  train_cmd->add_option("--pipeline", pipeline_name, "built-in pipeline name");
  train_cmd->add_option("--config", config_file, "pipeline config file")
      ->excludes("--pipeline");
  train_cmd->add_option("--seed", seed, "root seed")->each([&](const std::string&) {
    seed_given = true;
  });
  train_cmd->add_option("--out", out_dir, "output directory");

  // transfer
  auto* transfer_cmd =
      app.add_subcommand("transfer", "train a fresh solver against a frozen encoder");
  std::string encoder_ckpt, task_arg, handoff = "auto";
  int shift_radius = 0;
  std::size_t batch = 0, max_iters = 0;
  bool solver_writes = false;
  transfer_cmd->add_option("--encoder", encoder_ckpt, "encoder checkpoint")->required();
  transfer_cmd->add_option("--task", task_arg, "task name")->required();
  transfer_cmd->add_option("--handoff", handoff, "start|end|auto (default: task default)")
      ->check(CLI::IsMember({"start", "end", "auto"}));
  transfer_cmd->add_option("--shift-radius", shift_radius, "solver shift radius");
  transfer_cmd->add_option("--batch", batch, "batch size (default: task default)");
  transfer_cmd->add_option("--max-iters", max_iters, "iteration cap");
  transfer_cmd->add_flag("--solver-writes", solver_writes, "let the solver write memory");
  transfer_cmd->add_option("--seed", seed, "root seed")->each([&](const std::string&) {
    seed_given = true;
  });
  transfer_cmd->add_option("--out", out_dir, "output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "task-size generalization evaluation");
  std::string eval_ckpt, eval_solver, export_dir, out_csv;
  std::size_t length = 1000, memory = 1024, batches = 100, batch_size = 32;
  int workers = 2;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--task", task_arg, "task name")->required();
  eval_cmd->add_option("--solver", eval_solver, "solver id (default: task name)");
  eval_cmd->add_option("--length", length, "sequence length");
  eval_cmd->add_option("--memory", memory, "memory size (must exceed length)");
  eval_cmd->add_option("--batches", batches, "batch count");
  eval_cmd->add_option("--batch-size", batch_size, "samples per batch");
  eval_cmd->add_option("--workers", workers, "parallel batch workers");
  eval_cmd->add_option("--export-maps", export_dir, "write attention/memory maps here");
  eval_cmd->add_option("--out-csv", out_csv, "report CSV path (default eval.csv)");
  eval_cmd->add_option("--seed", seed, "root seed")->each([&](const std::string&) {
    seed_given = true;
  });

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint contents");
  std::string inspect_ckpt;
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "model checkpoint")->required();

  // fixtures
  auto* fixtures_cmd = app.add_subcommand("fixtures", "emit binary task samples");
  std::string fixtures_out = "fixtures.bin";
  std::size_t count = 100, len_min = 3, len_max = 20;
  fixtures_cmd->add_option("--task", task_arg, "task name")->required();
  fixtures_cmd->add_option("--count", count, "sample count");
  fixtures_cmd->add_option("--seed", seed, "root seed")->each([&](const std::string&) {
    seed_given = true;
  });
  fixtures_cmd->add_option("--out", fixtures_out, "output file");
  fixtures_cmd->add_option("--len-min", len_min, "minimum length");
  fixtures_cmd->add_option("--len-max", len_max, "maximum length");

  // pipelines
  auto* pipelines_cmd = app.add_subcommand("pipelines", "list built-in pipelines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!seed_given) seed = default_seed();
    if (train_cmd->parsed()) {
      if (pipeline_name.empty() && config_file.empty()) {
        std::cerr << "train: need --pipeline or --config\n";
        return 1;
      }
      return cmd_train(pipeline_name, config_file, seed, out_dir);
    }
    if (transfer_cmd->parsed()) {
      return cmd_transfer(encoder_ckpt, task_arg, handoff, shift_radius, batch, max_iters,
                          seed, out_dir, solver_writes);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_ckpt, task_arg, eval_solver, length, memory, batches, batch_size,
                      workers, seed, export_dir, out_csv);
    }
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_ckpt);
    if (fixtures_cmd->parsed()) {
      return cmd_fixtures(task_arg, count, seed, fixtures_out, len_min, len_max);
    }
    if (pipelines_cmd->parsed()) return cmd_pipelines();
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
