#include "maes/experiments.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maes/rng.hpp"

namespace maes {

// --------------------------- binary primitives ------------------------------

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(os, bits);
}
void put_str(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff) throw std::invalid_argument("checkpoint string too long");
  put_u16(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

[[noreturn]] void corrupt(const std::string& what) {
  throw std::runtime_error("checkpoint corrupt or truncated: " + what);
}

std::uint64_t get_bytes_le(std::istream& is, int n, const char* what) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = is.get();
    if (c == EOF) corrupt(what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::uint16_t get_u16(std::istream& is, const char* what) {
  return static_cast<std::uint16_t>(get_bytes_le(is, 2, what));
}
std::uint32_t get_u32(std::istream& is, const char* what) {
  return static_cast<std::uint32_t>(get_bytes_le(is, 4, what));
}
std::uint64_t get_u64(std::istream& is, const char* what) {
  return get_bytes_le(is, 8, what);
}
double get_f64(std::istream& is, const char* what) {
  const std::uint64_t bits = get_u64(is, what);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}
std::string get_str(std::istream& is, const char* what) {
  const std::uint16_t n = get_u16(is, what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) corrupt(what);
  return s;
}

constexpr char kMagic[8] = {'M', 'A', 'E', 'S', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 8);
  put_u16(os, kCheckpointVersion);

  const AssemblyConfig& c = meta.config;
  put_u32(os, static_cast<std::uint32_t>(c.input_bits));
  put_u32(os, static_cast<std::uint32_t>(c.hidden_size));
  put_u32(os, static_cast<std::uint32_t>(c.word_size));
  os.put(static_cast<char>(c.encoder_shift_radius));
  os.put(c.solver_writes ? 1 : 0);
  put_u16(os, static_cast<std::uint16_t>(c.solvers.size()));
  for (const SolverSpec& s : c.solvers) {
    put_str(os, s.name);
    os.put(static_cast<char>(s.task));
    os.put(s.handoff == HandoffMode::AttentionAtEnd ? 1 : 0);
    os.put(static_cast<char>(s.shift_radius));
    os.put(static_cast<char>(s.output.kind));
    put_u16(os, static_cast<std::uint16_t>(s.output.dim_out));
    put_u16(os, static_cast<std::uint16_t>(s.output.hidden));
  }

  put_str(os, meta.pipeline);
  put_u64(os, meta.seed);
  put_u64(os, meta.iteration);

  put_u32(os, static_cast<std::uint32_t>(store.count()));
  for (const auto& e : store.entries()) {
    put_str(os, e.name);
    put_str(os, e.group);
    os.put(e.frozen ? 1 : 0);
    os.put(static_cast<char>(e.value.rank()));
    put_u32(os, static_cast<std::uint32_t>(e.value.rows()));
    put_u32(os, static_cast<std::uint32_t>(e.value.cols()));
  }
  for (const auto& e : store.entries()) {
    for (double x : e.value.data()) put_f64(os, x);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a MAES checkpoint: " + path);
  }
  const std::uint16_t version = get_u16(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }

  LoadedCheckpoint out;
  AssemblyConfig& c = out.meta.config;
  c.input_bits = get_u32(is, "input_bits");
  c.hidden_size = get_u32(is, "hidden_size");
  c.word_size = get_u32(is, "word_size");
  c.encoder_shift_radius = is.get();
  const int writes = is.get();
  if (writes == EOF) corrupt("flags");
  c.solver_writes = writes != 0;
  const std::uint16_t n_solvers = get_u16(is, "solver count");
  for (std::uint16_t i = 0; i < n_solvers; ++i) {
    SolverSpec s;
    s.name = get_str(is, "solver name");
    const int task = is.get();
    const int handoff = is.get();
    const int radius = is.get();
    const int kind = is.get();
    if (kind == EOF) corrupt("solver spec");
    if (task < 0 || task > 4) corrupt("solver task id");
    s.task = static_cast<TaskId>(task);
    s.handoff = handoff == 1 ? HandoffMode::AttentionAtEnd : HandoffMode::AttentionAtStart;
    s.shift_radius = radius;
    s.output.kind = static_cast<OutputSpec::Kind>(kind);
    s.output.dim_out = get_u16(is, "output dim");
    s.output.hidden = get_u16(is, "output hidden");
    c.solvers.push_back(std::move(s));
  }

  out.meta.pipeline = get_str(is, "pipeline");
  out.meta.seed = get_u64(is, "seed");
  out.meta.iteration = get_u64(is, "iteration");

  const std::uint32_t n_params = get_u32(is, "param count");
  struct Header {
    std::string name, group;
    bool frozen;
    std::size_t rank, rows, cols;
  };
  std::vector<Header> headers;
  headers.reserve(n_params);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Header h;
    h.name = get_str(is, "param name");
    h.group = get_str(is, "param group");
    const int frozen = is.get();
    const int rank = is.get();
    if (rank == EOF) corrupt("param header");
    h.frozen = frozen != 0;
    h.rank = static_cast<std::size_t>(rank);
    h.rows = get_u32(is, "param rows");
    h.cols = get_u32(is, "param cols");
    if (h.rank != 1 && h.rank != 2) corrupt("param rank");
    headers.push_back(std::move(h));
  }
  for (const Header& h : headers) {
    const std::size_t n = h.rows * h.cols;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f64(is, "param payload");
    Tensor t = h.rank == 2 ? Tensor::matrix(h.rows, h.cols, std::move(v))
                           : Tensor::vector(std::move(v));
    out.store.add(h.name, h.group, std::move(t));
    if (h.frozen) out.store.entry(h.name).frozen = true;
  }
  return out;
}

void check_checkpoint_compatible(const AssemblyConfig& ckpt, const AssemblyConfig& target) {
  auto mismatch = [](const char* what, std::size_t a, std::size_t b) {
    throw std::runtime_error(std::string("checkpoint incompatible: ") + what + " " +
                             std::to_string(a) + " vs " + std::to_string(b));
  };
  if (ckpt.word_size != target.word_size) mismatch("word size", ckpt.word_size, target.word_size);
  if (ckpt.hidden_size != target.hidden_size) {
    mismatch("hidden size", ckpt.hidden_size, target.hidden_size);
  }
  if (ckpt.input_bits != target.input_bits) {
    mismatch("input bits", ckpt.input_bits, target.input_bits);
  }
}

// ------------------------------ pipelines ----------------------------------

namespace {

TrainConfig default_train_for(TaskId task) {
  TrainConfig tc;
  // batch 1 everywhere except the two classification-style tasks, whose
  // one-bit supervision is far too noisy at batch 1
  tc.batch_size = task_has_aux(task) ? 64 : 1;
  return tc;
}

StageSpec end2end_stage(std::string name, std::vector<TaskId> tasks, std::string out) {
  StageSpec st;
  st.name = std::move(name);
  for (TaskId t : tasks) {
    st.solvers.push_back(SolverSpec::for_task(t));
    st.attached.push_back({std::string(task_name(t)), t});
  }
  st.train = default_train_for(tasks[0]);
  st.checkpoint_out = std::move(out);
  return st;
}

StageSpec transfer_stage(TaskId task, const std::string& ckpt_in, const std::string& out) {
  StageSpec st;
  st.name = std::string("transfer_") + std::string(task_name(task));
  st.solvers.push_back(SolverSpec::for_task(task));
  st.attached.push_back({std::string(task_name(task)), task});
  st.checkpoint_in = ckpt_in;
  st.groups_from_checkpoint = {kEncoderGroup};
  st.freeze = {kEncoderGroup};
  st.train = default_train_for(task);
  st.checkpoint_out = out;
  return st;
}

}  // namespace

std::vector<ExperimentPipeline> builtin_pipelines() {
  std::vector<ExperimentPipeline> out;

  {
    ExperimentPipeline p;
    p.name = "es_end2end";
    p.stages.push_back(end2end_stage("train_es", {TaskId::SerialRecall}, "es.ckpt"));
    out.push_back(std::move(p));
  }
  {
    ExperimentPipeline p;
    p.name = "es_transfer_suite";
    p.stages.push_back(end2end_stage("train_es", {TaskId::SerialRecall}, "es.ckpt"));
    for (TaskId t : kAllTasks) {
      p.stages.push_back(
          transfer_stage(t, "es.ckpt", "es_" + std::string(task_name(t)) + ".ckpt"));
    }
    out.push_back(std::move(p));
  }
  {
    ExperimentPipeline p;
    p.name = "er_end2end";
    p.stages.push_back(end2end_stage("train_er", {TaskId::ReverseRecall}, "er.ckpt"));
    out.push_back(std::move(p));
  }
  {
    ExperimentPipeline p;
    p.name = "ej_joint";
    p.stages.push_back(
        end2end_stage("train_ej", {TaskId::SerialRecall, TaskId::ReverseRecall}, "ej.ckpt"));
    out.push_back(std::move(p));
  }
  {
    ExperimentPipeline p;
    p.name = "ej_transfer_suite";
    p.stages.push_back(
        end2end_stage("train_ej", {TaskId::SerialRecall, TaskId::ReverseRecall}, "ej.ckpt"));
    for (TaskId t : kAllTasks) {
      p.stages.push_back(
          transfer_stage(t, "ej.ckpt", "ej_" + std::string(task_name(t)) + ".ckpt"));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<ExperimentPipeline> find_builtin_pipeline(std::string_view name) {
  for (ExperimentPipeline& p : builtin_pipelines()) {
    if (p.name == name) return std::move(p);
  }
  return std::nullopt;
}

std::vector<StageReport> run_pipeline(const ExperimentPipeline& pipeline,
                                      const std::string& out_dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (pipeline.stages.empty()) throw std::invalid_argument("run_pipeline: no stages");
  fs::create_directories(out_dir);

  // Validate the dependency chain before any training happens.
  std::vector<std::string> produced;
  for (const StageSpec& st : pipeline.stages) {
    if (st.checkpoint_in) {
      const bool from_earlier_stage =
          std::find(produced.begin(), produced.end(), *st.checkpoint_in) != produced.end();
      if (!from_earlier_stage && !fs::exists(*st.checkpoint_in) &&
          !fs::exists(fs::path(out_dir) / *st.checkpoint_in)) {
        throw std::runtime_error("pipeline '" + pipeline.name + "' stage '" + st.name +
                                 "': dependency checkpoint '" + *st.checkpoint_in +
                                 "' does not exist");
      }
    }
    produced.push_back(st.checkpoint_out);
  }

  std::vector<StageReport> reports;
  for (const StageSpec& st : pipeline.stages) {
    AssemblyConfig acfg;
    acfg.solver_writes = st.solver_writes;
    acfg.solvers = st.solvers;
    MaesAssembly assembly(acfg);

    ParameterStore store;
    assembly.init_params(store, derive_seed(seed, "init:" + st.name));

    if (st.checkpoint_in) {
      fs::path path = *st.checkpoint_in;
      if (!fs::exists(path)) path = fs::path(out_dir) / *st.checkpoint_in;
      LoadedCheckpoint loaded = load_checkpoint(path.string());
      check_checkpoint_compatible(loaded.meta.config, acfg);
      std::vector<std::string> groups = st.groups_from_checkpoint;
      if (groups.empty()) groups = {kEncoderGroup};
      for (const std::string& g : groups) {
        if (!loaded.store.has_group(g)) {
          throw std::runtime_error("checkpoint has no group '" + g + "'");
        }
        for (const auto& e : loaded.store.entries()) {
          if (e.group != g) continue;
          Tensor& dst = store.value(e.name);
          if (!dst.same_shape(e.value)) {
            throw std::runtime_error("checkpoint shape mismatch for " + e.name + ": " +
                                     e.value.shape_str() + " vs " + dst.shape_str());
          }
          dst = e.value;
        }
      }
    }

    for (const std::string& g : st.freeze) store.freeze_group(g);

    TrainConfig tc = st.train;
    tc.seed = derive_seed(seed, "train:" + st.name);
    if (tc.metrics_csv.empty()) {
      tc.metrics_csv = (fs::path(out_dir) / (st.name + "_metrics.csv")).string();
    }
    TrainReport tr = train(assembly, store, st.attached, tc);

    const std::string ckpt_path = (fs::path(out_dir) / st.checkpoint_out).string();
    CheckpointMeta meta;
    meta.config = acfg;
    meta.pipeline = pipeline.name + "/" + st.name;
    meta.seed = seed;
    meta.iteration = tr.iterations;
    save_checkpoint(ckpt_path, store, meta);

    StageReport sr;
    sr.stage = st.name;
    sr.train = std::move(tr);
    sr.checkpoint_path = ckpt_path;
    sr.param_count = store.total_scalar_count();
    reports.push_back(std::move(sr));
  }
  return reports;
}

// --------------------------- pipeline config files --------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& origin, std::size_t line,
                             const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ExperimentPipeline parse_pipeline_text(const std::string& text, const std::string& origin) {
  ExperimentPipeline p;
  StageSpec* stage = nullptr;
  std::vector<std::vector<std::string>> stage_tasks;
  std::vector<std::vector<std::pair<std::string, std::string>>> stage_overrides;

  std::istringstream is(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line == "[stage]") {
      p.stages.emplace_back();
      stage = &p.stages.back();
      stage_tasks.emplace_back();
      stage_overrides.emplace_back();
      continue;
    }
    if (line.front() == '[') parse_fail(origin, lineno, "unknown section '" + line + "'");

    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_fail(origin, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    auto as_u64 = [&](const std::string& v) -> std::uint64_t {
      try {
        return std::stoull(v);
      } catch (...) {
        parse_fail(origin, lineno, "expected an integer, got '" + v + "'");
      }
    };
    auto as_f64 = [&](const std::string& v) -> double {
      try {
        return std::stod(v);
      } catch (...) {
        parse_fail(origin, lineno, "expected a number, got '" + v + "'");
      }
    };
    auto as_bool = [&](const std::string& v) -> bool {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      parse_fail(origin, lineno, "expected a boolean, got '" + v + "'");
    };

    if (!stage) {
      if (key == "name") {
        p.name = value;
      } else {
        parse_fail(origin, lineno, "unknown key '" + key + "' before first [stage]");
      }
      continue;
    }

    if (key == "name") {
      stage->name = value;
    } else if (key == "tasks") {
      stage_tasks.back() = split_list(value);
      if (stage_tasks.back().empty()) parse_fail(origin, lineno, "tasks list is empty");
    } else if (key == "checkpoint_in") {
      stage->checkpoint_in = value;
    } else if (key == "checkpoint_out") {
      stage->checkpoint_out = value;
    } else if (key == "load_groups") {
      stage->groups_from_checkpoint = split_list(value);
    } else if (key == "freeze") {
      stage->freeze = split_list(value);
    } else if (key == "batch") {
      stage->train.batch_size = as_u64(value);
    } else if (key == "max_iters") {
      stage->train.max_iters = as_u64(value);
    } else if (key == "memory") {
      stage->train.memory_size = as_u64(value);
    } else if (key == "len_min") {
      stage->train.gen.len_min = as_u64(value);
    } else if (key == "len_max") {
      stage->train.gen.len_max = as_u64(value);
    } else if (key == "threshold") {
      stage->train.threshold = as_f64(value);
    } else if (key == "validate_every") {
      stage->train.validate_every = as_u64(value);
    } else if (key == "val_batch") {
      stage->train.val_batch = as_u64(value);
    } else if (key == "val_length") {
      stage->train.val_length = as_u64(value);
    } else if (key == "val_memory") {
      stage->train.val_memory = as_u64(value);
    } else if (key == "lr") {
      stage->train.optim.learning_rate = as_f64(value);
    } else if (key == "clip_norm") {
      stage->train.optim.clip_norm = as_f64(value);
    } else if (key == "ema_half_life") {
      stage->train.ema_half_life = as_f64(value);
    } else if (key == "solver_writes") {
      stage->solver_writes = as_bool(value);
    } else if (key.rfind("handoff.", 0) == 0 || key.rfind("shift_radius.", 0) == 0) {
      // per-task override; resolved once the stage's task list is known
      stage_overrides.back().emplace_back(key, value);
    } else {
      parse_fail(origin, lineno, "unknown key '" + key + "'");
    }
  }

  if (p.stages.empty()) parse_fail(origin, lineno, "no [stage] sections");

  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    StageSpec& st = p.stages[i];
    if (st.name.empty()) st.name = "stage" + std::to_string(i + 1);
    for (const std::string& entry : stage_tasks[i]) {
      const auto task = task_from_name(entry);
      if (!task) {
        throw std::runtime_error(origin + ": stage '" + st.name + "': unknown task '" +
                                 entry + "'");
      }
      st.solvers.push_back(SolverSpec::for_task(*task));
      st.attached.push_back({entry, *task});
    }
    if (st.solvers.empty()) {
      throw std::runtime_error(origin + ": stage '" + st.name + "' has no tasks");
    }
    for (const auto& [key, value] : stage_overrides[i]) {
      const std::string task = key.substr(key.find('.') + 1);
      SolverSpec* spec = nullptr;
      for (SolverSpec& s : st.solvers) {
        if (s.name == task) spec = &s;
      }
      if (!spec) {
        throw std::runtime_error(origin + ": stage '" + st.name + "': override '" + key +
                                 "' names an unattached task");
      }
      if (key.rfind("handoff.", 0) == 0) {
        if (value == "start") {
          spec->handoff = HandoffMode::AttentionAtStart;
        } else if (value == "end") {
          spec->handoff = HandoffMode::AttentionAtEnd;
        } else {
          throw std::runtime_error(origin + ": bad handoff '" + value + "'");
        }
      } else {
        spec->shift_radius = static_cast<int>(std::stoull(value));
      }
    }
    if (st.checkpoint_out.empty()) st.checkpoint_out = st.name + ".ckpt";
  }
  if (p.name.empty()) p.name = "pipeline";
  return p;
}

ExperimentPipeline parse_pipeline_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open pipeline config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_pipeline_text(ss.str(), path);
}

}  // namespace maes
