#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "maes/experiments.hpp"
#include "maes/rng.hpp"

using namespace maes;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

CheckpointMeta sample_meta() {
  CheckpointMeta meta;
  meta.config.solvers = {SolverSpec::for_task(TaskId::SerialRecall),
                         SolverSpec::for_task(TaskId::ReverseRecall)};
  meta.pipeline = "test/stage";
  meta.seed = 99;
  meta.iteration = 1234;
  return meta;
}

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("checkpoint round-trips") {
  const CheckpointMeta meta = sample_meta();
  const MaesAssembly assembly(meta.config);
  ParameterStore store;
  assembly.init_params(store, 123);
  const std::string path = temp_path("maes_test.ckpt");

  save_checkpoint(path, store, meta);
  const LoadedCheckpoint loaded = load_checkpoint(path);

  SUBCASE("parameters are bit-identical") {
    REQUIRE(loaded.store.count() == store.count());
    for (std::size_t k = 0; k < store.count(); ++k) {
      const auto& a = store.entry(static_cast<int>(k));
      const auto& b = loaded.store.entry(static_cast<int>(k));
      CHECK(a.name == b.name);
      CHECK(a.group == b.group);
      REQUIRE(a.value.same_shape(b.value));
      for (std::size_t i = 0; i < a.value.size(); ++i) CHECK(a.value[i] == b.value[i]);
    }
  }
  SUBCASE("provenance and config echo survive") {
    CHECK(loaded.meta.pipeline == "test/stage");
    CHECK(loaded.meta.seed == 99);
    CHECK(loaded.meta.iteration == 1234);
    REQUIRE(loaded.meta.config.solvers.size() == 2);
    CHECK(loaded.meta.config.solvers[1].handoff == HandoffMode::AttentionAtEnd);
    CHECK(loaded.meta.config.solvers[0].output.kind == OutputSpec::Kind::Linear);
  }
  SUBCASE("load then save is byte-identical") {
    const std::string path2 = temp_path("maes_test2.ckpt");
    save_checkpoint(path2, loaded.store, loaded.meta);
    CHECK(read_all(path) == read_all(path2));
    std::remove(path2.c_str());
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoints load across memory sizes but not across geometries") {
  const CheckpointMeta meta = sample_meta();
  const MaesAssembly assembly(meta.config);
  ParameterStore store;
  assembly.init_params(store, 5);
  const std::string path = temp_path("maes_geom.ckpt");
  save_checkpoint(path, store, meta);
  const LoadedCheckpoint loaded = load_checkpoint(path);

  // memory size is a rollout argument, not part of the geometry: the loaded
  // store drives any N directly
  ParameterStore rollout_store = loaded.store;
  GenConfig gen;
  auto rng = make_rng(1, "geom");
  const TaskSample s = generate_with_length(TaskId::SerialRecall, 4, gen, rng);
  Tape tp(false);
  CHECK_NOTHROW(full_forward(tp, rollout_store, MaesAssembly(loaded.meta.config), "serial", s,
                             1024));

  AssemblyConfig wrong_word = meta.config;
  wrong_word.word_size = 12;
  CHECK_THROWS_AS(check_checkpoint_compatible(loaded.meta.config, wrong_word),
                  std::runtime_error);
  AssemblyConfig wrong_hidden = meta.config;
  wrong_hidden.hidden_size = 4;
  CHECK_THROWS_AS(check_checkpoint_compatible(loaded.meta.config, wrong_hidden),
                  std::runtime_error);
  CHECK_NOTHROW(check_checkpoint_compatible(loaded.meta.config, meta.config));
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected with a diagnostic") {
  const std::string path = temp_path("maes_corrupt.ckpt");
  SUBCASE("wrong magic") {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPT";
    os.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not a MAES checkpoint"),
                         std::runtime_error);
  }
  SUBCASE("truncation") {
    const CheckpointMeta meta = sample_meta();
    const MaesAssembly assembly(meta.config);
    ParameterStore store;
    assembly.init_params(store, 5);
    save_checkpoint(path, store, meta);
    const std::vector<char> bytes = read_all(path);
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("builtin catalog") {
  const auto catalog = builtin_pipelines();
  REQUIRE(catalog.size() == 5);
  const char* expected[] = {"es_end2end", "es_transfer_suite", "er_end2end", "ej_joint",
                            "ej_transfer_suite"};
  for (std::size_t i = 0; i < 5; ++i) CHECK(catalog[i].name == expected[i]);

  SUBCASE("ej_joint trains serial and reverse together on one encoder") {
    const auto p = find_builtin_pipeline("ej_joint");
    REQUIRE(p);
    REQUIRE(p->stages.size() == 1);
    CHECK(p->stages[0].attached.size() == 2);
    CHECK(p->stages[0].solvers.size() == 2);
  }
  SUBCASE("ej_transfer_suite covers all five tasks") {
    const auto p = find_builtin_pipeline("ej_transfer_suite");
    REQUIRE(p);
    REQUIRE(p->stages.size() == 6);
    for (std::size_t i = 1; i < 6; ++i) {
      CHECK(p->stages[i].freeze == std::vector<std::string>{kEncoderGroup});
      CHECK(p->stages[i].checkpoint_in == "ej.ckpt");
      CHECK(p->stages[i].attached.size() == 1);
    }
    CHECK(p->stages[3].solvers[0].shift_radius == 2);  // odd
    CHECK(p->stages[5].train.batch_size == 64);        // comparison
  }
  SUBCASE("unknown names return nothing") {
    CHECK_FALSE(find_builtin_pipeline("nonexistent").has_value());
  }
}

TEST_CASE("run_pipeline rejects missing dependencies before training") {
  ExperimentPipeline p;
  p.name = "broken";
  StageSpec st;
  st.name = "only";
  st.solvers = {SolverSpec::for_task(TaskId::SerialRecall)};
  st.attached = {{"serial", TaskId::SerialRecall}};
  st.checkpoint_in = "does_not_exist.ckpt";
  st.checkpoint_out = "out.ckpt";
  st.train.max_iters = 10;
  p.stages = {st};
  CHECK_THROWS_WITH_AS(run_pipeline(p, temp_path("maes_broken_run"), 1),
                       doctest::Contains("does not exist"), std::runtime_error);
}

TEST_CASE("run_pipeline executes a two-stage transfer") {
  // few-iteration smoke: pretrain stage feeds a frozen-encoder stage
  ExperimentPipeline p;
  p.name = "mini";
  StageSpec pre;
  pre.name = "pre";
  pre.solvers = {SolverSpec::for_task(TaskId::SerialRecall)};
  pre.attached = {{"serial", TaskId::SerialRecall}};
  pre.checkpoint_out = "pre.ckpt";
  pre.train.max_iters = 12;
  pre.train.validate_every = 0;

  StageSpec tr;
  tr.name = "tr";
  tr.solvers = {SolverSpec::for_task(TaskId::ReverseRecall)};
  tr.attached = {{"reverse", TaskId::ReverseRecall}};
  tr.checkpoint_in = "pre.ckpt";
  tr.freeze = {kEncoderGroup};
  tr.checkpoint_out = "tr.ckpt";
  tr.train.max_iters = 12;
  tr.train.validate_every = 0;
  p.stages = {pre, tr};

  const std::string dir = temp_path("maes_mini_run");
  fs::remove_all(dir);
  const auto reports = run_pipeline(p, dir, 77);
  REQUIRE(reports.size() == 2);
  CHECK(fs::exists(reports[0].checkpoint_path));
  CHECK(fs::exists(reports[1].checkpoint_path));
  CHECK(fs::exists(fs::path(dir) / "pre_metrics.csv"));

  // transfer isolation: encoder parameters in the second checkpoint equal
  // the first stage's exactly
  const LoadedCheckpoint a = load_checkpoint(reports[0].checkpoint_path);
  const LoadedCheckpoint b = load_checkpoint(reports[1].checkpoint_path);
  for (const auto& e : a.store.entries()) {
    if (e.group != kEncoderGroup) continue;
    const Tensor& other = b.store.value(e.name);
    for (std::size_t i = 0; i < e.value.size(); ++i) CHECK(e.value[i] == other[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("pipeline reruns reproduce loss curves bit-exactly") {
  ExperimentPipeline p;
  p.name = "repro";
  StageSpec st;
  st.name = "s";
  st.solvers = {SolverSpec::for_task(TaskId::SerialRecall)};
  st.attached = {{"serial", TaskId::SerialRecall}};
  st.checkpoint_out = "s.ckpt";
  st.train.max_iters = 20;
  st.train.validate_every = 0;
  p.stages = {st};

  const std::string d1 = temp_path("maes_repro1");
  const std::string d2 = temp_path("maes_repro2");
  fs::remove_all(d1);
  fs::remove_all(d2);
  const auto r1 = run_pipeline(p, d1, 31337);
  const auto r2 = run_pipeline(p, d2, 31337);
  REQUIRE(r1[0].train.loss_curve.size() == r2[0].train.loss_curve.size());
  for (std::size_t i = 0; i < r1[0].train.loss_curve.size(); ++i) {
    CHECK(r1[0].train.loss_curve[i] == r2[0].train.loss_curve[i]);
  }
  CHECK(read_all(r1[0].checkpoint_path) == read_all(r2[0].checkpoint_path));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("pipeline config files") {
  SUBCASE("a full two-stage file parses") {
    const std::string text = R"(
# demo pipeline
name = demo

[stage]
name = enc
tasks = serial,reverse
checkpoint_out = enc.ckpt
max_iters = 500

[stage]
name = odd_transfer
tasks = odd
checkpoint_in = enc.ckpt
freeze = encoder
shift_radius.odd = 2
batch = 4
)";
    const ExperimentPipeline p = parse_pipeline_text(text, "demo.cfg");
    CHECK(p.name == "demo");
    REQUIRE(p.stages.size() == 2);
    CHECK(p.stages[0].attached.size() == 2);
    CHECK(p.stages[0].train.max_iters == 500);
    CHECK(p.stages[1].solvers[0].shift_radius == 2);
    CHECK(p.stages[1].train.batch_size == 4);
    CHECK(p.stages[1].freeze == std::vector<std::string>{"encoder"});
  }
  SUBCASE("errors carry the line number") {
    const std::string text = "name = x\n[stage]\ntasks = serial\nbogus_key = 1\n";
    CHECK_THROWS_WITH_AS(parse_pipeline_text(text, "bad.cfg"), doctest::Contains("bad.cfg:4"),
                         std::runtime_error);
  }
  SUBCASE("unknown tasks are rejected") {
    const std::string text = "[stage]\ntasks = sorting\n";
    CHECK_THROWS_AS(parse_pipeline_text(text, "bad.cfg"), std::runtime_error);
  }
  SUBCASE("missing stage sections are rejected") {
    CHECK_THROWS_AS(parse_pipeline_text("name = empty\n", "bad.cfg"), std::runtime_error);
  }
}

TEST_SUITE_END();
