// Drives the installed binary end to end: exit codes, file outputs,
// determinism of summaries. The binary path comes from CMake.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "maes/tasks.hpp"

namespace fs = std::filesystem;

#ifndef MAES_CLI_PATH
#define MAES_CLI_PATH "maes"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "maes_cli_out.txt";
  const std::string cmd =
      std::string(MAES_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(out);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

std::string scratch_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("exit codes") {
  CHECK(run_cli("pipelines").exit_code == 0);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("bogus-subcommand").exit_code == 1);
  CHECK(run_cli("eval --task serial").exit_code == 1);         // missing required flag
  CHECK(run_cli("train --pipeline nonexistent").exit_code == 1);
  CHECK(run_cli("train").exit_code == 1);                      // neither pipeline nor config
  CHECK(run_cli("fixtures --task sorting --out /tmp/x.bin").exit_code == 1);
}

TEST_CASE("pipelines lists the catalog") {
  const RunResult r = run_cli("pipelines");
  CHECK(r.output.find("es_end2end") != std::string::npos);
  CHECK(r.output.find("ej_transfer_suite") != std::string::npos);
  CHECK(r.output.find("er_end2end") != std::string::npos);
}

TEST_CASE("fixtures round-trip through the CLI") {
  const std::string dir = scratch_dir("maes_cli_fixtures");
  const std::string file = dir + "/samples.bin";
  const RunResult r =
      run_cli("fixtures --task odd --count 17 --seed 5 --out " + file + " --len-min 2 --len-max 9");
  REQUIRE(r.exit_code == 0);
  const auto samples = maes::read_fixtures(file);
  CHECK(samples.size() == 17);
  for (const auto& s : samples) {
    CHECK(s.task == maes::TaskId::OddRecall);
    CHECK(s.length() >= 2);
    CHECK(s.length() <= 9);
    CHECK(s.steps() == (s.length() + 1) / 2);
  }
  CHECK(fs::exists(fs::path(dir) / "manifest.json"));
}

TEST_CASE("train, inspect and eval against a short run") {
  const std::string dir = scratch_dir("maes_cli_train");
  const std::string cfg_path = dir + "/mini.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "name = mini\n[stage]\nname = quick\ntasks = serial\n"
        << "max_iters = 40\nvalidate_every = 0\ncheckpoint_out = quick.ckpt\n";
  }
  const RunResult train = run_cli("train --config " + cfg_path + " --seed 9 --out " + dir);
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(fs::path(dir) / "quick.ckpt"));
  CHECK(fs::exists(fs::path(dir) / "quick_metrics.csv"));
  CHECK(fs::exists(fs::path(dir) / "summary.txt"));
  CHECK(fs::exists(fs::path(dir) / "manifest.json"));

  // identical seeds give identical summaries
  const std::string dir2 = scratch_dir("maes_cli_train2");
  const RunResult train2 = run_cli("train --config " + cfg_path + " --seed 9 --out " + dir2);
  REQUIRE(train2.exit_code == 0);
  std::ifstream s1(fs::path(dir) / "summary.txt"), s2(fs::path(dir2) / "summary.txt");
  std::stringstream b1, b2;
  b1 << s1.rdbuf();
  b2 << s2.rdbuf();
  CHECK(b1.str() == b2.str());

  const std::string ckpt = dir + "/quick.ckpt";
  const RunResult inspect = run_cli("inspect --checkpoint " + ckpt);
  CHECK(inspect.exit_code == 0);
  CHECK(inspect.output.find("encoder.W_h") != std::string::npos);
  CHECK(inspect.output.find("total trainable scalars: 1114") != std::string::npos);

  // eval rejects memory <= length
  CHECK(run_cli("eval --checkpoint " + ckpt + " --task serial --length 1000 --memory 500")
            .exit_code == 1);
  // unknown solver in checkpoint
  CHECK(run_cli("eval --checkpoint " + ckpt + " --task odd --length 8 --memory 16")
            .exit_code == 1);

  const std::string eval_csv = dir + "/eval.csv";
  const RunResult eval = run_cli("eval --checkpoint " + ckpt +
                                 " --task serial --length 8 --memory 24 --batches 2 "
                                 "--batch-size 4 --export-maps " +
                                 dir + "/maps --out-csv " + eval_csv);
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.output.find("bit_accuracy=") != std::string::npos);
  CHECK(fs::exists(eval_csv));
  CHECK(fs::exists(fs::path(dir) / "maps" / "write_attention.pgm"));
  CHECK(fs::exists(fs::path(dir) / "maps" / "read_attention.csv"));
  CHECK(fs::exists(fs::path(dir) / "maps" / "memory.pgm"));

  const RunResult inspect_bad = run_cli("inspect --checkpoint " + cfg_path);
  CHECK(inspect_bad.exit_code == 1);
}

TEST_CASE("transfer runs against a pretrained encoder") {
  const std::string dir = scratch_dir("maes_cli_transfer");
  const std::string cfg_path = dir + "/mini.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[stage]\nname = enc\ntasks = serial\nmax_iters = 30\nvalidate_every = 0\n"
        << "checkpoint_out = enc.ckpt\n";
  }
  REQUIRE(run_cli("train --config " + cfg_path + " --seed 4 --out " + dir).exit_code == 0);
  const RunResult transfer =
      run_cli("transfer --encoder " + dir + "/enc.ckpt --task reverse --max-iters 25 --out " +
              dir + "/tr --seed 4");
  REQUIRE(transfer.exit_code == 0);
  CHECK(fs::exists(fs::path(dir) / "tr" / "transfer_reverse.ckpt"));

  const RunResult missing =
      run_cli("transfer --encoder " + dir + "/missing.ckpt --task reverse --out " + dir + "/t2");
  CHECK(missing.exit_code == 1);
}

TEST_SUITE_END();
