#include "maes/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "maes/rng.hpp"
#include "maes/trainer.hpp"

namespace maes {

namespace {

struct BatchCounts {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  std::uint64_t exact = 0;
  std::uint64_t samples = 0;
};

BatchCounts eval_one_batch(const MaesAssembly& assembly, ParameterStore& store,
                           const GeneralizationSpec& spec, const std::string& solver,
                           std::uint64_t batch_index) {
  auto rng = make_rng(spec.seed, "eval-batch", batch_index);
  GenConfig gen;
  gen.len_min = spec.length;
  gen.len_max = spec.length;

  BatchCounts counts;
  for (std::size_t i = 0; i < spec.batch_size; ++i) {
    const TaskSample sample = generate_with_length(spec.task, spec.length, gen, rng);
    Tape tp(/*recording=*/false);
    ForwardResult fwd = full_forward(tp, store, assembly, solver, sample, spec.memory_size);
    const BitScore s = score_logits(fwd.logits.value(), sample);
    counts.correct += s.correct;
    counts.total += s.total;
    counts.exact += s.exact ? 1 : 0;
    ++counts.samples;
  }
  return counts;
}

}  // namespace

EvalReport generalization_eval(const MaesAssembly& assembly, ParameterStore& store,
                               const GeneralizationSpec& spec) {
  if (spec.memory_size <= spec.length) {
    throw std::invalid_argument("generalization_eval: memory size " +
                                std::to_string(spec.memory_size) +
                                " must exceed sequence length " + std::to_string(spec.length));
  }
  const std::string solver =
      spec.solver.empty() ? std::string(task_name(spec.task)) : spec.solver;
  assembly.solver(solver);  // throws for unknown ids

  const std::uint64_t hash_before = store.value_hash();
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<BatchCounts> batches(spec.batch_count);
  const int workers = std::max(1, std::min<int>(spec.workers,
                                                static_cast<int>(spec.batch_count)));
  if (workers == 1) {
    for (std::size_t b = 0; b < spec.batch_count; ++b) {
      batches[b] = eval_one_batch(assembly, store, spec, solver, b);
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int wkr = 0; wkr < workers; ++wkr) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t b = next.fetch_add(1);
          if (b >= spec.batch_count) break;
          batches[b] = eval_one_batch(assembly, store, spec, solver, b);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  EvalReport report;
  std::uint64_t exact = 0, samples = 0;
  for (const BatchCounts& c : batches) {
    report.correct_bits += c.correct;
    report.total_bits += c.total;
    exact += c.exact;
    samples += c.samples;
    report.per_batch_accuracy.push_back(
        c.total == 0 ? 0.0 : static_cast<double>(c.correct) / static_cast<double>(c.total));
  }
  report.mean_bit_accuracy =
      report.total_bits == 0
          ? 0.0
          : static_cast<double>(report.correct_bits) / static_cast<double>(report.total_bits);
  report.exact_match_rate =
      samples == 0 ? 0.0 : static_cast<double>(exact) / static_cast<double>(samples);

  if (report.per_batch_accuracy.size() > 1) {
    const double n = static_cast<double>(report.per_batch_accuracy.size());
    double mean = 0.0;
    for (double a : report.per_batch_accuracy) mean += a;
    mean /= n;
    double var = 0.0;
    for (double a : report.per_batch_accuracy) var += (a - mean) * (a - mean);
    var /= (n - 1.0);
    report.stderr_batches = std::sqrt(var / n);
  }

  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  if (store.value_hash() != hash_before) {
    throw std::logic_error("generalization_eval: parameters changed during evaluation");
  }
  return report;
}

void write_eval_csv(const std::string& path, const GeneralizationSpec& spec,
                    const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open eval csv: " + path);
  os << "task,solver,length,memory,batches,batch_size,mean_bit_accuracy,stderr,"
        "exact_match,wall_ms\n";
  os << task_name(spec.task) << ','
     << (spec.solver.empty() ? std::string(task_name(spec.task)) : spec.solver) << ','
     << spec.length << ',' << spec.memory_size << ',' << spec.batch_count << ','
     << spec.batch_size << ',' << report.mean_bit_accuracy << ',' << report.stderr_batches
     << ',' << report.exact_match_rate << ',' << report.wall_ms << '\n';
}

// ------------------------------- map exports --------------------------------

namespace {

void write_pgm(const std::string& path, const std::vector<std::vector<double>>& rows) {
  const std::size_t height = rows.size();
  const std::size_t width = height == 0 ? 0 : rows[0].size();
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& r : rows) {
    for (double v : r) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open image for write: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  for (const auto& r : rows) {
    for (double v : r) {
      const double scaled = (v - lo) / span * 255.0;
      os.put(static_cast<char>(static_cast<int>(std::lround(scaled))));
    }
  }
  if (!os) throw std::runtime_error("image write failed: " + path);
}

void write_csv_matrix(const std::string& path, const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open csv for write: " + path);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) os << ',';
      os << r[j];
    }
    os << '\n';
  }
}

}  // namespace

void export_attention_map(const std::vector<Tensor>& attention_history,
                          const std::string& base_path) {
  if (attention_history.empty()) {
    throw std::invalid_argument("export_attention_map: empty history");
  }
  const std::size_t n = attention_history[0].size();
  const std::size_t steps = attention_history.size();
  // rows = addresses, columns = time steps
  std::vector<std::vector<double>> rows(n, std::vector<double>(steps, 0.0));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) rows[i][t] = attention_history[t][i];
  }
  write_pgm(base_path + ".pgm", rows);
  write_csv_matrix(base_path + ".csv", rows);
}

void export_memory_map(const Tensor& memory, const std::string& base_path) {
  std::vector<std::vector<double>> rows(memory.rows(), std::vector<double>(memory.cols()));
  for (std::size_t i = 0; i < memory.rows(); ++i) {
    for (std::size_t j = 0; j < memory.cols(); ++j) rows[i][j] = memory.at(i, j);
  }
  write_pgm(base_path + ".pgm", rows);
  write_csv_matrix(base_path + ".csv", rows);
}

ForwardBiasReport forward_bias_report(const MaesAssembly& assembly_a, ParameterStore& store_a,
                                      const MaesAssembly& assembly_b, ParameterStore& store_b,
                                      const ProbeConfig& probe) {
  ForwardBiasReport r;
  r.dispersion_a = repeated_element_probe(store_a, assembly_a, probe.item, probe.length,
                                          probe.memory_size);
  r.dispersion_b = repeated_element_probe(store_b, assembly_b, probe.item, probe.length,
                                          probe.memory_size);
  r.ratio_b_over_a = r.dispersion_a == 0.0 ? (r.dispersion_b == 0.0 ? 1.0 : HUGE_VAL)
                                           : r.dispersion_b / r.dispersion_a;
  return r;
}

}  // namespace maes
