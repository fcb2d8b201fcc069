#include "maes/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "maes/rng.hpp"

namespace maes {

void TrainConfig::validate() const {
  gen.validate();
  if (threshold <= 0.0) throw std::invalid_argument("TrainConfig: threshold must be > 0");
  if (max_iters < 1) throw std::invalid_argument("TrainConfig: max_iters must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (ema_half_life <= 0.0) throw std::invalid_argument("TrainConfig: ema_half_life must be > 0");
}

AdamOptimizer::AdamOptimizer(ParameterStore& store, OptimConfig cfg)
    : store_(store), cfg_(cfg) {
  m_.reserve(store.count());
  v_.reserve(store.count());
  for (const auto& e : store.entries()) {
    Tensor zero = e.value;
    zero.fill(0.0);
    m_.push_back(zero);
    v_.push_back(std::move(zero));
  }
}

void AdamOptimizer::step() {
  // Clip the global norm over the gradients that will actually be applied.
  double sq = 0.0;
  for (const auto& e : store_.entries()) {
    if (e.frozen) continue;
    for (double g : e.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double scale = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm)
                           ? cfg_.clip_norm / norm
                           : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < store_.entries().size(); ++k) {
    auto& e = store_.entries()[k];
    if (e.frozen) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

namespace {

// Joint stages share one drawn main sequence per batch member; each attached
// task derives its own aux/target from it.
std::vector<TaskSample> draw_joint_samples(std::span<const AttachedSolver> attached,
                                           std::size_t length, const GenConfig& gen,
                                           std::mt19937_64& rng) {
  TaskSample first = generate_with_length(attached[0].task, length, gen, rng);
  std::vector<TaskSample> out;
  out.reserve(attached.size());
  for (std::size_t k = 1; k < attached.size(); ++k) {
    out.push_back(sample_from_main(attached[k].task, first.main, gen, rng));
  }
  out.insert(out.begin(), std::move(first));
  return out;
}

double param_norm_snapshot(const ParameterStore& store, std::string& text) {
  double sq = 0.0;
  std::ostringstream os;
  for (const auto& e : store.entries()) {
    double gsq = 0.0;
    for (double g : e.grad.data()) gsq += g * g;
    double vsq = 0.0;
    for (double v : e.value.data()) vsq += v * v;
    sq += vsq;
    os << e.name << " |v|=" << std::sqrt(vsq) << " |g|=" << std::sqrt(gsq) << "; ";
  }
  text = os.str();
  return std::sqrt(sq);
}

}  // namespace

BitScore score_logits(const Tensor& logits, const TaskSample& sample) {
  const Tensor targets = flat_target_bits(sample);
  const Tensor mask = flat_mask_bits(sample);
  BitScore score;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const bool predicted = logits[i] > 0.0;
    const bool expected = targets[i] != 0.0;
    ++score.total;
    if (predicted == expected) {
      ++score.correct;
    } else {
      score.exact = false;
    }
  }
  return score;
}

ValidationResult validate(const MaesAssembly& assembly, ParameterStore& store,
                          std::string_view solver, TaskId task, std::size_t batch,
                          std::size_t length, std::size_t memory_size, std::uint64_t seed) {
  auto rng = make_rng(seed, "validate");
  GenConfig gen;
  gen.len_min = length;
  gen.len_max = length;

  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const TaskSample sample = generate_with_length(task, length, gen, rng);
    Tape tp(/*recording=*/false);
    ForwardResult fwd = full_forward(tp, store, assembly, solver, sample, memory_size);
    const Var loss =
        bce_with_logits(tp, fwd.logits, flat_target_bits(sample), flat_mask_bits(sample));
    loss_sum += loss.value()[0];
    const BitScore s = score_logits(fwd.logits.value(), sample);
    correct += s.correct;
    total += s.total;
  }
  ValidationResult r;
  r.loss = loss_sum / static_cast<double>(batch);
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

TrainReport train(const MaesAssembly& assembly, ParameterStore& store,
                  std::span<const AttachedSolver> attached, const TrainConfig& cfg) {
  cfg.validate();
  if (attached.empty()) throw std::invalid_argument("train: no attached solvers");
  for (const AttachedSolver& a : attached) {
    assembly.solver(a.solver);  // throws for unknown ids
  }

  std::ofstream csv;
  if (!cfg.metrics_csv.empty()) {
    csv.open(cfg.metrics_csv);
    if (!csv) throw std::runtime_error("cannot open metrics csv: " + cfg.metrics_csv);
    csv << "iteration,loss,ema,val_loss,val_acc,wall_ms\n";
  }

  auto rng = make_rng(cfg.seed, "train");
  AdamOptimizer optimizer(store, cfg.optim);

  const double ema_decay = std::exp2(-1.0 / cfg.ema_half_life);
  double ema = 0.0;
  bool ema_init = false;

  TrainReport report;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0]() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  std::uniform_int_distribution<std::size_t> length_dist(cfg.gen.len_min, cfg.gen.len_max);

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const std::size_t length = length_dist(rng);

    Tape tp;
    std::vector<Var> sample_losses;
    sample_losses.reserve(cfg.batch_size * attached.size());
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::vector<TaskSample> samples =
          draw_joint_samples(attached, length, cfg.gen, rng);
      // encode once per batch member, reuse for every attached solver
      EncodeResult enc =
          encode_bytes(tp, store, assembly, samples[0].main, cfg.memory_size);
      for (std::size_t k = 0; k < attached.size(); ++k) {
        const TaskSample& s = samples[k];
        std::span<const std::uint8_t> aux;
        if (s.aux) aux = *s.aux;
        SolveResult sol =
            solve(tp, store, assembly, attached[k].solver, enc.memory, aux, s.steps());
        sample_losses.push_back(
            bce_with_logits(tp, sol.logits, flat_target_bits(s), flat_mask_bits(s)));
      }
    }
    const Var loss = mean_of(tp, sample_losses);
    const double loss_value = loss.value()[0];

    if (!std::isfinite(loss_value)) {
      std::string snapshot;
      param_norm_snapshot(store, snapshot);
      throw TrainingDiverged(iter, "non-finite loss; " + snapshot);
    }

    tp.backward(loss, store);
    optimizer.step();

    ema = ema_init ? ema_decay * ema + (1.0 - ema_decay) * loss_value : loss_value;
    ema_init = true;
    if (cfg.record_curves) report.loss_curve.push_back(loss_value);

    bool validated = false;
    ValidationResult val;
    if (cfg.validate_every > 0 && iter % cfg.validate_every == 0) {
      val = validate(assembly, store, attached[0].solver, attached[0].task, cfg.val_batch,
                     cfg.val_length, cfg.val_memory,
                     derive_seed(cfg.seed, "val-round", iter));
      if (attached.size() > 1) {
        double loss_acc = val.loss, acc_acc = val.accuracy;
        for (std::size_t k = 1; k < attached.size(); ++k) {
          const ValidationResult vk =
              validate(assembly, store, attached[k].solver, attached[k].task, cfg.val_batch,
                       cfg.val_length, cfg.val_memory,
                       derive_seed(cfg.seed, "val-round", iter + k));
          loss_acc += vk.loss;
          acc_acc += vk.accuracy;
        }
        val.loss = loss_acc / static_cast<double>(attached.size());
        val.accuracy = acc_acc / static_cast<double>(attached.size());
      }
      validated = true;
      report.validation_curve.push_back({iter, val.loss, val.accuracy});
    }

    if (csv.is_open()) {
      csv << iter << ',' << loss_value << ',' << ema << ',';
      if (validated) {
        csv << val.loss << ',' << val.accuracy;
      } else {
        csv << ',';
      }
      csv << ',' << wall_ms() << '\n';
    }

    report.iterations = iter;
    report.final_ema = ema;
    report.final_loss = loss_value;
    if (ema <= cfg.threshold) {
      report.converged = true;
      break;
    }
  }

  report.wall_ms = wall_ms();
  return report;
}

}  // namespace maes
