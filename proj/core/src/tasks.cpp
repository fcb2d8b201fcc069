#include "maes/tasks.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maes {

namespace {

std::uint8_t random_item(std::mt19937_64& rng) {
  return static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
}

std::uint8_t resample_to_differ(std::uint8_t item, std::mt19937_64& rng) {
  std::uint8_t out = item;
  while (out == item) out = random_item(rng);
  return out;
}

std::vector<std::uint8_t> random_sequence(std::size_t length, std::mt19937_64& rng) {
  std::vector<std::uint8_t> seq(length);
  for (auto& x : seq) x = random_item(rng);
  return seq;
}

}  // namespace

std::string_view task_name(TaskId t) {
  switch (t) {
    case TaskId::SerialRecall: return "serial";
    case TaskId::ReverseRecall: return "reverse";
    case TaskId::OddRecall: return "odd";
    case TaskId::Comparison: return "comparison";
    case TaskId::Equality: return "equality";
  }
  return "?";
}

std::optional<TaskId> task_from_name(std::string_view name) {
  for (TaskId t : kAllTasks) {
    if (task_name(t) == name) return t;
  }
  return std::nullopt;
}

bool task_has_aux(TaskId t) {
  return t == TaskId::Comparison || t == TaskId::Equality;
}

std::size_t task_target_width(TaskId t) {
  return task_has_aux(t) ? 1 : 8;
}

void GenConfig::validate() const {
  if (len_min < 1 || len_min > len_max) {
    throw std::invalid_argument("GenConfig: need 1 <= len_min <= len_max");
  }
  if (equal_rate <= 0.0 || equal_rate >= 1.0) {
    throw std::invalid_argument("GenConfig: equal_rate must be in (0, 1)");
  }
}

OracleResult oracle(TaskId task, const std::vector<std::uint8_t>& main,
                    const std::optional<std::vector<std::uint8_t>>& aux) {
  const std::size_t L = main.size();
  OracleResult r;
  switch (task) {
    case TaskId::SerialRecall:
      r.target = main;
      r.mask.assign(L, 1);
      break;
    case TaskId::ReverseRecall:
      r.target.assign(main.rbegin(), main.rend());
      r.mask.assign(L, 1);
      break;
    case TaskId::OddRecall:
      // 1st, 3rd, 5th, ... items
      for (std::size_t i = 0; i < L; i += 2) r.target.push_back(main[i]);
      r.mask.assign(r.target.size(), 1);
      break;
    case TaskId::Comparison: {
      if (!aux || aux->size() != L) {
        throw std::invalid_argument("oracle: comparison requires aux of main's length");
      }
      for (std::size_t i = 0; i < L; ++i) {
        r.target.push_back((*aux)[i] == main[i] ? 1 : 0);
      }
      r.mask.assign(L, 1);
      break;
    }
    case TaskId::Equality: {
      if (!aux || aux->size() != L) {
        throw std::invalid_argument("oracle: equality requires aux of main's length");
      }
      const bool equal = *aux == main;
      r.target.assign(L, 0);
      r.target.back() = equal ? 1 : 0;
      r.mask.assign(L, 0);
      r.mask.back() = 1;
      break;
    }
  }
  return r;
}

TaskSample sample_from_main(TaskId task, std::vector<std::uint8_t> main, const GenConfig& cfg,
                            std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t length = main.size();
  if (length < 1) throw std::invalid_argument("generate: length must be >= 1");

  TaskSample s;
  s.task = task;
  s.main = std::move(main);

  std::bernoulli_distribution keep(cfg.equal_rate);
  switch (task) {
    case TaskId::SerialRecall:
    case TaskId::ReverseRecall:
    case TaskId::OddRecall:
      break;
    case TaskId::Comparison: {
      // aux derived from main so both classes appear at every position;
      // i.i.d. aux would make matches astronomically rare
      std::vector<std::uint8_t> aux = s.main;
      for (auto& x : aux) {
        if (!keep(rng)) x = resample_to_differ(x, rng);
      }
      s.aux = std::move(aux);
      break;
    }
    case TaskId::Equality: {
      std::vector<std::uint8_t> aux = s.main;
      if (!keep(rng)) {
        // corrupt a uniformly random nonempty set of positions
        std::vector<std::size_t> corrupt;
        std::bernoulli_distribution half(0.5);
        while (corrupt.empty()) {
          for (std::size_t i = 0; i < length; ++i) {
            if (half(rng)) corrupt.push_back(i);
          }
        }
        for (std::size_t i : corrupt) aux[i] = resample_to_differ(aux[i], rng);
      }
      s.aux = std::move(aux);
      break;
    }
  }

  OracleResult o = oracle(task, s.main, s.aux);
  s.target = std::move(o.target);
  s.mask = std::move(o.mask);
  return s;
}

TaskSample generate_with_length(TaskId task, std::size_t length, const GenConfig& cfg,
                                std::mt19937_64& rng) {
  if (length < 1) throw std::invalid_argument("generate: length must be >= 1");
  return sample_from_main(task, random_sequence(length, rng), cfg, rng);
}

TaskSample generate(TaskId task, const GenConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t length =
      std::uniform_int_distribution<std::size_t>(cfg.len_min, cfg.len_max)(rng);
  return generate_with_length(task, length, cfg, rng);
}

Tensor item_bits(std::uint8_t item) {
  Tensor t = Tensor::zeros(8);
  for (std::size_t j = 0; j < 8; ++j) t[j] = static_cast<double>((item >> j) & 1);
  return t;
}

Tensor flat_target_bits(const TaskSample& s) {
  const std::size_t width = task_target_width(s.task);
  Tensor t = Tensor::zeros(s.steps() * width);
  for (std::size_t i = 0; i < s.steps(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      t[i * width + j] = static_cast<double>((s.target[i] >> j) & 1);
    }
  }
  return t;
}

Tensor flat_mask_bits(const TaskSample& s) {
  const std::size_t width = task_target_width(s.task);
  Tensor t = Tensor::zeros(s.steps() * width);
  for (std::size_t i = 0; i < s.steps(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      t[i * width + j] = static_cast<double>(s.mask[i]);
    }
  }
  return t;
}

// --------------------------- fixture files --------------------------------

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(bytes, 2);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("fixture file truncated");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void put_bytes(std::ostream& os, const std::vector<std::uint8_t>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

std::vector<std::uint8_t> get_bytes(std::istream& is, std::size_t n) {
  std::vector<std::uint8_t> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("fixture file truncated");
  return v;
}

}  // namespace

void write_fixtures(const std::string& path, TaskId task,
                    const std::vector<TaskSample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open fixture file for write: " + path);
  os.write("MAES", 4);
  put_u16(os, kFixtureVersion);
  os.put(static_cast<char>(task));
  for (const TaskSample& s : samples) {
    if (s.task != task) throw std::invalid_argument("write_fixtures: mixed task ids");
    if (s.main.size() > 0xffff || s.target.size() > 0xffff) {
      throw std::invalid_argument("write_fixtures: sequence too long for u16 length");
    }
    put_u16(os, static_cast<std::uint16_t>(s.main.size()));
    put_bytes(os, s.main);
    os.put(s.aux ? 1 : 0);
    if (s.aux) put_bytes(os, *s.aux);
    put_u16(os, static_cast<std::uint16_t>(s.target.size()));
    put_bytes(os, s.target);
    put_bytes(os, s.mask);
  }
  if (!os) throw std::runtime_error("fixture write failed: " + path);
}

std::vector<TaskSample> read_fixtures(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open fixture file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MAES", 4) != 0) {
    throw std::runtime_error("not a MAES fixture file: " + path);
  }
  const std::uint16_t version = get_u16(is);
  if (version != kFixtureVersion) {
    throw std::runtime_error("unsupported fixture version " + std::to_string(version));
  }
  const int task_byte = is.get();
  if (task_byte < 0 || task_byte > 4) throw std::runtime_error("bad fixture task id");
  const TaskId task = static_cast<TaskId>(task_byte);

  std::vector<TaskSample> out;
  while (true) {
    const int peek = is.peek();
    if (peek == EOF) break;
    TaskSample s;
    s.task = task;
    const std::size_t L = get_u16(is);
    s.main = get_bytes(is, L);
    const int aux_flag = is.get();
    if (aux_flag == EOF) throw std::runtime_error("fixture file truncated");
    if (aux_flag == 1) {
      s.aux = get_bytes(is, L);
    } else if (aux_flag != 0) {
      throw std::runtime_error("bad aux flag in fixture file");
    }
    const std::size_t target_len = get_u16(is);
    s.target = get_bytes(is, target_len);
    s.mask = get_bytes(is, target_len);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace maes
