#include "maes/memory.hpp"

#include <stdexcept>

namespace maes {

ShiftKernel::ShiftKernel(std::vector<int> offs) : offsets(std::move(offs)) {
  if (offsets.empty()) throw std::invalid_argument("ShiftKernel: no offsets");
  // symmetric around 0: offsets must be {-k, ..., 0, ..., +k} in order
  const int radius = static_cast<int>(offsets.size() / 2);
  if (offsets.size() % 2 != 1) {
    throw std::invalid_argument("ShiftKernel: offset count must be odd");
  }
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] != static_cast<int>(i) - radius) {
      throw std::invalid_argument("ShiftKernel: offsets must be symmetric around 0");
    }
  }
}

ShiftKernel ShiftKernel::centered(int radius) {
  std::vector<int> offs;
  for (int k = -radius; k <= radius; ++k) offs.push_back(k);
  return ShiftKernel(std::move(offs));
}

MemoryState initial_memory(Tape& tp, std::size_t n_addresses, std::size_t word_size) {
  MemoryState mem;
  mem.contents = tp.constant(Tensor::zeros(n_addresses, word_size));
  mem.attention = tp.constant(Tensor::one_hot(n_addresses, 0));
  return mem;
}

Var memory_read(Tape& tp, const MemoryState& mem) {
  return vecmat(tp, mem.attention, mem.contents);
}

Var memory_write_step(Tape& tp, const Var& contents, const Var& attention, const Var& erase,
                      const Var& addv) {
  return memory_write(tp, contents, attention, erase, addv);
}

Var attention_shift(Tape& tp, const Var& attention, const Var& s, const ShiftKernel& kernel) {
  return circular_conv(tp, attention, s, kernel.offsets);
}

Var attention_sharpen(Tape& tp, const Var& attention, const Var& gamma) {
  return normalize_sum(tp, pow_eps(tp, attention, gamma, kSharpenEpsilon));
}

}  // namespace maes
