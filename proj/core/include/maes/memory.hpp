#pragma once

#include <vector>

#include "maes/autodiff.hpp"
#include "maes/tensor.hpp"

namespace maes {

/// Kernel for shifting attention over memory addresses: an ordered list of
/// integer offsets (symmetric around 0) and a probability vector over them.
struct ShiftKernel {
  std::vector<int> offsets;

  explicit ShiftKernel(std::vector<int> offs);

  /// [-radius, ..., 0, ..., +radius]
  static ShiftKernel centered(int radius);

  std::size_t width() const { return offsets.size(); }
};

inline constexpr double kSharpenEpsilon = 1e-12;

/// External memory as seen by one rollout: the N x M content matrix and the
/// current attention vector over the N addresses. Values live on the rollout's
/// tape; the struct is a pair of handles.
struct MemoryState {
  Var contents;   // [N x M]
  Var attention;  // [N], nonnegative, sums to 1

  std::size_t addresses() const { return contents.value().rows(); }
  std::size_t word_size() const { return contents.value().cols(); }
};

/// Fresh memory: all-zero contents, attention one-hot at address 0.
MemoryState initial_memory(Tape& tp, std::size_t n_addresses, std::size_t word_size);

/// Soft read: r[j] = sum_i w[i] * M[i][j].
Var memory_read(Tape& tp, const MemoryState& mem);

/// Erase/add update with the given attention: returns the new contents
/// matrix, leaving the caller to thread attention separately.
Var memory_write_step(Tape& tp, const Var& contents, const Var& attention, const Var& erase,
                      const Var& addv);

/// Circular-convolution shift of attention by the kernel distribution s.
Var attention_shift(Tape& tp, const Var& attention, const Var& s, const ShiftKernel& kernel);

/// Sharpening: w'_i = (w_i + eps)^gamma / sum_j (w_j + eps)^gamma, gamma >= 1.
/// The epsilon keeps the gradient finite when attention components hit zero.
Var attention_sharpen(Tape& tp, const Var& attention, const Var& gamma);

}  // namespace maes
