#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maes/tensor.hpp"

namespace maes {

/// Named trainable tensors with gradient slots, a group label and a frozen
/// flag per group. Iteration order is insertion order, which keeps
/// checkpoints and optimizer traversal deterministic.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::string group;
    Tensor value;
    Tensor grad;
    bool frozen = false;
  };

  int add(std::string name, std::string group, Tensor value);

  bool contains(std::string_view name) const;
  int index_of(std::string_view name) const;  // throws if absent

  Entry& entry(int index) { return entries_[static_cast<std::size_t>(index)]; }
  const Entry& entry(int index) const { return entries_[static_cast<std::size_t>(index)]; }
  Entry& entry(std::string_view name) { return entries_[static_cast<std::size_t>(index_of(name))]; }
  const Entry& entry(std::string_view name) const {
    return entries_[static_cast<std::size_t>(index_of(name))];
  }

  Tensor& value(std::string_view name) { return entry(name).value; }
  const Tensor& value(std::string_view name) const { return entry(name).value; }
  Tensor& grad(std::string_view name) { return entry(name).grad; }

  std::size_t count() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  // Frozen parameters keep receiving gradient contributions; the optimizer
  // skips them.
  void freeze_group(std::string_view group);
  void unfreeze_group(std::string_view group);
  bool has_group(std::string_view group) const;
  std::vector<std::string> groups() const;

  std::size_t total_scalar_count() const;
  std::size_t unfrozen_scalar_count() const;

  void zero_grads();

  /// FNV-1a over the raw value bytes, in insertion order. Used to verify
  /// that evaluation paths never mutate parameters.
  std::uint64_t value_hash() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace maes
