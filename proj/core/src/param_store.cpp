#include "maes/param_store.hpp"

#include <cstring>
#include <stdexcept>

namespace maes {

int ParameterStore::add(std::string name, std::string group, Tensor value) {
  if (index_.count(name)) {
    throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  }
  Entry e;
  e.name = name;
  e.group = std::move(group);
  e.grad = value;  // same shape
  e.grad.fill(0.0);
  e.value = std::move(value);
  const int idx = static_cast<int>(entries_.size());
  entries_.push_back(std::move(e));
  index_.emplace(std::move(name), idx);
  return idx;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

int ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::invalid_argument("ParameterStore: unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

void ParameterStore::freeze_group(std::string_view group) {
  if (!has_group(group)) {
    throw std::invalid_argument("ParameterStore: unknown group '" + std::string(group) + "'");
  }
  for (Entry& e : entries_) {
    if (e.group == group) e.frozen = true;
  }
}

void ParameterStore::unfreeze_group(std::string_view group) {
  if (!has_group(group)) {
    throw std::invalid_argument("ParameterStore: unknown group '" + std::string(group) + "'");
  }
  for (Entry& e : entries_) {
    if (e.group == group) e.frozen = false;
  }
}

bool ParameterStore::has_group(std::string_view group) const {
  for (const Entry& e : entries_) {
    if (e.group == group) return true;
  }
  return false;
}

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    bool seen = false;
    for (const std::string& g : out) {
      if (g == e.group) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(e.group);
  }
  return out;
}

std::size_t ParameterStore::total_scalar_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

std::size_t ParameterStore::unfrozen_scalar_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (!e.frozen) n += e.value.size();
  }
  return n;
}

void ParameterStore::zero_grads() {
  for (Entry& e : entries_) e.grad.fill(0.0);
}

std::uint64_t ParameterStore::value_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Entry& e : entries_) {
    for (double x : e.value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace maes
