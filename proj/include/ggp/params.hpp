#pragma once

// Ordered registry of named parameter tensors. Iteration order is
// registration order everywhere (optimizer updates, snapshots, checkpoints),
// which keeps every downstream computation deterministic.

#include <map>
#include <string>
#include <vector>

#include "ggp/tensor.hpp"

namespace ggp {

class ParamRegistry {
 public:
  void add(const std::string& name, TensorPtr t) {
    if (index_.count(name)) throw std::runtime_error("param registry: duplicate name " + name);
    index_[name] = items_.size();
    items_.push_back({name, std::move(t)});
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const TensorPtr& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("param registry: unknown parameter " + name);
    return items_[it->second].second;
  }

  const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, t] : items_)
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
  }

  void zero_grads() {
    for (auto& [name, t] : items_) t->zero_grad();
  }

 private:
  std::vector<std::pair<std::string, TensorPtr>> items_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ggp
