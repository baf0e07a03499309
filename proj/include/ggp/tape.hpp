#pragma once

// Reverse-mode autodiff tape. Ops append nodes in execution order; backward
// walks the record once in reverse, accumulating (summing) into .grad of
// every requires_grad tensor, then clears the tape.

#include <functional>
#include <string>
#include <vector>

#include "ggp/tensor.hpp"

namespace ggp {

// Thread-local switch: when off, ops compute values but record nothing
// (momentum encoders, evaluation, finite-difference probes).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    std::function<void()> backward;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse, visiting
  // each node exactly once. The tape is cleared afterward. Throws if loss is
  // not a scalar or was not produced on this tape.
  void backward(const TensorPtr& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace ggp
