#include "ggp/tape.hpp"

#include <stdexcept>

namespace ggp {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

void Tape::backward(const TensorPtr& loss) {
  if (!loss) throw std::runtime_error("backward: null loss");
  if (loss->numel() != 1)
    throw std::runtime_error("backward: loss must be scalar, got shape " + shape_str(loss->shape));
  bool on_tape = false;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.get() == loss.get()) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) throw std::runtime_error("backward: loss was not produced on this tape");

  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward) it->backward();
  }
  clear();
}

}  // namespace ggp
