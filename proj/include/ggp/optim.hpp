#pragma once

// AdamW with decoupled weight decay and an exposed raw first moment, plus the
// linear warm-up learning-rate schedule.

#include <string>
#include <vector>

#include "ggp/params.hpp"

namespace ggp::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.02;
};

class AdamW {
 public:
  AdamW(const ParamRegistry& params, AdamWConfig cfg = {});

  // One update over all registered parameters, reading .grad. Throws if any
  // gradient is non-finite, naming the parameter.
  void step(double lr);

  // Raw first moment m_{t-1}: the EMA as of the end of the previous step,
  // with no bias correction. Returned by value so callers cannot mutate
  // optimizer state.
  std::vector<double> first_moment(const std::string& name) const;

  long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::string name;
    TensorPtr param;
    std::vector<double> m;
    std::vector<double> v;
  };

  const Slot& slot(const std::string& name) const;

  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

struct WarmupSchedule {
  long total_steps = 1;
  double warmup_fraction = 0.05;  // in [0, 1)
  double base_lr = 3e-4;

  long warmup_steps() const;
  // Linear ramp 0 -> base_lr over the warm-up window, constant afterwards.
  // step must lie in [0, total_steps].
  double lr_at(long step) const;
};

}  // namespace ggp::optim
