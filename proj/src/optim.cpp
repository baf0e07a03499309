#include "ggp/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "ggp/kernels.hpp"

namespace ggp::optim {

AdamW::AdamW(const ParamRegistry& params, AdamWConfig cfg) : cfg_(cfg) {
  if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0)
    throw std::runtime_error("adamw: betas must lie in (0,1)");
  if (cfg_.eps <= 0.0) throw std::runtime_error("adamw: eps must be positive");
  if (cfg_.weight_decay < 0.0) throw std::runtime_error("adamw: weight decay must be non-negative");
  slots_.reserve(params.size());
  for (const auto& [name, t] : params.items()) {
    if (!t->requires_grad) continue;
    Slot s;
    s.name = name;
    s.param = t;
    s.m.assign(t->numel(), 0.0);
    s.v.assign(t->numel(), 0.0);
    slots_.push_back(std::move(s));
  }
}

void AdamW::step(double lr) {
  for (auto& s : slots_) {
    s.param->ensure_grad();
    for (double g : s.param->grad)
      if (!std::isfinite(g)) throw std::runtime_error("adamw: non-finite gradient in parameter " + s.name);
  }
  ++t_;
  for (auto& s : slots_) {
    kern::adamw_update(s.param->data.data(), s.param->grad.data(), s.m.data(), s.v.data(), s.param->numel(),
                       lr, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay, t_);
  }
}

const AdamW::Slot& AdamW::slot(const std::string& name) const {
  for (const auto& s : slots_)
    if (s.name == name) return s;
  throw std::runtime_error("adamw: unknown parameter " + name);
}

std::vector<double> AdamW::first_moment(const std::string& name) const { return slot(name).m; }

long WarmupSchedule::warmup_steps() const {
  return static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

double WarmupSchedule::lr_at(long step) const {
  if (step < 0 || step > total_steps)
    throw std::runtime_error("warmup schedule: step " + std::to_string(step) + " outside [0," +
                             std::to_string(total_steps) + "]");
  const long w = warmup_steps();
  if (step < w) return base_lr * static_cast<double>(step + 1) / static_cast<double>(w);
  return base_lr;
}

}  // namespace ggp::optim
