#include "ggp/perturb.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ggp/kernels.hpp"

namespace ggp::perturb {

namespace {
constexpr double kNormFloor = 1e-12;  // degenerate guard against division by ~0
}

void PerturbationConfig::validate() const {
  if (delta < 0.0) throw std::runtime_error("ggp config: delta must be non-negative");
  if (epsilon <= 0.0) throw std::runtime_error("ggp config: epsilon must be positive");
  if (fixed_ratio < 0.0) throw std::runtime_error("ggp config: fixed_ratio must be non-negative");
  if ((enabled_pretrain || enabled_finetune) && target_prefix.empty())
    throw std::runtime_error("ggp config: target selector must be non-empty when perturbation is enabled");
}

double PerturbationReport::mean_pre_clip_norm() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.pre_clip_norm;
  return s / static_cast<double>(entries.size());
}

double PerturbationReport::mean_clip_fraction() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.clip_fraction;
  return s / static_cast<double>(entries.size());
}

std::vector<double> compute_perturbation(const std::vector<double>& theta, const std::vector<double>& moment,
                                         const PerturbationConfig& cfg) {
  if (theta.size() != moment.size())
    throw std::runtime_error("compute_perturbation: theta has " + std::to_string(theta.size()) +
                             " elements but moment has " + std::to_string(moment.size()));
  std::vector<double> r(theta.size(), 0.0);
  const double theta_norm = std::sqrt(kern::reduce_sumsq(theta.data(), theta.size()));
  const double moment_norm = std::sqrt(kern::reduce_sumsq(moment.data(), moment.size()));
  if (moment_norm < kNormFloor || theta_norm < kNormFloor) return r;
  const double coeff = cfg.adaptive_magnitude ? cfg.delta * theta_norm / moment_norm : cfg.fixed_ratio;
  kern::scale(moment.data(), coeff, r.data(), moment.size());
  return r;
}

double clip_and_apply(const std::vector<double>& snapshot_theta, const std::vector<double>& r, double epsilon,
                      std::vector<double>& theta_out) {
  if (snapshot_theta.size() != r.size())
    throw std::runtime_error("clip_and_apply: snapshot has " + std::to_string(snapshot_theta.size()) +
                             " elements but r has " + std::to_string(r.size()));
  theta_out.resize(snapshot_theta.size());
  const std::size_t clipped =
      kern::clip_apply(snapshot_theta.data(), r.data(), epsilon, theta_out.data(), snapshot_theta.size());
  return snapshot_theta.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(snapshot_theta.size());
}

StepResult perturbed_training_step(ParamRegistry& params, optim::AdamW& opt, const PerturbationConfig& cfg,
                                   Phase phase, double lr, const LossFn& loss_fn) {
  cfg.validate();
  const bool active = cfg.enabled_for_phase(phase == Phase::pretrain);

  params.zero_grads();

  ParameterSnapshot snapshot;
  StepResult result;
  if (active) {
    const auto targeted = params.names_with_prefix(cfg.target_prefix);
    if (targeted.empty())
      throw std::runtime_error("perturbed_training_step: target selector '" + cfg.target_prefix +
                               "' matches no parameters");
    snapshot.values.reserve(targeted.size());
    for (const auto& name : targeted) {
      const TensorPtr& p = params.get(name);
      snapshot.values.emplace_back(name, p->data);

      const std::vector<double> moment = opt.first_moment(name);
      const std::vector<double> r = compute_perturbation(p->data, moment, cfg);

      PerturbationReport::Entry entry;
      entry.name = name;
      entry.pre_clip_norm = std::sqrt(kern::reduce_sumsq(r.data(), r.size()));
      if (entry.pre_clip_norm > 0.0) {
        const double mn = std::sqrt(kern::reduce_sumsq(moment.data(), moment.size()));
        entry.cosine = kern::reduce_dot(r.data(), moment.data(), r.size()) / (entry.pre_clip_norm * mn);
        entry.cosine = std::min(1.0, std::max(-1.0, entry.cosine));
      }
      entry.clip_fraction = clip_and_apply(snapshot.values.back().second, r, cfg.epsilon, p->data);
      result.report.entries.push_back(std::move(entry));
    }
  }

  auto restore = [&]() {
    for (const auto& [name, values] : snapshot.values) params.get(name)->data = values;
  };

  Tape tape;
  TensorPtr loss;
  try {
    loss = loss_fn(tape);
    if (!std::isfinite(loss->data[0])) {
      std::ostringstream os;
      os << "perturbed_training_step: non-finite loss at the "
         << (active ? "perturbed" : "current") << " point (" << loss->data[0] << ")";
      for (const auto& e : result.report.entries)
        os << "\n  " << e.name << ": pre-clip |r| = " << e.pre_clip_norm;
      throw std::runtime_error(os.str());
    }
    result.loss = loss->data[0];
    tape.backward(loss);
  } catch (...) {
    if (active) restore();
    throw;
  }

  if (active) restore();
  opt.step(lr);
  return result;
}

}  // namespace ggp::perturb
