#pragma once

// Gradient-guided weight perturbation. Each training step the engine
// snapshots the targeted parameters, builds a perturbation aligned with the
// optimizer's raw first moment, clips it elementwise to +-epsilon*|theta|,
// runs forward/backward at the perturbed point, restores the snapshot and
// lets the optimizer apply those gradients to the unperturbed weights.

#include <functional>
#include <string>
#include <vector>

#include "ggp/optim.hpp"
#include "ggp/params.hpp"
#include "ggp/tape.hpp"

namespace ggp::perturb {

struct PerturbationConfig {
  double delta = 0.05;
  double epsilon = 0.001;
  bool adaptive_magnitude = true;  // APM: scale by ||theta||/||m|| instead of fixed_ratio
  double fixed_ratio = 0.05;
  std::string target_prefix = "visual_encoder";
  bool enabled_pretrain = false;
  bool enabled_finetune = false;

  // delta and fixed_ratio admit 0 (a 0 coefficient is the exact no-op used
  // by the baseline-equivalence checks); epsilon must be positive.
  void validate() const;
  bool enabled_for_phase(bool pretrain_phase) const {
    return pretrain_phase ? enabled_pretrain : enabled_finetune;
  }
};

struct ParameterSnapshot {
  std::vector<std::pair<std::string, std::vector<double>>> values;
};

struct PerturbationReport {
  struct Entry {
    std::string name;
    double pre_clip_norm = 0.0;
    double clip_fraction = 0.0;  // fraction of elements where the bound was active
    double cosine = 0.0;         // cos(r, moment); 0 when r == 0
  };
  std::vector<Entry> entries;

  double mean_pre_clip_norm() const;
  double mean_clip_fraction() const;
};

// r = delta * (||theta||/||m||) * m   (adaptive), or r = fixed_ratio * m.
// Either norm below 1e-12 degenerates to r = 0.
std::vector<double> compute_perturbation(const std::vector<double>& theta, const std::vector<double>& moment,
                                         const PerturbationConfig& cfg);

// theta_out = snap + clip(r, -eps*|snap|, +eps*|snap|); returns the fraction
// of elements clipped.
double clip_and_apply(const std::vector<double>& snapshot_theta, const std::vector<double>& r, double epsilon,
                      std::vector<double>& theta_out);

enum class Phase { pretrain, finetune };

struct StepResult {
  double loss = 0.0;
  PerturbationReport report;
};

using LossFn = std::function<TensorPtr(Tape&)>;

// One (optionally perturbed) training step. When the config is disabled for
// the phase, this is exactly forward/backward/optimizer-step. A non-finite
// loss at the perturbed point restores the snapshot and throws a diagnostic
// that includes the per-parameter pre-clip norms.
StepResult perturbed_training_step(ParamRegistry& params, optim::AdamW& opt, const PerturbationConfig& cfg,
                                   Phase phase, double lr, const LossFn& loss_fn);

}  // namespace ggp::perturb
