#pragma once

// Declarative experiment description. Files are either flat "key = value"
// text (# comments) or a JSON object (flat or nested); every key has a
// default and unknown keys are rejected. Serialization round-trips exactly.

#include <cstdint>
#include <string>

#include "ggp/optim.hpp"
#include "ggp/perturb.hpp"

namespace ggp::harness {

struct PhaseConfig {
  int epochs = 1;
  int batch = 32;
  double lr = 3e-4;
  double warmup = 0.05;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  PhaseConfig pretrain{30, 32, 3e-4, 0.05};
  PhaseConfig finetune{40, 32, 3e-4, 0.05};
  perturb::PerturbationConfig ggp;
  int data_pretrain_n = 2000;
  int data_vqa_train = 256;
  int data_vqa_val = 256;
  optim::AdamWConfig adamw;
  double itc_temperature = 0.07;
  int itc_queue = 256;
  double model_momentum = 0.995;

  void validate() const;
  std::string to_json() const;  // canonical flat-key serialization
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

}  // namespace ggp::harness
