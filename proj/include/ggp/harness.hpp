#pragma once

// Experiment orchestration: pre-train -> checkpoint -> fine-tune pipelines,
// the five-row ablation matrix, greedy-decode evaluation, and metrics
// persistence (CSV + JSON summary).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ggp/config.hpp"
#include "ggp/model.hpp"
#include "ggp/synthdata.hpp"

namespace ggp::harness {

struct MetricsRecord {
  std::string phase;  // "pretrain" | "finetune"
  int epoch = 0;
  std::optional<double> loss_itc, loss_itm, loss_mlm, loss_lm;
  std::optional<double> acc_open, acc_closed, acc_overall;
  double perturb_norm = 0.0;
  double clip_frac = 0.0;
};

// CSV with the fixed header phase,epoch,loss_itc,loss_itm,loss_mlm,loss_lm,
// acc_open,acc_closed,acc_overall,perturb_norm,clip_frac (17 significant
// digits; absent fields are empty cells), plus a JSON summary embedding the
// resolved config and final metrics.
void emit_metrics(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records, const std::string& dir);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& path);

struct EvalResult {
  double open = 0.0, closed = 0.0, overall = 0.0;
  int n_open = 0, n_closed = 0;
};

// Greedy decode, exact token-sequence match; open/closed scored separately.
// A decode outside {yes,no} on a closed question can never exact-match and
// therefore scores incorrect. Perturbation never touches evaluation.
EvalResult evaluate(const nn::MultiModalModel& model, const std::vector<data::VqaSample>& samples);

// Training-set accuracy of a fine-tuned model (memorization probe).
EvalResult evaluate_train(const nn::MultiModalModel& model, const std::vector<data::VqaSample>& samples);

struct PretrainResult {
  std::vector<MetricsRecord> records;
  std::string checkpoint_path;
};

PretrainResult run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir);

struct FinetuneResult {
  std::vector<MetricsRecord> records;
  EvalResult final_eval;
  std::string model_path;
  std::vector<std::string> fresh_initialized;  // decoder params absent from the checkpoint
};

FinetuneResult run_finetune(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                            const std::string& out_dir);

struct AblationRow {
  std::string name;
  bool pt = false, ft = false, apm = false;
};

// The five Table-2-shaped rows; rows differ only in the perturbation flags.
const std::vector<AblationRow>& ablation_rows();

struct AblationCell {
  std::string row;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalResult final_eval;
  std::vector<MetricsRecord> finetune_records;
};

struct AblationRowStats {
  std::string row;
  double open_mean = 0, open_std = 0;
  double closed_mean = 0, closed_std = 0;
  double overall_mean = 0, overall_std = 0;
  int failed = 0;
};

struct AblationReport {
  std::vector<AblationCell> cells;     // sorted by (row, seed)
  std::vector<AblationRowStats> rows;  // five rows, fixed order
  bool flag_ft_only_ge_full = false;   // reported, not failed
  double full_minus_baseline = 0.0;
  double full_minus_fixed = 0.0;
};

// Runs all five rows for every seed. Rows with pre-training perturbation off
// share one baseline checkpoint per seed; rows with the same pre-training
// flags share theirs. Cells run in parallel up to the GGP_THREADS env var.
AblationReport run_ablation(const ExperimentConfig& base, const std::vector<uint64_t>& seeds,
                            const std::string& out_dir);

// FNV-1a over raw bytes; used to verify ablation isolation (identical data
// streams and init states across rows).
uint64_t fnv1a(const void* data, std::size_t n, uint64_t h = 1469598103934665603ULL);
uint64_t hash_dataset(const std::vector<data::PretrainPair>& pairs);
uint64_t hash_params(const ParamRegistry& params);

int parallel_cell_limit();  // GGP_THREADS or hardware default

}  // namespace ggp::harness
