// Command-line front end: pretrain / finetune / ablation / selftest.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <filesystem>

#include <CLI11.hpp>

#include "ggp/harness.hpp"
#include "ggp/synthdata.hpp"
#include "ggp/ops.hpp"
#include "ggp/perturb.hpp"
#include "ggp/rng.hpp"

namespace {

ggp::harness::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return ggp::harness::ExperimentConfig::from_file(path);
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = load_config(config_path);
  const auto res = ggp::harness::run_pretrain(cfg, out_dir);
  const auto& last = res.records.back();
  std::printf("pretrain done: %zu epochs, final itc=%.4f itm=%.4f mlm=%.4f\n", res.records.size(),
              last.loss_itc.value_or(0.0), last.loss_itm.value_or(0.0), last.loss_mlm.value_or(0.0));
  std::printf("checkpoint: %s\n", res.checkpoint_path.c_str());
  return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& checkpoint, const std::string& out_dir) {
  const auto cfg = load_config(config_path);
  const auto res = ggp::harness::run_finetune(cfg, checkpoint, out_dir);
  if (!res.fresh_initialized.empty())
    std::printf("note: %zu decoder parameters absent from checkpoint, freshly initialized\n",
                res.fresh_initialized.size());
  std::printf("finetune done: val open=%.4f closed=%.4f overall=%.4f\n", res.final_eval.open, res.final_eval.closed,
              res.final_eval.overall);
  std::printf("model: %s\n", res.model_path.c_str());
  return 0;
}

int cmd_export_data(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = load_config(config_path);
  std::filesystem::create_directories(out_dir);
  const ggp::data::Vocab vocab;
  const auto pairs = ggp::data::gen_pretrain_set(vocab, cfg.seed, cfg.data_pretrain_n);
  ggp::data::export_pretrain_jsonl(out_dir + "/pretrain.jsonl", pairs);
  const auto split = ggp::data::gen_vqa_set(vocab, cfg.seed, cfg.data_vqa_train, cfg.data_vqa_val);
  ggp::data::export_vqa_jsonl(out_dir + "/vqa_train.jsonl", split.train);
  ggp::data::export_vqa_jsonl(out_dir + "/vqa_val.jsonl", split.val);
  std::printf("exported %zu caption pairs, %zu train and %zu val VQA samples to %s\n", pairs.size(),
              split.train.size(), split.val.size(), out_dir.c_str());
  return 0;
}

int cmd_ablation(const std::string& config_path, int n_seeds, const std::string& out_dir) {
  const auto cfg = load_config(config_path);
  std::vector<uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(cfg.seed + static_cast<uint64_t>(i));
  const auto report = ggp::harness::run_ablation(cfg, seeds, out_dir);
  std::printf("%-12s %-8s %-8s %-8s\n", "row", "open", "closed", "overall");
  for (const auto& r : report.rows)
    std::printf("%-12s %.4f   %.4f   %.4f  (+-%.4f)%s\n", r.row.c_str(), r.open_mean, r.closed_mean, r.overall_mean,
                r.overall_std, r.failed ? "  [failures]" : "");
  std::printf("full - baseline = %+.4f, full - fixed = %+.4f%s\n", report.full_minus_baseline,
              report.full_minus_fixed,
              report.flag_ft_only_ge_full ? "  [flag: ft-only >= full]" : "");
  return 0;
}

// Quick invariant suites, exercised in-process without any files.
int cmd_selftest() {
  using namespace ggp;
  int failures = 0;
  auto check = [&](bool ok, const char* what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what);
    if (!ok) ++failures;
  };

  {  // perturbation algebra on randomized cases
    Rng rng(2024);
    bool direction_ok = true, magnitude_ok = true, bound_ok = true, zero_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng.next_range(512));
      std::vector<double> theta(n), m(n);
      for (auto& v : theta) v = rng.next_gaussian();
      for (auto& v : m) v = 0.01 * rng.next_gaussian();
      perturb::PerturbationConfig cfg;
      cfg.delta = 0.001 + rng.next_double();
      cfg.epsilon = 1e-4 + 1e-2 * rng.next_double();
      const auto r = perturb::compute_perturbation(theta, m, cfg);
      double rr = 0, rm = 0, mm = 0, tt = 0;
      for (int i = 0; i < n; ++i) {
        rr += r[i] * r[i];
        rm += r[i] * m[i];
        mm += m[i] * m[i];
        tt += theta[i] * theta[i];
      }
      if (rr > 0) direction_ok &= std::fabs(rm / std::sqrt(rr * mm) - 1.0) < 1e-12;
      magnitude_ok &= std::fabs(std::sqrt(rr) - cfg.delta * std::sqrt(tt)) <= 1e-10 * cfg.delta * std::sqrt(tt);
      std::vector<double> out;
      perturb::clip_and_apply(theta, r, cfg.epsilon, out);
      for (int i = 0; i < n; ++i)
        bound_ok &= std::fabs(out[i] - theta[i]) <= cfg.epsilon * std::fabs(theta[i]);
      const auto r0 = perturb::compute_perturbation(theta, std::vector<double>(n, 0.0), cfg);
      for (double v : r0) zero_ok &= v == 0.0;
    }
    check(direction_ok, "perturbation is moment-aligned (cosine 1)");
    check(magnitude_ok, "adaptive magnitude equals delta*|theta|");
    check(bound_ok, "clip bound |theta'-theta| <= eps*|theta|");
    check(zero_ok, "zero moment yields zero perturbation");
  }

  {  // gradient check on a small composite function
    Tape tape;
    auto x = make_tensor({4, 5}, true);
    Rng rng(7);
    for (auto& v : x->data) v = rng.next_gaussian();
    auto f = [&](Tape& t) {
      auto h = ad::gelu(t, x);
      auto s = ad::softmax(t, h);
      return ad::sum(t, ad::multiply(t, s, s));
    };
    const double err = ad::finite_difference_check(f, x, 1e-5);
    check(err < 1e-6, "autodiff matches central finite differences");
  }

  {  // warm-up schedule shape
    optim::WarmupSchedule sched{1000, 0.05, 3e-4};
    bool ok = std::fabs(sched.lr_at(0) - 3e-4 / 50) < 1e-18;
    ok &= sched.lr_at(50) == 3e-4;
    ok &= std::fabs(sched.lr_at(24) - 3e-4 * 25 / 50) < 1e-18;
    check(ok, "warm-up schedule ramps linearly then holds");
  }

  std::printf(failures ? "selftest: %d failure(s)\n" : "selftest: all checks passed\n", failures);
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-guided perturbation training harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint;
  int n_seeds = 5;

  auto* pre = app.add_subcommand("pretrain", "run the ITC+ITM+MLM pre-training phase");
  pre->add_option("--config", config_path, "config file (flat key=value or JSON)");
  pre->add_option("--out", out_dir, "output directory")->required();

  auto* fin = app.add_subcommand("finetune", "fine-tune on VQA from a checkpoint");
  fin->add_option("--config", config_path, "config file");
  fin->add_option("--checkpoint", checkpoint, "pre-training checkpoint")->required();
  fin->add_option("--out", out_dir, "output directory")->required();

  auto* abl = app.add_subcommand("ablation", "run the 5-row perturbation ablation matrix");
  abl->add_option("--config", config_path, "config file");
  abl->add_option("--seeds", n_seeds, "number of seeds (config seed, seed+1, ...)");
  abl->add_option("--out", out_dir, "output directory")->required();

  auto* exp = app.add_subcommand("export-data", "write the synthetic datasets as line-delimited JSON");
  exp->add_option("--config", config_path, "config file");
  exp->add_option("--out", out_dir, "output directory")->required();

  app.add_subcommand("selftest", "run the built-in invariant suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_pretrain(config_path, out_dir);
    if (fin->parsed()) return cmd_finetune(config_path, checkpoint, out_dir);
    if (abl->parsed()) return cmd_ablation(config_path, n_seeds, out_dir);
    if (exp->parsed()) return cmd_export_data(config_path, out_dir);
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
