#include "ggp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ggp/objectives.hpp"
#include "ggp/ops.hpp"
#include "ggp/perturb.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace ggp::harness {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string opt_cell(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

constexpr const char* kCsvHeader =
    "phase,epoch,loss_itc,loss_itm,loss_mlm,loss_lm,acc_open,acc_closed,acc_overall,perturb_norm,clip_frac";

nn::ModelConfig make_model_config(const ExperimentConfig& cfg, const data::Vocab& vocab) {
  nn::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.momentum = cfg.model_momentum;
  mc.pad_id = data::kPad;
  mc.answer_start_id = data::kAns;
  return mc;
}

ParamRegistry filter_params(const ParamRegistry& all, const std::vector<std::string>& prefixes) {
  ParamRegistry out;
  for (const auto& [name, t] : all.items())
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) {
        out.add(name, t);
        break;
      }
  return out;
}

const std::vector<std::string> kPretrainPrefixes = {"visual_encoder", "text_encoder", "fusion_encoder",
                                                    "img_proj", "txt_proj", "itm_head", "mlm_head"};
const std::vector<std::string> kFinetunePrefixes = {"visual_encoder", "text_encoder", "fusion_encoder",
                                                    "answer_decoder"};

// Index batches for one epoch: a seeded permutation in fixed-size chunks. A
// trailing chunk smaller than min_last is folded into its predecessor.
std::vector<std::vector<int>> make_batches(int n, int batch, Rng rng, int min_last) {
  const auto perm = rng.permutation(n);
  std::vector<std::vector<int>> batches;
  for (int i = 0; i < n; i += batch)
    batches.emplace_back(perm.begin() + i, perm.begin() + std::min(i + batch, n));
  if (batches.size() > 1 && static_cast<int>(batches.back().size()) < min_last) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    for (int idx : tail) batches.back().push_back(idx);
  }
  return batches;
}

TensorPtr patches_tensor(const nn::MultiModalModel& model, const std::vector<const data::ShapeScene*>& scenes) {
  const int b = static_cast<int>(scenes.size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(b) * 64);
  for (const auto* s : scenes) {
    const auto grid = s->render();
    const auto p = model.patchify({grid.begin(), grid.end()});
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return make_tensor({b, model.config().patch_tokens(), model.config().patch_dim()}, std::move(flat));
}

struct RunningMean {
  double sum = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

void emit_metrics(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records, const std::string& dir) {
  if (records.empty()) throw std::runtime_error("emit_metrics: no records");
  fs::create_directories(dir);
  const std::string csv_path = dir + "/metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("emit_metrics: cannot write " + csv_path);
  csv << kCsvHeader << "\n";
  for (const auto& r : records) {
    csv << r.phase << ',' << r.epoch << ',' << opt_cell(r.loss_itc) << ',' << opt_cell(r.loss_itm) << ','
        << opt_cell(r.loss_mlm) << ',' << opt_cell(r.loss_lm) << ',' << opt_cell(r.acc_open) << ','
        << opt_cell(r.acc_closed) << ',' << opt_cell(r.acc_overall) << ',' << fmt17(r.perturb_norm) << ','
        << fmt17(r.clip_frac) << "\n";
  }
  if (!csv) throw std::runtime_error("emit_metrics: write failed for " + csv_path);
  csv.close();

  nlohmann::json summary;
  summary["config"] = nlohmann::json::parse(cfg.to_json());
  summary["n_records"] = records.size();
  const auto& last = records.back();
  nlohmann::json fin;
  fin["phase"] = last.phase;
  fin["epoch"] = last.epoch;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) fin[key] = *v;
  };
  put("loss_itc", last.loss_itc);
  put("loss_itm", last.loss_itm);
  put("loss_mlm", last.loss_mlm);
  put("loss_lm", last.loss_lm);
  put("acc_open", last.acc_open);
  put("acc_closed", last.acc_closed);
  put("acc_overall", last.acc_overall);
  fin["perturb_norm"] = last.perturb_norm;
  fin["clip_frac"] = last.clip_frac;
  summary["final"] = fin;
  const std::string json_path = dir + "/summary.json";
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw std::runtime_error("emit_metrics: cannot write " + json_path);
  js << summary.dump(2) << "\n";
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("parse_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw std::runtime_error("parse_metrics_csv: unexpected header in " + path);
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 11) throw std::runtime_error("parse_metrics_csv: malformed row in " + path);
    MetricsRecord r;
    r.phase = cells[0];
    r.epoch = std::stoi(cells[1]);
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::strtod(s.c_str(), nullptr);
    };
    r.loss_itc = opt(cells[2]);
    r.loss_itm = opt(cells[3]);
    r.loss_mlm = opt(cells[4]);
    r.loss_lm = opt(cells[5]);
    r.acc_open = opt(cells[6]);
    r.acc_closed = opt(cells[7]);
    r.acc_overall = opt(cells[8]);
    r.perturb_norm = std::strtod(cells[9].c_str(), nullptr);
    r.clip_frac = std::strtod(cells[10].c_str(), nullptr);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation (greedy decode, exact match)
// ---------------------------------------------------------------------------

EvalResult evaluate(const nn::MultiModalModel& model, const std::vector<data::VqaSample>& samples) {
  NoGradGuard ng;
  EvalResult res;
  int correct_open = 0, correct_closed = 0;
  const int chunk = 32;
  const int max_len = model.config().decoder_positions;

  for (std::size_t lo = 0; lo < samples.size(); lo += chunk) {
    const std::size_t hi = std::min(lo + chunk, samples.size());
    const int b = static_cast<int>(hi - lo);
    std::vector<const data::ShapeScene*> scenes;
    std::vector<std::vector<int>> questions;
    for (std::size_t i = lo; i < hi; ++i) {
      scenes.push_back(&samples[i].scene);
      questions.push_back(samples[i].question_ids);
    }
    Tape tape;
    auto img_tokens = model.encode_image(tape, patches_tensor(model, scenes));
    auto q_tokens = model.encode_text(tape, questions);
    auto fused = model.fuse(tape, img_tokens, q_tokens, questions);

    std::vector<std::vector<int>> prefix(b, std::vector<int>{data::kAns});
    std::vector<std::vector<int>> decoded(b, std::vector<int>{data::kAns});
    std::vector<char> done(b, 0);
    for (int t = 1; t < max_len; ++t) {
      auto logits = model.decode_answer(tape, fused, questions, prefix);  // [b, t, V]
      const int v = model.config().vocab_size;
      bool all_done = true;
      for (int bi = 0; bi < b; ++bi) {
        int tok = data::kPad;
        if (!done[bi]) {
          const double* row = logits->data.data() + (static_cast<std::size_t>(bi) * t + (t - 1)) * v;
          int best = 0;
          for (int j = 1; j < v; ++j)
            if (row[j] > row[best]) best = j;
          tok = best;
          decoded[bi].push_back(tok);
          if (tok == data::kEnd) done[bi] = 1;
        }
        prefix[bi].push_back(tok);
        all_done = all_done && done[bi];
      }
      if (all_done) break;
    }
    for (int bi = 0; bi < b; ++bi) {
      const auto& s = samples[lo + bi];
      const bool correct = decoded[bi] == s.answer_ids;
      if (s.closed) {
        ++res.n_closed;
        correct_closed += correct ? 1 : 0;
      } else {
        ++res.n_open;
        correct_open += correct ? 1 : 0;
      }
    }
  }
  res.open = res.n_open ? static_cast<double>(correct_open) / res.n_open : 0.0;
  res.closed = res.n_closed ? static_cast<double>(correct_closed) / res.n_closed : 0.0;
  const int total = res.n_open + res.n_closed;
  res.overall = total ? static_cast<double>(correct_open + correct_closed) / total : 0.0;
  return res;
}

EvalResult evaluate_train(const nn::MultiModalModel& model, const std::vector<data::VqaSample>& samples) {
  return evaluate(model, samples);
}

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

PretrainResult run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const data::Vocab vocab;
  const auto pairs = data::gen_pretrain_set(vocab, cfg.seed, cfg.data_pretrain_n);
  nn::MultiModalModel model(make_model_config(cfg, vocab), cfg.seed);
  ParamRegistry train_params = filter_params(model.params(), kPretrainPrefixes);
  optim::AdamW opt(train_params, cfg.adamw);
  obj::EmbeddingQueue queue(cfg.itc_queue, model.config().contrastive_dim);
  const Rng root(cfg.seed);

  const int n = static_cast<int>(pairs.size());
  const long steps_per_epoch =
      static_cast<long>(make_batches(n, cfg.pretrain.batch, root.split("pretrain_order", 1), 2).size());
  const optim::WarmupSchedule sched{steps_per_epoch * cfg.pretrain.epochs, cfg.pretrain.warmup, cfg.pretrain.lr};

  const std::string ckpt_path = out_dir + "/checkpoint_pretrain.bin";
  std::vector<MetricsRecord> records;
  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.pretrain.epochs; ++epoch) {
    const auto batches = make_batches(n, cfg.pretrain.batch, root.split("pretrain_order", epoch), 2);
    RunningMean m_itc, m_itm, m_mlm, m_norm, m_clip;
    for (const auto& batch : batches) {
      std::vector<const data::ShapeScene*> scenes;
      std::vector<std::vector<int>> captions;
      for (int idx : batch) {
        scenes.push_back(&pairs[idx].scene);
        captions.push_back(pairs[idx].caption_ids);
      }
      const Rng step_rng = root.split("pretrain_step", static_cast<uint64_t>(global_step));

      obj::LossBundle parts;
      auto loss_fn = [&](Tape& tape) -> TensorPtr {
        auto patches = patches_tensor(model, scenes);
        auto img_tokens = model.encode_image(tape, patches);
        auto txt_tokens = model.encode_text(tape, captions);
        auto img_emb = model.project_image(tape, img_tokens);
        auto txt_emb = model.project_text(tape, txt_tokens);
        TensorPtr img_emb_m, txt_emb_m;
        {
          NoGradGuard no_grad;
          img_emb_m = model.project_image(tape, model.encode_image(tape, patches, true), true);
          txt_emb_m = model.project_text(tape, model.encode_text(tape, captions, true), true);
        }
        auto itc = obj::itc_loss(tape, img_emb, txt_emb, img_emb_m, txt_emb_m, queue, cfg.itc_temperature);
        Rng itm_rng = step_rng.split("itm");
        auto itm = obj::itm_loss(tape, model, img_tokens, txt_tokens, captions, itm_rng);
        Rng mlm_rng = step_rng.split("mlm");
        std::vector<std::vector<int>> masked(captions.size()), positions(captions.size());
        for (std::size_t i = 0; i < captions.size(); ++i) {
          auto mr = obj::mlm_mask(captions[i], 0.15, mlm_rng);
          masked[i] = std::move(mr.masked_ids);
          positions[i] = std::move(mr.target_positions);
        }
        auto mlm = obj::mlm_loss(tape, model, img_tokens, masked, positions, captions);
        parts.itc = itc->data[0];
        parts.itm = itm->data[0];
        parts.mlm = mlm->data[0];
        return ad::add(tape, ad::add(tape, itc, itm), mlm);
      };

      const auto step = perturb::perturbed_training_step(model.params(), opt, cfg.ggp, perturb::Phase::pretrain,
                                                         sched.lr_at(global_step), loss_fn);
      model.momentum_update();
      m_itc.add(parts.itc);
      m_itm.add(parts.itm);
      m_mlm.add(parts.mlm);
      m_norm.add(step.report.mean_pre_clip_norm());
      m_clip.add(step.report.mean_clip_fraction());
      ++global_step;
    }
    MetricsRecord rec;
    rec.phase = "pretrain";
    rec.epoch = epoch;
    rec.loss_itc = m_itc.mean();
    rec.loss_itm = m_itm.mean();
    rec.loss_mlm = m_mlm.mean();
    rec.perturb_norm = m_norm.mean();
    rec.clip_frac = m_clip.mean();
    records.push_back(rec);
    model.save_checkpoint(ckpt_path, false);  // last-good checkpoint survives a later abort
  }
  emit_metrics(cfg, records, out_dir);
  return {records, ckpt_path};
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

FinetuneResult run_finetune(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                            const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const data::Vocab vocab;
  const auto split = data::gen_vqa_set(vocab, cfg.seed, cfg.data_vqa_train, cfg.data_vqa_val);
  nn::MultiModalModel model(make_model_config(cfg, vocab), cfg.seed);
  const auto load_report = model.load_checkpoint(checkpoint_path);
  ParamRegistry train_params = filter_params(model.params(), kFinetunePrefixes);
  optim::AdamW opt(train_params, cfg.adamw);
  const Rng root(cfg.seed);

  const int n = static_cast<int>(split.train.size());
  const long steps_per_epoch =
      static_cast<long>(make_batches(n, cfg.finetune.batch, root.split("finetune_order", 1), 1).size());
  const optim::WarmupSchedule sched{steps_per_epoch * cfg.finetune.epochs, cfg.finetune.warmup, cfg.finetune.lr};

  std::vector<MetricsRecord> records;
  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.finetune.epochs; ++epoch) {
    const auto batches = make_batches(n, cfg.finetune.batch, root.split("finetune_order", epoch), 1);
    RunningMean m_lm, m_norm, m_clip;
    for (const auto& batch : batches) {
      std::vector<const data::ShapeScene*> scenes;
      std::vector<std::vector<int>> questions, answers;
      for (int idx : batch) {
        scenes.push_back(&split.train[idx].scene);
        questions.push_back(split.train[idx].question_ids);
        answers.push_back(split.train[idx].answer_ids);
      }
      auto loss_fn = [&](Tape& tape) -> TensorPtr {
        auto img_tokens = model.encode_image(tape, patches_tensor(model, scenes));
        return obj::vqa_loss(tape, model, img_tokens, questions, answers, data::kEnd);
      };
      const auto step = perturb::perturbed_training_step(model.params(), opt, cfg.ggp, perturb::Phase::finetune,
                                                         sched.lr_at(global_step), loss_fn);
      m_lm.add(step.loss);
      m_norm.add(step.report.mean_pre_clip_norm());
      m_clip.add(step.report.mean_clip_fraction());
      ++global_step;
    }
    const EvalResult ev = evaluate(model, split.val);
    MetricsRecord rec;
    rec.phase = "finetune";
    rec.epoch = epoch;
    rec.loss_lm = m_lm.mean();
    rec.acc_open = ev.open;
    rec.acc_closed = ev.closed;
    rec.acc_overall = ev.overall;
    rec.perturb_norm = m_norm.mean();
    rec.clip_frac = m_clip.mean();
    records.push_back(rec);
  }

  const std::string model_path = out_dir + "/model_finetuned.bin";
  model.save_checkpoint(model_path, true);
  emit_metrics(cfg, records, out_dir);

  FinetuneResult res;
  res.records = records;
  res.final_eval = evaluate(model, split.val);
  res.model_path = model_path;
  res.fresh_initialized = load_report.fresh_initialized;
  return res;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"baseline", false, false, true}, {"pt_apm", true, false, true},       {"ft_apm", false, true, true},
      {"pt_ft_fixed", true, true, false}, {"pt_ft_apm", true, true, true},
  };
  return rows;
}

int parallel_cell_limit() {
  if (const char* env = std::getenv("GGP_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void run_jobs(std::vector<std::function<void()>>& jobs, int limit) {
  const int workers = std::max(1, std::min<int>(limit, static_cast<int>(jobs.size())));
#ifdef _OPENMP
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  const int omp_per_worker = std::max(1, hw / workers);
#endif
  if (workers == 1) {
    for (auto& j : jobs) j();
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
#ifdef _OPENMP
    omp_set_num_threads(omp_per_worker);
#endif
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      jobs[i]();
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

std::string pretrain_variant(const AblationRow& row) {
  if (!row.pt) return "baseline";
  return row.apm ? "apm" : "fixed";
}

double stdev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

AblationReport run_ablation(const ExperimentConfig& base, const std::vector<uint64_t>& seeds,
                            const std::string& out_dir) {
  base.validate();
  if (seeds.size() < 3) throw std::runtime_error("run_ablation: need at least 3 seeds");
  fs::create_directories(out_dir);
  const auto& rows = ablation_rows();

  // Phase 1: the three pre-training variants per seed.
  struct PretrainJob {
    std::string variant;
    uint64_t seed;
    std::string checkpoint;
    bool failed = false;
    std::string error;
  };
  std::vector<PretrainJob> pjobs;
  for (uint64_t seed : seeds)
    for (const char* variant : {"baseline", "apm", "fixed"}) pjobs.push_back({variant, seed, "", false, ""});

  std::vector<std::function<void()>> tasks;
  for (auto& job : pjobs) {
    tasks.push_back([&job, &base, &out_dir]() {
      ExperimentConfig cfg = base;
      cfg.seed = job.seed;
      cfg.ggp.enabled_pretrain = job.variant != "baseline";
      cfg.ggp.enabled_finetune = false;
      cfg.ggp.adaptive_magnitude = job.variant != "fixed";
      const std::string dir = out_dir + "/seed_" + std::to_string(job.seed) + "/pretrain_" + job.variant;
      try {
        job.checkpoint = run_pretrain(cfg, dir).checkpoint_path;
      } catch (const std::exception& e) {
        job.failed = true;
        job.error = e.what();
      }
    });
  }
  run_jobs(tasks, parallel_cell_limit());

  auto find_checkpoint = [&](const std::string& variant, uint64_t seed) -> const PretrainJob& {
    for (const auto& j : pjobs)
      if (j.variant == variant && j.seed == seed) return j;
    throw std::runtime_error("run_ablation: missing pretrain job");
  };

  // Phase 2: five fine-tune cells per seed.
  AblationReport report;
  report.cells.resize(rows.size() * seeds.size());
  tasks.clear();
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      AblationCell& cell = report.cells[ri * seeds.size() + si];
      cell.row = rows[ri].name;
      cell.seed = seeds[si];
      const AblationRow& row = rows[ri];
      tasks.push_back([&cell, &row, &base, &out_dir, &find_checkpoint]() {
        const auto& pre = find_checkpoint(pretrain_variant(row), cell.seed);
        if (pre.failed) {
          cell.failed = true;
          cell.error = "pretrain failed: " + pre.error;
          return;
        }
        ExperimentConfig cfg = base;
        cfg.seed = cell.seed;
        cfg.ggp.enabled_pretrain = row.pt;  // recorded in the summary; pre-training already ran
        cfg.ggp.enabled_finetune = row.ft;
        cfg.ggp.adaptive_magnitude = row.apm;
        const std::string dir = out_dir + "/seed_" + std::to_string(cell.seed) + "/" + row.name;
        try {
          auto res = run_finetune(cfg, pre.checkpoint, dir);
          cell.final_eval = res.final_eval;
          cell.finetune_records = std::move(res.records);
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
      });
    }
  }
  run_jobs(tasks, parallel_cell_limit());

  // Aggregate (fixed row order, seeds in given order).
  for (const auto& row : rows) {
    AblationRowStats st;
    st.row = row.name;
    std::vector<double> open, closed, overall;
    for (const auto& cell : report.cells) {
      if (cell.row != row.name) continue;
      if (cell.failed) {
        ++st.failed;
        continue;
      }
      open.push_back(cell.final_eval.open);
      closed.push_back(cell.final_eval.closed);
      overall.push_back(cell.final_eval.overall);
    }
    auto mixin = [&](const std::vector<double>& xs, double& mean_out, double& std_out) {
      if (xs.empty()) return;
      double s = 0.0;
      for (double x : xs) s += x;
      mean_out = s / static_cast<double>(xs.size());
      std_out = stdev(xs, mean_out);
    };
    mixin(open, st.open_mean, st.open_std);
    mixin(closed, st.closed_mean, st.closed_std);
    mixin(overall, st.overall_mean, st.overall_std);
    report.rows.push_back(st);
  }

  auto row_stat = [&](const std::string& name) -> const AblationRowStats& {
    for (const auto& r : report.rows)
      if (r.row == name) return r;
    throw std::runtime_error("run_ablation: missing row " + name);
  };
  report.full_minus_baseline = row_stat("pt_ft_apm").overall_mean - row_stat("baseline").overall_mean;
  report.full_minus_fixed = row_stat("pt_ft_apm").overall_mean - row_stat("pt_ft_fixed").overall_mean;
  report.flag_ft_only_ge_full = row_stat("ft_apm").overall_mean >= row_stat("pt_ft_apm").overall_mean;

  // Table CSV
  {
    std::ofstream os(out_dir + "/ablation_table.csv", std::ios::trunc);
    if (!os) throw std::runtime_error("run_ablation: cannot write ablation_table.csv");
    os << "row,open_mean,open_std,closed_mean,closed_std,overall_mean,overall_std,failed\n";
    for (const auto& r : report.rows)
      os << r.row << ',' << fmt17(r.open_mean) << ',' << fmt17(r.open_std) << ',' << fmt17(r.closed_mean) << ','
         << fmt17(r.closed_std) << ',' << fmt17(r.overall_mean) << ',' << fmt17(r.overall_std) << ',' << r.failed
         << "\n";
  }
  // Per-epoch curves (Fig-3 analogue)
  {
    std::ofstream os(out_dir + "/ablation_curves.csv", std::ios::trunc);
    if (!os) throw std::runtime_error("run_ablation: cannot write ablation_curves.csv");
    os << "row,seed,epoch,acc_open,acc_closed,acc_overall\n";
    for (const auto& cell : report.cells) {
      if (cell.failed) continue;
      for (const auto& rec : cell.finetune_records)
        os << cell.row << ',' << cell.seed << ',' << rec.epoch << ',' << opt_cell(rec.acc_open) << ','
           << opt_cell(rec.acc_closed) << ',' << opt_cell(rec.acc_overall) << "\n";
    }
  }
  // Summary JSON
  {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(base.to_json());
    nlohmann::json seeds_json = nlohmann::json::array();
    for (uint64_t s : seeds) seeds_json.push_back(s);
    j["seeds"] = seeds_json;
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : report.rows) {
      nlohmann::json rj;
      rj["row"] = r.row;
      rj["open_mean"] = r.open_mean;
      rj["open_std"] = r.open_std;
      rj["closed_mean"] = r.closed_mean;
      rj["closed_std"] = r.closed_std;
      rj["overall_mean"] = r.overall_mean;
      rj["overall_std"] = r.overall_std;
      rj["failed"] = r.failed;
      rows_json.push_back(rj);
    }
    j["rows"] = rows_json;
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& cell : report.cells) {
      nlohmann::json cj;
      cj["row"] = cell.row;
      cj["seed"] = cell.seed;
      cj["failed"] = cell.failed;
      if (cell.failed)
        cj["error"] = cell.error;
      else {
        cj["open"] = cell.final_eval.open;
        cj["closed"] = cell.final_eval.closed;
        cj["overall"] = cell.final_eval.overall;
      }
      cells_json.push_back(cj);
    }
    j["cells"] = cells_json;
    j["full_minus_baseline"] = report.full_minus_baseline;
    j["full_minus_fixed"] = report.full_minus_fixed;
    j["flag_ft_only_ge_full"] = report.flag_ft_only_ge_full;
    std::ofstream os(out_dir + "/ablation_summary.json", std::ios::trunc);
    if (!os) throw std::runtime_error("run_ablation: cannot write ablation_summary.json");
    os << j.dump(2) << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Hashes (ablation isolation checks)
// ---------------------------------------------------------------------------

uint64_t fnv1a(const void* data, std::size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t hash_dataset(const std::vector<data::PretrainPair>& pairs) {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& p : pairs) {
    const auto grid = p.scene.render();
    h = fnv1a(grid.data(), grid.size() * sizeof(double), h);
    h = fnv1a(p.caption_ids.data(), p.caption_ids.size() * sizeof(int), h);
  }
  return h;
}

uint64_t hash_params(const ParamRegistry& params) {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : params.items()) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t->data.data(), t->data.size() * sizeof(double), h);
  }
  return h;
}

}  // namespace ggp::harness
