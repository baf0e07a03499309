#include "ggp/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "ggp/kernels.hpp"

namespace ggp::obj {

using ad::add;
using ad::concatenate;
using ad::gather_rows;
using ad::matmul;
using ad::reshape;
using ad::scale;
using ad::softmax_cross_entropy;
using ad::transpose;

namespace {

void check_unit_rows(const char* what, const TensorPtr& t) {
  if (t->shape.size() != 2) throw std::runtime_error(std::string(what) + ": embeddings must be [N,dim]");
  const int rows = t->shape[0];
  const int cols = t->shape[1];
  for (int r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double v = t->data[static_cast<std::size_t>(r) * cols + j];
      ss += v * v;
    }
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-6)
      throw std::runtime_error(std::string(what) + ": row " + std::to_string(r) + " is not unit-normalized");
  }
}

}  // namespace

void EmbeddingQueue::push_batch(const TensorPtr& img, const TensorPtr& txt) {
  if (capacity_ == 0) return;
  check_unit_rows("embedding queue", img);
  check_unit_rows("embedding queue", txt);
  if (img->shape != txt->shape || img->shape[1] != dim_)
    throw std::runtime_error("embedding queue: expected matching [N," + std::to_string(dim_) + "] pairs");
  if (img_.empty()) {
    img_.assign(static_cast<std::size_t>(capacity_) * dim_, 0.0);
    txt_.assign(static_cast<std::size_t>(capacity_) * dim_, 0.0);
  }
  const int n = img->shape[0];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim_; ++j) {
      img_[static_cast<std::size_t>(cursor_) * dim_ + j] = img->data[static_cast<std::size_t>(i) * dim_ + j];
      txt_[static_cast<std::size_t>(cursor_) * dim_ + j] = txt->data[static_cast<std::size_t>(i) * dim_ + j];
    }
    cursor_ = (cursor_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }
}

TensorPtr itc_loss(Tape& tape, const TensorPtr& img_live, const TensorPtr& txt_live, const TensorPtr& img_momentum,
                   const TensorPtr& txt_momentum, EmbeddingQueue& queue, double temperature) {
  check_unit_rows("itc_loss", img_live);
  check_unit_rows("itc_loss", txt_live);
  check_unit_rows("itc_loss", img_momentum);
  check_unit_rows("itc_loss", txt_momentum);
  if (img_live->shape != txt_live->shape || img_live->shape != img_momentum->shape ||
      img_live->shape != txt_momentum->shape)
    throw std::runtime_error("itc_loss: all embedding blocks must share one [N,dim] shape");
  const int n = img_live->shape[0];
  const int dim = img_live->shape[1];

  auto candidates = [&](const TensorPtr& in_batch, const std::vector<double>& queued) {
    if (queue.size() == 0) return in_batch;
    auto q = make_tensor({queue.size(), dim},
                         std::vector<double>(queued.begin(), queued.begin() + static_cast<std::size_t>(queue.size()) * dim));
    return concatenate(tape, in_batch, q, 0);
  };
  auto txt_candidates = candidates(txt_momentum, queue.txt_data());
  auto img_candidates = candidates(img_momentum, queue.img_data());

  std::vector<int> targets(n);
  for (int i = 0; i < n; ++i) targets[i] = i;

  const double inv_t = 1.0 / temperature;
  auto i2t = softmax_cross_entropy(
      tape, scale(tape, matmul(tape, img_live, transpose(tape, txt_candidates, 0, 1)), inv_t), targets);
  auto t2i = softmax_cross_entropy(
      tape, scale(tape, matmul(tape, txt_live, transpose(tape, img_candidates, 0, 1)), inv_t), targets);
  auto loss = scale(tape, add(tape, i2t, t2i), 0.5);

  queue.push_batch(img_momentum, txt_momentum);
  return loss;
}

std::vector<int> itm_negative_indices(int n, Rng& rng) {
  std::vector<int> neg(n);
  for (int i = 0; i < n; ++i) {
    int j = static_cast<int>(rng.next_range(static_cast<uint64_t>(n - 1)));
    if (j >= i) ++j;  // uniform over the other captions
    neg[i] = j;
  }
  return neg;
}

TensorPtr itm_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const TensorPtr& txt_tokens, const std::vector<std::vector<int>>& txt_ids, Rng& rng) {
  const int n = img_tokens->dim(0);
  if (n < 2) throw std::runtime_error("itm_loss: batch of " + std::to_string(n) + " has no in-batch negative");
  if (txt_tokens->dim(0) != n || static_cast<int>(txt_ids.size()) != n)
    throw std::runtime_error("itm_loss: image/text batch mismatch");

  const auto neg = itm_negative_indices(n, rng);
  std::vector<int> text_order(2 * n);
  for (int i = 0; i < n; ++i) text_order[i] = i;
  for (int i = 0; i < n; ++i) text_order[n + i] = neg[i];

  const int t = txt_tokens->dim(1);
  const int w = txt_tokens->dim(2);
  auto txt_flat = reshape(tape, txt_tokens, {n, t * w});
  auto paired_txt = reshape(tape, gather_rows(tape, txt_flat, text_order), {2 * n, t, w});
  auto paired_img = concatenate(tape, img_tokens, img_tokens, 0);
  std::vector<std::vector<int>> paired_ids(2 * n);
  for (int i = 0; i < 2 * n; ++i) paired_ids[i] = txt_ids[text_order[i]];

  auto fused = model.fuse(tape, paired_img, paired_txt, paired_ids);
  auto logits = model.itm_logits(tape, fused);
  std::vector<int> targets(2 * n);
  for (int i = 0; i < n; ++i) targets[i] = 1;
  for (int i = n; i < 2 * n; ++i) targets[i] = 0;
  return softmax_cross_entropy(tape, logits, targets);
}

MlmMaskResult mlm_mask(const std::vector<int>& token_ids, double mask_rate, Rng& rng, int first_content_id,
                       int mask_id) {
  std::vector<int> maskable;
  for (int i = 0; i < static_cast<int>(token_ids.size()); ++i)
    if (token_ids[i] >= first_content_id) maskable.push_back(i);
  if (maskable.empty()) throw std::runtime_error("mlm_mask: sequence has no maskable token");

  const int want = static_cast<int>(
      std::max<long long>(1, std::llround(mask_rate * static_cast<double>(maskable.size()))));
  const int n_mask = std::min<int>(want, static_cast<int>(maskable.size()));
  // Partial Fisher-Yates over the maskable positions.
  for (int i = 0; i < n_mask; ++i) {
    const int j = i + static_cast<int>(rng.next_range(maskable.size() - i));
    std::swap(maskable[i], maskable[j]);
  }
  MlmMaskResult out;
  out.target_positions.assign(maskable.begin(), maskable.begin() + n_mask);
  std::sort(out.target_positions.begin(), out.target_positions.end());
  out.masked_ids = token_ids;
  for (int pos : out.target_positions) out.masked_ids[pos] = mask_id;
  return out;
}

TensorPtr mlm_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const std::vector<std::vector<int>>& masked_ids,
                   const std::vector<std::vector<int>>& target_positions,
                   const std::vector<std::vector<int>>& original_ids) {
  const int b = static_cast<int>(masked_ids.size());
  if (b == 0 || static_cast<int>(target_positions.size()) != b || static_cast<int>(original_ids.size()) != b)
    throw std::runtime_error("mlm_loss: batch arrays must align");
  const int t = static_cast<int>(masked_ids[0].size());

  std::vector<int> rows;
  std::vector<int> targets;
  for (int bi = 0; bi < b; ++bi) {
    for (int pos : target_positions[bi]) {
      if (pos < 0 || pos >= t) throw std::runtime_error("mlm_loss: target position out of range");
      rows.push_back(bi * t + pos);
      targets.push_back(original_ids[bi][pos]);
    }
  }
  if (rows.empty()) throw std::runtime_error("mlm_loss: empty target set");

  auto masked_tokens = model.encode_text(tape, masked_ids);
  auto fused = model.fuse(tape, img_tokens, masked_tokens, masked_ids);
  auto logits = model.mlm_logits(tape, fused, rows);
  return softmax_cross_entropy(tape, logits, targets);
}

TensorPtr vqa_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const std::vector<std::vector<int>>& question_ids,
                   const std::vector<std::vector<int>>& answer_ids, int end_id) {
  const int b = static_cast<int>(answer_ids.size());
  if (b == 0 || static_cast<int>(question_ids.size()) != b)
    throw std::runtime_error("vqa_loss: question/answer batch mismatch");
  const int pad = model.config().pad_id;
  const int len = static_cast<int>(answer_ids[0].size());
  for (const auto& row : answer_ids) {
    if (static_cast<int>(row.size()) != len) throw std::runtime_error("vqa_loss: ragged answer batch");
    int real = 0;
    while (real < len && row[real] != pad) ++real;
    if (real < 3 || row[0] != model.config().answer_start_id || row[real - 1] != end_id)
      throw std::runtime_error("vqa_loss: answers must be [ANS] token... [END], got an empty or malformed answer");
  }

  std::vector<std::vector<int>> prefix(b);
  for (int bi = 0; bi < b; ++bi) prefix[bi].assign(answer_ids[bi].begin(), answer_ids[bi].end() - 1);

  auto q_tokens = model.encode_text(tape, question_ids);
  auto fused = model.fuse(tape, img_tokens, q_tokens, question_ids);
  auto logits = model.decode_answer(tape, fused, question_ids, prefix);  // [B, len-1, V]

  std::vector<int> rows;
  std::vector<int> targets;
  for (int bi = 0; bi < b; ++bi) {
    for (int i = 0; i + 1 < len; ++i) {
      const int tgt = answer_ids[bi][i + 1];
      if (tgt == pad) break;
      rows.push_back(bi * (len - 1) + i);
      targets.push_back(tgt);
    }
  }
  auto gathered = gather_rows(tape, logits, rows);
  return softmax_cross_entropy(tape, gathered, targets);
}

}  // namespace ggp::obj
