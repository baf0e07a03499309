#pragma once

// Pre-training losses (ITC, ITM, MLM) and the fine-tuning conditional
// language-modeling loss.

#include <vector>

#include "ggp/model.hpp"
#include "ggp/rng.hpp"
#include "ggp/tape.hpp"

namespace ggp::obj {

// Ring buffer of unit-normalized momentum embedding pairs; oldest entries are
// overwritten first.
class EmbeddingQueue {
 public:
  EmbeddingQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {}

  // Appends one batch of momentum embeddings; rows must be unit-normalized.
  void push_batch(const TensorPtr& img, const TensorPtr& txt);

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  // Entries in slot order (deterministic candidate order for the loss).
  const std::vector<double>& img_data() const { return img_; }
  const std::vector<double>& txt_data() const { return txt_; }

 private:
  int capacity_;
  int dim_;
  int size_ = 0;
  int cursor_ = 0;
  std::vector<double> img_;
  std::vector<double> txt_;
};

struct LossBundle {
  double itc = 0.0;
  double itm = 0.0;
  double mlm = 0.0;
  double lm = 0.0;
  double w_itc = 1.0, w_itm = 1.0, w_mlm = 1.0;
  double total() const { return w_itc * itc + w_itm * itm + w_mlm * mlm; }
};

// Symmetric InfoNCE over [in-batch momentum + queue] candidates; queries are
// the live embeddings, keys are momentum embeddings. The queue is updated
// with the batch's momentum pairs after the loss is computed. All inputs must
// be unit-normalized ([N, dim]).
TensorPtr itc_loss(Tape& tape, const TensorPtr& img_live, const TensorPtr& txt_live, const TensorPtr& img_momentum,
                   const TensorPtr& txt_momentum, EmbeddingQueue& queue, double temperature);

// For each positive pair one negative is formed by pairing the image with a
// uniformly sampled different caption from the batch; 2-way cross entropy
// over the 2N fused pairs. N must be >= 2. txt_tokens are the encoded
// captions (reused from the ITC path); txt_ids supply the padding masks.
TensorPtr itm_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const TensorPtr& txt_tokens, const std::vector<std::vector<int>>& txt_ids, Rng& rng);

// The negative-caption index choices made by itm_loss for a given rng state.
std::vector<int> itm_negative_indices(int n, Rng& rng);

struct MlmMaskResult {
  std::vector<int> masked_ids;
  std::vector<int> target_positions;
};

// Masks exactly max(1, round(rate * maskable)) non-special positions, every
// one replaced by [MASK]. Specials (id < first_content_id) and padding are
// never masked.
MlmMaskResult mlm_mask(const std::vector<int>& token_ids, double mask_rate, Rng& rng, int first_content_id = 6,
                       int mask_id = 2);

// Cross entropy over masked positions only, from image-conditioned fused
// states. positions are per-sequence indices aligned with original_ids.
TensorPtr mlm_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const std::vector<std::vector<int>>& masked_ids,
                   const std::vector<std::vector<int>>& target_positions,
                   const std::vector<std::vector<int>>& original_ids);

// Teacher-forced causal cross entropy over answer tokens (mean per token),
// conditioned on the fused question-image representation. Answers must start
// with [ANS] and end with [END]; rows may be padded with pad_id.
TensorPtr vqa_loss(Tape& tape, const nn::MultiModalModel& model, const TensorPtr& img_tokens,
                   const std::vector<std::vector<int>>& question_ids,
                   const std::vector<std::vector<int>>& answer_ids, int end_id);

}  // namespace ggp::obj
