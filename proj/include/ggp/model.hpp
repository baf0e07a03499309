#pragma once

// Desk-scale multi-modal network: patch-token visual encoder, token text
// encoder, cross-attention fusion encoder, contrastive projection heads,
// ITM/MLM heads, a causal answer decoder, and EMA momentum copies of the
// unimodal encoders. All parameters carry stable hierarchical names; the
// perturbation target selector works on those names.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ggp/ops.hpp"
#include "ggp/params.hpp"
#include "ggp/tape.hpp"

namespace ggp::nn {

struct ModelConfig {
  int width = 32;
  int heads = 4;
  int visual_depth = 4;  // kept at 2x text_depth, mirroring the 12:6 reference ratio
  int text_depth = 2;
  int fusion_depth = 2;
  int decoder_depth = 2;
  int image_size = 8;  // images are image_size x image_size grids
  int patch = 2;       // split into (image_size/patch)^2 patches
  int text_positions = 25;    // [CLS] + 24 tokens
  int decoder_positions = 8;  // maximum answer length
  int contrastive_dim = 16;
  int mlp_ratio = 4;
  int vocab_size = 0;
  int pad_id = 0;
  int answer_start_id = 3;
  double ln_eps = 1e-6;  // keeps the all-zero-image forward finite
  double momentum = 0.995;

  int patch_tokens() const { return (image_size / patch) * (image_size / patch); }
  int patch_dim() const { return patch * patch; }
  int visual_positions() const { return patch_tokens() + 1; }

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& json);
  bool operator==(const ModelConfig&) const = default;
};

struct CheckpointLoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> fresh_initialized;  // absent from the file (answer decoder after pre-training)
};

class MultiModalModel {
 public:
  MultiModalModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  ParamRegistry& momentum_params() { return momentum_params_; }

  // Parameter-name census per sub-module prefix.
  std::vector<std::string> param_names_with_prefix(const std::string& prefix) const {
    return params_.names_with_prefix(prefix);
  }

  // Flattens an image_size^2 grid into patch rows [patch_tokens, patch_dim]
  // (raster order over patches, raster order within a patch).
  std::vector<double> patchify(const std::vector<double>& grid) const;

  // patches: [B, patch_tokens, patch_dim] -> token embeddings [B, P+1, W],
  // [CLS] at position 0.
  TensorPtr encode_image(Tape& tape, const TensorPtr& patches, bool use_momentum = false) const;
  // ids: B sequences of equal length (<= text_positions), [CLS] first, [PAD]
  // padded; padding is masked out of attention.
  TensorPtr encode_text(Tape& tape, const std::vector<std::vector<int>>& ids, bool use_momentum = false) const;
  // Cross-attention fusion over the text stream; position 0 is the joint
  // summary. attend_image=false bypasses the cross-attention sub-layer
  // entirely (text-only ablation hook).
  TensorPtr fuse(Tape& tape, const TensorPtr& img_tokens, const TensorPtr& txt_tokens,
                 const std::vector<std::vector<int>>& txt_ids, bool attend_image = true) const;
  // Unit-normalized contrastive embedding from the [CLS] state.
  TensorPtr project_image(Tape& tape, const TensorPtr& img_tokens, bool use_momentum = false) const;
  TensorPtr project_text(Tape& tape, const TensorPtr& txt_tokens, bool use_momentum = false) const;
  // Binary match logits [B,2] from the fused summary.
  TensorPtr itm_logits(Tape& tape, const TensorPtr& fused) const;
  // Vocabulary logits [rows, V] from fused states gathered at `positions`
  // (flat row indices into [B*T]).
  TensorPtr mlm_logits(Tape& tape, const TensorPtr& fused, const std::vector<int>& positions) const;
  // Causal next-token logits [B, Ta, V]; prefix must start with the answer
  // start token and fit in decoder_positions.
  TensorPtr decode_answer(Tape& tape, const TensorPtr& joint, const std::vector<std::vector<int>>& joint_key_ids,
                          const std::vector<std::vector<int>>& answer_prefix_ids) const;

  // copy <- momentum*copy + (1-momentum)*live for every momentum replica.
  void momentum_update();

  // Checkpoint: binary file of name -> shape + fp64 little-endian data plus a
  // JSON manifest of the architecture.
  void save_checkpoint(const std::string& path, bool include_decoder) const;
  CheckpointLoadReport load_checkpoint(const std::string& path);

 private:
  TensorPtr p(const std::string& name, bool momentum) const;
  TensorPtr encoder_stack(Tape& tape, TensorPtr x, const std::string& prefix, int depth,
                          const TensorPtr& pad_mask, bool momentum) const;
  TensorPtr attention(Tape& tape, const TensorPtr& q_in, const TensorPtr& kv_in, const std::string& prefix,
                      const TensorPtr& mask, bool momentum) const;
  TensorPtr self_block(Tape& tape, TensorPtr x, const std::string& prefix, const TensorPtr& mask, bool momentum) const;
  TensorPtr cross_block(Tape& tape, TensorPtr x, const TensorPtr& kv, const std::string& prefix,
                        const TensorPtr& mask, bool momentum) const;
  TensorPtr mlp_block(Tape& tape, TensorPtr x, const std::string& prefix, bool momentum) const;
  TensorPtr project(Tape& tape, const TensorPtr& tokens, const std::string& prefix, bool momentum) const;

  // Additive attention masks (constants; -1e30 at masked slots).
  TensorPtr key_pad_mask(const std::vector<std::vector<int>>& key_ids, int query_len) const;
  TensorPtr causal_mask(int len) const;

  ModelConfig cfg_;
  ParamRegistry params_;
  ParamRegistry momentum_params_;
};

}  // namespace ggp::nn
