#include "ggp/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ggp/kernels.hpp"
#include "ggp/rng.hpp"

namespace ggp::nn {

using ad::add;
using ad::concatenate;
using ad::embedding_lookup;
using ad::gather_rows;
using ad::gelu;
using ad::layer_norm;
using ad::matmul;
using ad::normalize_rows;
using ad::reshape;
using ad::scale;
using ad::slice;
using ad::softmax;
using ad::transpose;

void ModelConfig::validate() const {
  if (width <= 0 || heads <= 0 || width % heads != 0)
    throw std::runtime_error("model config: width must be a positive multiple of heads");
  if (visual_depth != 2 * text_depth)
    throw std::runtime_error("model config: visual depth must be twice the text depth");
  if (image_size % patch != 0) throw std::runtime_error("model config: patch must divide image size");
  if (vocab_size <= 0) throw std::runtime_error("model config: vocab size must be set");
  if (momentum < 0.0 || momentum > 1.0) throw std::runtime_error("model config: momentum must lie in [0,1]");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["width"] = width;
  j["heads"] = heads;
  j["visual_depth"] = visual_depth;
  j["text_depth"] = text_depth;
  j["fusion_depth"] = fusion_depth;
  j["decoder_depth"] = decoder_depth;
  j["image_size"] = image_size;
  j["patch"] = patch;
  j["text_positions"] = text_positions;
  j["decoder_positions"] = decoder_positions;
  j["contrastive_dim"] = contrastive_dim;
  j["mlp_ratio"] = mlp_ratio;
  j["vocab_size"] = vocab_size;
  j["pad_id"] = pad_id;
  j["answer_start_id"] = answer_start_id;
  j["ln_eps"] = ln_eps;
  j["momentum"] = momentum;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json) {
  const auto j = nlohmann::json::parse(json);
  ModelConfig c;
  c.width = j.at("width");
  c.heads = j.at("heads");
  c.visual_depth = j.at("visual_depth");
  c.text_depth = j.at("text_depth");
  c.fusion_depth = j.at("fusion_depth");
  c.decoder_depth = j.at("decoder_depth");
  c.image_size = j.at("image_size");
  c.patch = j.at("patch");
  c.text_positions = j.at("text_positions");
  c.decoder_positions = j.at("decoder_positions");
  c.contrastive_dim = j.at("contrastive_dim");
  c.mlp_ratio = j.at("mlp_ratio");
  c.vocab_size = j.at("vocab_size");
  c.pad_id = j.at("pad_id");
  c.answer_start_id = j.at("answer_start_id");
  c.ln_eps = j.at("ln_eps");
  c.momentum = j.at("momentum");
  return c;
}

namespace {

constexpr double kMaskValue = -1e30;

TensorPtr xavier(Rng rng, int fan_in, int fan_out, std::vector<int> shape) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  auto t = make_tensor(std::move(shape), true);
  for (auto& v : t->data) v = rng.next_uniform(-bound, bound);
  return t;
}

TensorPtr gaussian(Rng rng, double stddev, std::vector<int> shape) {
  auto t = make_tensor(std::move(shape), true);
  for (auto& v : t->data) v = stddev * rng.next_gaussian();
  return t;
}

TensorPtr constant_fill(double v, std::vector<int> shape) {
  auto t = make_tensor(std::move(shape), true);
  std::fill(t->data.begin(), t->data.end(), v);
  return t;
}

}  // namespace

MultiModalModel::MultiModalModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const Rng root = Rng(seed).split("model_init");
  const int w = cfg_.width;
  const int hidden = w * cfg_.mlp_ratio;

  auto add_linear = [&](const std::string& prefix, int in, int out) {
    params_.add(prefix + ".w", xavier(root.split(prefix + ".w"), in, out, {in, out}));
    params_.add(prefix + ".b", constant_fill(0.0, {out}));
  };
  auto add_ln = [&](const std::string& prefix) {
    params_.add(prefix + ".g", constant_fill(1.0, {w}));
    params_.add(prefix + ".b", constant_fill(0.0, {w}));
  };
  auto add_attn = [&](const std::string& prefix) {
    add_linear(prefix + ".q", w, w);
    add_linear(prefix + ".k", w, w);
    add_linear(prefix + ".v", w, w);
    add_linear(prefix + ".o", w, w);
  };
  auto add_self_layer = [&](const std::string& prefix) {
    add_ln(prefix + ".ln1");
    add_attn(prefix + ".attn");
    add_ln(prefix + ".ln2");
    add_linear(prefix + ".mlp.fc1", w, hidden);
    add_linear(prefix + ".mlp.fc2", hidden, w);
  };
  auto add_cross_layer = [&](const std::string& prefix) {
    add_ln(prefix + ".ln1");
    add_attn(prefix + ".attn");
    add_ln(prefix + ".lnc");
    add_attn(prefix + ".cross");
    add_ln(prefix + ".ln2");
    add_linear(prefix + ".mlp.fc1", w, hidden);
    add_linear(prefix + ".mlp.fc2", hidden, w);
  };
  auto add_embedding = [&](const std::string& name, int rows) {
    params_.add(name, gaussian(root.split(name), 0.02, {rows, w}));
  };

  // Visual encoder
  add_linear("visual_encoder.patch_embed", cfg_.patch_dim(), w);
  add_embedding("visual_encoder.cls", 1);
  add_embedding("visual_encoder.pos", cfg_.visual_positions());
  for (int i = 0; i < cfg_.visual_depth; ++i) add_self_layer("visual_encoder.layer" + std::to_string(i));
  add_ln("visual_encoder.ln_f");

  // Text encoder
  add_embedding("text_encoder.tok", cfg_.vocab_size);
  add_embedding("text_encoder.pos", cfg_.text_positions);
  for (int i = 0; i < cfg_.text_depth; ++i) add_self_layer("text_encoder.layer" + std::to_string(i));
  add_ln("text_encoder.ln_f");

  // Fusion encoder
  for (int i = 0; i < cfg_.fusion_depth; ++i) add_cross_layer("fusion_encoder.layer" + std::to_string(i));
  add_ln("fusion_encoder.ln_f");

  // Heads and projections
  add_linear("img_proj", w, cfg_.contrastive_dim);
  add_linear("txt_proj", w, cfg_.contrastive_dim);
  add_linear("itm_head", w, 2);
  add_linear("mlm_head", w, cfg_.vocab_size);

  // Answer decoder
  add_embedding("answer_decoder.tok", cfg_.vocab_size);
  add_embedding("answer_decoder.pos", cfg_.decoder_positions);
  for (int i = 0; i < cfg_.decoder_depth; ++i) add_cross_layer("answer_decoder.layer" + std::to_string(i));
  add_ln("answer_decoder.ln_f");
  add_linear("answer_decoder.head", w, cfg_.vocab_size);

  // Momentum replicas of the unimodal encoders + their projections.
  for (const auto& prefix : {"visual_encoder", "img_proj", "text_encoder", "txt_proj"}) {
    for (const auto& name : params_.names_with_prefix(prefix)) {
      auto copy = make_tensor(params_.get(name)->shape, false);
      copy->data = params_.get(name)->data;
      momentum_params_.add("momentum." + name, std::move(copy));
    }
  }
}

TensorPtr MultiModalModel::p(const std::string& name, bool momentum) const {
  return momentum ? momentum_params_.get("momentum." + name) : params_.get(name);
}

std::vector<double> MultiModalModel::patchify(const std::vector<double>& grid) const {
  const int n = cfg_.image_size;
  const int ps = cfg_.patch;
  if (grid.size() != static_cast<std::size_t>(n) * n)
    throw std::runtime_error("patchify: expected a " + std::to_string(n) + "x" + std::to_string(n) + " grid, got " +
                             std::to_string(grid.size()) + " values");
  std::vector<double> out;
  out.reserve(grid.size());
  for (int pr = 0; pr < n / ps; ++pr)
    for (int pc = 0; pc < n / ps; ++pc)
      for (int r = 0; r < ps; ++r)
        for (int c = 0; c < ps; ++c) out.push_back(grid[(pr * ps + r) * n + pc * ps + c]);
  return out;
}

TensorPtr MultiModalModel::attention(Tape& tape, const TensorPtr& q_in, const TensorPtr& kv_in,
                                     const std::string& prefix, const TensorPtr& mask, bool momentum) const {
  const int b = q_in->dim(0);
  const int tq = q_in->dim(1);
  const int tk = kv_in->dim(1);
  const int w = cfg_.width;
  const int h = cfg_.heads;
  const int d = w / h;

  auto proj_heads = [&](const TensorPtr& x, const char* which, int t) {
    auto y = add(tape, matmul(tape, x, p(prefix + "." + which + ".w", momentum)),
                 p(prefix + "." + which + ".b", momentum));
    return transpose(tape, reshape(tape, y, {b, t, h, d}), 1, 2);  // [B,H,T,D]
  };
  auto q = proj_heads(q_in, "q", tq);
  auto k = proj_heads(kv_in, "k", tk);
  auto v = proj_heads(kv_in, "v", tk);

  auto scores = scale(tape, matmul(tape, q, transpose(tape, k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(d)));
  if (mask) scores = add(tape, scores, mask);
  auto ctx = matmul(tape, softmax(tape, scores), v);                       // [B,H,Tq,D]
  auto merged = reshape(tape, transpose(tape, ctx, 1, 2), {b, tq, w});     // [B,Tq,W]
  return add(tape, matmul(tape, merged, p(prefix + ".o.w", momentum)), p(prefix + ".o.b", momentum));
}

TensorPtr MultiModalModel::self_block(Tape& tape, TensorPtr x, const std::string& prefix, const TensorPtr& mask,
                                      bool momentum) const {
  auto normed = layer_norm(tape, x, p(prefix + ".ln1.g", momentum), p(prefix + ".ln1.b", momentum), cfg_.ln_eps);
  return add(tape, x, attention(tape, normed, normed, prefix + ".attn", mask, momentum));
}

TensorPtr MultiModalModel::cross_block(Tape& tape, TensorPtr x, const TensorPtr& kv, const std::string& prefix,
                                       const TensorPtr& mask, bool momentum) const {
  auto normed = layer_norm(tape, x, p(prefix + ".lnc.g", momentum), p(prefix + ".lnc.b", momentum), cfg_.ln_eps);
  return add(tape, x, attention(tape, normed, kv, prefix + ".cross", mask, momentum));
}

TensorPtr MultiModalModel::mlp_block(Tape& tape, TensorPtr x, const std::string& prefix, bool momentum) const {
  auto normed = layer_norm(tape, x, p(prefix + ".ln2.g", momentum), p(prefix + ".ln2.b", momentum), cfg_.ln_eps);
  auto h1 = gelu(tape, add(tape, matmul(tape, normed, p(prefix + ".mlp.fc1.w", momentum)),
                           p(prefix + ".mlp.fc1.b", momentum)));
  auto h2 = add(tape, matmul(tape, h1, p(prefix + ".mlp.fc2.w", momentum)), p(prefix + ".mlp.fc2.b", momentum));
  return add(tape, x, h2);
}

TensorPtr MultiModalModel::encoder_stack(Tape& tape, TensorPtr x, const std::string& prefix, int depth,
                                         const TensorPtr& pad_mask, bool momentum) const {
  for (int i = 0; i < depth; ++i) {
    const std::string layer = prefix + ".layer" + std::to_string(i);
    x = self_block(tape, x, layer, pad_mask, momentum);
    x = mlp_block(tape, x, layer, momentum);
  }
  return layer_norm(tape, x, p(prefix + ".ln_f.g", momentum), p(prefix + ".ln_f.b", momentum), cfg_.ln_eps);
}

TensorPtr MultiModalModel::key_pad_mask(const std::vector<std::vector<int>>& key_ids, int query_len) const {
  const int b = static_cast<int>(key_ids.size());
  const int tk = static_cast<int>(key_ids[0].size());
  auto mask = make_tensor({b, cfg_.heads, query_len, tk}, false);
  for (int bi = 0; bi < b; ++bi)
    for (int j = 0; j < tk; ++j)
      if (key_ids[bi][j] == cfg_.pad_id)
        for (int h = 0; h < cfg_.heads; ++h)
          for (int i = 0; i < query_len; ++i)
            mask->data[((static_cast<std::size_t>(bi) * cfg_.heads + h) * query_len + i) * tk + j] = kMaskValue;
  return mask;
}

TensorPtr MultiModalModel::causal_mask(int len) const {
  auto mask = make_tensor({len, len}, false);
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) mask->data[static_cast<std::size_t>(i) * len + j] = kMaskValue;
  return mask;
}

TensorPtr MultiModalModel::encode_image(Tape& tape, const TensorPtr& patches, bool momentum) const {
  if (patches->shape.size() != 3 || patches->shape[1] != cfg_.patch_tokens() || patches->shape[2] != cfg_.patch_dim())
    throw std::runtime_error("encode_image: expected patches [B," + std::to_string(cfg_.patch_tokens()) + "," +
                             std::to_string(cfg_.patch_dim()) + "], got " + shape_str(patches->shape));
  const int b = patches->dim(0);
  auto tokens = add(tape, matmul(tape, patches, p("visual_encoder.patch_embed.w", momentum)),
                    p("visual_encoder.patch_embed.b", momentum));
  auto cls = add(tape, make_tensor({b, 1, cfg_.width}, false), p("visual_encoder.cls", momentum));
  auto x = add(tape, concatenate(tape, cls, tokens, 1), p("visual_encoder.pos", momentum));
  return encoder_stack(tape, x, "visual_encoder", cfg_.visual_depth, nullptr, momentum);
}

TensorPtr MultiModalModel::encode_text(Tape& tape, const std::vector<std::vector<int>>& ids, bool momentum) const {
  if (ids.empty()) throw std::runtime_error("encode_text: empty batch");
  const int b = static_cast<int>(ids.size());
  const int t = static_cast<int>(ids[0].size());
  if (t > cfg_.text_positions)
    throw std::runtime_error("encode_text: sequence length " + std::to_string(t) + " exceeds " +
                             std::to_string(cfg_.text_positions) + " positions");
  std::vector<int> flat;
  flat.reserve(static_cast<std::size_t>(b) * t);
  for (const auto& row : ids) {
    if (static_cast<int>(row.size()) != t) throw std::runtime_error("encode_text: ragged batch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  auto emb = reshape(tape, embedding_lookup(tape, p("text_encoder.tok", momentum), flat), {b, t, cfg_.width});
  auto x = add(tape, emb, slice(tape, p("text_encoder.pos", momentum), 0, 0, t));
  return encoder_stack(tape, x, "text_encoder", cfg_.text_depth, key_pad_mask(ids, t), momentum);
}

TensorPtr MultiModalModel::fuse(Tape& tape, const TensorPtr& img_tokens, const TensorPtr& txt_tokens,
                                const std::vector<std::vector<int>>& txt_ids, bool attend_image) const {
  if (img_tokens->shape.back() != cfg_.width || txt_tokens->shape.back() != cfg_.width)
    throw std::runtime_error("fuse: width mismatch, image " + shape_str(img_tokens->shape) + " text " +
                             shape_str(txt_tokens->shape) + " expected width " + std::to_string(cfg_.width));
  if (img_tokens->dim(0) != txt_tokens->dim(0))
    throw std::runtime_error("fuse: batch mismatch, image " + shape_str(img_tokens->shape) + " text " +
                             shape_str(txt_tokens->shape));
  const int t = txt_tokens->dim(1);
  auto pad_mask = key_pad_mask(txt_ids, t);
  TensorPtr x = txt_tokens;
  for (int i = 0; i < cfg_.fusion_depth; ++i) {
    const std::string layer = "fusion_encoder.layer" + std::to_string(i);
    x = self_block(tape, x, layer, pad_mask, false);
    if (attend_image) x = cross_block(tape, x, img_tokens, layer, nullptr, false);
    x = mlp_block(tape, x, layer, false);
  }
  return layer_norm(tape, x, p("fusion_encoder.ln_f.g", false), p("fusion_encoder.ln_f.b", false), cfg_.ln_eps);
}

TensorPtr MultiModalModel::project(Tape& tape, const TensorPtr& tokens, const std::string& prefix,
                                   bool momentum) const {
  const int b = tokens->dim(0);
  auto cls = reshape(tape, slice(tape, tokens, 1, 0, 1), {b, cfg_.width});
  auto projected = add(tape, matmul(tape, cls, p(prefix + ".w", momentum)), p(prefix + ".b", momentum));
  return normalize_rows(tape, projected);
}

TensorPtr MultiModalModel::project_image(Tape& tape, const TensorPtr& img_tokens, bool momentum) const {
  return project(tape, img_tokens, "img_proj", momentum);
}

TensorPtr MultiModalModel::project_text(Tape& tape, const TensorPtr& txt_tokens, bool momentum) const {
  return project(tape, txt_tokens, "txt_proj", momentum);
}

TensorPtr MultiModalModel::itm_logits(Tape& tape, const TensorPtr& fused) const {
  const int b = fused->dim(0);
  auto summary = reshape(tape, slice(tape, fused, 1, 0, 1), {b, cfg_.width});
  return add(tape, matmul(tape, summary, p("itm_head.w", false)), p("itm_head.b", false));
}

TensorPtr MultiModalModel::mlm_logits(Tape& tape, const TensorPtr& fused, const std::vector<int>& positions) const {
  auto states = gather_rows(tape, fused, positions);
  return add(tape, matmul(tape, states, p("mlm_head.w", false)), p("mlm_head.b", false));
}

TensorPtr MultiModalModel::decode_answer(Tape& tape, const TensorPtr& joint,
                                         const std::vector<std::vector<int>>& joint_key_ids,
                                         const std::vector<std::vector<int>>& answer_prefix_ids) const {
  if (answer_prefix_ids.empty()) throw std::runtime_error("decode_answer: empty batch");
  const int b = static_cast<int>(answer_prefix_ids.size());
  const int t = static_cast<int>(answer_prefix_ids[0].size());
  if (t > cfg_.decoder_positions)
    throw std::runtime_error("decode_answer: prefix length " + std::to_string(t) + " exceeds max answer length " +
                             std::to_string(cfg_.decoder_positions));
  if (joint->dim(0) != b) throw std::runtime_error("decode_answer: batch mismatch with joint representation");
  std::vector<int> flat;
  flat.reserve(static_cast<std::size_t>(b) * t);
  for (const auto& row : answer_prefix_ids) {
    if (static_cast<int>(row.size()) != t) throw std::runtime_error("decode_answer: ragged batch");
    if (row[0] != cfg_.answer_start_id)
      throw std::runtime_error("decode_answer: prefix must begin with the answer start token");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  auto emb = reshape(tape, embedding_lookup(tape, p("answer_decoder.tok", false), flat), {b, t, cfg_.width});
  auto x = add(tape, emb, slice(tape, p("answer_decoder.pos", false), 0, 0, t));
  auto causal = causal_mask(t);
  auto cross_pad = key_pad_mask(joint_key_ids, t);
  for (int i = 0; i < cfg_.decoder_depth; ++i) {
    const std::string layer = "answer_decoder.layer" + std::to_string(i);
    x = self_block(tape, x, layer, causal, false);
    x = cross_block(tape, x, joint, layer, cross_pad, false);
    x = mlp_block(tape, x, layer, false);
  }
  x = layer_norm(tape, x, p("answer_decoder.ln_f.g", false), p("answer_decoder.ln_f.b", false), cfg_.ln_eps);
  return add(tape, matmul(tape, x, p("answer_decoder.head.w", false)), p("answer_decoder.head.b", false));
}

void MultiModalModel::momentum_update() {
  for (const auto& [name, copy] : momentum_params_.items()) {
    const TensorPtr& live = params_.get(name.substr(std::strlen("momentum.")));
    if (live->shape != copy->shape)
      throw std::runtime_error("momentum_update: structural mismatch at " + name);
    kern::ema_update(copy->data.data(), live->data.data(), copy->numel(), cfg_.momentum);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'G', 'P', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void MultiModalModel::save_checkpoint(const std::string& path, bool include_decoder) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  const std::string manifest = cfg_.to_json();
  write_pod<uint32_t>(os, static_cast<uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  std::vector<const std::pair<std::string, TensorPtr>*> selected;
  for (const auto& item : params_.items()) {
    if (!include_decoder && item.first.rfind("answer_decoder.", 0) == 0) continue;
    selected.push_back(&item);
  }
  write_pod<uint32_t>(os, static_cast<uint32_t>(selected.size()));
  for (const auto* item : selected) {
    const auto& [name, t] = *item;
    write_pod<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(os, static_cast<uint8_t>(t->shape.size()));
    for (int d : t->shape) write_pod<uint32_t>(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t->data.data()),
             static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointLoadReport MultiModalModel::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto manifest_len = read_pod<uint32_t>(is);
  std::string manifest(manifest_len, '\0');
  is.read(manifest.data(), manifest_len);
  const ModelConfig file_cfg = ModelConfig::from_json(manifest);
  if (!(file_cfg == cfg_))
    throw std::runtime_error("checkpoint: architecture manifest mismatch in " + path);

  std::set<std::string> seen;
  std::vector<std::string> offending;
  CheckpointLoadReport report;
  const auto n = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < n; ++i) {
    const auto name_len = read_pod<uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<uint8_t>(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(is));
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    if (!params_.has(name)) {
      offending.push_back(name + " (unknown parameter)");
      continue;
    }
    const TensorPtr& t = params_.get(name);
    if (t->shape != shape) {
      offending.push_back(name + " (file " + shape_str(shape) + " vs model " + shape_str(t->shape) + ")");
      continue;
    }
    t->data = std::move(data);
    seen.insert(name);
    report.loaded.push_back(name);
  }
  for (const auto& [name, t] : params_.items()) {
    if (seen.count(name)) continue;
    if (name.rfind("answer_decoder.", 0) == 0) {
      report.fresh_initialized.push_back(name);  // keeps its seeded init
    } else {
      offending.push_back(name + " (missing from checkpoint)");
    }
  }
  if (!offending.empty()) {
    std::ostringstream os;
    os << "checkpoint: parameter mismatch in " << path << ":";
    for (const auto& s : offending) os << "\n  " << s;
    throw std::runtime_error(os.str());
  }

  // Momentum replicas restart in sync with the loaded weights.
  for (const auto& [name, copy] : momentum_params_.items())
    copy->data = params_.get(name.substr(std::strlen("momentum.")))->data;
  return report;
}

}  // namespace ggp::nn
