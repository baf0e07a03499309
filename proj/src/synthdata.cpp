#include "ggp/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ggp::data {

namespace {

const std::vector<std::string> kShapeWords = {"square", "cross", "diag"};
const std::vector<std::string> kQuadWords = {"top-left", "top-right", "bottom-left", "bottom-right"};

const std::vector<std::string> kContentWords = {
    // answers and scene vocabulary
    "square", "cross", "diag", "top-left", "top-right", "bottom-left", "bottom-right",
    "dim", "bright", "yes", "no", "one", "two",
    // question words
    "is", "there", "a", "in", "the", "what", "shape", "which", "quadrant", "contains",
    "how", "many", "shapes", "are", "brightness", "does", "image", "contain",
};

}  // namespace

Vocab::Vocab() {
  words_ = {"[PAD]", "[CLS]", "[MASK]", "[ANS]", "[END]", "[SEP]"};
  for (const auto& w : kContentWords) {
    index_.emplace_back(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

int Vocab::id(const std::string& word) const {
  for (const auto& [w, i] : index_)
    if (w == word) return i;
  throw std::runtime_error("vocab: unknown word '" + word + "'");
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw std::runtime_error("vocab: id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    if (w == "[SEP]") {
      ids.push_back(kSep);
      continue;
    }
    ids.push_back(id(w));
  }
  return ids;
}

std::vector<std::string> Vocab::detokenize(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(word(i));
  return out;
}

const std::string& shape_word(ShapeKind k) { return kShapeWords[static_cast<int>(k)]; }
const std::string& quadrant_word(Quadrant q) { return kQuadWords[static_cast<int>(q)]; }

std::array<double, 64> ShapeScene::render() const {
  std::array<double, 64> grid{};
  for (const auto& s : shapes) {
    const int qr = (static_cast<int>(s.quad) / 2) * 4;  // quadrant origin row
    const int qc = (static_cast<int>(s.quad) % 2) * 4;  // quadrant origin col
    const double level = s.bright ? kBrightLevel : kDimLevel;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        bool on = false;
        switch (s.kind) {
          case ShapeKind::square: on = r == 0 || r == 3 || c == 0 || c == 3; break;
          case ShapeKind::cross: on = r == 1 || r == 2 || c == 1 || c == 2; break;
          case ShapeKind::diag: on = r == c; break;
        }
        if (on) grid[static_cast<std::size_t>(qr + r) * 8 + (qc + c)] = level;
      }
    }
  }
  return grid;
}

std::vector<std::string> ShapeScene::caption_words() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i) out.push_back("[SEP]");
    out.push_back(shapes[i].bright ? "bright" : "dim");
    out.push_back(shape_word(shapes[i].kind));
    out.push_back(quadrant_word(shapes[i].quad));
  }
  return out;
}

const std::vector<ShapeScene>& all_scenes() {
  static const std::vector<ShapeScene> scenes = [] {
    std::vector<ShapeScene> out;
    for (int q = 0; q < 4; ++q)
      for (int k = 0; k < 3; ++k)
        for (int b = 0; b < 2; ++b)
          out.push_back({{{static_cast<ShapeKind>(k), static_cast<Quadrant>(q), b == 1}}});
    for (int q1 = 0; q1 < 4; ++q1)
      for (int q2 = q1 + 1; q2 < 4; ++q2)
        for (int k1 = 0; k1 < 3; ++k1)
          for (int b1 = 0; b1 < 2; ++b1)
            for (int k2 = 0; k2 < 3; ++k2)
              for (int b2 = 0; b2 < 2; ++b2)
                out.push_back({{{static_cast<ShapeKind>(k1), static_cast<Quadrant>(q1), b1 == 1},
                                {static_cast<ShapeKind>(k2), static_cast<Quadrant>(q2), b2 == 1}}});
    return out;
  }();
  return scenes;
}

namespace {

std::vector<int> pad_to(std::vector<int> ids, int len) {
  if (static_cast<int>(ids.size()) > len)
    throw std::runtime_error("synthdata: sequence longer than its fixed length");
  ids.resize(static_cast<std::size_t>(len), kPad);
  return ids;
}

std::vector<int> make_caption_ids(const Vocab& vocab, const ShapeScene& scene) {
  std::vector<int> ids = {kCls};
  for (const auto& id : vocab.tokenize(scene.caption_words())) ids.push_back(id);
  return pad_to(std::move(ids), kCaptionLen);
}

bool has_kind(const ShapeScene& s, ShapeKind k) {
  for (const auto& p : s.shapes)
    if (p.kind == k) return true;
  return false;
}

bool has_kind_at(const ShapeScene& s, ShapeKind k, Quadrant q) {
  for (const auto& p : s.shapes)
    if (p.kind == k && p.quad == q) return true;
  return false;
}

// Shapes whose kind appears exactly once in the scene.
std::vector<PlacedShape> unique_kind_shapes(const ShapeScene& s) {
  std::vector<PlacedShape> out;
  for (const auto& p : s.shapes) {
    int count = 0;
    for (const auto& q : s.shapes)
      if (q.kind == p.kind) ++count;
    if (count == 1) out.push_back(p);
  }
  return out;
}

struct Question {
  std::vector<std::string> words;
  std::string answer;
};

Question closed_question(const ShapeScene& scene, bool want_yes, Rng& rng) {
  const int tmpl = static_cast<int>(rng.next_range(3));
  if (tmpl == 1) {
    // "is there a <shape> in the <quad>" with the wanted polarity
    std::vector<std::pair<ShapeKind, Quadrant>> pool;
    for (int k = 0; k < 3; ++k)
      for (int q = 0; q < 4; ++q) {
        const bool present = has_kind_at(scene, static_cast<ShapeKind>(k), static_cast<Quadrant>(q));
        if (present == want_yes) pool.push_back({static_cast<ShapeKind>(k), static_cast<Quadrant>(q)});
      }
    const auto [k, q] = pool[rng.next_range(pool.size())];
    return {{"is", "there", "a", shape_word(k), "in", "the", quadrant_word(q)}, want_yes ? "yes" : "no"};
  }
  if (tmpl == 2) {
    // "is the <shape> bright" for a kind appearing exactly once
    std::vector<PlacedShape> pool;
    for (const auto& p : unique_kind_shapes(scene))
      if (p.bright == want_yes) pool.push_back(p);
    if (!pool.empty()) {
      const auto p = pool[rng.next_range(pool.size())];
      return {{"is", "the", shape_word(p.kind), "bright"}, want_yes ? "yes" : "no"};
    }
    // fall through to the presence template when infeasible
  }
  // "is there a <shape>" / "does the image contain a <shape>"
  std::vector<ShapeKind> pool;
  for (int k = 0; k < 3; ++k)
    if (has_kind(scene, static_cast<ShapeKind>(k)) == want_yes) pool.push_back(static_cast<ShapeKind>(k));
  const auto k = pool[rng.next_range(pool.size())];
  if (rng.next_range(2) == 0) return {{"is", "there", "a", shape_word(k)}, want_yes ? "yes" : "no"};
  return {{"does", "the", "image", "contain", "a", shape_word(k)}, want_yes ? "yes" : "no"};
}

Question open_question(const ShapeScene& scene, Rng& rng) {
  const int tmpl = static_cast<int>(rng.next_range(4));
  if (tmpl == 0) {
    const auto p = scene.shapes[rng.next_range(scene.shapes.size())];
    return {{"what", "shape", "is", "in", "the", quadrant_word(p.quad)}, shape_word(p.kind)};
  }
  if (tmpl == 1) {
    const auto uniq = unique_kind_shapes(scene);
    if (!uniq.empty()) {
      const auto p = uniq[rng.next_range(uniq.size())];
      return {{"which", "quadrant", "contains", "the", shape_word(p.kind)}, quadrant_word(p.quad)};
    }
  }
  if (tmpl == 2) {
    const auto uniq = unique_kind_shapes(scene);
    if (!uniq.empty()) {
      const auto p = uniq[rng.next_range(uniq.size())];
      return {{"what", "brightness", "is", "the", shape_word(p.kind)}, p.bright ? "bright" : "dim"};
    }
  }
  if (tmpl == 3) {
    return {{"how", "many", "shapes", "are", "there"}, scene.shapes.size() == 1 ? "one" : "two"};
  }
  const auto p = scene.shapes[rng.next_range(scene.shapes.size())];
  return {{"what", "shape", "is", "in", "the", quadrant_word(p.quad)}, shape_word(p.kind)};
}

std::vector<VqaSample> gen_split(const Vocab& vocab, const std::vector<int>& scene_pool, Rng rng, int n) {
  std::vector<VqaSample> out;
  out.reserve(static_cast<std::size_t>(n));
  int closed_counter = 0;
  for (int i = 0; i < n; ++i) {
    VqaSample s;
    s.scene = all_scenes()[static_cast<std::size_t>(scene_pool[i % scene_pool.size()])];
    s.closed = i % 2 == 0;
    Question q;
    if (s.closed) {
      const bool want_yes = closed_counter++ % 2 == 0;  // exact yes/no balance
      q = closed_question(s.scene, want_yes, rng);
    } else {
      q = open_question(s.scene, rng);
    }
    std::vector<int> qids = {kCls};
    for (int id : vocab.tokenize(q.words)) qids.push_back(id);
    s.question_ids = pad_to(std::move(qids), kQuestionLen);
    s.answer_ids = {kAns, vocab.id(q.answer), kEnd};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<PretrainPair> gen_pretrain_set(const Vocab& vocab, uint64_t seed, int n) {
  if (n < 1) throw std::runtime_error("gen_pretrain_set: n must be >= 1");
  Rng rng = Rng(seed).split("pretrain_data");
  const auto& scenes = all_scenes();
  std::vector<PretrainPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PretrainPair p;
    p.scene = scenes[static_cast<std::size_t>(rng.next_range(scenes.size()))];
    p.caption_ids = make_caption_ids(vocab, p.scene);
    out.push_back(std::move(p));
  }
  return out;
}

VqaSplit gen_vqa_set(const Vocab& vocab, uint64_t seed, int n_train, int n_val) {
  if (n_train < 1 || n_val < 1) throw std::runtime_error("gen_vqa_set: split sizes must be >= 1");
  const int total = static_cast<int>(all_scenes().size());
  const auto perm = Rng(seed).split("scene_split").permutation(total);
  const int half = total / 2;
  std::vector<int> train_pool(perm.begin(), perm.begin() + half);
  std::vector<int> val_pool(perm.begin() + half, perm.end());
  VqaSplit split;
  split.train = gen_split(vocab, train_pool, Rng(seed).split("vqa_train"), n_train);
  split.val = gen_split(vocab, val_pool, Rng(seed).split("vqa_val"), n_val);
  return split;
}

namespace {

void append_grid(std::string& line, const std::array<double, 64>& grid) {
  char buf[40];
  line += "\"grid\":[";
  for (int i = 0; i < 64; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", grid[static_cast<std::size_t>(i)]);
    if (i) line += ',';
    line += buf;
  }
  line += ']';
}

void append_ids(std::string& line, const char* key, const std::vector<int>& ids) {
  line += '"';
  line += key;
  line += "\":[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) line += ',';
    line += std::to_string(ids[i]);
  }
  line += ']';
}

}  // namespace

void export_pretrain_jsonl(const std::string& path, const std::vector<PretrainPair>& pairs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("export: cannot write " + path);
  for (const auto& p : pairs) {
    std::string line = "{";
    append_grid(line, p.scene.render());
    line += ',';
    append_ids(line, "caption", p.caption_ids);
    line += "}\n";
    os << line;
  }
}

void export_vqa_jsonl(const std::string& path, const std::vector<VqaSample>& samples) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("export: cannot write " + path);
  for (const auto& s : samples) {
    std::string line = "{";
    append_grid(line, s.scene.render());
    line += ',';
    append_ids(line, "question", s.question_ids);
    line += ',';
    append_ids(line, "answer", s.answer_ids);
    line += ",\"type\":\"";
    line += s.closed ? "closed" : "open";
    line += "\"}\n";
    os << line;
  }
}

}  // namespace ggp::data
