#pragma once

// Deterministic shape-world generator: 8x8 grayscale scenes of 1-2 shapes
// placed in quadrants, with templated truthful captions (pre-training) and
// question/answer pairs (fine-tuning). Everything is a pure function of the
// seed via the splittable RNG.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ggp/rng.hpp"

namespace ggp::data {

// Specials occupy fixed low ids.
enum SpecialToken : int { kPad = 0, kCls = 1, kMask = 2, kAns = 3, kEnd = 4, kSep = 5 };
inline constexpr int kNumSpecials = 6;

inline constexpr int kCaptionLen = 8;   // [CLS] + up to 7 caption tokens
inline constexpr int kQuestionLen = 8;  // [CLS] + up to 7 question tokens
inline constexpr int kAnswerLen = 3;    // [ANS] word [END]

class Vocab {
 public:
  Vocab();
  int size() const { return static_cast<int>(words_.size()); }
  // Content words only; special bracket names are not tokenizable.
  int id(const std::string& word) const;
  const std::string& word(int id) const;
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
  std::vector<int> tokenize(const std::vector<std::string>& words) const;
  std::vector<std::string> detokenize(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> words_;
  std::vector<std::pair<std::string, int>> index_;  // content words only
};

enum class ShapeKind : int { square = 0, cross = 1, diag = 2 };
enum class Quadrant : int { top_left = 0, top_right = 1, bottom_left = 2, bottom_right = 3 };

inline constexpr double kDimLevel = 0.4;
inline constexpr double kBrightLevel = 0.9;

struct PlacedShape {
  ShapeKind kind;
  Quadrant quad;
  bool bright;
};

struct ShapeScene {
  std::vector<PlacedShape> shapes;  // 1-2 entries, distinct quadrants, quadrant-sorted

  std::array<double, 64> render() const;
  std::vector<std::string> caption_words() const;  // "bright square top-left [SEP] ..."
};

// All 240 distinct scene descriptors in a fixed canonical order.
const std::vector<ShapeScene>& all_scenes();

const std::string& shape_word(ShapeKind k);
const std::string& quadrant_word(Quadrant q);

struct PretrainPair {
  ShapeScene scene;
  std::vector<int> caption_ids;  // [CLS] ... padded to kCaptionLen
};

struct VqaSample {
  ShapeScene scene;
  std::vector<int> question_ids;  // [CLS] ... padded to kQuestionLen
  std::vector<int> answer_ids;    // [ANS] word [END]
  bool closed = false;
};

struct VqaSplit {
  std::vector<VqaSample> train;
  std::vector<VqaSample> val;
};

std::vector<PretrainPair> gen_pretrain_set(const Vocab& vocab, uint64_t seed, int n);

// Scene pool is split 50/50 between the two sides, so validation scenes never
// appear in training. Question types alternate open/closed exactly; closed
// answers alternate yes/no exactly.
VqaSplit gen_vqa_set(const Vocab& vocab, uint64_t seed, int n_train, int n_val);

// Line-delimited JSON export for inspection and cross-implementation checks.
void export_pretrain_jsonl(const std::string& path, const std::vector<PretrainPair>& pairs);
void export_vqa_jsonl(const std::string& path, const std::vector<VqaSample>& samples);

}  // namespace ggp::data
