#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "ggp/model.hpp"
#include "ggp/rng.hpp"
#include "ggp/synthdata.hpp"

using namespace ggp;

namespace {

nn::ModelConfig small_config() {
  nn::ModelConfig cfg;
  cfg.vocab_size = data::Vocab().size();
  return cfg;
}

TensorPtr random_patches(const nn::MultiModalModel& model, int batch, uint64_t seed, bool rg = false) {
  Rng rng(seed);
  auto t = make_tensor({batch, model.config().patch_tokens(), model.config().patch_dim()}, rg);
  for (auto& v : t->data) v = rng.next_double();
  t->ensure_grad();
  return t;
}

std::vector<std::vector<int>> pad_batch(std::vector<std::vector<int>> ids, int len) {
  for (auto& row : ids) row.resize(static_cast<std::size_t>(len), data::kPad);
  return ids;
}

bool all_finite(const TensorPtr& t) {
  for (double v : t->data)
    if (!std::isfinite(v)) return false;
  return true;
}

const std::string kTmp = "nn_test_tmp";

}  // namespace

TEST_CASE("encode_image is deterministic and rejects wrong sizes") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  auto p = random_patches(model, 2, 3);
  auto a = model.encode_image(tape, p);
  auto b = model.encode_image(tape, p);
  CHECK(a->data == b->data);
  CHECK(a->shape == std::vector<int>{2, 17, 32});

  auto bad = make_tensor({2, 16, 3});
  CHECK_THROWS_WITH_AS(model.encode_image(tape, bad), doctest::Contains("expected patches"), std::runtime_error);
}

TEST_CASE("an all-zero image still encodes to finite values") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  auto zeros = make_tensor({1, 16, 4});
  auto out = model.encode_image(tape, zeros);
  CHECK(all_finite(out));
}

TEST_CASE("permuting two patches changes the encoding (position embeddings active)") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  auto p = random_patches(model, 1, 5);
  auto swapped = make_tensor(p->shape, p->data);
  for (int j = 0; j < 4; ++j) std::swap(swapped->data[0 * 4 + j], swapped->data[9 * 4 + j]);
  auto a = model.encode_image(tape, p);
  auto b = model.encode_image(tape, swapped);
  CHECK(a->data != b->data);
}

TEST_CASE("encode_text: determinism, padding invariance, sensitivity") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  const data::Vocab vocab;
  std::vector<int> seq = {data::kCls, vocab.id("bright"), vocab.id("square"), vocab.id("top-left")};

  auto a = model.encode_text(tape, pad_batch({seq}, 8));
  auto b = model.encode_text(tape, pad_batch({seq}, 8));
  CHECK(a->data == b->data);

  // extra padding must not change the [CLS] state at all
  auto longer = model.encode_text(tape, pad_batch({seq}, 12));
  for (int j = 0; j < 32; ++j) CHECK(a->data[j] == longer->data[j]);

  // one substituted token must change it
  std::vector<int> seq2 = seq;
  seq2[2] = vocab.id("cross");
  auto c = model.encode_text(tape, pad_batch({seq2}, 8));
  bool differs = false;
  for (int j = 0; j < 32; ++j) differs |= a->data[j] != c->data[j];
  CHECK(differs);

  CHECK_THROWS_WITH_AS(model.encode_text(tape, {{data::kCls, 9999}}), doctest::Contains("out of range"),
                       std::runtime_error);
  CHECK_THROWS_AS(model.encode_text(tape, pad_batch({seq}, 26)), std::runtime_error);
}

TEST_CASE("fuse: cross-attention is live, the text-only hook bypasses it") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  const data::Vocab vocab;
  const auto ids = pad_batch({{data::kCls, vocab.id("dim"), vocab.id("cross"), vocab.id("top-right")}}, 8);
  auto txt = model.encode_text(tape, ids);
  auto imgA = model.encode_image(tape, random_patches(model, 1, 11));
  auto imgB = model.encode_image(tape, random_patches(model, 1, 12));

  auto fusedA = model.fuse(tape, imgA, txt, ids);
  auto fusedB = model.fuse(tape, imgB, txt, ids);
  CHECK(fusedA->data != fusedB->data);  // swapping the image changes the fusion
  auto fusedA2 = model.fuse(tape, imgA, txt, ids);
  CHECK(fusedA->data == fusedA2->data);  // deterministic repeat

  // with image attention off the result ignores the image entirely
  auto offA = model.fuse(tape, imgA, txt, ids, false);
  auto offB = model.fuse(tape, imgB, txt, ids, false);
  CHECK(offA->data == offB->data);
  CHECK(offA->data != fusedA->data);

  auto thin = make_tensor({1, 17, 16});
  CHECK_THROWS_WITH_AS(model.fuse(tape, thin, txt, ids), doctest::Contains("width mismatch"), std::runtime_error);
}

TEST_CASE("momentum updates: identity, full copy, EMA lag, monotone drift") {
  auto cfg = small_config();
  SUBCASE("m = 1 leaves copies unchanged") {
    cfg.momentum = 1.0;
    nn::MultiModalModel model(cfg, 3);
    const auto before = model.momentum_params().get("momentum.img_proj.w")->data;
    model.params().get("img_proj.w")->data[0] += 1.0;
    model.momentum_update();
    CHECK(model.momentum_params().get("momentum.img_proj.w")->data == before);
  }
  SUBCASE("m = 0 copies the live weights") {
    cfg.momentum = 0.0;
    nn::MultiModalModel model(cfg, 3);
    model.params().get("img_proj.w")->data[5] = 42.0;
    model.momentum_update();
    CHECK(model.momentum_params().get("momentum.img_proj.w")->data == model.params().get("img_proj.w")->data);
  }
  SUBCASE("one step from equal weights lags by momentum * delta") {
    cfg.momentum = 0.995;
    nn::MultiModalModel model(cfg, 3);
    auto live = model.params().get("txt_proj.b");
    const double delta = 0.37;
    live->data[1] += delta;
    model.momentum_update();
    const double copy = model.momentum_params().get("momentum.txt_proj.b")->data[1];
    CHECK(live->data[1] - copy == doctest::Approx(0.995 * delta).epsilon(1e-12));
  }
  SUBCASE("repeated updates with frozen live weights never increase the gap") {
    cfg.momentum = 0.9;
    nn::MultiModalModel model(cfg, 3);
    model.params().get("img_proj.w")->data[0] += 2.0;
    double prev_gap = 1e300;
    for (int t = 0; t < 10; ++t) {
      model.momentum_update();
      double gap = 0.0;
      for (const auto& [name, copy] : model.momentum_params().items()) {
        const auto& live = model.params().get(name.substr(9));
        for (std::size_t i = 0; i < copy->numel(); ++i) {
          const double d = copy->data[i] - live->data[i];
          gap += d * d;
        }
      }
      CHECK(gap <= prev_gap);
      prev_gap = gap;
    }
  }
}

TEST_CASE("decode_answer: causality, determinism, validation") {
  nn::MultiModalModel model(small_config(), 7);
  Tape tape;
  const data::Vocab vocab;
  const auto q = pad_batch({{data::kCls, vocab.id("is"), vocab.id("there"), vocab.id("a"), vocab.id("square")}}, 8);
  auto img = model.encode_image(tape, random_patches(model, 1, 21));
  auto txt = model.encode_text(tape, q);
  auto joint = model.fuse(tape, img, txt, q);

  std::vector<int> prefix = {data::kAns, vocab.id("yes"), data::kEnd, vocab.id("no")};
  auto logits1 = model.decode_answer(tape, joint, q, {prefix});
  CHECK(logits1->shape == std::vector<int>{1, 4, vocab.size()});
  auto logits2 = model.decode_answer(tape, joint, q, {prefix});
  CHECK(logits1->data == logits2->data);  // deterministic

  // causal mask: changing the token at position j leaves logits at earlier positions unchanged
  std::vector<int> prefix2 = prefix;
  prefix2[2] = vocab.id("two");
  auto logits3 = model.decode_answer(tape, joint, q, {prefix2});
  const int v = vocab.size();
  for (int pos = 0; pos < 2; ++pos)
    for (int j = 0; j < v; ++j)
      CHECK(logits1->data[static_cast<std::size_t>(pos) * v + j] ==
            logits3->data[static_cast<std::size_t>(pos) * v + j]);
  bool later_differs = false;
  for (int j = 0; j < v; ++j)
    later_differs |= logits1->data[static_cast<std::size_t>(2) * v + j] != logits3->data[static_cast<std::size_t>(2) * v + j];
  CHECK(later_differs);

  CHECK_THROWS_WITH_AS(model.decode_answer(tape, joint, q, {{vocab.id("yes")}}),
                       doctest::Contains("answer start token"), std::runtime_error);
  std::vector<int> too_long(9, data::kPad);
  too_long[0] = data::kAns;
  CHECK_THROWS_WITH_AS(model.decode_answer(tape, joint, q, {too_long}), doctest::Contains("max answer length"),
                       std::runtime_error);
}

TEST_CASE("parameter-name census: the visual selector is exact and disjoint") {
  nn::MultiModalModel model(small_config(), 7);
  const auto visual = model.param_names_with_prefix("visual_encoder");
  CHECK(!visual.empty());
  std::set<std::string> vset(visual.begin(), visual.end());
  std::size_t counted = 0;
  for (const auto& [name, t] : model.params().items()) {
    const bool is_visual = name.rfind("visual_encoder.", 0) == 0;
    CHECK(vset.count(name) == static_cast<std::size_t>(is_visual));
    counted += is_visual;
    const bool other = name.rfind("text_encoder.", 0) == 0 || name.rfind("fusion_encoder.", 0) == 0 ||
                       name.rfind("answer_decoder.", 0) == 0;
    if (other) CHECK(vset.count(name) == 0);
  }
  CHECK(counted == vset.size());
  // momentum replicas are outside the trainable registry and never selected
  for (const auto& [name, t] : model.momentum_params().items()) {
    CHECK(name.rfind("momentum.", 0) == 0);
    CHECK(t->requires_grad == false);
  }
}

TEST_CASE("checkpoint round trip is bit-exact; absent decoder params are reported") {
  std::filesystem::create_directories(kTmp);
  nn::MultiModalModel model(small_config(), 42);
  // make the state distinctive
  model.params().get("img_proj.w")->data[3] = 0.123456789;
  model.save_checkpoint(kTmp + "/full.ckpt", true);
  model.save_checkpoint(kTmp + "/no_decoder.ckpt", false);

  nn::MultiModalModel other(small_config(), 999);  // different init
  const auto rep = other.load_checkpoint(kTmp + "/full.ckpt");
  CHECK(rep.fresh_initialized.empty());
  for (const auto& [name, t] : model.params().items()) CHECK(other.params().get(name)->data == t->data);

  nn::MultiModalModel third(small_config(), 999);
  const auto rep2 = third.load_checkpoint(kTmp + "/no_decoder.ckpt");
  CHECK(!rep2.fresh_initialized.empty());
  for (const auto& name : rep2.fresh_initialized) CHECK(name.rfind("answer_decoder.", 0) == 0);
  // non-decoder params match the source; decoder params kept their own init
  CHECK(third.params().get("visual_encoder.cls")->data == model.params().get("visual_encoder.cls")->data);
  nn::MultiModalModel fresh(small_config(), 999);
  CHECK(third.params().get("answer_decoder.tok")->data == fresh.params().get("answer_decoder.tok")->data);

  // identical bytes on re-save (checkpoint writing is deterministic)
  other.save_checkpoint(kTmp + "/full2.ckpt", true);
  std::ifstream f1(kTmp + "/full.ckpt", std::ios::binary), f2(kTmp + "/full2.ckpt", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("checkpoint mismatch errors list the offending parameters") {
  std::filesystem::create_directories(kTmp);
  nn::MultiModalModel model(small_config(), 42);

  // architecture manifest mismatch
  auto cfg2 = small_config();
  cfg2.momentum = 0.5;
  model.save_checkpoint(kTmp + "/m.ckpt", true);
  nn::MultiModalModel other(cfg2, 42);
  CHECK_THROWS_WITH_AS(other.load_checkpoint(kTmp + "/m.ckpt"), doctest::Contains("manifest"), std::runtime_error);

  // hand-written file with an unknown parameter: pins the binary format too
  {
    std::ofstream os(kTmp + "/bogus.ckpt", std::ios::binary | std::ios::trunc);
    os.write("GGPCKPT1", 8);
    const std::string manifest = model.config().to_json();
    const uint32_t mlen = static_cast<uint32_t>(manifest.size());
    os.write(reinterpret_cast<const char*>(&mlen), 4);
    os.write(manifest.data(), mlen);
    const uint32_t count = 1;
    os.write(reinterpret_cast<const char*>(&count), 4);
    const std::string name = "bogus.param";
    const uint16_t nlen = static_cast<uint16_t>(name.size());
    os.write(reinterpret_cast<const char*>(&nlen), 2);
    os.write(name.data(), nlen);
    const uint8_t ndim = 1;
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    const uint32_t d0 = 2;
    os.write(reinterpret_cast<const char*>(&d0), 4);
    const double vals[2] = {1.0, 2.0};
    os.write(reinterpret_cast<const char*>(vals), sizeof(vals));
  }
  nn::MultiModalModel target(small_config(), 42);
  try {
    target.load_checkpoint(kTmp + "/bogus.ckpt");
    FAIL("expected a mismatch error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus.param (unknown parameter)") != std::string::npos);
    CHECK(msg.find("missing from checkpoint") != std::string::npos);
  }
}

TEST_CASE("seeded init is reproducible and visual depth stays twice text depth") {
  nn::MultiModalModel a(small_config(), 5), b(small_config(), 5), c(small_config(), 6);
  CHECK(a.params().get("visual_encoder.layer0.attn.q.w")->data == b.params().get("visual_encoder.layer0.attn.q.w")->data);
  CHECK(a.params().get("visual_encoder.layer0.attn.q.w")->data != c.params().get("visual_encoder.layer0.attn.q.w")->data);

  auto bad = small_config();
  bad.visual_depth = 3;
  CHECK_THROWS_WITH_AS(nn::MultiModalModel(bad, 1), doctest::Contains("twice"), std::runtime_error);
}
