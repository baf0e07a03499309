#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ggp/kernels.hpp"
#include "ggp/ops.hpp"
#include "ggp/rng.hpp"
#include "oracles.hpp"

using namespace ggp;

namespace {

TensorPtr randt(std::vector<int> shape, uint64_t seed, bool rg = true, double scale = 1.0) {
  Rng rng(seed);
  auto t = make_tensor(std::move(shape), rg);
  for (auto& v : t->data) v = scale * rng.next_gaussian();
  t->ensure_grad();
  return t;
}

}  // namespace

TEST_CASE("matmul against the identity") {
  Tape tape;
  auto a = make_tensor({2, 2}, {1, 2, 3, 4});
  auto eye = make_tensor({2, 2}, {1, 0, 0, 1});
  auto out = ad::matmul(tape, a, eye);
  CHECK(out->data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax symmetry and row sums") {
  Tape tape;
  auto x = make_tensor({2}, {0.0, 0.0});
  auto y = ad::softmax(tape, x);
  CHECK(y->data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y->data[1] == doctest::Approx(0.5).epsilon(1e-15));

  auto big = randt({40, 13}, 5, false, 3.0);
  auto sm = ad::softmax(tape, big);
  for (int r = 0; r < 40; ++r) {
    double s = 0.0;
    for (int c = 0; c < 13; ++c) s += sm->data[static_cast<std::size_t>(r) * 13 + c];
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("l2 norm of a 3-4-5 triple") {
  Tape tape;
  auto x = make_tensor({2}, {3.0, 4.0});
  CHECK(ad::l2_norm(tape, x)->data[0] == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("layer_norm postconditions: row mean ~0, variance ~1") {
  Tape tape;
  auto x = randt({30, 32}, 17, false, 2.0);
  auto gamma = make_tensor({32});
  std::fill(gamma->data.begin(), gamma->data.end(), 1.0);
  auto beta = make_tensor({32});
  auto y = ad::layer_norm(tape, x, gamma, beta, 1e-12);
  for (int r = 0; r < 30; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 32; ++c) mean += y->data[static_cast<std::size_t>(r) * 32 + c];
    mean /= 32;
    for (int c = 0; c < 32; ++c) {
      const double d = y->data[static_cast<std::size_t>(r) * 32 + c] - mean;
      var += d * d;
    }
    var /= 32;
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(var - 1.0) < 1e-8);
  }
}

TEST_CASE("softmax_cross_entropy closed forms and oracle") {
  Tape tape;
  // uniform logits over C=2 -> ln 2
  auto uniform = make_tensor({1, 2}, {0.3, 0.3});
  CHECK(ad::softmax_cross_entropy(tape, uniform, {0})->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // certain prediction -> 0
  auto certain = make_tensor({1, 2}, {1e9, -1e9});
  CHECK(ad::softmax_cross_entropy(tape, certain, {0})->data[0] <= 1e-9);
  // random case against the brute-force oracle
  auto logits = make_tensor({2, 2}, {1, 2, 3, 0});
  const double expected = oracle::softmax_xent_bruteforce({{1, 2}, {3, 0}}, {1, 0});
  CHECK(ad::softmax_cross_entropy(tape, logits, {1, 0})->data[0] == doctest::Approx(expected).epsilon(1e-14));
  // out-of-range target
  CHECK_THROWS_WITH_AS(ad::softmax_cross_entropy(tape, logits, {1, 2}), doctest::Contains("out of range"),
                       std::runtime_error);
}

TEST_CASE("backward basics") {
  {  // d/dx sum(x*x) = 2x
    Tape tape;
    auto x = make_tensor({1}, {3.0}, true);
    auto loss = ad::sum(tape, ad::multiply(tape, x, x));
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(tape.size() == 0);  // cleared afterward
  }
  {  // loss = sum(A x): dx = column sums of A, checked by finite differences too
    Tape tape;
    auto a = randt({4, 3}, 7, false);
    auto x = randt({3, 1}, 8, true);
    auto loss = ad::sum(tape, ad::matmul(tape, a, x));
    tape.backward(loss);
    for (int j = 0; j < 3; ++j) {
      double col = 0.0;
      for (int i = 0; i < 4; ++i) col += a->data[static_cast<std::size_t>(i) * 3 + j];
      CHECK(x->grad[j] == doctest::Approx(col).epsilon(1e-12));
    }
    auto f = [&](Tape& t) { return ad::sum(t, ad::matmul(t, a, x)); };
    CHECK(ad::finite_difference_check(f, x, 1e-5) < 1e-6);
  }
  {  // tensor unused by the loss keeps a zero grad
    Tape tape;
    auto x = make_tensor({2}, {1.0, 2.0}, true);
    auto unused = make_tensor({2}, {5.0, 5.0}, true);
    auto loss = ad::sum(tape, x);
    tape.backward(loss);
    CHECK(unused->grad == std::vector<double>{0.0, 0.0});
  }
  {  // grads accumulate when a tensor is used twice
    Tape tape;
    auto x = make_tensor({1}, {2.0}, true);
    auto loss = ad::sum(tape, ad::add(tape, x, x));
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("backward error paths") {
  Tape tape;
  auto x = randt({2, 2}, 9, true);
  auto y = ad::gelu(tape, x);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"), std::runtime_error);
  auto foreign = make_scalar(1.0, true);
  CHECK_THROWS_WITH_AS(tape.backward(foreign), doctest::Contains("not produced"), std::runtime_error);
}

TEST_CASE("shape errors name the op and both shapes") {
  Tape tape;
  auto a = randt({2, 3}, 1);
  auto b = randt({2, 3}, 2);
  try {
    ad::matmul(tape, a, b);
    FAIL("expected a shape error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  auto c = randt({4}, 3);
  CHECK_THROWS_WITH_AS(ad::add(tape, a, c), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("finite_difference_check input validation and degenerate cases") {
  auto x = randt({3}, 11, true);
  auto f = [&](Tape& t) { return ad::sum(t, ad::multiply(t, x, x)); };
  CHECK_THROWS_WITH_AS(ad::finite_difference_check(f, x, 0.0), doctest::Contains("(0, 1e-2]"), std::runtime_error);
  CHECK_THROWS_WITH_AS(ad::finite_difference_check(f, x, 0.5), doctest::Contains("(0, 1e-2]"), std::runtime_error);
  CHECK(ad::finite_difference_check(f, x, 1e-5) < 1e-6);  // polynomial exactness regime

  // constant f: autodiff grad 0, finite differences 0, error 0
  auto c = make_scalar(7.0);
  auto fconst = [&](Tape& t) { return ad::scale(t, c, 1.0); };
  CHECK(ad::finite_difference_check(fconst, x, 1e-5) == 0.0);

  // non-finite evaluation is an error
  auto fbad = [&](Tape& t) {
    auto nan = make_scalar(std::nan(""), false);
    return ad::scale(t, nan, 1.0);
  };
  CHECK_THROWS_WITH_AS(ad::finite_difference_check(fbad, x, 1e-5), doctest::Contains("non-finite"),
                       std::runtime_error);
}

// Every primitive's gradient against central differences on randomized
// shapes; >= 100 seeded trials overall.
TEST_CASE("per-primitive gradients match finite differences (randomized)") {
  struct Probe {
    std::string name;
    std::function<TensorPtr(Tape&, const TensorPtr&, uint64_t)> apply;
  };
  const std::vector<Probe> probes = {
      {"matmul", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::matmul(t, x, randt({x->shape.back(), 5}, s, false)); }},
      {"add", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::add(t, x, randt(x->shape, s, false)); }},
      {"add_bcast", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::add(t, x, randt({x->shape.back()}, s, false)); }},
      {"subtract", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::subtract(t, x, randt(x->shape, s, false)); }},
      {"multiply", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::multiply(t, x, randt(x->shape, s, false)); }},
      {"scale", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::scale(t, x, -1.37); }},
      {"gelu", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::gelu(t, x); }},
      {"softmax", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::softmax(t, x); }},
      {"transpose", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::transpose(t, x, 0, static_cast<int>(x->shape.size()) - 1); }},
      {"reshape", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::reshape(t, x, {static_cast<int>(x->numel())}); }},
      {"slice", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::slice(t, x, 0, 0, std::max(1, x->shape[0] / 2)); }},
      {"concatenate", [](Tape& t, const TensorPtr& x, uint64_t s) { return ad::concatenate(t, x, randt(x->shape, s, false), 0); }},
      {"normalize_rows", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::normalize_rows(t, x); }},
      {"layer_norm", [](Tape& t, const TensorPtr& x, uint64_t s) {
         auto g = randt({x->shape.back()}, s, false);
         auto b = randt({x->shape.back()}, s + 1, false);
         return ad::layer_norm(t, x, g, b, 1e-6);
       }},
      {"mean", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::mean(t, x); }},
      {"sum", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::sum(t, x); }},
      {"l2_norm", [](Tape& t, const TensorPtr& x, uint64_t) { return ad::l2_norm(t, x); }},
  };

  Rng shape_rng(2718);
  int trials = 0;
  for (const auto& probe : probes) {
    for (int rep = 0; rep < 8; ++rep) {
      const int rows = 2 + static_cast<int>(shape_rng.next_range(5));
      const int cols = 2 + static_cast<int>(shape_rng.next_range(7));
      auto x = randt({rows, cols}, static_cast<uint64_t>(1000 + trials), true);
      auto f = [&](Tape& t) {
        auto y = probe.apply(t, x, static_cast<uint64_t>(9000 + trials));
        auto w = randt(y->shape, static_cast<uint64_t>(5000 + trials), false);
        return ad::sum(t, ad::multiply(t, y, w));
      };
      const double err = ad::finite_difference_check(f, x, 1e-5);
      INFO(probe.name, " trial ", rep);
      CHECK(err < 1e-4);
      ++trials;
    }
  }
  // relu separately, with inputs kept away from the kink
  for (int rep = 0; rep < 8; ++rep) {
    auto x = randt({3, 6}, static_cast<uint64_t>(600 + rep), true);
    for (auto& v : x->data) v += v >= 0 ? 0.5 : -0.5;
    auto f = [&](Tape& t) {
      auto y = ad::relu(t, x);
      auto w = randt(y->shape, static_cast<uint64_t>(700 + rep), false);
      return ad::sum(t, ad::multiply(t, y, w));
    };
    CHECK(ad::finite_difference_check(f, x, 1e-5) < 1e-4);
    ++trials;
  }
  // embedding / gather: gradient flows into the table
  for (int rep = 0; rep < 8; ++rep) {
    auto table = randt({6, 4}, static_cast<uint64_t>(800 + rep), true);
    std::vector<int> ids = {0, 3, 3, 5, 1};
    auto f = [&](Tape& t) {
      auto y = ad::embedding_lookup(t, table, ids);
      auto w = randt(y->shape, static_cast<uint64_t>(900 + rep), false);
      return ad::sum(t, ad::multiply(t, y, w));
    };
    CHECK(ad::finite_difference_check(f, table, 1e-5) < 1e-4);
    ++trials;
  }
  // fused cross entropy
  for (int rep = 0; rep < 8; ++rep) {
    auto logits = randt({4, 6}, static_cast<uint64_t>(950 + rep), true);
    std::vector<int> targets = {1, 0, 5, 2};
    auto f = [&](Tape& t) { return ad::softmax_cross_entropy(t, logits, targets); };
    CHECK(ad::finite_difference_check(f, logits, 1e-5) < 1e-4);
    ++trials;
  }
  CHECK(trials >= 100);
}

TEST_CASE("determinism: identical inputs give bit-identical forward and backward") {
  auto run = [](uint64_t seed) {
    Tape tape;
    auto x = randt({6, 8}, seed, true);
    auto w = randt({8, 8}, seed + 1, true);
    auto g = make_tensor({8});
    std::fill(g->data.begin(), g->data.end(), 1.0);
    auto b = make_tensor({8});
    auto h = ad::layer_norm(tape, ad::gelu(tape, ad::matmul(tape, x, w)), g, b, 1e-6);
    auto loss = ad::mean(tape, ad::multiply(tape, h, h));
    tape.backward(loss);
    return std::make_tuple(loss->data, x->grad, w->grad);
  };
  CHECK(run(42) == run(42));
}

TEST_CASE("gather_rows routes gradients to the selected rows only") {
  Tape tape;
  auto x = randt({4, 3}, 77, true);
  auto y = ad::gather_rows(tape, x, {2, 2});
  auto loss = ad::sum(tape, y);
  tape.backward(loss);
  CHECK(x->grad == std::vector<double>{0, 0, 0, 0, 0, 0, 2, 2, 2, 0, 0, 0});
  CHECK_THROWS_WITH_AS(ad::gather_rows(tape, x, {4}), doctest::Contains("out of range"), std::runtime_error);
}
