#pragma once

// Independent oracles used by the tests. Everything here is plain scalar
// code with no dependency on the library's kernels or tape, so it can serve
// as a second route for the values the implementation must reproduce.

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggp/synthdata.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Scalar AdamW replay (mirrors the documented update formula).
// ---------------------------------------------------------------------------

struct ScalarAdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.02;
  double m = 0.0, v = 0.0;
  long t = 0;

  double step(double p, double g, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return p - lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p);
  }
};

// One perturbed training step on a single scalar parameter with loss
// a*(p-c)^2: snapshot -> perturb -> gradient at the perturbed point ->
// restore -> AdamW. Mirrors the training-step contract line by line.
struct ScalarPerturbedTrainer {
  ScalarAdamW opt;
  double delta = 0.05, epsilon = 0.001;
  bool adaptive = true;
  double fixed_ratio = 0.05;

  double step(double p, double a, double c, double lr) {
    const double snapshot = p;
    const double moment = opt.m;  // raw first moment before this step
    double r = 0.0;
    const double theta_norm = std::fabs(p);
    const double moment_norm = std::fabs(moment);
    if (moment_norm >= 1e-12 && theta_norm >= 1e-12)
      r = (adaptive ? delta * theta_norm / moment_norm : fixed_ratio) * moment;
    const double bound = epsilon * std::fabs(snapshot);
    if (r > bound) r = bound;
    if (r < -bound) r = -bound;
    const double perturbed = snapshot + r;
    const double grad = 2.0 * a * (perturbed - c);
    return opt.step(snapshot, grad, lr);
  }
};

// ---------------------------------------------------------------------------
// Brute-force softmax cross entropy (mean over rows of -log softmax[target]).
// ---------------------------------------------------------------------------

inline double softmax_xent_bruteforce(const std::vector<std::vector<double>>& logits,
                                      const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.size(); ++r) {
    double denom = 0.0;
    for (double x : logits[r]) denom += std::exp(x);
    total += -std::log(std::exp(logits[r][targets[r]]) / denom);
  }
  return total / static_cast<double>(logits.size());
}

// ---------------------------------------------------------------------------
// Grid parser: recovers the scene description from a rendered 8x8 grid.
// ---------------------------------------------------------------------------

inline std::vector<ggp::data::PlacedShape> parse_grid(const std::array<double, 64>& grid) {
  using namespace ggp::data;
  auto cells_of = [](ShapeKind k) {
    std::vector<std::pair<int, int>> cells;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        bool on = false;
        if (k == ShapeKind::square) on = r == 0 || r == 3 || c == 0 || c == 3;
        if (k == ShapeKind::cross) on = r == 1 || r == 2 || c == 1 || c == 2;
        if (k == ShapeKind::diag) on = r == c;
        if (on) cells.push_back({r, c});
      }
    return cells;
  };

  std::vector<PlacedShape> shapes;
  for (int q = 0; q < 4; ++q) {
    const int qr = (q / 2) * 4, qc = (q % 2) * 4;
    std::vector<std::pair<int, int>> lit;
    double level = 0.0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const double v = grid[static_cast<std::size_t>(qr + r) * 8 + (qc + c)];
        if (v != 0.0) {
          lit.push_back({r, c});
          level = v;
        }
      }
    if (lit.empty()) continue;
    bool matched = false;
    for (int k = 0; k < 3; ++k) {
      if (lit == cells_of(static_cast<ShapeKind>(k))) {
        shapes.push_back({static_cast<ShapeKind>(k), static_cast<Quadrant>(q), level == kBrightLevel});
        matched = true;
        break;
      }
    }
    if (!matched) throw std::runtime_error("parse_grid: unrecognized pattern in quadrant " + std::to_string(q));
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Rule-based question evaluation on a parsed scene.
// ---------------------------------------------------------------------------

inline std::string answer_question(const std::vector<ggp::data::PlacedShape>& shapes,
                                   const std::vector<std::string>& words) {
  using namespace ggp::data;
  auto kind_of = [](const std::string& w) {
    if (w == "square") return ShapeKind::square;
    if (w == "cross") return ShapeKind::cross;
    if (w == "diag") return ShapeKind::diag;
    throw std::runtime_error("answer_question: not a shape word: " + w);
  };
  auto quad_of = [](const std::string& w) {
    if (w == "top-left") return Quadrant::top_left;
    if (w == "top-right") return Quadrant::top_right;
    if (w == "bottom-left") return Quadrant::bottom_left;
    if (w == "bottom-right") return Quadrant::bottom_right;
    throw std::runtime_error("answer_question: not a quadrant word: " + w);
  };
  auto has_kind = [&](ShapeKind k) {
    for (const auto& s : shapes)
      if (s.kind == k) return true;
    return false;
  };

  if (words.size() == 4 && words[0] == "is" && words[1] == "there" && words[2] == "a")
    return has_kind(kind_of(words[3])) ? "yes" : "no";
  if (words.size() == 6 && words[0] == "does")  // does the image contain a <shape>
    return has_kind(kind_of(words[5])) ? "yes" : "no";
  if (words.size() == 7 && words[0] == "is" && words[4] == "in") {  // is there a <shape> in the <quad>
    const auto k = kind_of(words[3]);
    const auto q = quad_of(words[6]);
    for (const auto& s : shapes)
      if (s.kind == k && s.quad == q) return "yes";
    return "no";
  }
  if (words.size() == 4 && words[0] == "is" && words[1] == "the") {  // is the <shape> bright
    const auto k = kind_of(words[2]);
    for (const auto& s : shapes)
      if (s.kind == k) return s.bright ? "yes" : "no";
    throw std::runtime_error("answer_question: shape not present");
  }
  if (words.size() == 6 && words[0] == "what" && words[1] == "shape") {  // what shape is in the <quad>
    const auto q = quad_of(words[5]);
    for (const auto& s : shapes)
      if (s.quad == q) return shape_word(s.kind);
    throw std::runtime_error("answer_question: empty quadrant");
  }
  if (words.size() == 5 && words[0] == "which") {  // which quadrant contains the <shape>
    const auto k = kind_of(words[4]);
    for (const auto& s : shapes)
      if (s.kind == k) return quadrant_word(s.quad);
    throw std::runtime_error("answer_question: shape not present");
  }
  if (words.size() == 5 && words[0] == "what" && words[1] == "brightness") {  // what brightness is the <shape>
    const auto k = kind_of(words[4]);
    for (const auto& s : shapes)
      if (s.kind == k) return s.bright ? "bright" : "dim";
    throw std::runtime_error("answer_question: shape not present");
  }
  if (words.size() == 5 && words[0] == "how")  // how many shapes are there
    return shapes.size() == 1 ? "one" : "two";
  throw std::runtime_error("answer_question: unrecognized question template");
}

// ---------------------------------------------------------------------------
// Tiny dense linear solve (Gaussian elimination with partial pivoting); used
// to rig classifier heads to certainty in the loss tests.
// ---------------------------------------------------------------------------

inline std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
  const int n = static_cast<int>(a.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (std::fabs(a[col][col]) < 1e-12) throw std::runtime_error("solve_linear: singular system");
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

// Rigs a linear head W [in, out] (+ zero bias) so that rows of X [m, in] map
// to logits with +margin at target columns and -margin elsewhere, by solving
// the m x m Gram system per output column. Requires m <= in and X of full
// row rank.
inline void rig_head(const std::vector<std::vector<double>>& x, const std::vector<int>& targets, int out_dim,
                     double margin, std::vector<double>& w_out) {
  const int m = static_cast<int>(x.size());
  const int in = static_cast<int>(x[0].size());
  std::vector<std::vector<double>> gram(m, std::vector<double>(m, 0.0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < in; ++k) gram[i][j] += x[i][k] * x[j][k];
  w_out.assign(static_cast<std::size_t>(in) * out_dim, 0.0);
  for (int col = 0; col < out_dim; ++col) {
    std::vector<double> y(m);
    for (int i = 0; i < m; ++i) y[i] = targets[i] == col ? margin : -margin;
    const auto alpha = solve_linear(gram, y);
    // w_col = X^T alpha
    for (int k = 0; k < in; ++k) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += x[i][k] * alpha[i];
      w_out[static_cast<std::size_t>(k) * out_dim + col] = s;
    }
  }
}

}  // namespace oracle
