#include "ggp/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ggp/kernels.hpp"

namespace ggp::ad {

namespace {

void acc_add(double* dst, const double* src, std::size_t n, double s = 1.0) {
#pragma omp parallel for schedule(static) if (n > 16384)
  for (long i = 0; i < static_cast<long>(n); ++i) dst[i] += s * src[i];
}

bool track(const TensorPtr& t) { return grad_enabled() && t->requires_grad; }

TensorPtr out_like(std::vector<int> shape, bool requires_grad) {
  return make_tensor(std::move(shape), requires_grad);
}

[[noreturn]] void shape_error(const char* op, const TensorPtr& a, const TensorPtr& b) {
  throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
}

// Right operand must have an identical shape or one that is a suffix of the
// left's (tiled over leading dims).
std::size_t suffix_broadcast_len(const char* op, const TensorPtr& a, const TensorPtr& b) {
  const auto& sa = a->shape;
  const auto& sb = b->shape;
  if (sb.size() > sa.size()) shape_error(op, a, b);
  for (std::size_t i = 0; i < sb.size(); ++i)
    if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i]) shape_error(op, a, b);
  return b->numel();
}

int last_dim(const TensorPtr& t) { return t->shape.empty() ? 1 : t->shape.back(); }

std::vector<int> batch_dims(const TensorPtr& t) {
  return std::vector<int>(t->shape.begin(), t->shape.end() - 2);
}

}  // namespace

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() < 2 || b->shape.size() < 2) shape_error("matmul", a, b);
  const bool b_batched = b->shape.size() > 2;
  if (b_batched && batch_dims(a) != batch_dims(b)) shape_error("matmul", a, b);
  const int k = a->shape.back();
  if (b->shape[b->shape.size() - 2] != k) shape_error("matmul", a, b);
  const int m = a->shape[a->shape.size() - 2];
  const int n = b->shape.back();
  int batch = 1;
  for (auto d : batch_dims(a)) batch *= d;

  std::vector<int> out_shape = a->shape;
  out_shape.back() = n;
  const bool rg = track(a) || track(b);
  auto out = out_like(std::move(out_shape), rg);
  kern::matmul(a->data.data(), b->data.data(), out->data.data(), batch, m, k, n, b_batched);
  if (rg) {
    tape.record({"matmul", {a, b}, out, [a, b, out, batch, m, k, n, b_batched]() {
                   if (a->requires_grad)
                     kern::matmul_grad_a(out->grad.data(), b->data.data(), a->grad.data(), batch, m, k, n, b_batched);
                   if (b->requires_grad)
                     kern::matmul_grad_b(a->data.data(), out->grad.data(), b->grad.data(), batch, m, k, n, b_batched);
                 }});
  }
  return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  const std::size_t nb = suffix_broadcast_len("add", a, b);
  const bool rg = track(a) || track(b);
  auto out = out_like(a->shape, rg);
  kern::add(a->data.data(), b->data.data(), out->data.data(), a->numel(), nb);
  if (rg) {
    tape.record({"add", {a, b}, out, [a, b, out, nb]() {
                   if (a->requires_grad) acc_add(a->grad.data(), out->grad.data(), out->numel());
                   if (b->requires_grad) {
                     if (nb == out->numel())
                       acc_add(b->grad.data(), out->grad.data(), nb);
                     else
                       kern::tile_reduce_add(out->grad.data(), b->grad.data(), out->numel(), nb);
                   }
                 }});
  }
  return out;
}

TensorPtr subtract(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  const std::size_t nb = suffix_broadcast_len("subtract", a, b);
  const bool rg = track(a) || track(b);
  auto out = out_like(a->shape, rg);
  kern::subtract(a->data.data(), b->data.data(), out->data.data(), a->numel(), nb);
  if (rg) {
    tape.record({"subtract", {a, b}, out, [a, b, out, nb]() {
                   if (a->requires_grad) acc_add(a->grad.data(), out->grad.data(), out->numel());
                   if (b->requires_grad) {
                     if (nb == out->numel()) {
                       acc_add(b->grad.data(), out->grad.data(), nb, -1.0);
                     } else {
                       std::vector<double> tmp(nb, 0.0);
                       kern::tile_reduce_add(out->grad.data(), tmp.data(), out->numel(), nb);
                       acc_add(b->grad.data(), tmp.data(), nb, -1.0);
                     }
                   }
                 }});
  }
  return out;
}

TensorPtr multiply(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  const std::size_t nb = suffix_broadcast_len("multiply", a, b);
  const bool rg = track(a) || track(b);
  auto out = out_like(a->shape, rg);
  kern::multiply(a->data.data(), b->data.data(), out->data.data(), a->numel(), nb);
  if (rg) {
    tape.record({"multiply", {a, b}, out, [a, b, out, nb]() {
                   const std::size_t na = out->numel();
                   if (a->requires_grad) {
#pragma omp parallel for schedule(static) if (na > 16384)
                     for (long i = 0; i < static_cast<long>(na); ++i)
                       a->grad[i] += out->grad[i] * b->data[i % nb];
                   }
                   if (b->requires_grad) {
                     const std::size_t tiles = na / nb;
#pragma omp parallel for schedule(static) if (na > 16384 && nb > 1)
                     for (long j = 0; j < static_cast<long>(nb); ++j) {
                       double s = 0.0;
                       for (std::size_t t = 0; t < tiles; ++t) s += out->grad[t * nb + j] * a->data[t * nb + j];
                       b->grad[j] += s;
                     }
                   }
                 }});
  }
  return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& a, double s) {
  const bool rg = track(a);
  auto out = out_like(a->shape, rg);
  kern::scale(a->data.data(), s, out->data.data(), a->numel());
  if (rg) {
    tape.record({"scale", {a}, out, [a, out, s]() { acc_add(a->grad.data(), out->grad.data(), out->numel(), s); }});
  }
  return out;
}

TensorPtr gelu(Tape& tape, const TensorPtr& a) {
  const bool rg = track(a);
  auto out = out_like(a->shape, rg);
  kern::gelu(a->data.data(), out->data.data(), a->numel());
  if (rg) {
    tape.record({"gelu", {a}, out, [a, out]() {
                   kern::gelu_grad(a->data.data(), out->grad.data(), a->grad.data(), a->numel());
                 }});
  }
  return out;
}

TensorPtr relu(Tape& tape, const TensorPtr& a) {
  const bool rg = track(a);
  auto out = out_like(a->shape, rg);
  kern::relu(a->data.data(), out->data.data(), a->numel());
  if (rg) {
    tape.record({"relu", {a}, out, [a, out]() {
                   kern::relu_grad(a->data.data(), out->grad.data(), a->grad.data(), a->numel());
                 }});
  }
  return out;
}

TensorPtr softmax(Tape& tape, const TensorPtr& a) {
  const int cols = last_dim(a);
  const int rows = static_cast<int>(a->numel() / cols);
  const bool rg = track(a);
  auto out = out_like(a->shape, rg);
  kern::softmax_rows(a->data.data(), out->data.data(), rows, cols);
  if (rg) {
    tape.record({"softmax", {a}, out, [a, out, rows, cols]() {
                   kern::softmax_rows_grad(out->data.data(), out->grad.data(), a->grad.data(), rows, cols);
                 }});
  }
  return out;
}

TensorPtr layer_norm(Tape& tape, const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta, double eps) {
  const int cols = last_dim(a);
  if (gamma->numel() != static_cast<std::size_t>(cols) || beta->numel() != static_cast<std::size_t>(cols))
    throw std::runtime_error("layer_norm: affine params must have length " + std::to_string(cols) +
                             ", got gamma " + shape_str(gamma->shape) + " beta " + shape_str(beta->shape));
  const int rows = static_cast<int>(a->numel() / cols);
  const bool rg = track(a) || track(gamma) || track(beta);
  auto out = out_like(a->shape, rg);
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kern::layer_norm(a->data.data(), gamma->data.data(), beta->data.data(), out->data.data(),
                   mean->data(), rstd->data(), rows, cols, eps);
  if (rg) {
    tape.record({"layer_norm", {a, gamma, beta}, out, [a, gamma, beta, out, mean, rstd, rows, cols]() {
                   if (a->requires_grad)
                     kern::layer_norm_grad_x(a->data.data(), gamma->data.data(), out->grad.data(),
                                             mean->data(), rstd->data(), a->grad.data(), rows, cols);
                   if (gamma->requires_grad || beta->requires_grad) {
                     std::vector<double> dg(cols, 0.0), db(cols, 0.0);
                     kern::layer_norm_grad_affine(a->data.data(), out->grad.data(), mean->data(), rstd->data(),
                                                  dg.data(), db.data(), rows, cols);
                     if (gamma->requires_grad) acc_add(gamma->grad.data(), dg.data(), cols);
                     if (beta->requires_grad) acc_add(beta->grad.data(), db.data(), cols);
                   }
                 }});
  }
  return out;
}

namespace {

TensorPtr lookup_rows_impl(Tape& tape, const char* op, const TensorPtr& a, const std::vector<int>& ids,
                           int rows_in, int width) {
  for (int id : ids)
    if (id < 0 || id >= rows_in)
      throw std::runtime_error(std::string(op) + ": index " + std::to_string(id) + " out of range [0," +
                               std::to_string(rows_in) + ")");
  const int n = static_cast<int>(ids.size());
  const bool rg = track(a);
  auto out = out_like({n, width}, rg);
  kern::gather_rows(a->data.data(), ids.data(), out->data.data(), n, width);
  if (rg) {
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    tape.record({op, {a}, out, [a, out, ids_copy, n, width]() {
                   kern::scatter_rows_add(out->grad.data(), ids_copy->data(), a->grad.data(), n, width);
                 }});
  }
  return out;
}

}  // namespace

TensorPtr embedding_lookup(Tape& tape, const TensorPtr& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) throw std::runtime_error("embedding_lookup: table must be 2-D, got " + shape_str(table->shape));
  return lookup_rows_impl(tape, "embedding_lookup", table, ids, table->shape[0], table->shape[1]);
}

TensorPtr gather_rows(Tape& tape, const TensorPtr& a, const std::vector<int>& rows) {
  const int width = last_dim(a);
  const int rows_in = static_cast<int>(a->numel() / width);
  return lookup_rows_impl(tape, "gather_rows", a, rows, rows_in, width);
}

TensorPtr concatenate(Tape& tape, const TensorPtr& a, const TensorPtr& b, int axis) {
  if (a->shape.size() != b->shape.size()) shape_error("concatenate", a, b);
  const int nd = static_cast<int>(a->shape.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::runtime_error("concatenate: axis out of range");
  for (int i = 0; i < nd; ++i)
    if (i != axis && a->shape[i] != b->shape[i]) shape_error("concatenate", a, b);

  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a->shape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= a->shape[i];
  const std::size_t block_a = a->shape[axis] * inner;
  const std::size_t block_b = b->shape[axis] * inner;

  std::vector<int> out_shape = a->shape;
  out_shape[axis] += b->shape[axis];
  const bool rg = track(a) || track(b);
  auto out = out_like(std::move(out_shape), rg);
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out->data.data() + o * (block_a + block_b), a->data.data() + o * block_a, block_a * sizeof(double));
    std::memcpy(out->data.data() + o * (block_a + block_b) + block_a, b->data.data() + o * block_b,
                block_b * sizeof(double));
  }
  if (rg) {
    tape.record({"concatenate", {a, b}, out, [a, b, out, outer, block_a, block_b]() {
                   for (std::size_t o = 0; o < outer; ++o) {
                     const double* g = out->grad.data() + o * (block_a + block_b);
                     if (a->requires_grad) acc_add(a->grad.data() + o * block_a, g, block_a);
                     if (b->requires_grad) acc_add(b->grad.data() + o * block_b, g + block_a, block_b);
                   }
                 }});
  }
  return out;
}

TensorPtr slice(Tape& tape, const TensorPtr& a, int axis, int start, int len) {
  const int nd = static_cast<int>(a->shape.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::runtime_error("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > a->shape[axis])
    throw std::runtime_error("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") invalid for axis length " + std::to_string(a->shape[axis]));

  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a->shape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= a->shape[i];
  const std::size_t in_block = a->shape[axis] * inner;
  const std::size_t out_block = static_cast<std::size_t>(len) * inner;

  std::vector<int> out_shape = a->shape;
  out_shape[axis] = len;
  const bool rg = track(a);
  auto out = out_like(std::move(out_shape), rg);
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(out->data.data() + o * out_block, a->data.data() + o * in_block + start * inner,
                out_block * sizeof(double));
  if (rg) {
    const std::size_t off = static_cast<std::size_t>(start) * inner;
    tape.record({"slice", {a}, out, [a, out, outer, in_block, out_block, off]() {
                   for (std::size_t o = 0; o < outer; ++o)
                     acc_add(a->grad.data() + o * in_block + off, out->grad.data() + o * out_block, out_block);
                 }});
  }
  return out;
}

namespace {

// Copies src into dst with two axes swapped; used for both directions.
void transpose_copy(const double* src, double* dst, const std::vector<int>& in_shape, int ax1, int ax2) {
  const int nd = static_cast<int>(in_shape.size());
  std::vector<std::size_t> in_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  std::vector<int> out_shape = in_shape;
  std::swap(out_shape[ax1], out_shape[ax2]);
  std::vector<std::size_t> out_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

  std::size_t total = 1;
  for (int d : in_shape) total *= d;
#pragma omp parallel for schedule(static) if (total > 16384)
  for (long idx = 0; idx < static_cast<long>(total); ++idx) {
    std::size_t rem = static_cast<std::size_t>(idx);
    std::size_t out_idx = 0;
    for (int i = 0; i < nd; ++i) {
      const std::size_t coord = rem / in_strides[i];
      rem %= in_strides[i];
      const int oi = i == ax1 ? ax2 : (i == ax2 ? ax1 : i);
      out_idx += coord * out_strides[oi];
    }
    dst[out_idx] = src[idx];
  }
}

}  // namespace

TensorPtr transpose(Tape& tape, const TensorPtr& a, int axis1, int axis2) {
  const int nd = static_cast<int>(a->shape.size());
  if (axis1 < 0) axis1 += nd;
  if (axis2 < 0) axis2 += nd;
  if (axis1 < 0 || axis1 >= nd || axis2 < 0 || axis2 >= nd)
    throw std::runtime_error("transpose: axis out of range for shape " + shape_str(a->shape));
  std::vector<int> out_shape = a->shape;
  std::swap(out_shape[axis1], out_shape[axis2]);
  const bool rg = track(a);
  auto out = out_like(out_shape, rg);
  transpose_copy(a->data.data(), out->data.data(), a->shape, axis1, axis2);
  if (rg) {
    tape.record({"transpose", {a}, out, [a, out, out_shape, axis1, axis2]() {
                   std::vector<double> tmp(a->numel());
                   transpose_copy(out->grad.data(), tmp.data(), out_shape, axis1, axis2);
                   acc_add(a->grad.data(), tmp.data(), a->numel());
                 }});
  }
  return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a->numel())
    throw std::runtime_error("reshape: cannot view " + shape_str(a->shape) + " as " + shape_str(new_shape));
  const bool rg = track(a);
  auto out = make_tensor(std::move(new_shape), a->data, rg);
  if (rg) {
    tape.record({"reshape", {a}, out, [a, out]() { acc_add(a->grad.data(), out->grad.data(), a->numel()); }});
  }
  return out;
}

TensorPtr sum(Tape& tape, const TensorPtr& a) {
  const bool rg = track(a);
  auto out = make_scalar(kern::reduce_sum(a->data.data(), a->numel()), rg);
  if (rg) {
    tape.record({"sum", {a}, out, [a, out]() {
                   const double g = out->grad[0];
                   const std::size_t n = a->numel();
#pragma omp parallel for schedule(static) if (n > 16384)
                   for (long i = 0; i < static_cast<long>(n); ++i) a->grad[i] += g;
                 }});
  }
  return out;
}

TensorPtr mean(Tape& tape, const TensorPtr& a) {
  const double inv = 1.0 / static_cast<double>(a->numel());
  const bool rg = track(a);
  auto out = make_scalar(kern::reduce_sum(a->data.data(), a->numel()) * inv, rg);
  if (rg) {
    tape.record({"mean", {a}, out, [a, out, inv]() {
                   const double g = out->grad[0] * inv;
                   const std::size_t n = a->numel();
#pragma omp parallel for schedule(static) if (n > 16384)
                   for (long i = 0; i < static_cast<long>(n); ++i) a->grad[i] += g;
                 }});
  }
  return out;
}

TensorPtr l2_norm(Tape& tape, const TensorPtr& a) {
  const double norm = std::sqrt(kern::reduce_sumsq(a->data.data(), a->numel()));
  const bool rg = track(a);
  auto out = make_scalar(norm, rg);
  if (rg) {
    tape.record({"l2_norm", {a}, out, [a, out, norm]() {
                   if (norm <= 0.0) return;  // subgradient 0 at the origin
                   const double g = out->grad[0] / norm;
                   const std::size_t n = a->numel();
#pragma omp parallel for schedule(static) if (n > 16384)
                   for (long i = 0; i < static_cast<long>(n); ++i) a->grad[i] += g * a->data[i];
                 }});
  }
  return out;
}

TensorPtr normalize_rows(Tape& tape, const TensorPtr& a) {
  const int cols = last_dim(a);
  const int rows = static_cast<int>(a->numel() / cols);
  const bool rg = track(a);
  auto out = out_like(a->shape, rg);
  auto norms = std::make_shared<std::vector<double>>(rows);
  kern::normalize_rows(a->data.data(), out->data.data(), norms->data(), rows, cols);
  if (rg) {
    tape.record({"normalize_rows", {a}, out, [a, out, norms, rows, cols]() {
                   kern::normalize_rows_grad(out->data.data(), norms->data(), out->grad.data(), a->grad.data(),
                                             rows, cols);
                 }});
  }
  return out;
}

TensorPtr softmax_cross_entropy(Tape& tape, const TensorPtr& logits, const std::vector<int>& targets) {
  if (logits->shape.size() != 2)
    throw std::runtime_error("softmax_cross_entropy: logits must be 2-D, got " + shape_str(logits->shape));
  const int rows = logits->shape[0];
  const int cols = logits->shape[1];
  if (static_cast<int>(targets.size()) != rows)
    throw std::runtime_error("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(rows) + " rows");
  for (int t : targets)
    if (t < 0 || t >= cols)
      throw std::runtime_error("softmax_cross_entropy: target index " + std::to_string(t) + " out of range [0," +
                               std::to_string(cols) + ")");
  const bool rg = track(logits);
  auto probs = std::make_shared<std::vector<double>>(logits->numel());
  double loss = 0.0;
  kern::softmax_xent(logits->data.data(), targets.data(), rows, cols, probs->data(), &loss);
  auto out = make_scalar(loss, rg);
  if (rg) {
    auto tgt = std::make_shared<std::vector<int>>(targets);
    tape.record({"softmax_cross_entropy", {logits}, out, [logits, out, probs, tgt, rows, cols]() {
                   kern::softmax_xent_grad(probs->data(), tgt->data(), rows, cols, out->grad[0], logits->grad.data());
                 }});
  }
  return out;
}

double finite_difference_check(const std::function<TensorPtr(Tape&)>& f, const TensorPtr& x, double h,
                               std::size_t max_coords) {
  if (!(h > 0.0) || h > 1e-2) throw std::runtime_error("finite_difference_check: h must be in (0, 1e-2]");
  if (!x->requires_grad) throw std::runtime_error("finite_difference_check: x must require grad");

  x->ensure_grad();
  x->zero_grad();
  double base;
  {
    Tape tape;
    auto loss = f(tape);
    if (loss->numel() != 1) throw std::runtime_error("finite_difference_check: f must return a scalar");
    base = loss->data[0];
    if (!std::isfinite(base)) throw std::runtime_error("finite_difference_check: non-finite f evaluation");
    if (loss->requires_grad) tape.backward(loss);
  }
  std::vector<double> ad = x->grad;

  NoGradGuard ng;
  auto eval = [&]() {
    Tape tape;
    auto loss = f(tape);
    const double v = loss->data[0];
    if (!std::isfinite(v)) throw std::runtime_error("finite_difference_check: non-finite f evaluation");
    return v;
  };

  const std::size_t n = x->numel();
  std::vector<std::size_t> coords;
  if (max_coords > 0 && max_coords < n) {
    coords.reserve(max_coords);
    for (std::size_t j = 0; j < max_coords; ++j) coords.push_back(j * n / max_coords);
  } else {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  }

  double worst = 0.0;
  for (std::size_t i : coords) {
    const double orig = x->data[i];
    x->data[i] = orig + h;
    const double fp = eval();
    x->data[i] = orig - h;
    const double fm = eval();
    x->data[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::fabs(ad[i]), std::fabs(fd), 1e-6});
    worst = std::max(worst, std::fabs(ad[i] - fd) / denom);
  }
  return worst;
}

}  // namespace ggp::ad
