#include "ggp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ggp::kern {

// Workers are noinline so the serial and OpenMP drivers execute the exact
// same compiled body; any difference between the two namespaces would then
// be a partitioning bug, which tests/test_kernels.cpp asserts against
// bitwise.
#if defined(__GNUC__) || defined(__clang__)
#define GGP_NOINLINE __attribute__((noinline))
#else
#define GGP_NOINLINE
#endif

namespace detail {

// One output row of C: c_row[:] += sum_k a_row[k] * b[k,:]. Accumulation over
// k is ascending for every output element regardless of threading.
GGP_NOINLINE void matmul_row(const double* a_row, const double* b, double* c_row, int k, int n) {
  for (int j = 0; j < n; ++j) c_row[j] = 0.0;
  for (int kk = 0; kk < k; ++kk) {
    const double av = a_row[kk];
    const double* b_row = b + static_cast<std::size_t>(kk) * n;
    for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

// dA row via B^T so the inner loop is contiguous: da_row[k] += sum_n dc_row[n] * bt[n,k].
GGP_NOINLINE void matmul_grad_a_row(const double* dc_row, const double* bt, double* da_row, int k, int n) {
  for (int nn = 0; nn < n; ++nn) {
    const double dv = dc_row[nn];
    const double* bt_row = bt + static_cast<std::size_t>(nn) * k;
    for (int kk = 0; kk < k; ++kk) da_row[kk] += dv * bt_row[kk];
  }
}

// dB row kk (shared B): db_row[:] += sum_{b,m} A[b,m,kk] * dC[b,m,:].
GGP_NOINLINE void matmul_grad_b_row(const double* a, const double* dc, double* db_row,
                                    int rows, int k, int n, int kk) {
  for (int r = 0; r < rows; ++r) {
    const double av = a[static_cast<std::size_t>(r) * k + kk];
    const double* dc_row = dc + static_cast<std::size_t>(r) * n;
    for (int j = 0; j < n; ++j) db_row[j] += av * dc_row[j];
  }
}

GGP_NOINLINE void add_range(const double* a, const double* b, double* out, std::size_t lo, std::size_t hi, std::size_t nb) {
  if (nb == 0)
    for (std::size_t i = lo; i < hi; ++i) out[i] = a[i];
  else
    for (std::size_t i = lo; i < hi; ++i) out[i] = a[i] + b[i % nb];
}

GGP_NOINLINE void subtract_range(const double* a, const double* b, double* out, std::size_t lo, std::size_t hi, std::size_t nb) {
  for (std::size_t i = lo; i < hi; ++i) out[i] = a[i] - b[i % nb];
}

GGP_NOINLINE void multiply_range(const double* a, const double* b, double* out, std::size_t lo, std::size_t hi, std::size_t nb) {
  for (std::size_t i = lo; i < hi; ++i) out[i] = a[i] * b[i % nb];
}

GGP_NOINLINE void scale_range(const double* a, double s, double* out, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) out[i] = a[i] * s;
}

// tanh-approximation gelu; the same constants define the function the
// finite-difference checks differentiate.
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

GGP_NOINLINE void gelu_range(const double* x, double* out, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) {
    const double xi = x[i];
    const double u = kGeluC * (xi + kGeluA * xi * xi * xi);
    out[i] = 0.5 * xi * (1.0 + std::tanh(u));
  }
}

GGP_NOINLINE void gelu_grad_range(const double* x, const double* dy, double* dx, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) {
    const double xi = x[i];
    const double u = kGeluC * (xi + kGeluA * xi * xi * xi);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
    dx[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
  }
}

GGP_NOINLINE void relu_range(const double* x, double* out, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

GGP_NOINLINE void relu_grad_range(const double* x, const double* dy, double* dx, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

GGP_NOINLINE void softmax_row(const double* x, double* y, int cols) {
  double mx = x[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) y[j] *= inv;
}

GGP_NOINLINE void softmax_grad_row(const double* y, const double* dy, double* dx, int cols) {
  double dot = 0.0;
  for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
  for (int j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
}

GGP_NOINLINE void layer_norm_row(const double* x, const double* gamma, const double* beta,
                                 double* y, double* mean, double* rstd, int cols, double eps) {
  double mu = 0.0;
  for (int j = 0; j < cols; ++j) mu += x[j];
  mu /= cols;
  double var = 0.0;
  for (int j = 0; j < cols; ++j) {
    const double d = x[j] - mu;
    var += d * d;
  }
  var /= cols;
  const double rs = 1.0 / std::sqrt(var + eps);
  *mean = mu;
  *rstd = rs;
  for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gamma[j] + beta[j];
}

GGP_NOINLINE void layer_norm_grad_x_row(const double* x, const double* gamma, const double* dy,
                                        double mean, double rstd, double* dx, int cols) {
  double m1 = 0.0, m2 = 0.0;
  for (int j = 0; j < cols; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double dxhat = dy[j] * gamma[j];
    m1 += dxhat;
    m2 += dxhat * xhat;
  }
  m1 /= cols;
  m2 /= cols;
  for (int j = 0; j < cols; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double dxhat = dy[j] * gamma[j];
    dx[j] += rstd * (dxhat - m1 - xhat * m2);
  }
}

// Per-column reduction over rows keeps dgamma/dbeta deterministic under
// row-level parallelism elsewhere.
GGP_NOINLINE void layer_norm_grad_affine_col(const double* x, const double* dy, const double* mean,
                                             const double* rstd, double* dgamma, double* dbeta,
                                             int rows, int cols, int j) {
  double dg = 0.0, db = 0.0;
  for (int r = 0; r < rows; ++r) {
    const std::size_t idx = static_cast<std::size_t>(r) * cols + j;
    const double xhat = (x[idx] - mean[r]) * rstd[r];
    dg += dy[idx] * xhat;
    db += dy[idx];
  }
  dgamma[j] += dg;
  dbeta[j] += db;
}

GGP_NOINLINE void normalize_row(const double* x, double* y, double* norm, int cols) {
  double ss = 0.0;
  for (int j = 0; j < cols; ++j) ss += x[j] * x[j];
  const double nrm = std::sqrt(ss);
  *norm = nrm;
  const double inv = nrm > 0.0 ? 1.0 / nrm : 0.0;
  for (int j = 0; j < cols; ++j) y[j] = x[j] * inv;
}

GGP_NOINLINE void normalize_grad_row(const double* y, double norm, const double* dy, double* dx, int cols) {
  if (norm <= 0.0) return;
  double dot = 0.0;
  for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
  const double inv = 1.0 / norm;
  for (int j = 0; j < cols; ++j) dx[j] += (dy[j] - dot * y[j]) * inv;
}

GGP_NOINLINE double sum_chunk(const double* x, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i];
  return s;
}

GGP_NOINLINE double sumsq_chunk(const double* x, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i] * x[i];
  return s;
}

GGP_NOINLINE double dot_chunk(const double* a, const double* b, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
  return s;
}

GGP_NOINLINE void xent_row(const double* logits, int target, int cols, double* probs, double* loss) {
  double mx = logits[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    probs[j] = std::exp(logits[j] - mx);
    sum += probs[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) probs[j] *= inv;
  *loss = -(logits[target] - mx - std::log(sum));
}

GGP_NOINLINE void xent_grad_row(const double* probs, int target, int cols, double g, double* dlogits) {
  for (int j = 0; j < cols; ++j) dlogits[j] += g * (probs[j] - (j == target ? 1.0 : 0.0));
}

GGP_NOINLINE void adamw_range(double* p, const double* g, double* m, double* v, std::size_t lo, std::size_t hi,
                              double lr, double b1, double b2, double eps, double wd, double bc1, double bc2) {
  for (std::size_t i = lo; i < hi; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

GGP_NOINLINE void ema_range(double* copy, const double* live, std::size_t lo, std::size_t hi, double mom) {
  for (std::size_t i = lo; i < hi; ++i) copy[i] = mom * copy[i] + (1.0 - mom) * live[i];
}

GGP_NOINLINE std::size_t clip_apply_range(const double* snap, const double* r, double eps,
                                          double* out, std::size_t lo, std::size_t hi) {
  std::size_t clipped = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double bound = eps * std::fabs(snap[i]);
    double ri = r[i];
    if (ri > bound) {
      ri = bound;
      ++clipped;
    } else if (ri < -bound) {
      ri = -bound;
      ++clipped;
    }
    double v = snap[i] + ri;
    // The addition can round outward by up to half an ulp; nudge back so the
    // recomputed |theta' - theta| never exceeds the bound.
    while (std::fabs(v - snap[i]) > bound) v = std::nextafter(v, snap[i]);
    out[i] = v;
  }
  return clipped;
}

inline std::size_t n_chunks(std::size_t n) { return (n + kReduceChunk - 1) / kReduceChunk; }

}  // namespace detail

// ---------------------------------------------------------------------------
// OpenMP drivers
// ---------------------------------------------------------------------------

namespace {
// Parallel regions are only worth opening above this many flops-ish units.
constexpr std::size_t kParGrain = 16384;
}  // namespace

void matmul(const double* a, const double* b, double* c, int batch, int m, int k, int n, bool b_batched) {
  const long rows = static_cast<long>(batch) * m;
  const bool par = static_cast<std::size_t>(rows) * k * n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
  for (long r = 0; r < rows; ++r) {
    const long bi = r / m;
    const double* b_mat = b_batched ? b + static_cast<std::size_t>(bi) * k * n : b;
    detail::matmul_row(a + static_cast<std::size_t>(r) * k, b_mat, c + static_cast<std::size_t>(r) * n, k, n);
  }
}

void matmul_grad_a(const double* dc, const double* b, double* da, int batch, int m, int k, int n, bool b_batched) {
  // Transpose B once so the row worker reads contiguously.
  const int mats = b_batched ? batch : 1;
  std::vector<double> bt(static_cast<std::size_t>(mats) * n * k);
  for (int bi = 0; bi < mats; ++bi) {
    const double* src = b + static_cast<std::size_t>(bi) * k * n;
    double* dst = bt.data() + static_cast<std::size_t>(bi) * n * k;
    for (int kk = 0; kk < k; ++kk)
      for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * k + kk] = src[static_cast<std::size_t>(kk) * n + j];
  }
  const long rows = static_cast<long>(batch) * m;
  const bool par = static_cast<std::size_t>(rows) * k * n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
  for (long r = 0; r < rows; ++r) {
    const long bi = r / m;
    const double* bt_mat = b_batched ? bt.data() + static_cast<std::size_t>(bi) * n * k : bt.data();
    detail::matmul_grad_a_row(dc + static_cast<std::size_t>(r) * n, bt_mat, da + static_cast<std::size_t>(r) * k, k, n);
  }
}

void matmul_grad_b(const double* a, const double* dc, double* db, int batch, int m, int k, int n, bool b_batched) {
  if (b_batched) {
    const long rows = static_cast<long>(batch) * k;
    const bool par = static_cast<std::size_t>(rows) * m * n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
    for (long r = 0; r < rows; ++r) {
      const long bi = r / k;
      const int kk = static_cast<int>(r % k);
      detail::matmul_grad_b_row(a + static_cast<std::size_t>(bi) * m * k, dc + static_cast<std::size_t>(bi) * m * n,
                                db + static_cast<std::size_t>(r) * n, m, k, n, kk);
    }
  } else {
    const bool par = static_cast<std::size_t>(k) * batch * m * n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
    for (int kk = 0; kk < k; ++kk)
      detail::matmul_grad_b_row(a, dc, db + static_cast<std::size_t>(kk) * n, batch * m, k, n, kk);
  }
}

namespace {

template <typename Worker>
void run_chunks(std::size_t n, std::size_t grain, Worker&& w) {
  const std::size_t chunk = kReduceChunk;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  if (n <= grain || chunks <= 1) {
    w(0, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < static_cast<long>(chunks); ++ci) {
    const std::size_t lo = static_cast<std::size_t>(ci) * chunk;
    w(lo, std::min(lo + chunk, n));
  }
}

}  // namespace

void add(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  run_chunks(na, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::add_range(a, b, out, lo, hi, nb); });
}

void subtract(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  run_chunks(na, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::subtract_range(a, b, out, lo, hi, nb); });
}

void multiply(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  run_chunks(na, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::multiply_range(a, b, out, lo, hi, nb); });
}

void scale(const double* a, double s, double* out, std::size_t n) {
  run_chunks(n, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::scale_range(a, s, out, lo, hi); });
}

void tile_reduce_add(const double* src, double* out, std::size_t na, std::size_t nb) {
  const std::size_t tiles = na / nb;
  const bool par = na > kParGrain && nb > 1;
#pragma omp parallel for schedule(static) if (par)
  for (long j = 0; j < static_cast<long>(nb); ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < tiles; ++t) s += src[t * nb + j];
    out[j] += s;
  }
}

void gelu(const double* x, double* out, std::size_t n) {
  run_chunks(n, 2048, [&](std::size_t lo, std::size_t hi) { detail::gelu_range(x, out, lo, hi); });
}

void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n) {
  run_chunks(n, 2048, [&](std::size_t lo, std::size_t hi) { detail::gelu_grad_range(x, dy, dx, lo, hi); });
}

void relu(const double* x, double* out, std::size_t n) {
  run_chunks(n, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::relu_range(x, out, lo, hi); });
}

void relu_grad(const double* x, const double* dy, double* dx, std::size_t n) {
  run_chunks(n, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::relu_grad_range(x, dy, dx, lo, hi); });
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::softmax_row(x + static_cast<std::size_t>(r) * cols, y + static_cast<std::size_t>(r) * cols, cols);
}

void softmax_rows_grad(const double* y, const double* dy, double* dx, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::softmax_grad_row(y + static_cast<std::size_t>(r) * cols, dy + static_cast<std::size_t>(r) * cols,
                             dx + static_cast<std::size_t>(r) * cols, cols);
}

void layer_norm(const double* x, const double* gamma, const double* beta, double* y,
                double* mean, double* rstd, int rows, int cols, double eps) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::layer_norm_row(x + static_cast<std::size_t>(r) * cols, gamma, beta,
                           y + static_cast<std::size_t>(r) * cols, mean + r, rstd + r, cols, eps);
}

void layer_norm_grad_x(const double* x, const double* gamma, const double* dy,
                       const double* mean, const double* rstd, double* dx, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::layer_norm_grad_x_row(x + static_cast<std::size_t>(r) * cols, gamma,
                                  dy + static_cast<std::size_t>(r) * cols, mean[r], rstd[r],
                                  dx + static_cast<std::size_t>(r) * cols, cols);
}

void layer_norm_grad_affine(const double* x, const double* dy, const double* mean,
                            const double* rstd, double* dgamma, double* dbeta, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int j = 0; j < cols; ++j)
    detail::layer_norm_grad_affine_col(x, dy, mean, rstd, dgamma, dbeta, rows, cols, j);
}

void gather_rows(const double* table, const int* ids, double* out, int n_ids, int width) {
  const bool par = static_cast<std::size_t>(n_ids) * width > kParGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < n_ids; ++i)
    std::memcpy(out + static_cast<std::size_t>(i) * width,
                table + static_cast<std::size_t>(ids[i]) * width, sizeof(double) * width);
}

void scatter_rows_add(const double* dout, const int* ids, double* dtable, int n_ids, int width) {
  // Serial: ids may repeat, and a fixed accumulation order keeps backward
  // bit-deterministic.
  for (int i = 0; i < n_ids; ++i) {
    const double* src = dout + static_cast<std::size_t>(i) * width;
    double* dst = dtable + static_cast<std::size_t>(ids[i]) * width;
    for (int j = 0; j < width; ++j) dst[j] += src[j];
  }
}

void normalize_rows(const double* x, double* y, double* norms, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::normalize_row(x + static_cast<std::size_t>(r) * cols, y + static_cast<std::size_t>(r) * cols, norms + r, cols);
}

void normalize_rows_grad(const double* y, const double* norms, const double* dy, double* dx, int rows, int cols) {
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::normalize_grad_row(y + static_cast<std::size_t>(r) * cols, norms[r],
                               dy + static_cast<std::size_t>(r) * cols, dx + static_cast<std::size_t>(r) * cols, cols);
}

namespace {

template <typename ChunkFn>
double chunked_reduce(std::size_t n, ChunkFn&& fn) {
  const std::size_t chunks = detail::n_chunks(n);
  if (chunks <= 1) return fn(0, n);
  std::vector<double> partials(chunks);
  const bool par = n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
  for (long ci = 0; ci < static_cast<long>(chunks); ++ci) {
    const std::size_t lo = static_cast<std::size_t>(ci) * kReduceChunk;
    partials[ci] = fn(lo, std::min(lo + kReduceChunk, n));
  }
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

}  // namespace

double reduce_sum(const double* x, std::size_t n) {
  return chunked_reduce(n, [&](std::size_t lo, std::size_t hi) { return detail::sum_chunk(x, lo, hi); });
}

double reduce_sumsq(const double* x, std::size_t n) {
  return chunked_reduce(n, [&](std::size_t lo, std::size_t hi) { return detail::sumsq_chunk(x, lo, hi); });
}

double reduce_dot(const double* a, const double* b, std::size_t n) {
  return chunked_reduce(n, [&](std::size_t lo, std::size_t hi) { return detail::dot_chunk(a, b, lo, hi); });
}

void softmax_xent(const double* logits, const int* targets, int rows, int cols, double* probs, double* loss_out) {
  std::vector<double> losses(rows);
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::xent_row(logits + static_cast<std::size_t>(r) * cols, targets[r], cols,
                     probs + static_cast<std::size_t>(r) * cols, &losses[r]);
  double total = 0.0;
  for (int r = 0; r < rows; ++r) total += losses[r];
  *loss_out = total / rows;
}

void softmax_xent_grad(const double* probs, const int* targets, int rows, int cols, double g, double* dlogits) {
  const double gr = g / rows;
  const bool par = static_cast<std::size_t>(rows) * cols > 4096;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r)
    detail::xent_grad_row(probs + static_cast<std::size_t>(r) * cols, targets[r], cols, gr,
                          dlogits + static_cast<std::size_t>(r) * cols);
}

void adamw_update(double* p, const double* g, double* m, double* v, std::size_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay, long t) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  run_chunks(n, kParGrain, [&](std::size_t lo, std::size_t hi) {
    detail::adamw_range(p, g, m, v, lo, hi, lr, beta1, beta2, eps, weight_decay, bc1, bc2);
  });
}

void ema_update(double* copy, const double* live, std::size_t n, double momentum) {
  run_chunks(n, kParGrain, [&](std::size_t lo, std::size_t hi) { detail::ema_range(copy, live, lo, hi, momentum); });
}

std::size_t clip_apply(const double* snap, const double* r, double eps, double* theta_out, std::size_t n) {
  const std::size_t chunks = detail::n_chunks(n);
  if (chunks <= 1) return detail::clip_apply_range(snap, r, eps, theta_out, 0, n);
  std::vector<std::size_t> partial(chunks);
  const bool par = n > kParGrain;
#pragma omp parallel for schedule(static) if (par)
  for (long ci = 0; ci < static_cast<long>(chunks); ++ci) {
    const std::size_t lo = static_cast<std::size_t>(ci) * kReduceChunk;
    partial[ci] = detail::clip_apply_range(snap, r, eps, theta_out, lo, std::min(lo + kReduceChunk, n));
  }
  std::size_t total = 0;
  for (std::size_t c : partial) total += c;
  return total;
}

// ---------------------------------------------------------------------------
// Serial reference drivers
// ---------------------------------------------------------------------------

namespace serial {

void matmul(const double* a, const double* b, double* c, int batch, int m, int k, int n, bool b_batched) {
  const long rows = static_cast<long>(batch) * m;
  for (long r = 0; r < rows; ++r) {
    const long bi = r / m;
    const double* b_mat = b_batched ? b + static_cast<std::size_t>(bi) * k * n : b;
    detail::matmul_row(a + static_cast<std::size_t>(r) * k, b_mat, c + static_cast<std::size_t>(r) * n, k, n);
  }
}

void matmul_grad_a(const double* dc, const double* b, double* da, int batch, int m, int k, int n, bool b_batched) {
  const int mats = b_batched ? batch : 1;
  std::vector<double> bt(static_cast<std::size_t>(mats) * n * k);
  for (int bi = 0; bi < mats; ++bi) {
    const double* src = b + static_cast<std::size_t>(bi) * k * n;
    double* dst = bt.data() + static_cast<std::size_t>(bi) * n * k;
    for (int kk = 0; kk < k; ++kk)
      for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * k + kk] = src[static_cast<std::size_t>(kk) * n + j];
  }
  const long rows = static_cast<long>(batch) * m;
  for (long r = 0; r < rows; ++r) {
    const long bi = r / m;
    const double* bt_mat = b_batched ? bt.data() + static_cast<std::size_t>(bi) * n * k : bt.data();
    detail::matmul_grad_a_row(dc + static_cast<std::size_t>(r) * n, bt_mat, da + static_cast<std::size_t>(r) * k, k, n);
  }
}

void matmul_grad_b(const double* a, const double* dc, double* db, int batch, int m, int k, int n, bool b_batched) {
  if (b_batched) {
    for (int bi = 0; bi < batch; ++bi)
      for (int kk = 0; kk < k; ++kk)
        detail::matmul_grad_b_row(a + static_cast<std::size_t>(bi) * m * k, dc + static_cast<std::size_t>(bi) * m * n,
                                  db + (static_cast<std::size_t>(bi) * k + kk) * n, m, k, n, kk);
  } else {
    for (int kk = 0; kk < k; ++kk)
      detail::matmul_grad_b_row(a, dc, db + static_cast<std::size_t>(kk) * n, batch * m, k, n, kk);
  }
}

void add(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  detail::add_range(a, b, out, 0, na, nb);
}
void subtract(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  detail::subtract_range(a, b, out, 0, na, nb);
}
void multiply(const double* a, const double* b, double* out, std::size_t na, std::size_t nb) {
  detail::multiply_range(a, b, out, 0, na, nb);
}
void scale(const double* a, double s, double* out, std::size_t n) { detail::scale_range(a, s, out, 0, n); }

void tile_reduce_add(const double* src, double* out, std::size_t na, std::size_t nb) {
  const std::size_t tiles = na / nb;
  for (std::size_t j = 0; j < nb; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < tiles; ++t) s += src[t * nb + j];
    out[j] += s;
  }
}

void gelu(const double* x, double* out, std::size_t n) { detail::gelu_range(x, out, 0, n); }
void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n) { detail::gelu_grad_range(x, dy, dx, 0, n); }
void relu(const double* x, double* out, std::size_t n) { detail::relu_range(x, out, 0, n); }
void relu_grad(const double* x, const double* dy, double* dx, std::size_t n) { detail::relu_grad_range(x, dy, dx, 0, n); }

void softmax_rows(const double* x, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    detail::softmax_row(x + static_cast<std::size_t>(r) * cols, y + static_cast<std::size_t>(r) * cols, cols);
}

void softmax_rows_grad(const double* y, const double* dy, double* dx, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    detail::softmax_grad_row(y + static_cast<std::size_t>(r) * cols, dy + static_cast<std::size_t>(r) * cols,
                             dx + static_cast<std::size_t>(r) * cols, cols);
}

void layer_norm(const double* x, const double* gamma, const double* beta, double* y,
                double* mean, double* rstd, int rows, int cols, double eps) {
  for (int r = 0; r < rows; ++r)
    detail::layer_norm_row(x + static_cast<std::size_t>(r) * cols, gamma, beta,
                           y + static_cast<std::size_t>(r) * cols, mean + r, rstd + r, cols, eps);
}

void layer_norm_grad_x(const double* x, const double* gamma, const double* dy,
                       const double* mean, const double* rstd, double* dx, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    detail::layer_norm_grad_x_row(x + static_cast<std::size_t>(r) * cols, gamma,
                                  dy + static_cast<std::size_t>(r) * cols, mean[r], rstd[r],
                                  dx + static_cast<std::size_t>(r) * cols, cols);
}

void layer_norm_grad_affine(const double* x, const double* dy, const double* mean,
                            const double* rstd, double* dgamma, double* dbeta, int rows, int cols) {
  for (int j = 0; j < cols; ++j)
    detail::layer_norm_grad_affine_col(x, dy, mean, rstd, dgamma, dbeta, rows, cols, j);
}

void gather_rows(const double* table, const int* ids, double* out, int n_ids, int width) {
  for (int i = 0; i < n_ids; ++i)
    std::memcpy(out + static_cast<std::size_t>(i) * width,
                table + static_cast<std::size_t>(ids[i]) * width, sizeof(double) * width);
}

void scatter_rows_add(const double* dout, const int* ids, double* dtable, int n_ids, int width) {
  kern::scatter_rows_add(dout, ids, dtable, n_ids, width);
}

void normalize_rows(const double* x, double* y, double* norms, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    detail::normalize_row(x + static_cast<std::size_t>(r) * cols, y + static_cast<std::size_t>(r) * cols, norms + r, cols);
}

void normalize_rows_grad(const double* y, const double* norms, const double* dy, double* dx, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    detail::normalize_grad_row(y + static_cast<std::size_t>(r) * cols, norms[r],
                               dy + static_cast<std::size_t>(r) * cols, dx + static_cast<std::size_t>(r) * cols, cols);
}

double reduce_sum(const double* x, std::size_t n) {
  const std::size_t chunks = detail::n_chunks(n);
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t lo = ci * kReduceChunk;
    total += detail::sum_chunk(x, lo, std::min(lo + kReduceChunk, n));
  }
  return total;
}

double reduce_sumsq(const double* x, std::size_t n) {
  const std::size_t chunks = detail::n_chunks(n);
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t lo = ci * kReduceChunk;
    total += detail::sumsq_chunk(x, lo, std::min(lo + kReduceChunk, n));
  }
  return total;
}

double reduce_dot(const double* a, const double* b, std::size_t n) {
  const std::size_t chunks = detail::n_chunks(n);
  double total = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t lo = ci * kReduceChunk;
    total += detail::dot_chunk(a, b, lo, std::min(lo + kReduceChunk, n));
  }
  return total;
}

void softmax_xent(const double* logits, const int* targets, int rows, int cols, double* probs, double* loss_out) {
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    double loss;
    detail::xent_row(logits + static_cast<std::size_t>(r) * cols, targets[r], cols,
                     probs + static_cast<std::size_t>(r) * cols, &loss);
    total += loss;
  }
  *loss_out = total / rows;
}

void softmax_xent_grad(const double* probs, const int* targets, int rows, int cols, double g, double* dlogits) {
  const double gr = g / rows;
  for (int r = 0; r < rows; ++r)
    detail::xent_grad_row(probs + static_cast<std::size_t>(r) * cols, targets[r], cols, gr,
                          dlogits + static_cast<std::size_t>(r) * cols);
}

void adamw_update(double* p, const double* g, double* m, double* v, std::size_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay, long t) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  detail::adamw_range(p, g, m, v, 0, n, lr, beta1, beta2, eps, weight_decay, bc1, bc2);
}

void ema_update(double* copy, const double* live, std::size_t n, double momentum) {
  detail::ema_range(copy, live, 0, n, momentum);
}

std::size_t clip_apply(const double* snap, const double* r, double eps, double* theta_out, std::size_t n) {
  const std::size_t chunks = detail::n_chunks(n);
  std::size_t total = 0;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    const std::size_t lo = ci * kReduceChunk;
    total += detail::clip_apply_range(snap, r, eps, theta_out, lo, std::min(lo + kReduceChunk, n));
  }
  return total;
}

}  // namespace serial

}  // namespace ggp::kern
