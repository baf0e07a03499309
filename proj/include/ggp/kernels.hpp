#pragma once

// Numeric kernels behind the autodiff ops and the optimizer.
//
// Every kernel exists twice: ggp::kern::* is OpenMP-parallel, and
// ggp::kern::serial::* is a single-threaded reference driver kept for testing
// and benchmarking (tools/bench_kernels compares the two). Both drivers call
// the same per-row / per-chunk worker, and scalar reductions use a fixed
// chunk size (kReduceChunk) with a serial combine over chunk partials, so
// results are bit-identical for any thread count, including one.

#include <cstddef>

namespace ggp::kern {

inline constexpr std::size_t kReduceChunk = 1024;

// C[b,m,:] = sum_k A[b,m,k] * B[(b,)k,:]. B is either shared across the batch
// (b_batched = false, shape [K,N]) or batched ([batch,K,N]).
void matmul(const double* a, const double* b, double* c, int batch, int m, int k, int n, bool b_batched);

// dA[b,m,k] += sum_n dC[b,m,n] * B[(b,)k,n]
void matmul_grad_a(const double* dc, const double* b, double* da, int batch, int m, int k, int n, bool b_batched);
// dB[(b,)k,n] += sum_(b,)m A[b,m,k] * dC[b,m,n]
void matmul_grad_b(const double* a, const double* dc, double* db, int batch, int m, int k, int n, bool b_batched);

// Elementwise; rhs is tiled when nb < na (nb must divide na).
void add(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void subtract(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void multiply(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void scale(const double* a, double s, double* out, std::size_t n);
// out[j] += sum over tiles of src[j + t*nb]  (gradient of a tiled rhs)
void tile_reduce_add(const double* src, double* out, std::size_t na, std::size_t nb);

void gelu(const double* x, double* out, std::size_t n);
void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n);
void relu(const double* x, double* out, std::size_t n);
void relu_grad(const double* x, const double* dy, double* dx, std::size_t n);

void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_grad(const double* y, const double* dy, double* dx, int rows, int cols);

// Row-wise layer norm with affine parameters; mean/rstd are cached per row
// for the backward pass.
void layer_norm(const double* x, const double* gamma, const double* beta, double* y,
                double* mean, double* rstd, int rows, int cols, double eps);
void layer_norm_grad_x(const double* x, const double* gamma, const double* dy,
                       const double* mean, const double* rstd, double* dx, int rows, int cols);
void layer_norm_grad_affine(const double* x, const double* dy, const double* mean,
                            const double* rstd, double* dgamma, double* dbeta, int rows, int cols);

// out[i,:] = table[ids[i],:]
void gather_rows(const double* table, const int* ids, double* out, int n_ids, int width);
// dTable[ids[i],:] += dOut[i,:]; serial in both drivers because ids may repeat.
void scatter_rows_add(const double* dout, const int* ids, double* dtable, int n_ids, int width);

// Row-wise L2 normalization; norms cached for backward.
void normalize_rows(const double* x, double* y, double* norms, int rows, int cols);
void normalize_rows_grad(const double* y, const double* norms, const double* dy, double* dx, int rows, int cols);

// Deterministic chunked reductions (fixed kReduceChunk, serial combine).
double reduce_sum(const double* x, std::size_t n);
double reduce_sumsq(const double* x, std::size_t n);
double reduce_dot(const double* a, const double* b, std::size_t n);

// Fused softmax cross entropy over rows; loss_out = mean over rows of
// -log softmax(x)[target]; probs cached for the backward pass.
void softmax_xent(const double* logits, const int* targets, int rows, int cols,
                  double* probs, double* loss_out);
void softmax_xent_grad(const double* probs, const int* targets, int rows, int cols,
                       double g, double* dlogits);

// AdamW update, one parameter tensor. Update rule (frozen; the scalar oracle
// in tests replays exactly this expression order):
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g*g
//   p -= lr * ( (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps) + wd*p )
void adamw_update(double* p, const double* g, double* m, double* v, std::size_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay, long t);

// copy = momentum*copy + (1-momentum)*live
void ema_update(double* copy, const double* live, std::size_t n, double momentum);

// theta_out[i] = snap[i] + clip(r[i], -eps*|snap[i]|, +eps*|snap[i]|);
// returns the number of elements where the clip bound was active.
std::size_t clip_apply(const double* snap, const double* r, double eps, double* theta_out, std::size_t n);

namespace serial {

void matmul(const double* a, const double* b, double* c, int batch, int m, int k, int n, bool b_batched);
void matmul_grad_a(const double* dc, const double* b, double* da, int batch, int m, int k, int n, bool b_batched);
void matmul_grad_b(const double* a, const double* dc, double* db, int batch, int m, int k, int n, bool b_batched);
void add(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void subtract(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void multiply(const double* a, const double* b, double* out, std::size_t na, std::size_t nb);
void scale(const double* a, double s, double* out, std::size_t n);
void tile_reduce_add(const double* src, double* out, std::size_t na, std::size_t nb);
void gelu(const double* x, double* out, std::size_t n);
void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n);
void relu(const double* x, double* out, std::size_t n);
void relu_grad(const double* x, const double* dy, double* dx, std::size_t n);
void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_grad(const double* y, const double* dy, double* dx, int rows, int cols);
void layer_norm(const double* x, const double* gamma, const double* beta, double* y,
                double* mean, double* rstd, int rows, int cols, double eps);
void layer_norm_grad_x(const double* x, const double* gamma, const double* dy,
                       const double* mean, const double* rstd, double* dx, int rows, int cols);
void layer_norm_grad_affine(const double* x, const double* dy, const double* mean,
                            const double* rstd, double* dgamma, double* dbeta, int rows, int cols);
void gather_rows(const double* table, const int* ids, double* out, int n_ids, int width);
void scatter_rows_add(const double* dout, const int* ids, double* dtable, int n_ids, int width);
void normalize_rows(const double* x, double* y, double* norms, int rows, int cols);
void normalize_rows_grad(const double* y, const double* norms, const double* dy, double* dx, int rows, int cols);
double reduce_sum(const double* x, std::size_t n);
double reduce_sumsq(const double* x, std::size_t n);
double reduce_dot(const double* a, const double* b, std::size_t n);
void softmax_xent(const double* logits, const int* targets, int rows, int cols,
                  double* probs, double* loss_out);
void softmax_xent_grad(const double* probs, const int* targets, int rows, int cols,
                       double g, double* dlogits);
void adamw_update(double* p, const double* g, double* m, double* v, std::size_t n,
                  double lr, double beta1, double beta2, double eps, double weight_decay, long t);
void ema_update(double* copy, const double* live, std::size_t n, double momentum);
std::size_t clip_apply(const double* snap, const double* r, double eps, double* theta_out, std::size_t n);

}  // namespace serial

}  // namespace ggp::kern
