// Benchmark comparing the OpenMP kernels against the serial reference
// drivers. Prints per-kernel timings, GFLOP/s where meaningful, and the
// serial/parallel speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ggp/kernels.hpp"
#include "ggp/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const std::string& name, double flops, double t_serial, double t_parallel) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx", name.c_str(), t_serial * 1e3,
              t_parallel * 1e3, t_serial / t_parallel);
  if (flops > 0)
    std::printf("   %7.2f GF/s\n", flops / t_parallel * 1e-9);
  else
    std::printf("\n");
}

std::vector<double> random_vec(std::size_t n, uint64_t seed) {
  ggp::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_gaussian();
  return v;
}

}  // namespace

int main() {
  namespace kern = ggp::kern;
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled at build time; both columns run serially\n\n");
#endif

  {  // batched matmul at training-like and larger sizes
    struct Case {
      int batch, m, k, n;
      int reps;
    };
    for (const Case c : {Case{32, 17, 32, 32, 200}, Case{64, 25, 32, 128, 100}, Case{8, 256, 256, 256, 5}}) {
      const auto a = random_vec(static_cast<std::size_t>(c.batch) * c.m * c.k, 1);
      const auto b = random_vec(static_cast<std::size_t>(c.k) * c.n, 2);
      std::vector<double> out(static_cast<std::size_t>(c.batch) * c.m * c.n);
      const double flops = 2.0 * c.batch * c.m * c.k * c.n;
      const double ts = time_of([&]() { kern::serial::matmul(a.data(), b.data(), out.data(), c.batch, c.m, c.k, c.n, false); }, c.reps);
      const double tp = time_of([&]() { kern::matmul(a.data(), b.data(), out.data(), c.batch, c.m, c.k, c.n, false); }, c.reps);
      char name[64];
      std::snprintf(name, sizeof(name), "matmul %dx%dx%dx%d", c.batch, c.m, c.k, c.n);
      report(name, flops, ts, tp);
    }
  }

  {  // matmul backward (dB accumulate)
    const int batch = 32, m = 25, k = 32, n = 128;
    const auto a = random_vec(static_cast<std::size_t>(batch) * m * k, 3);
    const auto dc = random_vec(static_cast<std::size_t>(batch) * m * n, 4);
    std::vector<double> db(static_cast<std::size_t>(k) * n);
    const double flops = 2.0 * batch * m * k * n;
    const double ts = time_of([&]() { kern::serial::matmul_grad_b(a.data(), dc.data(), db.data(), batch, m, k, n, false); }, 100);
    const double tp = time_of([&]() { kern::matmul_grad_b(a.data(), dc.data(), db.data(), batch, m, k, n, false); }, 100);
    report("matmul_grad_b 32x25x32x128", flops, ts, tp);
  }

  {  // elementwise gelu
    const std::size_t n = 1 << 20;
    const auto x = random_vec(n, 5);
    std::vector<double> y(n);
    const double ts = time_of([&]() { kern::serial::gelu(x.data(), y.data(), n); }, 20);
    const double tp = time_of([&]() { kern::gelu(x.data(), y.data(), n); }, 20);
    report("gelu 1M", 0, ts, tp);
  }

  {  // softmax rows
    const int rows = 4096, cols = 64;
    const auto x = random_vec(static_cast<std::size_t>(rows) * cols, 6);
    std::vector<double> y(static_cast<std::size_t>(rows) * cols);
    const double ts = time_of([&]() { kern::serial::softmax_rows(x.data(), y.data(), rows, cols); }, 50);
    const double tp = time_of([&]() { kern::softmax_rows(x.data(), y.data(), rows, cols); }, 50);
    report("softmax 4096x64", 0, ts, tp);
  }

  {  // layer norm rows
    const int rows = 4096, cols = 64;
    const auto x = random_vec(static_cast<std::size_t>(rows) * cols, 7);
    const std::vector<double> gamma(cols, 1.0), beta(cols, 0.0);
    std::vector<double> y(static_cast<std::size_t>(rows) * cols), mean(rows), rstd(rows);
    const double ts = time_of(
        [&]() { kern::serial::layer_norm(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), rows, cols, 1e-6); }, 50);
    const double tp = time_of(
        [&]() { kern::layer_norm(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), rows, cols, 1e-6); }, 50);
    report("layer_norm 4096x64", 0, ts, tp);
  }

  {  // deterministic reductions
    const std::size_t n = 1 << 22;
    const auto x = random_vec(n, 8);
    volatile double sink = 0.0;
    const double ts = time_of([&]() { sink = kern::serial::reduce_sumsq(x.data(), n); }, 20);
    const double tp = time_of([&]() { sink = kern::reduce_sumsq(x.data(), n); }, 20);
    (void)sink;
    report("reduce_sumsq 4M", 2.0 * n, ts, tp);
  }

  {  // adamw update
    const std::size_t n = 1 << 20;
    auto p = random_vec(n, 9);
    const auto g = random_vec(n, 10);
    std::vector<double> m(n, 0.0), v(n, 0.0);
    const double ts = time_of([&]() { kern::serial::adamw_update(p.data(), g.data(), m.data(), v.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.02, 1); }, 20);
    const double tp = time_of([&]() { kern::adamw_update(p.data(), g.data(), m.data(), v.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.02, 1); }, 20);
    report("adamw_update 1M", 0, ts, tp);
  }

  return 0;
}
