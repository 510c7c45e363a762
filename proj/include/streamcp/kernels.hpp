#pragma once

#include <cstddef>
#include <span>

// Data-parallel primitives behind the embedding and k-NN hot loops.
//
// Every primitive has a scalar reference implementation plus optional SIMD
// variants (AVX2 on x86-64, NEON on aarch64). The best variant supported by
// the running CPU is selected once at startup; variants only differ from the
// scalar reference by floating-point reassociation and must pass the
// equivalence tests in tests/test_kernels.cpp.

namespace streamcp::kernels {

struct KernelTable {
  const char* name;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);

  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // out[r] = bias[r] + sum_c weights[r*cols + c] * x[c], weights row-major
  void (*affine)(const double* weights, const double* bias, const double* x,
                 double* out, std::size_t rows, std::size_t cols);
};

// The scalar reference. Always available.
const KernelTable& scalar();

// SIMD variants; null when the build or the running CPU lacks them.
const KernelTable* avx2();
const KernelTable* neon();

// Best table for this machine, chosen once. The environment variable
// STREAMCP_KERNELS=scalar|avx2|neon forces a specific table (falls back to
// the default selection if the requested one is unavailable).
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void affine(std::span<const double> weights, std::span<const double> bias,
                   std::span<const double> x, std::span<double> out) {
  active().affine(weights.data(), bias.data(), x.data(), out.data(),
                  out.size(), x.size());
}

}  // namespace streamcp::kernels
