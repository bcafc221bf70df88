#pragma once

// Dense inner loops of the tagger. Every kernel has a portable scalar
// reference and optional SIMD variants chosen at runtime. Variants follow
// the reference's operation order exactly (four interleaved partial sums
// in `dot`, separate multiply and add everywhere), so all of them produce
// bit-identical results and training stays reproducible whichever one runs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace spantag::kernels {

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct KernelTable {
  const char* name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y[i] += x[i]
  void (*add)(const double* x, double* y, std::size_t n);
  // one Adam update of params p with moments m, v and gradient g
  void (*adam)(double* p, double* m, double* v, const double* g, std::size_t n,
               const AdamStep& step);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();

// Best available table; SPANTAG_SIMD=scalar|avx2 overrides on first use.
const KernelTable& active();
// Forces a variant by name; returns false if it is unavailable.
bool select(std::string_view name);
std::vector<std::string_view> available();

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline void add(std::span<const double> x, std::span<double> y) {
  active().add(x.data(), y.data(), x.size());
}

}  // namespace spantag::kernels
