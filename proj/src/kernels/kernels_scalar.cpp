#include <cmath>

#include "spantag/kernels.hpp"

namespace spantag::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) acc[l] += x[i + l] * y[i + l];
  }
  double sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void adam_scalar(double* p, double* m, double* v, const double* g, std::size_t n,
                 const AdamStep& s) {
  const double c1 = 1.0 - s.beta1;
  const double c2 = 1.0 - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + c1 * g[i];
    v[i] = s.beta2 * v[i] + c2 * (g[i] * g[i]);
    const double mhat = m[i] / s.bias1;
    const double vhat = v[i] / s.bias2;
    p[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, add_scalar, adam_scalar};
  return table;
}

}  // namespace spantag::kernels
