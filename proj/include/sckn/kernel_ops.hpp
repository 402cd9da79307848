#pragma once

#include <Eigen/Core>

#include "sckn/core_maps.hpp"

namespace sckn {

// Only the RBF kernel is implemented; the enumeration leaves room for other
// dot-product kernels on the sphere without an interface change.
enum class KernelKind { RbfSphere };

// kappa(t) = exp(alpha*(t-1)).
struct KernelSpec {
  double alpha;
  KernelKind kind = KernelKind::RbfSphere;

  explicit KernelSpec(double alpha_) : alpha(alpha_) {
    if (!(alpha > 0.0)) throw std::invalid_argument("kernel alpha must be positive");
  }
};

inline double kappa(const KernelSpec& k, double t) { return std::exp(k.alpha * (t - 1.0)); }
inline double kappa_prime(const KernelSpec& k, double t) { return k.alpha * kappa(k, t); }

inline Matrix kappa(const KernelSpec& k, const Matrix& t) {
  return (k.alpha * (t.array() - 1.0)).exp();
}
inline Matrix kappa_prime(const KernelSpec& k, const Matrix& t) {
  return k.alpha * kappa(k, t);
}

// Inverse square root of a symmetric PSD matrix plus related powers, all from
// one eigendecomposition of M + eps*I. Eigenvalues are clamped at 1e-12 before
// taking fractional powers; the decomposition itself (eigvals/eigvecs) is kept
// because the backward pass needs it.
struct WhiteningSet {
  Matrix A;            // (M + eps I)^{-1/2}
  Matrix A_half;       // ^{-1/4}
  Matrix A_threehalf;  // ^{-3/4}
  Matrix eigvecs;      // V with M + eps I = V diag(eigvals) V^T
  Vector eigvals;      // clamped
  double epsilon = 0.0;
};

WhiteningSet inv_sqrt_psd(const Matrix& M, double epsilon);

}  // namespace sckn
