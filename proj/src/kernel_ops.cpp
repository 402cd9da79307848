#include "sckn/kernel_ops.hpp"

#include <Eigen/Eigenvalues>

namespace sckn {

WhiteningSet inv_sqrt_psd(const Matrix& M, double epsilon) {
  if (M.rows() != M.cols()) throw std::invalid_argument("inv_sqrt_psd: matrix not square");
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8) throw std::invalid_argument("inv_sqrt_psd: matrix not symmetric");

  Matrix sym = 0.5 * (M + M.transpose());
  sym.diagonal().array() += epsilon;

  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw SingularMatrixError("inv_sqrt_psd: eigendecomposition failed");
  Vector lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0)
    throw SingularMatrixError("inv_sqrt_psd: matrix + eps*I is not positive definite");
  lam = lam.cwiseMax(1e-12);

  WhiteningSet out;
  out.eigvecs = es.eigenvectors();
  out.eigvals = lam;
  out.epsilon = epsilon;
  const Vector half = lam.array().pow(-0.5);
  const Vector quarter = lam.array().pow(-0.25);
  const Vector threequarter = lam.array().pow(-0.75);
  out.A = out.eigvecs * half.asDiagonal() * out.eigvecs.transpose();
  out.A_half = out.eigvecs * quarter.asDiagonal() * out.eigvecs.transpose();
  out.A_threehalf = out.eigvecs * threequarter.asDiagonal() * out.eigvecs.transpose();
  return out;
}

}  // namespace sckn
