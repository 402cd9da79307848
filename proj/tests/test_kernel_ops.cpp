#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "helpers.hpp"
#include "sckn/kernel_ops.hpp"

using namespace sckn;
using namespace sckn::test;

TEST_CASE("kappa values") {
  KernelSpec k(4.0);  // 1/(0.5^2)
  CHECK(kappa(k, 1.0) == 1.0);
  CHECK(kappa(KernelSpec(0.7), 1.0) == 1.0);
  CHECK(kappa(k, 0.5) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(kappa(k, 0.5) == doctest::Approx(0.135335).epsilon(1e-5));
  CHECK(kappa(k, -1.0) == doctest::Approx(3.3546e-4).epsilon(1e-4));
}

TEST_CASE("kappa is positive, increasing and bounded by 1 below t=1") {
  KernelSpec k(2.3);
  double prev = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double t = (i - 20) / 20.0;
    const double v = kappa(k, t);
    CHECK(v > 0.0);
    CHECK(v > prev);
    CHECK(v <= 1.0 + 1e-15);
    prev = v;
  }
}

TEST_CASE("kappa_prime equals alpha*kappa and matches finite differences") {
  KernelSpec k(4.0);
  CHECK(kappa_prime(k, 1.0) == doctest::Approx(4.0));
  const double h = 1e-6;
  for (double t : {-0.8, -0.1, 0.3, 0.99}) {
    const double fd = (kappa(k, t + h) - kappa(k, t - h)) / (2 * h);
    CHECK(rel_err(kappa_prime(k, t), fd) < 1e-6);
  }
}

TEST_CASE("alpha must be positive") {
  CHECK_THROWS_AS(KernelSpec(0.0), std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec(-1.0), std::invalid_argument);
}

TEST_CASE("inv_sqrt_psd on the identity and a diagonal matrix") {
  Matrix I2 = Matrix::Identity(2, 2);
  WhiteningSet w = inv_sqrt_psd(I2, 0.0);
  CHECK((w.A - I2).cwiseAbs().maxCoeff() < 1e-12);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  WhiteningSet wd = inv_sqrt_psd(d, 0.0);
  CHECK(wd.A(0, 0) == doctest::Approx(0.5));
  CHECK(wd.A(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(wd.A(0, 1)) < 1e-12);
}

TEST_CASE("inv_sqrt_psd residual and power relations") {
  Matrix B = random_matrix(6, 6, 5);
  Matrix M = B * B.transpose();
  const double eps = 0.001;
  WhiteningSet w = inv_sqrt_psd(M, eps);
  Matrix Meps = M;
  Meps.diagonal().array() += eps;
  Matrix resid = w.A * Meps * w.A - Matrix::Identity(6, 6);
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((w.A_half * w.A_half - w.A).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((w.A * w.A_half - w.A_threehalf).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("inv_sqrt_psd input validation") {
  Matrix bad = random_matrix(4, 4, 9);          // not symmetric
  CHECK_THROWS_AS(inv_sqrt_psd(bad, 0.0), std::invalid_argument);
  Matrix neg = -Matrix::Identity(3, 3);
  CHECK_THROWS_AS(inv_sqrt_psd(neg, 0.0), SingularMatrixError);
  CHECK_THROWS_AS(inv_sqrt_psd(Matrix::Zero(3, 3), 0.0), SingularMatrixError);
}

TEST_CASE("kappa of a unit-vector Gram matrix is positive semidefinite") {
  for (int trial = 0; trial < 5; ++trial) {
    Matrix Z = random_unit_columns(10, 24, 60 + trial);
    Matrix K = kappa(KernelSpec(4.0), Matrix(Z.transpose() * Z));
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (K + K.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}
