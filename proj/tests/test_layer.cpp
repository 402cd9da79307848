#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "helpers.hpp"
#include "sckn/layer.hpp"

using namespace sckn;
using namespace sckn::test;

namespace {

LayerParams make_layer(int in_ch, int e, int p, double alpha, double eps, uint64_t seed,
                       std::optional<PoolSpec> pool = std::nullopt) {
  return LayerParams(random_unit_columns(in_ch * e * e, p, seed), KernelSpec(alpha), e, pool,
                     eps);
}

}  // namespace

TEST_CASE("encode_patch maps zero to zero and is 1-homogeneous") {
  LayerParams layer = make_layer(3, 3, 8, 4.0, 1e-3, 1);
  CHECK(encode_patch(layer, Vector::Zero(27)).norm() == 0.0);

  Vector x = random_vector(27, 2);
  Vector lhs = encode_patch(layer, Vector(2.5 * x));
  Vector rhs = 2.5 * encode_patch(layer, x);
  CHECK((lhs - rhs).norm() < 1e-12 * rhs.norm());

  CHECK_THROWS_AS(encode_patch(layer, Vector::Zero(5)), std::invalid_argument);
}

TEST_CASE("encode_patch with a single filter has the scalar closed form") {
  Matrix z = random_unit_columns(9, 1, 3);
  LayerParams layer(z, KernelSpec(4.0), 3, std::nullopt, 0.0);
  Vector x = random_unit_columns(9, 1, 4).col(0);
  Vector psi = encode_patch(layer, x);
  CHECK(psi.size() == 1);
  CHECK(psi[0] == doctest::Approx(std::exp(4.0 * (z.col(0).dot(x) - 1.0))).epsilon(1e-10));
}

TEST_CASE("projection identities hold at the filters and for the Nystrom closed form") {
  const int dim = 27, p = 16;
  Matrix Z = random_unit_columns(dim, p, 7);
  LayerParams layer(Z, KernelSpec(4.0), 3, std::nullopt, 0.0);
  KernelSpec k(4.0);

  // <psi(z_i), psi(z_j)> = kappa(z_i^T z_j)
  Matrix psis(p, p);
  for (int j = 0; j < p; ++j) psis.col(j) = encode_patch(layer, Vector(Z.col(j)));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      CHECK(rel_err(psis.col(i).dot(psis.col(j)), kappa(k, Z.col(i).dot(Z.col(j)))) < 1e-10);

  // <psi(x), psi(x')> = kappa(Z^T x)^T kappa(Z^T Z)^{-1} kappa(Z^T x')
  Matrix Kzz = kappa(k, Matrix(Z.transpose() * Z));
  Eigen::LDLT<Matrix> solver(Kzz);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x = random_unit_columns(dim, 1, 100 + trial).col(0);
    Vector xp = random_unit_columns(dim, 1, 200 + trial).col(0);
    Vector kx = kappa(k, Matrix(Z.transpose() * x)).col(0);
    Vector kxp = kappa(k, Matrix(Z.transpose() * xp)).col(0);
    const double closed = kx.dot(solver.solve(kxp));
    const double direct = encode_patch(layer, x).dot(encode_patch(layer, xp));
    CHECK(rel_err(direct, closed) < 1e-8);
  }

  // projections of unit-norm RKHS points stay inside the unit ball
  for (int trial = 0; trial < 1000; ++trial) {
    Vector x = random_unit_columns(dim, 1, 5000 + trial).col(0);
    CHECK(encode_patch(layer, x).norm() <= 1.0 + 1e-10);
  }
}

TEST_CASE("layer_forward produces the expected grids") {
  PoolSpec pool = PoolSpec::from_subsampling(std::sqrt(2.0));
  LayerParams layer = make_layer(3, 3, 64, 4.0, 1e-3, 11, pool);
  SpatialMap img = random_map(3, 32, 32, 12);
  LayerCache cache;
  SpatialMap out = layer_forward(layer, img, &cache);
  CHECK(cache.pre_pool.rows() == 64);
  CHECK(cache.pre_pool.cols() == 32 * 32);
  CHECK(out.channels == 64);
  CHECK(out.height == 23);
  CHECK(out.width == 23);

  SpatialMap wrong = random_map(2, 32, 32, 13);
  CHECK_THROWS_AS(layer_forward(layer, wrong), std::invalid_argument);
}

TEST_CASE("layer_forward on the zero map stays tiny") {
  PoolSpec pool = PoolSpec::from_subsampling(std::sqrt(2.0));
  LayerParams layer = make_layer(1, 3, 4, 4.0, 1e-3, 21, pool);
  SpatialMap zero(1, 8, 8);
  SpatialMap out = layer_forward(layer, zero);
  CHECK(out.data.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("layer_forward without pooling matches encode_patch up to the norm offset") {
  LayerParams layer = make_layer(1, 3, 1, 3.0, 1e-3, 31);
  SpatialMap img = random_map(1, 6, 6, 32);
  img.data = img.data.cwiseAbs();
  img.data.array() += 1.0;  // keeps every patch norm >= 1
  LayerCache cache;
  SpatialMap out = layer_forward(layer, img, &cache);
  PatchMatrix patches = extract_patches(img, 3);
  for (int px = 0; px < patches.columns(); ++px) {
    Vector psi = encode_patch(layer, Vector(patches.data.col(px)));
    CHECK(rel_err(out.data(0, px), psi[0]) < 1e-3);
  }
}

TEST_CASE("network_forward chains shapes, is deterministic, and handles k=0") {
  NetworkParams empty;
  empty.input_channels = 2;
  SpatialMap img = random_map(2, 5, 5, 41);
  SpatialMap same = network_forward(empty, img);
  CHECK((same.data - img.data).cwiseAbs().maxCoeff() == 0.0);

  NetworkParams net;
  net.input_channels = 1;
  net.layers.push_back(make_layer(1, 3, 4, 4.0, 1e-3, 42, PoolSpec::from_subsampling(1.0)));
  net.layers.push_back(make_layer(4, 3, 6, 4.0, 1e-3, 43, PoolSpec::from_subsampling(3.0)));
  net.validate();
  SpatialMap in = random_map(1, 9, 9, 44);
  std::vector<LayerCache> caches;
  SpatialMap out = network_forward(net, in, &caches);
  CHECK(out.channels == 6);
  CHECK(out.height == 3);
  CHECK(out.width == 3);
  CHECK(caches.size() == 2);

  SpatialMap out2 = network_forward(net, in);
  CHECK((out.data - out2.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("network_kernel is a positive definite kernel on images") {
  NetworkParams net;
  net.input_channels = 1;
  net.layers.push_back(make_layer(1, 3, 5, 4.0, 1e-3, 51, PoolSpec::from_subsampling(2.0)));
  std::vector<SpatialMap> imgs;
  for (int i = 0; i < 10; ++i) imgs.push_back(random_map(1, 7, 7, 600 + i));

  const double self = network_kernel(net, imgs[0], imgs[0]);
  SpatialMap f = network_forward(net, imgs[0]);
  CHECK(self == doctest::Approx(f.data.squaredNorm()));
  CHECK(self >= 0.0);
  CHECK(network_kernel(net, imgs[1], imgs[2]) == network_kernel(net, imgs[2], imgs[1]));

  Matrix gram(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) gram(i, j) = network_kernel(net, imgs[i], imgs[j]);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
  CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
}

TEST_CASE("spherical_kmeans fixed points and invariants") {
  // every column equal to u, one centroid
  Vector u = random_unit_columns(6, 1, 61).col(0);
  Matrix same(6, 5);
  for (int i = 0; i < 5; ++i) same.col(i) = u;
  Matrix Z1 = spherical_kmeans(same, 1, 10, 0);
  CHECK((Z1.col(0) - u).norm() < 1e-12);

  // two orthogonal clusters
  Matrix two(4, 8);
  for (int i = 0; i < 4; ++i) {
    two.col(i) = Vector::Unit(4, 0);
    two.col(4 + i) = Vector::Unit(4, 1);
  }
  Matrix Z2 = spherical_kmeans(two, 2, 20, 7);
  const double d00 = std::min((Z2.col(0) - Vector::Unit(4, 0)).norm(),
                              (Z2.col(0) - Vector::Unit(4, 1)).norm());
  const double d11 = std::min((Z2.col(1) - Vector::Unit(4, 0)).norm(),
                              (Z2.col(1) - Vector::Unit(4, 1)).norm());
  CHECK(d00 < 1e-12);
  CHECK(d11 < 1e-12);
  CHECK(std::abs(Z2.col(0).dot(Z2.col(1))) < 1e-12);  // found both clusters

  // monotone objective on random data, deterministic under a fixed seed
  Matrix data = random_unit_columns(8, 200, 62);
  std::vector<double> trace;
  Matrix Za = spherical_kmeans(data, 6, 10, 99, 0.0, &trace);
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-12);
  Matrix Zb = spherical_kmeans(data, 6, 10, 99, 0.0);
  CHECK((Za - Zb).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(spherical_kmeans(data, 201, 5, 0), std::invalid_argument);
  Matrix with_zero = data;
  with_zero.col(3).setZero();
  CHECK_THROWS_AS(spherical_kmeans(with_zero, 2, 5, 0), std::invalid_argument);
}

TEST_CASE("spherical_kmeans keeps singleton clusters on separated data") {
  Matrix basis = Matrix::Identity(6, 6).leftCols(4);
  Matrix Z = spherical_kmeans(basis, 4, 25, 3);
  // each input vector appears exactly once among the centroids
  for (int i = 0; i < 4; ++i) {
    int hits = 0;
    for (int j = 0; j < 4; ++j)
      if ((Z.col(j) - basis.col(i)).norm() < 1e-12) ++hits;
    CHECK(hits == 1);
  }
}

TEST_CASE("unsupervised_init builds unit filters and rejects degenerate input") {
  std::vector<SpatialMap> imgs;
  for (int i = 0; i < 4; ++i) imgs.push_back(random_map(1, 10, 10, 700 + i));
  std::vector<LayerConfig> cfg(2);
  cfg[0] = {4, 3, 1.0, 4.0, 1e-3, false};
  cfg[1] = {6, 3, 2.0, 4.0, 1e-3, false};
  NetworkParams net = unsupervised_init(cfg, 1, imgs, 500, 5);
  CHECK(net.layers.size() == 2);
  for (const LayerParams& l : net.layers)
    for (int j = 0; j < l.filters_out(); ++j)
      CHECK(std::abs(l.filters.col(j).norm() - 1.0) < 1e-9);

  // a constant image whitens to zero, so every sampled patch is degenerate
  std::vector<SpatialMap> flat{SpatialMap(1, 10, 10)};
  CHECK_THROWS_AS(unsupervised_init({cfg[0]}, 1, flat, 100, 5), DataError);
}
