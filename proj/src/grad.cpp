#include "sckn/grad.hpp"

#include <cmath>

namespace sckn {

std::pair<double, double> loss_value_grad(const LossSpec& loss, double y, double yhat) {
  switch (loss.kind) {
    case LossKind::SquaredHinge: {
      const double m = 1.0 - y * yhat;
      if (m <= 0.0) return {0.0, 0.0};
      return {m * m, -2.0 * y * m};
    }
    case LossKind::Square: {
      const double r = y - yhat;
      return {r * r, -2.0 * r};
    }
    case LossKind::Logistic: {
      const double t = y * yhat;
      // log(1 + e^{-t}) evaluated stably on both tails.
      const double v = t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
      return {v, -y / (1.0 + std::exp(t))};
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

namespace {

// Exact directional structure of d(X^{-1/2}) at X = kappa(Z^T Z) + eps I,
// expressed in the eigenbasis: the dual of U |-> <dA[dK] R, U> with
// R = A^{-1} I_j is V (Xi) V^T where Xi_ab = -Y0_ab / (sqrt(l_b)(sqrt(l_a)+sqrt(l_b)))
// and Y0 = V^T I_j U^T V. Reduces to -1/2 A^{3/2} (.) A^{3/2} sandwiches when
// all eigenvalues coincide.
Matrix whitening_grad_dual(const WhiteningSet& w, const Matrix& Ij, const Matrix& U) {
  const Matrix& V = w.eigvecs;
  const Vector sq = w.eigvals.cwiseSqrt();
  Matrix Y0 = (V.transpose() * Ij) * (U.transpose() * V);
  for (Eigen::Index a = 0; a < Y0.rows(); ++a)
    for (Eigen::Index b = 0; b < Y0.cols(); ++b)
      Y0(a, b) = -Y0(a, b) / (sq[b] * (sq[a] + sq[b]));
  return V * Y0 * V.transpose();
}

}  // namespace

Matrix layer_backward(const LayerParams& layer, const LayerCache& cache, const Matrix& U,
                      Matrix* dZ, double* dAlpha) {
  const int p = layer.filters_out();
  if (U.rows() != p ||
      U.cols() != static_cast<Eigen::Index>(cache.out_height) * cache.out_width)
    throw std::invalid_argument("layer_backward: cotangent shape mismatch");
  if (cache.patches.patch_dim != layer.patch_dim())
    throw std::invalid_argument("layer_backward: cache does not match layer");

  const double alpha = layer.kernel.alpha;
  const Matrix& E = cache.patches.data;
  const Matrix& M = cache.pre_pool;

  // U P^T: upsample the cotangent back to the pre-pooling grid.
  Matrix UP;
  if (layer.pool) {
    PoolOperator op(*layer.pool, cache.in_height, cache.in_width);
    UP = op.apply_adjoint(U);
  } else {
    UP = U;
  }

  Matrix AUP = layer.whitening.A * UP;
  Matrix B = (alpha * cache.kmat.array() * AUP.array()).matrix();

  if (dZ) {
    Matrix X = whitening_grad_dual(layer.whitening, cache.output, U);
    Matrix sym = X + X.transpose();
    *dZ = E * B.transpose() +
          layer.filters * (alpha * layer.kappa_gram.array() * sym.array()).matrix();
  }

  if (dAlpha) {
    // kappa path: d kappa/d alpha = (t - 1) kappa(t), contracted against
    // A U P^T S.
    double acc = ((cache.arg.array() - 1.0) * cache.kmat.array() *
                  (AUP.array().rowwise() * cache.norms.transpose().array()))
                     .sum();
    // whitening path through kappa_alpha(Z^T Z).
    const Matrix& V = layer.whitening.eigvecs;
    const Vector sq = layer.whitening.eigvals.cwiseSqrt();
    Matrix dK = ((layer.gram.array() - 1.0) * layer.kappa_gram.array()).matrix();
    Matrix dKt = V.transpose() * dK * V;
    Matrix Y = (V.transpose() * cache.output) * (U.transpose() * V);
    for (Eigen::Index a = 0; a < Y.rows(); ++a)
      for (Eigen::Index b = 0; b < Y.cols(); ++b)
        acc -= dKt(a, b) * Y(a, b) / (sq[b] * (sq[a] + sq[b]));
    *dAlpha = acc;
  }

  // h_j(U) = E*( Z B + E diag(t) ), with only the diagonal of
  // M^T U P^T - E^T Z B formed. The offset norm makes the diagonal scale
  // 1/(S_ii * n_i) rather than S^{-2}; columns with zero raw norm get no
  // gradient through the norm.
  Matrix ZB = layer.filters * B;
  Vector t(E.cols());
  for (Eigen::Index i = 0; i < E.cols(); ++i) {
    const double n = cache.raw_norms[i];
    if (n <= 0.0) {
      t[i] = 0.0;
    } else {
      const double mu = M.col(i).dot(UP.col(i));
      const double ez = E.col(i).dot(ZB.col(i));
      t[i] = (mu - ez) / (cache.norms[i] * n);
    }
  }
  PatchMatrix back;
  back.patch_dim = cache.patches.patch_dim;
  back.patch_size = cache.patches.patch_size;
  back.channels = cache.patches.channels;
  back.height = cache.patches.height;
  back.width = cache.patches.width;
  back.data = ZB + (E.array().rowwise() * t.transpose().array()).matrix();
  return combine_patches(back).data;
}

GradientSet network_backward_cotangent(const NetworkParams& net,
                                       const std::vector<LayerCache>& caches, Matrix U_top,
                                       bool want_alpha) {
  if (caches.size() != net.layers.size())
    throw std::invalid_argument("network_backward: cache count mismatch");
  GradientSet g;
  g.dZ.resize(net.layers.size());
  if (want_alpha) g.dAlpha.assign(net.layers.size(), 0.0);

  Matrix U = std::move(U_top);
  for (size_t j = net.layers.size(); j-- > 0;) {
    double da = 0.0;
    U = layer_backward(net.layers[j], caches[j], U, &g.dZ[j], want_alpha ? &da : nullptr);
    if (want_alpha) g.dAlpha[j] = da;
  }
  return g;
}

GradientSet network_backward(const NetworkParams& net, const std::vector<LayerCache>& caches,
                             const Matrix& W, const Vector& y, const Vector& yhat,
                             const LossSpec& loss, bool want_alpha) {
  if (net.layers.empty()) throw std::invalid_argument("network_backward: empty network");
  const LayerCache& top = caches.back();
  const int p = net.layers.back().filters_out();
  const Eigen::Index npix = static_cast<Eigen::Index>(top.out_height) * top.out_width;
  if (W.cols() != p * npix) throw std::invalid_argument("network_backward: W width mismatch");
  if (W.rows() != y.size() || y.size() != yhat.size())
    throw std::invalid_argument("network_backward: output count mismatch");

  Matrix U = Matrix::Zero(p, npix);
  Vector lprime(W.rows());
  for (Eigen::Index c = 0; c < W.rows(); ++c) {
    lprime[c] = loss_value_grad(loss, y[c], yhat[c]).second;
    if (lprime[c] != 0.0) {
      Vector wrow = W.row(c).transpose();
      U += lprime[c] * Eigen::Map<const Matrix>(wrow.data(), p, npix);
    }
  }

  GradientSet g = network_backward_cotangent(net, caches, std::move(U), want_alpha);
  g.dW.resize(W.rows(), W.cols());
  Eigen::Map<const Vector> feat(top.output.data(), top.output.size());
  for (Eigen::Index c = 0; c < W.rows(); ++c) g.dW.row(c) = lprime[c] * feat.transpose();
  return g;
}

std::vector<double> alpha_gradient(const NetworkParams& net,
                                   const std::vector<LayerCache>& caches, const Matrix& W,
                                   const Vector& y, const Vector& yhat, const LossSpec& loss) {
  return network_backward(net, caches, W, y, yhat, loss, /*want_alpha=*/true).dAlpha;
}

}  // namespace sckn
