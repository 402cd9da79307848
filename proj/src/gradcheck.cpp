#include "sckn/gradcheck.hpp"

#include <cmath>
#include <random>

namespace sckn {

namespace {

Matrix seeded_unit_columns(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = g(rng);
    m.col(c).normalize();
  }
  return m;
}

double loss_at(NetworkParams& net, const SpatialMap& input, const Matrix& W, double y,
               const LossSpec& loss) {
  SpatialMap out = network_forward(net, input);
  Eigen::Map<const Vector> feat(out.data.data(), out.data.size());
  return loss_value_grad(loss, y, (W * feat)(0)).first;
}

double rel(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradcheckReport run_gradcheck(uint64_t seed, double step) {
  NetworkParams net;
  net.input_channels = 1;
  net.layers.push_back(LayerParams(seeded_unit_columns(9, 4, seed + 1), KernelSpec(4.0), 3,
                                   PoolSpec::from_subsampling(1.0), 1e-3));
  net.layers.push_back(LayerParams(seeded_unit_columns(36, 8, seed + 2), KernelSpec(3.0), 3,
                                   PoolSpec::from_subsampling(std::sqrt(2.0)), 1e-3));
  net.validate();

  std::mt19937_64 rng(seed + 3);
  std::normal_distribution<double> g(0.0, 1.0);
  SpatialMap input(1, 6, 6);
  for (int i = 0; i < 36; ++i) input.data(0, i) = g(rng);

  std::vector<LayerCache> caches;
  SpatialMap out = network_forward(net, input, &caches);
  Matrix W(1, out.data.size());
  for (Eigen::Index i = 0; i < W.size(); ++i) W(0, i) = 0.05 * g(rng);
  Eigen::Map<const Vector> feat(out.data.data(), out.data.size());
  Vector yhat = W * feat;
  Vector y(1);
  y[0] = 1.0;

  GradcheckReport report;
  report.step = step;
  for (LossKind kind : {LossKind::SquaredHinge, LossKind::Square}) {
    LossSpec loss{kind};
    GradientSet grads = network_backward(net, caches, W, y, yhat, loss, /*want_alpha=*/true);

    for (size_t j = 0; j < net.layers.size(); ++j) {
      const Matrix Z0 = net.layers[j].filters;
      for (int r = 0; r < Z0.rows(); ++r) {
        for (int c = 0; c < Z0.cols(); ++c) {
          Matrix Zp = Z0;
          Zp(r, c) += step;
          net.layers[j].set_filters_raw(Zp);
          const double up = loss_at(net, input, W, y[0], loss);
          Zp(r, c) -= 2 * step;
          net.layers[j].set_filters_raw(Zp);
          const double dn = loss_at(net, input, W, y[0], loss);
          report.max_rel_z =
              std::max(report.max_rel_z, rel(grads.dZ[j](r, c), (up - dn) / (2 * step)));
        }
      }
      net.layers[j].set_filters_raw(Z0);

      const double a0 = net.layers[j].kernel.alpha;
      net.layers[j].set_alpha(a0 + step);
      const double up = loss_at(net, input, W, y[0], loss);
      net.layers[j].set_alpha(a0 - step);
      const double dn = loss_at(net, input, W, y[0], loss);
      net.layers[j].set_alpha(a0);
      report.max_rel_alpha =
          std::max(report.max_rel_alpha, rel(grads.dAlpha[j], (up - dn) / (2 * step)));
    }
  }
  return report;
}

}  // namespace sckn
