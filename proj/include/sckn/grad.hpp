#pragma once

#include <utility>
#include <vector>

#include "sckn/layer.hpp"

namespace sckn {

enum class LossKind { SquaredHinge, Square, Logistic };

struct LossSpec {
  LossKind kind = LossKind::SquaredHinge;
};

// Returns (L(y, yhat), dL/dyhat).
std::pair<double, double> loss_value_grad(const LossSpec& loss, double y, double yhat);

struct GradientSet {
  std::vector<Matrix> dZ;        // one per layer, shaped like the filters
  std::vector<double> dAlpha;    // one per layer, empty unless requested
  Matrix dW;                     // outputs x (p_k * |Omega_k|)
};

// One layer of the backward recursion. `U` is the cotangent of the layer
// output I_j (filters_out x out pixels). Writes g_j(U) into *dZ, optionally
// the exact alpha derivative into *dAlpha, and returns h_j(U), the cotangent
// of the layer input.
Matrix layer_backward(const LayerParams& layer, const LayerCache& cache, const Matrix& U,
                      Matrix* dZ, double* dAlpha = nullptr);

// Backward through the whole stack from an arbitrary cotangent of the final
// map (loss derivative already folded in). dW is left empty.
GradientSet network_backward_cotangent(const NetworkParams& net,
                                       const std::vector<LayerCache>& caches, Matrix U_top,
                                       bool want_alpha = false);

// Per-sample gradients of L(y_c, <W_c, I_k>) summed over outputs c. `W` has
// one row per output; y/yhat have one entry per output. Outputs share the
// filters, so their cotangents add before the backward sweep.
GradientSet network_backward(const NetworkParams& net, const std::vector<LayerCache>& caches,
                             const Matrix& W, const Vector& y, const Vector& yhat,
                             const LossSpec& loss, bool want_alpha = false);

std::vector<double> alpha_gradient(const NetworkParams& net,
                                   const std::vector<LayerCache>& caches, const Matrix& W,
                                   const Vector& y, const Vector& yhat, const LossSpec& loss);

}  // namespace sckn
