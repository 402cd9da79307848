#include "sckn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdlib>
#include <cstdio>
#include <random>

#include <Eigen/Eigenvalues>

#include "sckn/parallel.hpp"

namespace sckn {

Preconditioner compute_preconditioner(const Matrix& patches, double ridge) {
  const Eigen::Index d = patches.rows();
  const Eigen::Index m = patches.cols();
  if (m < d + 1) throw DataError("compute_preconditioner: need at least d+1 patches");

  Vector mean = patches.rowwise().mean();
  Matrix cov = (patches * patches.transpose()) / static_cast<double>(m);
  cov.noalias() -= mean * mean.transpose();
  cov = 0.5 * (cov + cov.transpose());
  const double scale = cov.trace() / static_cast<double>(d);
  cov.diagonal().array() += ridge * scale;

  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw SingularMatrixError("compute_preconditioner: eigendecomposition failed");
  const Vector lam = es.eigenvalues();
  if (lam.minCoeff() <= 1e-12 * std::max(1.0, lam.maxCoeff()))
    throw SingularMatrixError("compute_preconditioner: covariance is singular");
  Preconditioner p;
  p.Q = es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return p;
}

Vector sphere_step(const Vector& z, const Vector& grad, const Matrix& Q, double eta) {
  Vector qg = Q * grad;
  Vector qz = Q * z;
  const double zqz = z.dot(qz);
  if (!(zqz > 0.0)) throw std::invalid_argument("sphere_step: z^T Q z must be positive");
  Vector v = qg - qz * (z.dot(qg) / zqz);
  Vector w = z - eta * v;
  const double n = w.norm();
  if (n == 0.0) throw StepDegenerateError("sphere_step: zero vector before projection");
  return w / n;
}

namespace {

double loss_curvature(const LossSpec& loss) {
  // Upper bound on L'' in the second argument.
  return loss.kind == LossKind::Logistic ? 0.25 : 2.0;
}

// Mean loss over all (sample, output) pairs plus the ridge term.
double full_objective(const Matrix& X, const Matrix& Y, const Matrix& W, double lambda,
                      const LossSpec& loss) {
  const Eigen::Index n = X.cols();
  Matrix scores = W * X;  // C x n
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < Y.rows(); ++c)
      acc += loss_value_grad(loss, Y(c, i), scores(c, i)).first;
  return acc / static_cast<double>(n) + 0.5 * lambda * W.squaredNorm();
}

Matrix full_gradient(const Matrix& X, const Matrix& Y, const Matrix& W, double lambda,
                     const LossSpec& loss) {
  const Eigen::Index n = X.cols();
  Matrix scores = W * X;
  Matrix lp(Y.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < Y.rows(); ++c)
      lp(c, i) = loss_value_grad(loss, Y(c, i), scores(c, i)).second;
  return (lp * X.transpose()) / static_cast<double>(n) + lambda * W;
}

bool stationary(const Matrix& grad, const Matrix& W, double tol) {
  return grad.norm() <= tol * std::max(1.0, W.norm());
}

// Exact maximizer of the per-sample dual surrogate
//   g(d) = -phi*(-(a+d)) - s*d - (q/2) d^2
// for the logistic loss, where the dual variable is parameterized as
// t = y(a+d) in (0,1) and g'(t) = log((1-t)/t) - y*s - q*(t - y*a) is
// strictly decreasing. Bisection is plenty.
double logistic_dual_step(double y, double s, double a, double q) {
  double lo = 1e-12, hi = 1.0 - 1e-12;
  auto gp = [&](double t) { return std::log((1.0 - t) / t) - y * s - q * (t - y * a); };
  if (gp(lo) <= 0.0) return y * lo - a;
  if (gp(hi) >= 0.0) return y * hi - a;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gp(mid) > 0.0 ? lo : hi) = mid;
  }
  return y * 0.5 * (lo + hi) - a;
}

// Incremental dual coordinate ascent with exact per-sample surrogate
// minimization. One scalar dual variable per (sample, output);
// W = (1/(lambda n)) A X^T is maintained by rank-one updates.
LinearModel solve_incremental(const Matrix& X, const Matrix& Y, const LossSpec& loss,
                              double lambda, double tol, int max_epochs, uint64_t seed,
                              Matrix* warm_dual) {
  const Eigen::Index n = X.cols();
  const Eigen::Index C = Y.rows();
  const double ln = lambda * static_cast<double>(n);
  Vector q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = X.col(i).squaredNorm() / ln;

  Matrix A = Matrix::Zero(C, n);
  Matrix W = Matrix::Zero(C, X.rows());
  if (warm_dual && warm_dual->rows() == C && warm_dual->cols() == n) {
    A = *warm_dual;
    W.noalias() = A * X.transpose() / ln;
  }

  auto finish = [&](const Matrix& Wfinal) {
    if (warm_dual) {
      // park the duals at their KKT values so the next call resumes cleanly
      Matrix scores = Wfinal * X;
      warm_dual->resize(C, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < C; ++c)
          (*warm_dual)(c, i) = -loss_value_grad(loss, Y(c, i), scores(c, i)).second;
    }
    return LinearModel{Wfinal, lambda};
  };

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  // The coordinate phase closes most of the gap in a few passes; badly
  // conditioned tails are better spent on the accelerated full-batch phase.
  const int coord_epochs = std::max(1, std::min(300, max_epochs / 2));
  for (int epoch = 0; epoch < coord_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      Vector score = W * X.col(i);
      for (Eigen::Index c = 0; c < C; ++c) {
        const double y = Y(c, i);
        const double a = A(c, i);
        const double s = score[c];
        double step = 0.0;
        switch (loss.kind) {
          case LossKind::Square:
            step = (y - s - 0.5 * a) / (0.5 + q[i]);
            break;
          case LossKind::SquaredHinge:
            step = (y - s - 0.5 * a) / (0.5 + q[i]);
            if (y * (a + step) < 0.0) step = -a;  // dual sign constraint
            break;
          case LossKind::Logistic:
            step = logistic_dual_step(y, s, a, q[i]);
            break;
        }
        if (step != 0.0) {
          W.row(c).noalias() += (step / ln) * X.col(i).transpose();
          A(c, i) += step;
        }
      }
    }
    Matrix g = full_gradient(X, Y, W, lambda, loss);
    if (stationary(g, W, tol)) return finish(W);
  }

  // Badly conditioned tail (tiny lambda): finish with accelerated full-batch
  // steps from the warm start. sigma_max(X X^T)/n via power iteration.
  double smax = 0.0;
  {
    Vector v = Vector::Ones(X.rows()).normalized();
    for (int it = 0; it < 30; ++it) {
      Vector next = X * (X.transpose() * v);
      smax = next.norm();
      if (smax == 0.0) break;
      v = next / smax;
    }
  }
  const double L = loss_curvature(loss) * smax / static_cast<double>(n) + lambda;
  const double kappa = L / lambda;
  const double beta = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
  Matrix Wprev = W;
  Matrix Ymom = W;
  double fprev = full_objective(X, Y, W, lambda, loss);
  for (int it = coord_epochs; it < max_epochs; ++it) {
    Matrix g = full_gradient(X, Y, Ymom, lambda, loss);
    Matrix Wnext = Ymom - g / L;
    const double fnext = full_objective(X, Y, Wnext, lambda, loss);
    if (fnext > fprev) {
      Ymom = Wnext;  // momentum overshoot: restart
    } else {
      Ymom = Wnext + beta * (Wnext - Wprev);
    }
    fprev = fnext;
    Wprev = Wnext;
    W = Wnext;
    Matrix gw = full_gradient(X, Y, W, lambda, loss);
    if (stationary(gw, W, tol)) return finish(W);
    if (std::getenv("SCKN_WSOLVE_DEBUG") && it % 500 == 0)
      std::fprintf(stderr, "agd it=%d ratio=%g L=%g kappa=%g\n", it,
                   gw.norm() / std::max(1.0, W.norm()), L, kappa);
  }
  throw ConvergenceError("solve_W_convex: incremental solver did not reach tolerance", W);
}

LinearModel solve_batch_gd(const Matrix& X, const Matrix& Y, const LossSpec& loss,
                           double lambda, double tol, int max_epochs) {
  const Eigen::Index n = X.cols();
  const double smooth = loss_curvature(loss) * X.squaredNorm() / static_cast<double>(n) + lambda;
  const double step = 1.0 / smooth;
  Matrix W = Matrix::Zero(Y.rows(), X.rows());
  const int iters = std::max(max_epochs * 50, 1000);
  for (int it = 0; it < iters; ++it) {
    Matrix g = full_gradient(X, Y, W, lambda, loss);
    if (stationary(g, W, tol)) return {W, lambda};
    W.noalias() -= step * g;
  }
  throw ConvergenceError("solve_W_convex: gradient descent did not reach tolerance", W);
}

}  // namespace

LinearModel solve_W_convex(const Matrix& features, const Matrix& labels, const LossSpec& loss,
                           double lambda, double tol, int max_epochs, WSolver solver,
                           uint64_t seed, Matrix* warm_dual) {
  if (features.cols() != labels.cols())
    throw std::invalid_argument("solve_W_convex: sample count mismatch");
  if (features.cols() == 0) throw DataError("solve_W_convex: no samples");
  if (!(lambda > 0.0)) throw std::invalid_argument("solve_W_convex: lambda must be positive");
  switch (solver) {
    case WSolver::Incremental:
      return solve_incremental(features, labels, loss, lambda, tol, max_epochs, seed,
                               warm_dual);
    case WSolver::BatchGd:
      return solve_batch_gd(features, labels, loss, lambda, tol, max_epochs);
  }
  throw std::invalid_argument("unknown solver");
}

double objective_value(const Matrix& features, const Matrix& labels, const LinearModel& model,
                       const LossSpec& loss) {
  return full_objective(features, labels, model.W, model.lambda, loss);
}

Matrix compute_features(const NetworkParams& net, const std::vector<SpatialMap>& images) {
  if (images.empty()) throw DataError("compute_features: no images");
  SpatialMap first = network_forward(net, images[0]);
  const Eigen::Index d = first.data.size();
  Matrix out(d, static_cast<Eigen::Index>(images.size()));
  out.col(0) = Eigen::Map<const Vector>(first.data.data(), d);
  parallel_for(static_cast<int>(images.size()) - 1, [&](int idx) {
    SpatialMap f = network_forward(net, images[idx + 1]);
    if (f.data.size() != d)
      throw std::invalid_argument("compute_features: inconsistent image shapes");
    out.col(idx + 1) = Eigen::Map<const Vector>(f.data.data(), d);
  });
  return out;
}

namespace {

struct SampleGrad {
  GradientSet grads;
  bool zero = false;  // loss derivative vanished for every output
};

SampleGrad sample_gradient(const NetworkParams& net, const SpatialMap& image,
                           const Vector& targets, const LinearModel& model,
                           const LossSpec& loss, bool want_alpha) {
  std::vector<LayerCache> caches;
  SpatialMap out = network_forward(net, image, &caches);
  Eigen::Map<const Vector> feat(out.data.data(), out.data.size());
  Vector yhat = model.W * feat;

  bool all_zero = true;
  for (Eigen::Index c = 0; c < yhat.size(); ++c) {
    if (loss_value_grad(loss, targets[c], yhat[c]).second != 0.0) {
      all_zero = false;
      break;
    }
  }
  SampleGrad sg;
  sg.zero = all_zero;
  if (!all_zero)
    sg.grads = network_backward(net, caches, model.W, targets, yhat, loss, want_alpha);
  return sg;
}

}  // namespace

void train_epoch_Z(NetworkParams& net, const std::vector<SpatialMap>& images,
                   const Matrix& labels, const LinearModel& model, const LossSpec& loss,
                   TrainState& state, int batch_size) {
  const size_t n = images.size();
  if (labels.cols() != static_cast<Eigen::Index>(n))
    throw std::invalid_argument("train_epoch_Z: label count mismatch");
  if (state.active.size() != n) state.active.assign(n, 1);
  if (state.velocity.size() != net.layers.size()) {
    state.velocity.clear();
    for (const LayerParams& l : net.layers)
      state.velocity.push_back(Matrix::Zero(l.patch_dim(), l.filters_out()));
  }
  if (state.precond.size() != net.layers.size())
    throw std::invalid_argument("train_epoch_Z: preconditioners not initialized");

  std::vector<int> idx;
  for (size_t i = 0; i < n; ++i)
    if (state.active[i]) idx.push_back(static_cast<int>(i));
  if (idx.empty()) return;
  std::mt19937_64 rng(state.seed + 0x9e3779b97f4a7c15ULL * (state.epoch + 1));
  std::shuffle(idx.begin(), idx.end(), rng);
  if (batch_size < 1) batch_size = 1;

  const bool hinge = loss.kind == LossKind::SquaredHinge;
  for (size_t start = 0; start < idx.size(); start += batch_size) {
    const int bsz = static_cast<int>(std::min<size_t>(batch_size, idx.size() - start));
    std::vector<SampleGrad> grads(bsz);
    parallel_for(bsz, [&](int b) {
      const int i = idx[start + b];
      grads[b] = sample_gradient(net, images[i], labels.col(i), model, loss,
                                 state.learn_alpha);
    });

    std::vector<Matrix> dZ;
    std::vector<double> dAlpha(net.layers.size(), 0.0);
    for (const LayerParams& l : net.layers)
      dZ.push_back(Matrix::Zero(l.patch_dim(), l.filters_out()));
    int used = 0;
    for (int b = 0; b < bsz; ++b) {
      if (grads[b].zero) {
        if (hinge) state.active[idx[start + b]] = 0;
        continue;
      }
      ++used;
      for (size_t j = 0; j < net.layers.size(); ++j) {
        dZ[j] += grads[b].grads.dZ[j];
        if (state.learn_alpha) dAlpha[j] += grads[b].grads.dAlpha[j];
      }
    }
    if (used == 0) continue;
    const double scale = 1.0 / bsz;

    for (size_t j = 0; j < net.layers.size(); ++j) {
      LayerParams& layer = net.layers[j];
      state.velocity[j] = state.momentum * state.velocity[j] + scale * dZ[j];
      Matrix Z = layer.filters;
      for (int col = 0; col < Z.cols(); ++col) {
        for (;;) {
          try {
            Z.col(col) = sphere_step(Z.col(col), state.velocity[j].col(col),
                                     state.precond[j].Q, state.eta);
            break;
          } catch (const StepDegenerateError&) {
            state.eta *= 0.5;
            if (state.eta < 1e-12) throw;
          }
        }
      }
      layer.filters = std::move(Z);
      if (state.learn_alpha) {
        const double next = layer.kernel.alpha - state.eta * scale * dAlpha[j];
        layer.kernel = KernelSpec(std::max(state.alpha_floor, next));
      }
      layer.rebuild_whitening();
    }
  }
}

FitResult fit(NetworkParams net, const std::vector<SpatialMap>& images, const Matrix& labels,
              const LossSpec& loss, double lambda, const FitSchedule& schedule) {
  if (images.empty()) throw DataError("fit: no training data");
  net.validate();

  TrainState state;
  state.eta = schedule.eta0;
  state.momentum = schedule.momentum;
  state.learn_alpha = schedule.learn_alpha;
  state.seed = schedule.seed;
  state.active.assign(images.size(), 1);
  for (size_t j = 0; j < net.layers.size(); ++j) {
    Matrix patches = sample_normalized_patches(net, j, net.layers[j].patch_size, images,
                                               schedule.precond_patches,
                                               schedule.seed + 557 * (j + 1));
    state.precond.push_back(compute_preconditioner(patches, schedule.precond_ridge));
    state.velocity.push_back(Matrix::Zero(net.layers[j].patch_dim(),
                                          net.layers[j].filters_out()));
  }

  FitResult result;
  std::mt19937_64 rng(schedule.seed ^ 0xabcdef12345ULL);
  NetworkParams snap_net = net;
  Matrix snap_W;
  Matrix warm_dual;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (int epoch = 0;; ++epoch) {
    state.epoch = epoch;
    Matrix features = compute_features(net, images);
    LinearModel model{Matrix(), lambda};
    try {
      model = solve_W_convex(features, labels, loss, lambda, schedule.wsolve_tol,
                             schedule.wsolve_max_epochs, WSolver::Incremental,
                             schedule.seed + epoch, &warm_dual);
    } catch (const ConvergenceError&) {
      // A non-certifiable solve means the filter epoch walked into badly
      // conditioned territory (e.g. near-collinear filters blowing up the
      // whitening); back off like any other failed epoch.
      if (epoch == 0) throw;
      result.history.push_back({std::numeric_limits<double>::infinity(), false, state.eta,
                                static_cast<int>(std::count(state.active.begin(),
                                                            state.active.end(), char(1)))});
      net = snap_net;
      state.eta *= 0.5;
      for (Matrix& v : state.velocity) v.setZero();
      if (state.eta < schedule.eta_min || epoch >= schedule.epochs) break;
      LinearModel restored{snap_W, lambda};
      train_epoch_Z(net, images, labels, restored, loss, state, schedule.batch_size);
      continue;
    }
    double obj = objective_value(features, labels, model, loss);

    const int active_count =
        static_cast<int>(std::count(state.active.begin(), state.active.end(), char(1)));
    const bool accepted = obj <= prev_obj;
    result.history.push_back({obj, accepted, state.eta, active_count});

    if (accepted) {
      snap_net = net;
      snap_W = model.W;
      prev_obj = obj;
      if (obj < state.best_loss) {
        state.best_loss = obj;
        state.best_net = net;
        state.best_W = model.W;
      }
    } else {
      net = snap_net;
      model.W = snap_W;
      state.eta *= 0.5;
      for (Matrix& v : state.velocity) v.setZero();
      if (state.eta < schedule.eta_min) break;
    }

    if (epoch >= schedule.epochs) break;

    train_epoch_Z(net, images, labels, model, loss, state, schedule.batch_size);

    // Every sample satisfied its margin during the pass: nothing left to
    // optimize, halt before reactivation.
    if (std::none_of(state.active.begin(), state.active.end(), [](char a) { return a != 0; }))
      break;

    // reactivate a random slice of the inactive samples
    std::vector<int> inactive;
    for (size_t i = 0; i < images.size(); ++i)
      if (!state.active[i]) inactive.push_back(static_cast<int>(i));
    if (!inactive.empty() && schedule.reactivate_fraction > 0.0) {
      std::shuffle(inactive.begin(), inactive.end(), rng);
      const size_t k = static_cast<size_t>(
          std::ceil(schedule.reactivate_fraction * inactive.size()));
      for (size_t i = 0; i < k && i < inactive.size(); ++i) state.active[inactive[i]] = 1;
    }
  }

  result.net = state.best_net ? std::move(*state.best_net) : std::move(net);
  result.model = {state.best_W.size() ? state.best_W : snap_W, lambda};
  return result;
}

}  // namespace sckn
