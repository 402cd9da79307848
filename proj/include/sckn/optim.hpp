#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sckn/grad.hpp"
#include "sckn/layer.hpp"

namespace sckn {

// Per-layer inverse covariance of the patches seen at initialization.
struct Preconditioner {
  Matrix Q;
};

// Q = (Cov + ridge*tr(Cov)/d * I)^{-1}, Cov the empirical covariance of the
// given columns. Needs at least d+1 columns.
Preconditioner compute_preconditioner(const Matrix& patches, double ridge);

// One preconditioned gradient step on the sphere:
//   z <- Proj[ z - eta (I - Q z z^T / (z^T Q z)) Q grad ].
Vector sphere_step(const Vector& z, const Vector& grad, const Matrix& Q, double eta);

struct LinearModel {
  Matrix W;       // outputs x features
  double lambda;  // l2 regularization weight
};

enum class WSolver { Incremental, BatchGd };

// Minimizes (1/n) sum_i sum_c L(Y(c,i), (W x_i)_c) + lambda/2 ||W||_F^2 over W
// for fixed features (columns of `features`). Returns once the stationarity
// certificate ||grad||_F <= tol * max(1, ||W||_F) holds; throws
// ConvergenceError (carrying the last iterate) past the iteration cap.
// `warm_dual`, when given, carries the per-(sample, output) dual state across
// calls with the same sample set (the alternating trainer re-solves after
// every filter epoch, and features move slowly).
LinearModel solve_W_convex(const Matrix& features, const Matrix& labels, const LossSpec& loss,
                           double lambda, double tol, int max_epochs = 2000,
                           WSolver solver = WSolver::Incremental, uint64_t seed = 0,
                           Matrix* warm_dual = nullptr);

// Full objective of the model on the given features.
double objective_value(const Matrix& features, const Matrix& labels, const LinearModel& model,
                       const LossSpec& loss);

struct TrainState {
  double eta = 10.0;
  double momentum = 0.9;
  bool learn_alpha = false;
  double alpha_floor = 1e-2;
  std::vector<Matrix> velocity;
  std::vector<Preconditioner> precond;
  std::vector<char> active;
  double best_loss = std::numeric_limits<double>::infinity();
  std::optional<NetworkParams> best_net;
  Matrix best_W;
  int epoch = 0;
  uint64_t seed = 0;
};

struct FitSchedule {
  int epochs = 100;
  int batch_size = 128;
  double eta0 = 10.0;
  double eta_min = 1e-8;
  double momentum = 0.9;
  bool learn_alpha = false;
  double wsolve_tol = 1e-4;
  int wsolve_max_epochs = 2000;
  double precond_ridge = 0.01;
  int precond_patches = 20000;
  double reactivate_fraction = 0.10;
  uint64_t seed = 0;
};

struct EpochRecord {
  double objective;
  bool accepted;
  double eta;
  int active_samples;
};

struct FitResult {
  NetworkParams net;
  LinearModel model;
  std::vector<EpochRecord> history;
};

// Forward every image and stack the flattened final maps as columns.
Matrix compute_features(const NetworkParams& net, const std::vector<SpatialMap>& images);

// One pass of preconditioned stochastic filter updates over the active
// samples. Deactivates squared-hinge samples whose gradient is exactly zero.
void train_epoch_Z(NetworkParams& net, const std::vector<SpatialMap>& images,
                   const Matrix& labels, const LinearModel& model, const LossSpec& loss,
                   TrainState& state, int batch_size);

// Alternating scheme: convex W solve, objective backtracking with halved
// learning rate, one stochastic filter epoch, 10% reactivation.
FitResult fit(NetworkParams net, const std::vector<SpatialMap>& images, const Matrix& labels,
              const LossSpec& loss, double lambda, const FitSchedule& schedule);

}  // namespace sckn
