#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sckn/core_maps.hpp"
#include "sckn/kernel_ops.hpp"

namespace sckn {

// One layer: filters Z (unit columns), kernel parameter, patch size, optional
// pooling, and the whitening matrices derived from Z and alpha.
struct LayerParams {
  Matrix filters;               // patch_dim x filters_out
  KernelSpec kernel;            // alpha
  int patch_size = 3;
  std::optional<PoolSpec> pool;
  double epsilon = 1e-3;

  // Derived from filters/kernel/epsilon; rebuilt by rebuild_whitening().
  Matrix gram;       // Z^T Z
  Matrix kappa_gram; // kappa(Z^T Z)
  WhiteningSet whitening;

  LayerParams(Matrix filters_, KernelSpec kernel_, int patch_size_,
              std::optional<PoolSpec> pool_ = std::nullopt, double epsilon_ = 1e-3);

  int patch_dim() const { return static_cast<int>(filters.rows()); }
  int filters_out() const { return static_cast<int>(filters.cols()); }
  int in_channels() const { return patch_dim() / (patch_size * patch_size); }

  void set_filters(Matrix new_filters);
  // Same, without the unit-norm invariant check. The forward pass is well
  // defined off the sphere; finite-difference probes need this.
  void set_filters_raw(Matrix new_filters);
  void set_alpha(double alpha);
  void rebuild_whitening(bool enforce_unit_norm = true);
};

struct NetworkParams {
  int input_channels = 0;
  std::vector<LayerParams> layers;

  // Throws if consecutive layer dimensions do not chain.
  void validate() const;
};

// Forward intermediates a backward pass needs.
struct LayerCache {
  PatchMatrix patches;  // E(I_{j-1})
  Vector raw_norms;     // per-column l2 norms
  Vector norms;         // raw_norms + 1e-5 (the diagonal of S)
  Matrix arg;           // Z^T E S^{-1}
  Matrix kmat;          // kappa(arg)
  Matrix pre_pool;      // M = A kmat S
  Matrix output;        // I_j = M P (equals pre_pool when no pooling)
  int in_height = 0, in_width = 0;
  int out_height = 0, out_width = 0;
};

// psi(x) = ||x|| * A * kappa(Z^T x/||x||), 0 for x = 0 (exact-zero branch).
Vector encode_patch(const LayerParams& layer, const Vector& x);

SpatialMap layer_forward(const LayerParams& layer, const SpatialMap& input,
                         LayerCache* cache = nullptr);
SpatialMap network_forward(const NetworkParams& net, const SpatialMap& image,
                           std::vector<LayerCache>* caches = nullptr);

// Sum over final-grid pixels of <I_k(z), I_k'(z)>.
double network_kernel(const NetworkParams& net, const SpatialMap& a, const SpatialMap& b);

// Spherical K-means: cosine assignment, normalized mean update, empty clusters
// re-seeded from a random data column. Deterministic under `seed`.
Matrix spherical_kmeans(const Matrix& unit_columns, int centroids, int max_iters,
                        uint64_t seed, double rel_tol = 1e-5,
                        std::vector<double>* objective_trace = nullptr);

struct LayerConfig {
  int filters = 32;
  int patch_size = 3;
  double subsampling = 0.0;  // <= 0 disables pooling
  double alpha = 4.0;        // 1/(0.5^2)
  double epsilon = 1e-3;
  bool pool_normalize = false;
};

// Patches of layer `layer_index` inputs (i.e. of the maps produced by the
// first `layer_index` layers of `net`), sampled uniformly over (image, pixel),
// near-zero columns dropped, survivors normalized to unit norm.
Matrix sample_normalized_patches(const NetworkParams& net, size_t layer_index, int patch_size,
                                 const std::vector<SpatialMap>& images, int count,
                                 uint64_t seed);

NetworkParams unsupervised_init(const std::vector<LayerConfig>& configs, int input_channels,
                                const std::vector<SpatialMap>& images, int patches_per_layer,
                                uint64_t seed, int kmeans_iters = 50);

}  // namespace sckn
