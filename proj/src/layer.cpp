#include "sckn/layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sckn/parallel.hpp"

namespace sckn {

LayerParams::LayerParams(Matrix filters_, KernelSpec kernel_, int patch_size_,
                         std::optional<PoolSpec> pool_, double epsilon_)
    : filters(std::move(filters_)), kernel(kernel_), patch_size(patch_size_),
      pool(std::move(pool_)), epsilon(epsilon_) {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("layer patch_size must be odd and >= 1");
  if (filters.size() == 0) throw std::invalid_argument("layer has no filters");
  if (filters.rows() % (patch_size * patch_size) != 0)
    throw std::invalid_argument("filter rows not divisible by patch_size^2");
  rebuild_whitening();
}

void LayerParams::set_filters(Matrix new_filters) {
  if (new_filters.rows() != filters.rows() || new_filters.cols() != filters.cols())
    throw std::invalid_argument("set_filters: shape mismatch");
  filters = std::move(new_filters);
  rebuild_whitening();
}

void LayerParams::set_filters_raw(Matrix new_filters) {
  if (new_filters.rows() != filters.rows() || new_filters.cols() != filters.cols())
    throw std::invalid_argument("set_filters_raw: shape mismatch");
  filters = std::move(new_filters);
  rebuild_whitening(/*enforce_unit_norm=*/false);
}

void LayerParams::set_alpha(double alpha) {
  kernel = KernelSpec(alpha);
  rebuild_whitening(/*enforce_unit_norm=*/false);
}

void LayerParams::rebuild_whitening(bool enforce_unit_norm) {
  if (enforce_unit_norm) {
    for (int j = 0; j < filters.cols(); ++j) {
      const double n = filters.col(j).norm();
      if (std::abs(n - 1.0) > 1e-6)
        throw std::invalid_argument("filter column " + std::to_string(j) +
                                    " is not unit-norm");
    }
  }
  gram = filters.transpose() * filters;
  kappa_gram = kappa(kernel, gram);
  whitening = inv_sqrt_psd(kappa_gram, epsilon);
}

void NetworkParams::validate() const {
  int ch = input_channels;
  for (size_t j = 0; j < layers.size(); ++j) {
    const LayerParams& l = layers[j];
    if (l.patch_dim() != ch * l.patch_size * l.patch_size)
      throw std::invalid_argument("layer " + std::to_string(j) + " patch_dim does not chain");
    ch = l.filters_out();
  }
}

Vector encode_patch(const LayerParams& layer, const Vector& x) {
  if (x.size() != layer.patch_dim())
    throw std::invalid_argument("encode_patch: dimension mismatch");
  const double n = x.norm();
  if (n == 0.0) return Vector::Zero(layer.filters_out());
  Vector cos = layer.filters.transpose() * (x / n);
  Vector k(cos.size());
  for (Eigen::Index i = 0; i < cos.size(); ++i) k[i] = kappa(layer.kernel, cos[i]);
  return n * (layer.whitening.A * k);
}

SpatialMap layer_forward(const LayerParams& layer, const SpatialMap& input, LayerCache* cache) {
  if (input.channels != layer.in_channels())
    throw std::invalid_argument("layer_forward: input channel mismatch");

  PatchMatrix patches = extract_patches(input, layer.patch_size);
  Vector raw = patches.data.colwise().norm().transpose();
  Vector s = raw.array() + kNormOffset;

  Matrix arg = layer.filters.transpose() * patches.data;
  arg.array().rowwise() /= s.transpose().array();
  Matrix kmat = kappa(layer.kernel, arg);
  Matrix pre_pool = layer.whitening.A * kmat;
  pre_pool.array().rowwise() *= s.transpose().array();

  SpatialMap out;
  int out_h = input.height, out_w = input.width;
  if (layer.pool) {
    PoolOperator op(*layer.pool, input.height, input.width);
    out_h = op.out_height();
    out_w = op.out_width();
    out = SpatialMap(layer.filters_out(), out_h, out_w, op.apply(pre_pool));
  } else {
    out = SpatialMap(layer.filters_out(), out_h, out_w, pre_pool);
  }

  if (cache) {
    cache->patches = std::move(patches);
    cache->raw_norms = std::move(raw);
    cache->norms = std::move(s);
    cache->arg = std::move(arg);
    cache->kmat = std::move(kmat);
    cache->pre_pool = std::move(pre_pool);
    cache->output = out.data;
    cache->in_height = input.height;
    cache->in_width = input.width;
    cache->out_height = out_h;
    cache->out_width = out_w;
  }
  return out;
}

SpatialMap network_forward(const NetworkParams& net, const SpatialMap& image,
                           std::vector<LayerCache>* caches) {
  if (image.channels != net.input_channels)
    throw std::invalid_argument("network_forward: input channel mismatch");
  if (caches) {
    caches->clear();
    caches->resize(net.layers.size());
  }
  SpatialMap cur = image;
  for (size_t j = 0; j < net.layers.size(); ++j)
    cur = layer_forward(net.layers[j], cur, caches ? &(*caches)[j] : nullptr);
  return cur;
}

double network_kernel(const NetworkParams& net, const SpatialMap& a, const SpatialMap& b) {
  SpatialMap fa = network_forward(net, a);
  SpatialMap fb = network_forward(net, b);
  if (!fa.same_shape(fb))
    throw std::invalid_argument("network_kernel: images produce different final grids");
  return (fa.data.array() * fb.data.array()).sum();
}

Matrix spherical_kmeans(const Matrix& unit_columns, int centroids, int max_iters, uint64_t seed,
                        double rel_tol, std::vector<double>* objective_trace) {
  const Eigen::Index n = unit_columns.cols();
  if (centroids < 1) throw std::invalid_argument("spherical_kmeans: centroids must be >= 1");
  if (centroids > n)
    throw std::invalid_argument("spherical_kmeans: more centroids than columns");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nn = unit_columns.col(i).norm();
    if (nn < 1e-12) throw std::invalid_argument("spherical_kmeans: zero column");
  }

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Matrix Z(unit_columns.rows(), centroids);
  for (int j = 0; j < centroids; ++j) Z.col(j) = unit_columns.col(order[j]);

  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<int> assign(n, 0);
  double prev_obj = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    Matrix cos = Z.transpose() * unit_columns;  // centroids x n
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      obj += cos.col(i).maxCoeff(&best);
      assign[i] = static_cast<int>(best);
    }
    if (objective_trace) objective_trace->push_back(obj);

    Matrix sums = Matrix::Zero(Z.rows(), centroids);
    std::vector<int> counts(centroids, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[i]) += unit_columns.col(i);
      counts[assign[i]]++;
    }
    for (int j = 0; j < centroids; ++j) {
      const double nn = sums.col(j).norm();
      if (counts[j] == 0 || nn < 1e-12) {
        Z.col(j) = unit_columns.col(pick(rng));
      } else {
        Z.col(j) = sums.col(j) / nn;
      }
    }
    if (obj - prev_obj < rel_tol * std::abs(obj) && it > 0) break;
    prev_obj = obj;
  }
  return Z;
}

Matrix sample_normalized_patches(const NetworkParams& net, size_t layer_index, int patch_size,
                                 const std::vector<SpatialMap>& images, int count,
                                 uint64_t seed) {
  if (images.empty()) throw DataError("sample_normalized_patches: no images");
  if (layer_index > net.layers.size())
    throw std::invalid_argument("sample_normalized_patches: bad layer index");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick_img(0, images.size() - 1);

  // Draw (image, pixel) pairs up front, then forward each needed image once.
  std::vector<std::vector<int>> wanted(images.size());
  {
    // Pixel index is resolved after the forward pass since the grid shrinks
    // with pooling; store a raw draw and reduce modulo pixel count later.
    std::uniform_int_distribution<int> pick_raw(0, std::numeric_limits<int>::max() - 1);
    for (int i = 0; i < count; ++i) wanted[pick_img(rng)].push_back(pick_raw(rng));
  }

  NetworkParams prefix;
  prefix.input_channels = net.input_channels;
  prefix.layers.assign(net.layers.begin(), net.layers.begin() + layer_index);

  // forward each needed image once, in parallel; concatenation stays in
  // image order so the result is independent of the thread count
  std::vector<std::vector<Vector>> per_image(images.size());
  parallel_for(static_cast<int>(images.size()), [&](int im) {
    if (wanted[im].empty()) return;
    SpatialMap fmap = network_forward(prefix, images[im]);
    PatchMatrix patches = extract_patches(fmap, patch_size);
    for (int raw : wanted[im]) {
      const int px = raw % patches.columns();
      Vector col = patches.data.col(px);
      const double n = col.norm();
      if (n < 1e-8) continue;
      per_image[im].push_back(col / n);
    }
  });

  std::vector<Vector> cols;
  cols.reserve(count);
  for (auto& v : per_image)
    for (Vector& c : v) cols.push_back(std::move(c));
  if (cols.empty()) throw DataError("sample_normalized_patches: all sampled patches degenerate");

  Matrix out(cols[0].size(), static_cast<Eigen::Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = cols[i];
  return out;
}

NetworkParams unsupervised_init(const std::vector<LayerConfig>& configs, int input_channels,
                                const std::vector<SpatialMap>& images, int patches_per_layer,
                                uint64_t seed, int kmeans_iters) {
  if (images.empty()) throw DataError("unsupervised_init: no images");
  NetworkParams net;
  net.input_channels = input_channels;
  net.layers.reserve(configs.size());

  for (size_t j = 0; j < configs.size(); ++j) {
    const LayerConfig& cfg = configs[j];
    Matrix patches = sample_normalized_patches(net, j, cfg.patch_size, images,
                                               patches_per_layer, seed + 1031 * (j + 1));
    if (patches.cols() < cfg.filters)
      throw DataError("unsupervised_init: not enough non-degenerate patches for layer " +
                      std::to_string(j));
    Matrix Z = spherical_kmeans(patches, cfg.filters, kmeans_iters, seed + 7919 * (j + 1));
    std::optional<PoolSpec> pool;
    if (cfg.subsampling > 0.0) {
      pool = PoolSpec::from_subsampling(cfg.subsampling);
      pool->normalize = cfg.pool_normalize;
    }
    net.layers.emplace_back(std::move(Z), KernelSpec(cfg.alpha), cfg.patch_size, pool,
                            cfg.epsilon);
  }
  net.validate();
  return net;
}

}  // namespace sckn
