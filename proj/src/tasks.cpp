#include "sckn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "sckn/parallel.hpp"

namespace sckn {

// ---------------------------------------------------------------------------
// Local whitening
// ---------------------------------------------------------------------------

SpatialMap box_filter_mean(const SpatialMap& image, int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("box filter size must be odd");
  const int half = size / 2;
  SpatialMap out(image.channels, image.height, image.width);
  for (int r = 0; r < image.height; ++r) {
    const int r0 = std::max(0, r - half), r1 = std::min(image.height - 1, r + half);
    for (int c = 0; c < image.width; ++c) {
      const int c0 = std::max(0, c - half), c1 = std::min(image.width - 1, c + half);
      const double inv = 1.0 / ((r1 - r0 + 1) * (c1 - c0 + 1));
      for (int ch = 0; ch < image.channels; ++ch) {
        double acc = 0.0;
        for (int rr = r0; rr <= r1; ++rr)
          for (int cc = c0; cc <= c1; ++cc) acc += image.at(ch, rr, cc);
        out.at(ch, r, c) = acc * inv;
      }
    }
  }
  return out;
}

SpatialMap center_local(const SpatialMap& image, int neighborhood) {
  SpatialMap mean = box_filter_mean(image, neighborhood);
  SpatialMap out = image;
  out.data -= mean.data;
  return out;
}

WhitenStats fit_whitening(const std::vector<SpatialMap>& images, int neighborhood,
                          int sample_patches, double ridge, uint64_t seed) {
  if (images.empty()) throw DataError("fit_whitening: no images");
  const int w = neighborhood;
  const int half = w / 2;
  const int ch = images[0].channels;
  const int d = ch * w * w;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick_img(0, images.size() - 1);
  Matrix patches(d, sample_patches);
  int got = 0;
  for (int tries = 0; got < sample_patches && tries < 20 * sample_patches; ++tries) {
    const SpatialMap& im = images[pick_img(rng)];
    if (im.channels != ch || im.height < w || im.width < w) continue;
    SpatialMap centered = center_local(im, w);
    // take a handful of interior patches per visit to amortize the centering
    std::uniform_int_distribution<int> pr(half, im.height - 1 - half);
    std::uniform_int_distribution<int> pc(half, im.width - 1 - half);
    for (int k = 0; k < 32 && got < sample_patches; ++k) {
      const int r = pr(rng), c = pc(rng);
      for (int cc = 0; cc < ch; ++cc)
        for (int dr = 0; dr < w; ++dr)
          for (int dc = 0; dc < w; ++dc)
            patches(cc * w * w + dr * w + dc, got) =
                centered.at(cc, r + dr - half, c + dc - half);
      ++got;
    }
  }
  if (got < d + 1) throw DataError("fit_whitening: not enough patches");
  patches.conservativeResize(d, got);

  Vector mean = patches.rowwise().mean();
  Matrix cov = patches * patches.transpose() / static_cast<double>(got);
  cov.noalias() -= mean * mean.transpose();
  const double eps = ridge * cov.trace() / static_cast<double>(d);

  WhitenStats stats;
  stats.neighborhood = w;
  stats.channels = ch;
  stats.zca = inv_sqrt_psd(cov, eps).A;
  stats.fitted = true;
  return stats;
}

SpatialMap whiten_local(const SpatialMap& image, const WhitenStats& stats) {
  if (!stats.fitted) throw std::invalid_argument("whiten_local: stats not fitted");
  if (image.channels != stats.channels)
    throw std::invalid_argument("whiten_local: channel mismatch");
  const int w = stats.neighborhood;
  const int half = w / 2;
  SpatialMap centered = center_local(image, w);
  PatchMatrix patches = extract_patches(centered, w);

  Matrix rows(image.channels, stats.zca.cols());
  for (int ch = 0; ch < image.channels; ++ch)
    rows.row(ch) = stats.zca.row(ch * w * w + half * w + half);
  return SpatialMap(image.channels, image.height, image.width, rows * patches.data);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

namespace {

Matrix one_vs_all_labels(const std::vector<int>& labels, int num_classes) {
  Matrix Y = Matrix::Constant(num_classes, static_cast<Eigen::Index>(labels.size()), -1.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label out of range");
    Y(labels[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return Y;
}

int argmax_lowest(const Vector& scores) {
  int best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = static_cast<int>(c);
  return best;
}

double error_pct(const Matrix& scores, const std::vector<int>& labels) {
  int wrong = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (argmax_lowest(scores.col(static_cast<Eigen::Index>(i))) != labels[i]) ++wrong;
  return 100.0 * wrong / static_cast<double>(labels.size());
}

}  // namespace

ClassifierHead train_classifier(const ClassifierConfig& config,
                                const std::vector<SpatialMap>& images,
                                const std::vector<int>& labels, int num_classes,
                                ClassifierMetrics* metrics) {
  if (num_classes < 2) throw std::invalid_argument("train_classifier: need >= 2 classes");
  if (images.size() != labels.size() || images.empty())
    throw DataError("train_classifier: bad training set");

  WhitenStats stats = fit_whitening(images, config.whiten_neighborhood, 50000, 1e-3,
                                    config.seed + 11);
  std::vector<SpatialMap> white(images.size());
  parallel_for(static_cast<int>(images.size()),
               [&](int i) { white[i] = whiten_local(images[i], stats); });

  // 80/20 split for lambda selection
  std::vector<int> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed + 23);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t ntrain = images.size() -
      static_cast<size_t>(std::floor(config.val_fraction * images.size()));
  std::vector<SpatialMap> tr_imgs, va_imgs;
  std::vector<int> tr_lab, va_lab;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < ntrain) {
      tr_imgs.push_back(white[order[i]]);
      tr_lab.push_back(labels[order[i]]);
    } else {
      va_imgs.push_back(white[order[i]]);
      va_lab.push_back(labels[order[i]]);
    }
  }

  std::vector<double> grid = config.lambda_grid;
  if (grid.empty())
    for (int i = -4; i <= 4; ++i) grid.push_back(std::pow(2.0, i) / tr_imgs.size());

  NetworkParams init = unsupervised_init(config.layers, images[0].channels, tr_imgs,
                                         config.patches_per_layer, config.seed,
                                         config.kmeans_iters);
  Matrix tr_Y = one_vs_all_labels(tr_lab, num_classes);
  LossSpec loss{LossKind::SquaredHinge};

  if (metrics) {
    Matrix feats = compute_features(init, tr_imgs);
    LinearModel m0 = solve_W_convex(feats, tr_Y, loss, 1.0 / tr_imgs.size(),
                                    config.schedule.wsolve_tol,
                                    config.schedule.wsolve_max_epochs);
    metrics->unsup_train_error_pct = error_pct(m0.W * feats, tr_lab);
  }

  double best_val = std::numeric_limits<double>::infinity();
  double best_lambda = grid[0];
  std::vector<EpochRecord> best_history;
  for (double lambda : grid) {
    FitSchedule sched = config.schedule;
    sched.seed = config.seed + 1;
    FitResult res = fit(init, tr_imgs, tr_Y, loss, lambda, sched);
    Matrix vfeat = compute_features(res.net, va_imgs);
    const double verr = error_pct(res.model.W * vfeat, va_lab);
    if (verr < best_val) {
      best_val = verr;
      best_lambda = lambda;
      best_history = res.history;
    }
  }

  // retrain on the full training set with the selected lambda
  NetworkParams full_init = unsupervised_init(config.layers, images[0].channels, white,
                                              config.patches_per_layer, config.seed,
                                              config.kmeans_iters);
  Matrix full_Y = one_vs_all_labels(labels, num_classes);
  FitSchedule sched = config.schedule;
  sched.seed = config.seed + 2;
  FitResult final = fit(std::move(full_init), white, full_Y, loss, best_lambda, sched);

  ClassifierHead head;
  head.net = std::move(final.net);
  head.model = std::move(final.model);
  head.classes = num_classes;
  head.whitening = std::move(stats);

  if (metrics) {
    metrics->val_error_pct = best_val;
    metrics->chosen_lambda = best_lambda;
    metrics->history = final.history;
    Matrix feats = compute_features(head.net, white);
    metrics->final_train_error_pct = error_pct(head.model.W * feats, labels);
  }
  return head;
}

int predict(const ClassifierHead& head, const SpatialMap& image) {
  SpatialMap white = whiten_local(image, head.whitening);
  SpatialMap f = network_forward(head.net, white);
  Eigen::Map<const Vector> feat(f.data.data(), f.data.size());
  Vector scores = head.model.W * feat;
  return argmax_lowest(scores);
}

double evaluate_error(const ClassifierHead& head, const std::vector<SpatialMap>& images,
                      const std::vector<int>& labels) {
  if (images.empty() || images.size() != labels.size())
    throw DataError("evaluate_error: empty or mismatched test set");
  std::vector<int> pred(images.size());
  parallel_for(static_cast<int>(images.size()),
               [&](int i) { pred[i] = predict(head, images[i]); });
  int wrong = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (pred[i] != labels[i]) ++wrong;
  return 100.0 * wrong / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Bicubic resize
// ---------------------------------------------------------------------------

namespace {

double keys_cubic(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

struct ResampleTaps {
  std::vector<int> offsets;
  std::vector<std::pair<int, double>> taps;
};

ResampleTaps make_taps(int in_n, int out_n, double scale, bool antialias) {
  const double kscale = (antialias && scale < 1.0) ? scale : 1.0;
  const double support = 2.0 / kscale;
  ResampleTaps t;
  t.offsets.push_back(0);
  for (int o = 0; o < out_n; ++o) {
    const double u = (o + 0.5) / scale - 0.5;
    const int j0 = static_cast<int>(std::ceil(u - support));
    const int j1 = static_cast<int>(std::floor(u + support));
    double wsum = 0.0;
    const size_t begin = t.taps.size();
    for (int j = j0; j <= j1; ++j) {
      const double w = kscale * keys_cubic(kscale * (u - j));
      if (w == 0.0) continue;
      t.taps.emplace_back(reflect_index(j, in_n), w);
      wsum += w;
    }
    if (wsum != 0.0)
      for (size_t k = begin; k < t.taps.size(); ++k) t.taps[k].second /= wsum;
    t.offsets.push_back(static_cast<int>(t.taps.size()));
  }
  return t;
}

}  // namespace

SpatialMap bicubic_resize(const SpatialMap& image, double scale, bool antialias) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
  const int out_h = std::max(1, static_cast<int>(std::ceil(image.height * scale - 1e-9)));
  const int out_w = std::max(1, static_cast<int>(std::ceil(image.width * scale - 1e-9)));
  const ResampleTaps rows = make_taps(image.height, out_h, scale, antialias);
  const ResampleTaps cols = make_taps(image.width, out_w, scale, antialias);

  // rows first, then columns
  SpatialMap mid(image.channels, out_h, image.width);
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < image.channels; ++ch) {
        double acc = 0.0;
        for (int k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k)
          acc += rows.taps[k].second * image.at(ch, rows.taps[k].first, c);
        mid.at(ch, r, c) = acc;
      }
  SpatialMap out(image.channels, out_h, out_w);
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c)
      for (int ch = 0; ch < image.channels; ++ch) {
        double acc = 0.0;
        for (int k = cols.offsets[c]; k < cols.offsets[c + 1]; ++k)
          acc += cols.taps[k].second * mid.at(ch, r, cols.taps[k].first);
        out.at(ch, r, c) = acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Color space
// ---------------------------------------------------------------------------

namespace {

const Eigen::Matrix3d& ycc_matrix() {
  static const Eigen::Matrix3d m = [] {
    Eigen::Matrix3d v;
    v << 65.481, 128.553, 24.966,
        -37.797, -74.203, 112.0,
        112.0, -93.786, -18.214;
    return Eigen::Matrix3d(v / 255.0);
  }();
  return m;
}

const Eigen::Vector3d& ycc_offset() {
  static const Eigen::Vector3d o(16.0, 128.0, 128.0);
  return o;
}

}  // namespace

SpatialMap rgb_to_ycbcr(const SpatialMap& image) {
  if (image.channels != 3) throw std::invalid_argument("rgb_to_ycbcr: need 3 channels");
  SpatialMap out = image;
  out.data = ycc_matrix() * image.data;
  out.data.colwise() += ycc_offset();
  return out;
}

SpatialMap ycbcr_to_rgb(const SpatialMap& image) {
  if (image.channels != 3) throw std::invalid_argument("ycbcr_to_rgb: need 3 channels");
  static const Eigen::Matrix3d inv = ycc_matrix().inverse();
  SpatialMap out = image;
  out.data = inv * (image.data.colwise() - ycc_offset());
  return out;
}

// ---------------------------------------------------------------------------
// Super-resolution
// ---------------------------------------------------------------------------

SrPatchSet build_sr_patchset(const std::vector<SpatialMap>& luminance_images, int count,
                             int size, int scale, uint64_t seed) {
  if (luminance_images.empty()) throw DataError("build_sr_patchset: no images");
  std::vector<size_t> usable;
  for (size_t i = 0; i < luminance_images.size(); ++i) {
    const SpatialMap& im = luminance_images[i];
    if (im.channels != 1)
      throw std::invalid_argument("build_sr_patchset: images must be luminance");
    if (im.height >= size && im.width >= size) usable.push_back(i);
  }
  if (usable.empty()) throw DataError("build_sr_patchset: every image smaller than the patch");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, usable.size() - 1);
  SrPatchSet set;
  set.inputs.reserve(count);
  set.targets.reserve(count);
  for (int i = 0; i < count; ++i) {
    const SpatialMap& im = luminance_images[usable[pick(rng)]];
    std::uniform_int_distribution<int> pr(0, im.height - size);
    std::uniform_int_distribution<int> pc(0, im.width - size);
    const int r0 = pr(rng), c0 = pc(rng);
    SpatialMap hr(1, size, size);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) hr.at(0, r, c) = im.at(0, r0 + r, c0 + c);

    SpatialMap small = bicubic_resize(hr, 1.0 / scale, /*antialias=*/true);
    SpatialMap blur = bicubic_resize(small, static_cast<double>(scale), /*antialias=*/false);
    SpatialMap mean = box_filter_mean(blur, 5);
    SpatialMap input = blur;
    input.data -= mean.data;
    SpatialMap target = hr;
    target.data -= mean.data;
    set.inputs.push_back(std::move(input));
    set.targets.push_back(std::move(target));
  }
  return set;
}

namespace {

struct SrHeadSolve {
  Vector w;
  double objective;  // mean squared residual per pixel + ridge
};

// Ridge regression of the per-pixel residual target - input on the per-pixel
// feature vectors, accumulated in streaming normal equations.
SrHeadSolve solve_sr_head(const NetworkParams& net, const SrPatchSet& set, double lambda) {
  const int p = net.layers.back().filters_out();
  Matrix gram = Matrix::Zero(p, p);
  Vector rhs = Vector::Zero(p);
  double ysq = 0.0;
  long long npix = 0;

  std::vector<Matrix> grams(set.inputs.size());
  std::vector<Vector> rhss(set.inputs.size());
  std::vector<double> ysqs(set.inputs.size());
  parallel_for(static_cast<int>(set.inputs.size()), [&](int i) {
    SpatialMap f = network_forward(net, set.inputs[i]);
    Vector y = (set.targets[i].data - set.inputs[i].data).row(0).transpose();
    grams[i] = f.data * f.data.transpose();
    rhss[i] = f.data * y;
    ysqs[i] = y.squaredNorm();
  });
  for (size_t i = 0; i < set.inputs.size(); ++i) {
    gram += grams[i];
    rhs += rhss[i];
    ysq += ysqs[i];
    npix += set.inputs[i].pixels();
  }
  const double inv = 1.0 / static_cast<double>(npix);
  Matrix lhs = 2.0 * inv * gram;
  lhs.diagonal().array() += lambda;
  SrHeadSolve out;
  out.w = lhs.ldlt().solve(2.0 * inv * rhs);
  out.objective = inv * (ysq - 2.0 * out.w.dot(rhs) + out.w.dot(gram * out.w)) +
                  0.5 * lambda * out.w.squaredNorm();
  return out;
}

}  // namespace

SrModel train_sr(const SrTrainConfig& config, const std::vector<SpatialMap>& luminance_images,
                 SrTrainReport* report) {
  for (const LayerConfig& l : config.layers)
    if (l.subsampling > 0.0)
      throw std::invalid_argument("train_sr: layers must not pool");

  SrPatchSet set = build_sr_patchset(luminance_images, config.patches, config.patch_size,
                                     config.scale, config.seed);
  NetworkParams net = unsupervised_init(config.layers, 1, set.inputs,
                                        config.patches_per_layer, config.seed + 5,
                                        config.kmeans_iters);

  TrainState state;
  state.eta = config.eta0;
  state.momentum = config.momentum;
  state.learn_alpha = config.learn_alpha;
  state.seed = config.seed + 17;
  state.active.assign(set.inputs.size(), 1);
  for (size_t j = 0; j < net.layers.size(); ++j) {
    Matrix patches = sample_normalized_patches(net, j, net.layers[j].patch_size, set.inputs,
                                               config.patches_per_layer,
                                               config.seed + 31 * (j + 1));
    state.precond.push_back(compute_preconditioner(patches, config.precond_ridge));
    state.velocity.push_back(
        Matrix::Zero(net.layers[j].patch_dim(), net.layers[j].filters_out()));
  }

  SrHeadSolve head = solve_sr_head(net, set, config.lambda);
  if (report) report->objective_history.push_back(head.objective);
  NetworkParams snap_net = net;
  Vector snap_w = head.w;
  double prev_obj = head.objective;

  std::vector<int> idx(set.inputs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const LossSpec loss{LossKind::Square};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    std::mt19937_64 rng(state.seed + 101 * (epoch + 1));
    std::shuffle(idx.begin(), idx.end(), rng);

    for (size_t start = 0; start < idx.size(); start += config.batch_size) {
      const int bsz = static_cast<int>(
          std::min<size_t>(config.batch_size, idx.size() - start));
      std::vector<GradientSet> grads(bsz);
      parallel_for(bsz, [&](int b) {
        const int i = idx[start + b];
        std::vector<LayerCache> caches;
        SpatialMap f = network_forward(net, set.inputs[i], &caches);
        Vector y = (set.targets[i].data - set.inputs[i].data).row(0).transpose();
        Vector yhat = f.data.transpose() * head.w;
        // per-pixel square loss, averaged over the patch grid
        Vector lp(y.size());
        for (Eigen::Index z = 0; z < y.size(); ++z)
          lp[z] = loss_value_grad(loss, y[z], yhat[z]).second / y.size();
        Matrix U = head.w * lp.transpose();
        grads[b] = network_backward_cotangent(net, caches, std::move(U), state.learn_alpha);
      });

      const double scale = 1.0 / bsz;
      for (size_t j = 0; j < net.layers.size(); ++j) {
        Matrix sum = Matrix::Zero(net.layers[j].patch_dim(), net.layers[j].filters_out());
        double dalpha = 0.0;
        for (int b = 0; b < bsz; ++b) {
          sum += grads[b].dZ[j];
          if (state.learn_alpha) dalpha += grads[b].dAlpha[j];
        }
        LayerParams& layer = net.layers[j];
        state.velocity[j] = state.momentum * state.velocity[j] + scale * sum;
        Matrix Z = layer.filters;
        for (int col = 0; col < Z.cols(); ++col)
          Z.col(col) = sphere_step(Z.col(col), state.velocity[j].col(col),
                                   state.precond[j].Q, state.eta);
        layer.filters = std::move(Z);
        if (state.learn_alpha) {
          const double next = layer.kernel.alpha - state.eta * scale * dalpha;
          layer.kernel = KernelSpec(std::max(state.alpha_floor, next));
        }
        layer.rebuild_whitening();
      }
    }

    head = solve_sr_head(net, set, config.lambda);
    if (report) report->objective_history.push_back(head.objective);
    if (head.objective <= prev_obj) {
      snap_net = net;
      snap_w = head.w;
      prev_obj = head.objective;
    } else {
      net = snap_net;
      head.w = snap_w;
      state.eta *= 0.5;
      for (Matrix& v : state.velocity) v.setZero();
      if (state.eta < 1e-8) break;
    }
  }

  SrModel model;
  model.net = std::move(snap_net);
  model.head = std::move(snap_w);
  model.head_lambda = config.lambda;
  model.scale = config.scale;
  return model;
}

namespace {

// Per-pixel head response over a large map, computed on overlapping tiles so
// the patch matrices stay small. A k-layer stack of e x e patches with no
// pooling has receptive radius sum(e_j/2); interior tile pixels therefore see
// exactly the data they would in a whole-image pass, and border tiles keep
// the zero padding of the full image.
Matrix tiled_head_response(const NetworkParams& net, const Vector& head,
                           const SpatialMap& x, int tile) {
  int halo = 0;
  for (const LayerParams& l : net.layers) halo += l.patch_size / 2;

  const int h = x.height, w = x.width;
  Matrix out(1, static_cast<Eigen::Index>(h) * w);
  const int tiles_r = (h + tile - 1) / tile;
  const int tiles_c = (w + tile - 1) / tile;
  parallel_for(tiles_r * tiles_c, [&](int t) {
    const int tr = t / tiles_c, tc = t % tiles_c;
    const int r0 = tr * tile, c0 = tc * tile;
    const int r1 = std::min(h, r0 + tile), c1 = std::min(w, c0 + tile);
    const int er0 = std::max(0, r0 - halo), ec0 = std::max(0, c0 - halo);
    const int er1 = std::min(h, r1 + halo), ec1 = std::min(w, c1 + halo);

    SpatialMap patch(x.channels, er1 - er0, ec1 - ec0);
    for (int r = er0; r < er1; ++r)
      for (int c = ec0; c < ec1; ++c)
        for (int ch = 0; ch < x.channels; ++ch)
          patch.at(ch, r - er0, c - ec0) = x.at(ch, r, c);
    // pixels within `halo` of the crop edge see zero padding instead of the
    // real neighborhood, so only tiles at the image border may keep them
    SpatialMap f = network_forward(net, patch);
    Vector resp = f.data.transpose() * head;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c)
        out(0, r * w + c) = resp[(r - er0) * patch.width + (c - ec0)];
  });
  return out;
}

}  // namespace

SpatialMap sr_upscale_luminance(const SrModel& model, const SpatialMap& luminance,
                                int factor) {
  if (luminance.channels != 1)
    throw std::invalid_argument("sr_upscale_luminance: expected 1 channel");
  if (factor == 3) {
    SpatialMap twice = sr_upscale_luminance(model, luminance, 2);
    SpatialMap four = sr_upscale_luminance(model, twice, 2);
    return bicubic_resize(four, 0.75, /*antialias=*/true);
  }
  if (factor != 2) throw std::invalid_argument("sr_upscale_luminance: unsupported factor");

  SpatialMap up = bicubic_resize(luminance, 2.0, /*antialias=*/true);
  SpatialMap mean = box_filter_mean(up, model.mean_filter);
  SpatialMap x = up;
  x.data -= mean.data;
  // The head predicts the correction to the bicubic estimate, so a zero head
  // reproduces the bicubic baseline exactly.
  SpatialMap out = up;
  out.data.row(0) += tiled_head_response(model.net, model.head, x, 96);
  return out;
}

SpatialMap sr_upscale(const SrModel& model, const SpatialMap& rgb, int factor) {
  if (factor != 2 && factor != 3) throw std::invalid_argument("sr_upscale: factor must be 2 or 3");
  if (rgb.channels == 1) return sr_upscale_luminance(model, rgb, factor);
  SpatialMap ycc = rgb_to_ycbcr(rgb);
  SpatialMap y(1, ycc.height, ycc.width);
  y.data.row(0) = ycc.data.row(0);
  SpatialMap y_up = sr_upscale_luminance(model, y, factor);

  SpatialMap chroma(2, ycc.height, ycc.width);
  chroma.data = ycc.data.bottomRows(2);
  SpatialMap c_up = bicubic_resize(chroma, static_cast<double>(factor), /*antialias=*/true);
  if (c_up.height != y_up.height || c_up.width != y_up.width)
    c_up = bicubic_resize(chroma, static_cast<double>(y_up.height) / ycc.height, true);

  SpatialMap out(3, y_up.height, y_up.width);
  out.data.row(0) = y_up.data.row(0);
  out.data.bottomRows(2) = c_up.data;
  return ycbcr_to_rgb(out);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double psnr(const SpatialMap& ref, const SpatialMap& est, double peak) {
  if (!ref.same_shape(est)) throw std::invalid_argument("psnr: shape mismatch");
  const double mse = (ref.data - est.data).squaredNorm() / ref.data.size();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

SpatialMap shave_border(const SpatialMap& image, int border) {
  if (border < 0 || image.height <= 2 * border || image.width <= 2 * border)
    throw std::invalid_argument("shave_border: border too large");
  SpatialMap out(image.channels, image.height - 2 * border, image.width - 2 * border);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < image.channels; ++ch)
        out.at(ch, r, c) = image.at(ch, r + border, c + border);
  return out;
}

double ssim(const SpatialMap& ref, const SpatialMap& est) {
  if (!ref.same_shape(est)) throw std::invalid_argument("ssim: shape mismatch");
  if (ref.channels != 1) throw std::invalid_argument("ssim: expected luminance (1 channel)");
  const int win = 11;
  if (ref.height < win || ref.width < win)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  static const std::vector<double> g = [] {
    std::vector<double> k(11 * 11);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int r = 0; r < 11; ++r)
      for (int c = 0; c < 11; ++c) {
        const double dy = r - 5, dx = c - 5;
        k[r * 11 + c] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
        sum += k[r * 11 + c];
      }
    for (double& v : k) v /= sum;
    return k;
  }();

  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + win <= ref.height; ++r) {
    for (int c = 0; c + win <= ref.width; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int dr = 0; dr < win; ++dr)
        for (int dc = 0; dc < win; ++dc) {
          const double w = g[dr * 11 + dc];
          const double x = ref.at(0, r + dr, c + dc);
          const double y = est.at(0, r + dr, c + dc);
          mx += w * x;
          my += w * y;
          xx += w * x * x;
          yy += w * y * y;
          xy += w * x * y;
        }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cxy = xy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / count;
}

}  // namespace sckn
