#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sckn/optim.hpp"

namespace sckn {

// ---------------------------------------------------------------------------
// Local whitening (classification preprocessing)
// ---------------------------------------------------------------------------

struct WhitenStats {
  int neighborhood = 5;  // box size for local centering and ZCA patches
  int channels = 0;
  Matrix zca;            // (c*w*w) x (c*w*w), (Cov + ridge I)^{-1/2}
  bool fitted = false;
};

WhitenStats fit_whitening(const std::vector<SpatialMap>& images, int neighborhood = 5,
                          int sample_patches = 50000, double ridge = 1e-3, uint64_t seed = 0);

// Box-mean centering per channel followed by the center-pixel rows of the ZCA
// transform; output has the same shape as the input.
SpatialMap whiten_local(const SpatialMap& image, const WhitenStats& stats);

// Centering-only helper, exposed for the whitening tests.
SpatialMap center_local(const SpatialMap& image, int neighborhood);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ClassifierHead {
  NetworkParams net;
  LinearModel model;  // one row per class
  int classes = 0;
  WhitenStats whitening;
};

struct ClassifierConfig {
  std::vector<LayerConfig> layers;
  FitSchedule schedule;
  std::vector<double> lambda_grid;  // empty -> {2^i/n, i=-4..4}
  int patches_per_layer = 100000;
  int kmeans_iters = 50;
  double val_fraction = 0.2;
  int whiten_neighborhood = 5;
  uint64_t seed = 0;
};

struct ClassifierMetrics {
  double val_error_pct = 0.0;
  double chosen_lambda = 0.0;
  double unsup_train_error_pct = 0.0;
  double final_train_error_pct = 0.0;
  std::vector<EpochRecord> history;
};

ClassifierHead train_classifier(const ClassifierConfig& config,
                                const std::vector<SpatialMap>& images,
                                const std::vector<int>& labels, int num_classes,
                                ClassifierMetrics* metrics = nullptr);

int predict(const ClassifierHead& head, const SpatialMap& image);
double evaluate_error(const ClassifierHead& head, const std::vector<SpatialMap>& images,
                      const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Super-resolution
// ---------------------------------------------------------------------------

// Keys cubic (a = -0.5), symmetric boundary extension, antialias widens the
// kernel by 1/scale when shrinking. Output size is ceil(size * scale).
SpatialMap bicubic_resize(const SpatialMap& image, double scale, bool antialias = true);

SpatialMap box_filter_mean(const SpatialMap& image, int size);

SpatialMap rgb_to_ycbcr(const SpatialMap& image);
SpatialMap ycbcr_to_rgb(const SpatialMap& image);

struct SrModel {
  NetworkParams net;   // resolution-preserving (no pooling)
  Vector head;         // p_k -> luminance residual, one weight vector
  double head_lambda = 1e-6;
  int scale = 2;
  int mean_filter = 5;
};

struct SrPatchSet {
  std::vector<SpatialMap> inputs;   // mean-removed blurry luminance
  std::vector<SpatialMap> targets;  // luminance minus the same mean component
};

SrPatchSet build_sr_patchset(const std::vector<SpatialMap>& luminance_images, int count,
                             int size, int scale, uint64_t seed);

struct SrTrainConfig {
  std::vector<LayerConfig> layers;  // subsampling must stay 0 (no pooling)
  int patches = 20000;
  int patch_size = 32;
  int scale = 2;
  double lambda = 1e-6;
  int epochs = 2;
  int batch_size = 64;
  double eta0 = 1.0;
  double momentum = 0.9;
  bool learn_alpha = false;
  int patches_per_layer = 20000;
  int kmeans_iters = 30;
  double precond_ridge = 0.01;
  uint64_t seed = 0;
};

struct SrTrainReport {
  std::vector<double> objective_history;
};

SrModel train_sr(const SrTrainConfig& config, const std::vector<SpatialMap>& luminance_images,
                 SrTrainReport* report = nullptr);

// Upscale an RGB image. Luminance goes through the network head, chroma is
// resized bicubically; factor 3 composes the x2 model twice and downscales by
// 3/4.
SpatialMap sr_upscale(const SrModel& model, const SpatialMap& rgb, int factor);

// Luminance path only (used by the pipeline identity check and evaluation).
SpatialMap sr_upscale_luminance(const SrModel& model, const SpatialMap& luminance, int factor);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// 10 log10(peak^2 / MSE); +inf when the images match exactly.
double psnr(const SpatialMap& ref, const SpatialMap& est, double peak = 255.0);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01*255)^2,
// C2=(0.03*255)^2, evaluated where the window fits entirely.
double ssim(const SpatialMap& ref, const SpatialMap& est);

SpatialMap shave_border(const SpatialMap& image, int border);

}  // namespace sckn
