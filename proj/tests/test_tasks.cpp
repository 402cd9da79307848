#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "sckn/dataset.hpp"
#include "sckn/tasks.hpp"

using namespace sckn;
using namespace sckn::test;

namespace {

SpatialMap textured_luminance(int h, int w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double th = u(rng) * M_PI, f1 = 0.3 + 0.5 * u(rng), f2 = 0.1 + 0.2 * u(rng);
  SpatialMap img(1, h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = 128 + 60 * std::sin(f1 * (std::cos(th) * r + std::sin(th) * c)) +
                 40 * std::sin(f2 * r * c / 17.0);
      if ((r / 9 + c / 11) % 2) v += 25;  // blocky edges
      img.at(0, r, c) = std::clamp(v, 0.0, 255.0);
    }
  return img;
}

}  // namespace

TEST_CASE("local whitening removes constants and decorrelates patches") {
  std::vector<SpatialMap> train;
  for (int i = 0; i < 12; ++i) {
    SpatialMap im = random_map(3, 20, 20, 900 + i);
    im.data = (im.data.array() * 0.2 + 0.5).matrix();
    train.push_back(im);
  }
  WhitenStats stats = fit_whitening(train, 5, 20000, 1e-3, 1);

  SpatialMap flat(3, 16, 16);
  flat.data.setConstant(0.77);
  CHECK(whiten_local(flat, stats).data.cwiseAbs().maxCoeff() < 1e-10);

  // whitened patch covariance is close to the identity
  const int w = 5, d = 3 * w * w;
  Matrix cols(d, 4000);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<size_t> pick(0, train.size() - 1);
  std::uniform_int_distribution<int> pos(2, 17);
  for (int k = 0; k < 4000; ++k) {
    SpatialMap centered = center_local(train[pick(rng)], w);
    const int r = pos(rng), c = pos(rng);
    for (int ch = 0; ch < 3; ++ch)
      for (int dr = 0; dr < w; ++dr)
        for (int dc = 0; dc < w; ++dc)
          cols(ch * w * w + dr * w + dc, k) = centered.at(ch, r + dr - 2, c + dc - 2);
  }
  Matrix white = stats.zca * cols;
  Vector mean = white.rowwise().mean();
  Matrix cov = white * white.transpose() / 4000.0 - mean * mean.transpose();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) CHECK(std::abs(cov(i, j)) < 0.1);

  // frozen statistics: reapplication is deterministic, refitting is not the
  // same operation
  SpatialMap img = random_map(3, 16, 16, 77);
  SpatialMap a = whiten_local(img, stats);
  SpatialMap b = whiten_local(img, stats);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
  WhitenStats other = fit_whitening({train.begin(), train.begin() + 4}, 5, 20000, 1e-3, 9);
  CHECK((whiten_local(img, other).data - a.data).cwiseAbs().maxCoeff() > 0.0);

  WhitenStats unfitted;
  CHECK_THROWS_AS(whiten_local(img, unfitted), std::invalid_argument);
}

TEST_CASE("bicubic resize: identity, constants, and linear reproduction") {
  SpatialMap img = random_map(3, 9, 11, 5);
  SpatialMap same = bicubic_resize(img, 1.0, true);
  CHECK((same.data - img.data).cwiseAbs().maxCoeff() == 0.0);

  SpatialMap flat(1, 8, 8);
  flat.data.setConstant(3.25);
  for (double s : {0.5, 0.75, 2.0, 3.0}) {
    SpatialMap out = bicubic_resize(flat, s, true);
    CHECK(out.height == static_cast<int>(std::ceil(8 * s - 1e-9)));
    CHECK((out.data.array() - 3.25).abs().maxCoeff() < 1e-12);
  }

  // a cubic kernel reproduces linear ramps away from the border
  SpatialMap ramp(1, 6, 16);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 16; ++c) ramp.at(0, r, c) = 2.0 * c + 1.0;
  SpatialMap up = bicubic_resize(ramp, 2.0, false);
  for (int c = 4; c < up.width - 4; ++c) {
    const double src = (c + 0.5) / 2.0 - 0.5;
    CHECK(std::abs(up.at(0, 3, c) - (2.0 * src + 1.0)) < 1e-6);
  }

  CHECK_THROWS_AS(bicubic_resize(img, 0.0, true), std::invalid_argument);
  CHECK_THROWS_AS(bicubic_resize(img, -2.0, true), std::invalid_argument);
}

TEST_CASE("psnr formula and boundary cases") {
  SpatialMap a = textured_luminance(24, 24, 1);
  CHECK(std::isinf(psnr(a, a)));

  SpatialMap b = a;
  b.data.array() += 1.0;  // uniform |diff| = 1
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-12));
  CHECK(psnr(a, b) == doctest::Approx(48.1308).epsilon(1e-4));

  SpatialMap c = a;
  c.data.array() += 255.0;  // MSE = 255^2
  CHECK(psnr(a, c) == doctest::Approx(0.0));

  SpatialMap wrong(1, 8, 8);
  CHECK_THROWS_AS(psnr(a, wrong), std::invalid_argument);

  // strictly decreasing under growing iid noise
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1.0, 4.0, 16.0}) {
    SpatialMap noisy = a;
    noisy.data += sigma * random_matrix(1, 24 * 24, 17);
    const double v = psnr(a, noisy);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim: identity, inversion, symmetry") {
  SpatialMap a = textured_luminance(32, 32, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0));

  SpatialMap inv = a;
  inv.data = (255.0 - a.data.array()).matrix();
  CHECK(ssim(a, inv) < 0.5);

  SpatialMap b = a;
  b.data += 10.0 * random_matrix(1, 32 * 32, 4);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) >= -1.0);
}

TEST_CASE("BT.601 studio-swing color transform") {
  SpatialMap white(3, 1, 1);
  white.data.setConstant(255.0);
  CHECK(rgb_to_ycbcr(white).data(0, 0) == doctest::Approx(235.0).epsilon(1e-6));
  SpatialMap black(3, 1, 1);
  CHECK(rgb_to_ycbcr(black).data(0, 0) == doctest::Approx(16.0).epsilon(1e-6));

  SpatialMap rgb = random_map(3, 5, 7, 6);
  rgb.data = (rgb.data.array().abs() * 60.0).matrix();
  SpatialMap back = ycbcr_to_rgb(rgb_to_ycbcr(rgb));
  CHECK((back.data - rgb.data).cwiseAbs().maxCoeff() < 1e-6);

  SpatialMap gray(1, 4, 4);
  CHECK_THROWS_AS(rgb_to_ycbcr(gray), std::invalid_argument);
}

TEST_CASE("sr patch construction removes the local mean consistently") {
  std::vector<SpatialMap> imgs{textured_luminance(64, 64, 7), textured_luminance(48, 80, 8)};
  SrPatchSet set = build_sr_patchset(imgs, 20, 16, 2, 5);
  CHECK(set.inputs.size() == 20);
  for (int i = 0; i < 20; ++i) {
    CHECK(set.inputs[i].height == 16);
    CHECK(set.targets[i].height == 16);
  }
  SrPatchSet again = build_sr_patchset(imgs, 20, 16, 2, 5);
  CHECK((set.inputs[3].data - again.inputs[3].data).cwiseAbs().maxCoeff() == 0.0);

  std::vector<SpatialMap> flat{SpatialMap(1, 40, 40)};
  flat[0].data.setConstant(100.0);
  SrPatchSet fs = build_sr_patchset(flat, 4, 16, 2, 1);
  for (int i = 0; i < 4; ++i) {
    CHECK(fs.inputs[i].data.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fs.targets[i].data.cwiseAbs().maxCoeff() < 1e-9);
  }

  std::vector<SpatialMap> tiny{SpatialMap(1, 8, 8)};
  CHECK_THROWS_AS(build_sr_patchset(tiny, 4, 16, 2, 1), DataError);
}

TEST_CASE("zero-head super-resolution reproduces the bicubic baseline") {
  NetworkParams net;
  net.input_channels = 1;
  net.layers.push_back(LayerParams(random_unit_columns(9, 6, 31), KernelSpec(4.0), 3,
                                   std::nullopt, 1e-3));
  SrModel model;
  model.net = net;
  model.head = Vector::Zero(6);
  model.scale = 2;

  SpatialMap lum = textured_luminance(24, 20, 9);
  SpatialMap up = sr_upscale_luminance(model, lum, 2);
  SpatialMap baseline = bicubic_resize(lum, 2.0, true);
  CHECK(up.height == 48);
  CHECK(up.width == 40);
  CHECK((up.data - baseline.data).cwiseAbs().maxCoeff() == 0.0);

  // full RGB pipeline with a zero head equals plain bicubic (the color
  // transform is affine and bicubic preserves affine offsets)
  SpatialMap rgb(3, 16, 16);
  rgb.data = 255.0 * (random_matrix(3, 256, 10).array() * 0.2 + 0.5).matrix();
  SpatialMap out2 = sr_upscale(model, rgb, 2);
  SpatialMap direct = bicubic_resize(rgb, 2.0, true);
  CHECK((out2.data - direct.data).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(out2.height == 32);

  SpatialMap out3 = sr_upscale(model, rgb, 3);
  CHECK(out3.height == 48);
  CHECK(out3.width == 48);
  CHECK_THROWS_AS(sr_upscale(model, rgb, 4), std::invalid_argument);
}

TEST_CASE("shave_border crops evenly") {
  SpatialMap img = random_map(2, 10, 12, 40);
  SpatialMap s = shave_border(img, 2);
  CHECK(s.height == 6);
  CHECK(s.width == 8);
  CHECK(s.at(0, 0, 0) == img.at(0, 2, 2));
  CHECK_THROWS_AS(shave_border(img, 5), std::invalid_argument);
}

TEST_CASE("evaluate_error arithmetic and tie-breaking through a rigged head") {
  NetworkParams net;
  net.input_channels = 3;
  net.layers.push_back(LayerParams(random_unit_columns(27, 4, 51), KernelSpec(4.0), 3,
                                   PoolSpec::from_subsampling(2.0), 1e-3));

  std::vector<SpatialMap> imgs;
  for (int i = 0; i < 8; ++i) {
    SpatialMap im = random_map(3, 12, 12, 800 + i);
    im.data = (im.data.array() * 0.2 + 0.5).matrix();
    imgs.push_back(im);
  }
  WhitenStats stats = fit_whitening(imgs, 5, 8000, 1e-3, 3);

  ClassifierHead head;
  head.net = net;
  head.classes = 3;
  head.whitening = stats;
  SpatialMap f = network_forward(net, whiten_local(imgs[0], stats));
  head.model = {Matrix::Zero(3, f.data.size()), 0.01};

  // zero scores tie on every class; the lowest index wins
  CHECK(predict(head, imgs[0]) == 0);
  std::vector<int> zeros(8, 0);
  CHECK(evaluate_error(head, imgs, zeros) == doctest::Approx(0.0));
  std::vector<int> ones(8, 1);
  CHECK(evaluate_error(head, imgs, ones) == doctest::Approx(100.0));
  std::vector<int> mixed(8, 0);
  mixed[5] = 2;
  CHECK(evaluate_error(head, imgs, mixed) == doctest::Approx(12.5));
  CHECK_THROWS_AS(evaluate_error(head, {}, {}), DataError);

  // argmax is invariant to positive rescaling of the scores
  head.model.W = random_matrix(3, f.data.size(), 53);
  std::vector<int> before;
  for (const SpatialMap& im : imgs) before.push_back(predict(head, im));
  head.model.W *= 17.0;
  for (size_t i = 0; i < imgs.size(); ++i) CHECK(predict(head, imgs[i]) == before[i]);
}

TEST_CASE("a tiny classifier separates oriented gratings") {
  LabeledImages data = make_synthetic_textures(60, 2, 16, 16, 11);

  ClassifierConfig cfg;
  cfg.layers = {{16, 3, 3.0, 4.0, 1e-3, false}};
  cfg.schedule.epochs = 2;
  cfg.schedule.batch_size = 16;
  cfg.schedule.eta0 = 0.5;
  cfg.schedule.precond_patches = 2000;
  cfg.schedule.wsolve_tol = 1e-4;
  cfg.lambda_grid = {1.0 / 48};
  cfg.patches_per_layer = 2000;
  cfg.kmeans_iters = 20;
  cfg.seed = 0;

  ClassifierMetrics metrics;
  ClassifierHead head = train_classifier(cfg, data.images, data.labels, 2, &metrics);
  CHECK(metrics.val_error_pct == doctest::Approx(0.0));
  CHECK(metrics.final_train_error_pct <= metrics.unsup_train_error_pct + 1e-9);

  LabeledImages test = make_synthetic_textures(40, 2, 16, 16, 99);
  CHECK(evaluate_error(head, test.images, test.labels) <= 5.0);
}
