// Command-line front end: unsupervised/supervised training, evaluation,
// super-resolution, gradient auditing, and a small kernel benchmark.

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "CLI11.hpp"

#include "sckn/checkpoint.hpp"
#include "sckn/config.hpp"
#include "sckn/dataset.hpp"
#include "sckn/gradcheck.hpp"
#include "sckn/image_io.hpp"
#include "sckn/parallel.hpp"

using namespace sckn;

namespace {

struct GlobalOpts {
  std::string config_path;
  uint64_t seed = 0;
  int threads = 0;
  bool deterministic = false;
};

Config load_config(const GlobalOpts& g) {
  Config cfg;
  if (!g.config_path.empty()) cfg = Config::from_file(g.config_path);
  return cfg;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<LayerConfig> layer_configs(const Config& cfg) {
  const int nlayers = cfg.get_int("layers", 2);
  auto filters = cfg.get_int_list("filters", {32, 64});
  auto patch_sizes = cfg.get_int_list("patch_sizes", {3});
  auto subsampling = cfg.get_double_list("subsampling", {std::sqrt(2.0), 3.0});
  auto alpha = cfg.get_double_list("alpha", {4.0});
  const double eps = cfg.get_double("epsilon", 1e-3);
  const bool pnorm = cfg.get_bool("pool_normalize", false);

  auto pick = [](const auto& v, int j) { return v[j < static_cast<int>(v.size()) ? j : v.size() - 1]; };
  std::vector<LayerConfig> out;
  for (int j = 0; j < nlayers; ++j) {
    LayerConfig l;
    l.filters = pick(filters, j);
    l.patch_size = pick(patch_sizes, j);
    l.subsampling = pick(subsampling, j);
    l.alpha = pick(alpha, j);
    l.epsilon = eps;
    l.pool_normalize = pnorm;
    out.push_back(l);
  }
  return out;
}

FitSchedule schedule_from(const Config& cfg, uint64_t seed) {
  FitSchedule s;
  s.epochs = cfg.get_int("epochs", 20);
  s.batch_size = cfg.get_int("batch_size", 128);
  s.eta0 = cfg.get_double("eta0", 10.0);
  s.momentum = cfg.get_double("momentum", 0.9);
  s.learn_alpha = cfg.get_bool("learn_alpha", false);
  s.wsolve_tol = cfg.get_double("wsolve_tol", 1e-4);
  s.wsolve_max_epochs = cfg.get_int("wsolve_max_epochs", 2000);
  s.precond_ridge = cfg.get_double("precond_ridge", 0.01);
  s.precond_patches = cfg.get_int("precond_patches", 20000);
  s.seed = seed;
  return s;
}

LabeledImages dataset_from(const Config& cfg, uint64_t seed, const std::string& split) {
  DatasetSpec spec;
  spec.kind = cfg.get_string("data_kind", "synthetic");
  spec.path = cfg.get_string("data_path", "");
  spec.split = cfg.get_string("data_split", split);
  spec.classes = cfg.get_int("classes", spec.kind == "synthetic" ? 4 : 10);
  spec.synthetic_count = cfg.get_int("synthetic_count", 512);
  spec.synthetic_size = cfg.get_int("synthetic_size", 32);
  spec.seed = seed;
  LabeledImages data = load_dataset(spec);

  const int limit = cfg.get_int("limit", 0);
  if (limit > 0 && limit < static_cast<int>(data.images.size())) {
    std::vector<int> order(data.images.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::shuffle(order.begin(), order.end(), rng);
    LabeledImages cut;
    cut.classes = data.classes;
    for (int i = 0; i < limit; ++i) {
      cut.images.push_back(std::move(data.images[order[i]]));
      cut.labels.push_back(data.labels[order[i]]);
    }
    data = std::move(cut);
  }
  return data;
}

int cmd_train_unsup(const GlobalOpts& g, const std::string& out_path) {
  Config cfg = load_config(g);
  const double t0 = now_s();
  LabeledImages data = dataset_from(cfg, g.seed, "train");

  WhitenStats stats = fit_whitening(data.images, cfg.get_int("whiten_neighborhood", 5), 50000,
                                    1e-3, g.seed + 11);
  std::vector<SpatialMap> white(data.images.size());
  parallel_for(static_cast<int>(data.images.size()),
               [&](int i) { white[i] = whiten_local(data.images[i], stats); });

  NetworkParams net = unsupervised_init(layer_configs(cfg), data.images[0].channels, white,
                                        cfg.get_int("patches_per_layer", 100000), g.seed,
                                        cfg.get_int("kmeans_iters", 50));

  Matrix feats = compute_features(net, white);
  Matrix Y = Matrix::Constant(data.classes, feats.cols(), -1.0);
  for (size_t i = 0; i < data.labels.size(); ++i) Y(data.labels[i], i) = 1.0;
  const double lambda = cfg.get_double("lambda", 1.0 / data.images.size());
  LinearModel model = solve_W_convex(feats, Y, LossSpec{LossKind::SquaredHinge}, lambda,
                                     cfg.get_double("wsolve_tol", 1e-4),
                                     cfg.get_int("wsolve_max_epochs", 2000),
                                     WSolver::Incremental, g.seed);

  int wrong = 0;
  Matrix scores = model.W * feats;
  for (size_t i = 0; i < data.labels.size(); ++i) {
    int best = 0;
    for (int c = 1; c < data.classes; ++c)
      if (scores(c, i) > scores(best, i)) best = c;
    if (best != data.labels[i]) ++wrong;
  }
  const double train_err = 100.0 * wrong / data.images.size();

  ClassifierHead head{std::move(net), std::move(model), data.classes, std::move(stats)};
  save_checkpoint(out_path, make_classifier_checkpoint(head, {}, g.seed));
  std::cout << "RESULT cmd=train-unsup images=" << data.images.size()
            << " layers=" << head.net.layers.size() << " lambda=" << lambda
            << " train_err_pct=" << train_err << " time_s=" << (g.deterministic ? 0.0 : now_s() - t0)
            << "\n";
  return 0;
}

int cmd_train_sup(const GlobalOpts& g, const std::string& out_path) {
  Config cfg = load_config(g);
  const double t0 = now_s();
  LabeledImages data = dataset_from(cfg, g.seed, "train");

  ClassifierConfig ccfg;
  ccfg.layers = layer_configs(cfg);
  ccfg.schedule = schedule_from(cfg, g.seed);
  if (cfg.has("lambda")) ccfg.lambda_grid = {cfg.get_double("lambda", 0.0)};
  else ccfg.lambda_grid = cfg.get_double_list("lambda_grid", {});
  ccfg.patches_per_layer = cfg.get_int("patches_per_layer", 100000);
  ccfg.kmeans_iters = cfg.get_int("kmeans_iters", 50);
  ccfg.val_fraction = cfg.get_double("val_fraction", 0.2);
  ccfg.whiten_neighborhood = cfg.get_int("whiten_neighborhood", 5);
  ccfg.seed = g.seed;

  ClassifierMetrics metrics;
  ClassifierHead head = train_classifier(ccfg, data.images, data.labels, data.classes,
                                         &metrics);
  save_checkpoint(out_path, make_classifier_checkpoint(head, metrics.history, g.seed));
  std::cout << "RESULT cmd=train-sup images=" << data.images.size()
            << " lambda=" << metrics.chosen_lambda << " val_err_pct=" << metrics.val_error_pct
            << " unsup_train_err_pct=" << metrics.unsup_train_error_pct
            << " train_err_pct=" << metrics.final_train_error_pct
            << " time_s=" << (g.deterministic ? 0.0 : now_s() - t0) << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path) {
  Config cfg = load_config(g);
  LabeledImages data = dataset_from(cfg, g.seed, "test");
  ClassifierHead head = classifier_from_checkpoint(load_checkpoint(ckpt_path));
  const double err = evaluate_error(head, data.images, data.labels);
  std::cout << "RESULT cmd=eval images=" << data.images.size() << " error_pct=" << err
            << "\n";
  return 0;
}

std::vector<SpatialMap> luminance_corpus(const std::string& dir) {
  std::vector<SpatialMap> lum;
  for (SpatialMap& img : load_image_dir(dir)) {
    if (img.channels == 3) {
      SpatialMap ycc = rgb_to_ycbcr(img);
      SpatialMap y(1, img.height, img.width);
      y.data.row(0) = ycc.data.row(0);
      lum.push_back(std::move(y));
    } else {
      lum.push_back(std::move(img));
    }
  }
  return lum;
}

int cmd_sr_train(const GlobalOpts& g, const std::string& corpus, const std::string& out_path) {
  Config cfg = load_config(g);
  const double t0 = now_s();
  std::vector<SpatialMap> lum = luminance_corpus(corpus);

  SrTrainConfig scfg;
  scfg.layers = layer_configs(cfg);
  for (LayerConfig& l : scfg.layers) l.subsampling = 0.0;  // resolution preserving
  scfg.patches = cfg.get_int("sr_patches", 20000);
  scfg.patch_size = cfg.get_int("sr_patch_size", 32);
  scfg.scale = cfg.get_int("sr_scale", 2);
  scfg.lambda = cfg.get_double("sr_lambda", 1e-6);
  scfg.epochs = cfg.get_int("epochs", 2);
  scfg.batch_size = cfg.get_int("batch_size", 64);
  scfg.eta0 = cfg.get_double("eta0", 1.0);
  scfg.momentum = cfg.get_double("momentum", 0.9);
  scfg.learn_alpha = cfg.get_bool("learn_alpha", false);
  scfg.patches_per_layer = cfg.get_int("patches_per_layer", 20000);
  scfg.kmeans_iters = cfg.get_int("kmeans_iters", 30);
  scfg.precond_ridge = cfg.get_double("precond_ridge", 0.01);
  scfg.seed = g.seed;

  SrTrainReport report;
  SrModel model = train_sr(scfg, lum, &report);
  save_checkpoint(out_path, make_sr_checkpoint(model, g.seed));
  std::cout << "RESULT cmd=sr-train images=" << lum.size() << " patches=" << scfg.patches
            << " objective=" << report.objective_history.back()
            << " time_s=" << (g.deterministic ? 0.0 : now_s() - t0) << "\n";
  return 0;
}

int cmd_sr_apply(const GlobalOpts& g, const std::string& ckpt_path, const std::string& input,
                 const std::string& output, int factor) {
  (void)g;
  SrModel model = sr_from_checkpoint(load_checkpoint(ckpt_path));
  SpatialMap img = read_image(input);
  SpatialMap up = sr_upscale(model, img, factor);
  write_image(output, up);
  std::cout << "RESULT cmd=sr-apply factor=" << factor << " out=" << output
            << " h=" << up.height << " w=" << up.width << "\n";
  return 0;
}

int cmd_gradcheck(const GlobalOpts& g) {
  GradcheckReport r = run_gradcheck(g.seed);
  const bool ok = r.passed();
  std::cout << "RESULT cmd=gradcheck max_rel_z=" << r.max_rel_z
            << " max_rel_alpha=" << r.max_rel_alpha << " step=" << r.step
            << " status=" << (ok ? "ok" : "fail") << "\n";
  return ok ? 0 : 1;
}

int cmd_kernel_bench(const GlobalOpts& g) {
  Config cfg = load_config(g);
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int size = cfg.get_int("synthetic_size", 32);
  const int reps = cfg.get_int("bench_reps", 5);

  NetworkParams net;
  net.input_channels = 3;
  int ch = 3;
  for (const LayerConfig& l : layer_configs(cfg)) {
    Matrix Z(ch * l.patch_size * l.patch_size, l.filters);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z(i) = gauss(rng);
    for (int c = 0; c < Z.cols(); ++c) Z.col(c).normalize();
    std::optional<PoolSpec> pool;
    if (l.subsampling > 0) pool = PoolSpec::from_subsampling(l.subsampling);
    net.layers.emplace_back(std::move(Z), KernelSpec(l.alpha), l.patch_size, pool, l.epsilon);
    ch = l.filters;
  }
  net.validate();

  SpatialMap img(3, size, size);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data(i) = gauss(rng);

  std::vector<LayerCache> caches;
  SpatialMap out = network_forward(net, img, &caches);  // warm up
  double t0 = now_s();
  for (int r = 0; r < reps; ++r) out = network_forward(net, img, &caches);
  const double fwd_ms = 1000.0 * (now_s() - t0) / reps;

  Matrix U(out.channels, out.pixels());
  for (Eigen::Index i = 0; i < U.size(); ++i) U(i) = gauss(rng);
  t0 = now_s();
  for (int r = 0; r < reps; ++r) network_backward_cotangent(net, caches, U, true);
  const double bwd_ms = 1000.0 * (now_s() - t0) / reps;

  // PSD sanity of the network kernel on a few random images
  std::vector<SpatialMap> probes;
  for (int i = 0; i < 6; ++i) {
    SpatialMap p(3, 12, 12);
    for (Eigen::Index k = 0; k < p.data.size(); ++k) p.data(k) = gauss(rng);
    probes.push_back(std::move(p));
  }
  Matrix gram(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) gram(i, j) = network_kernel(net, probes[i], probes[j]);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));

  std::cout << "RESULT cmd=kernel-bench size=" << size << " gram_min_eig="
            << es.eigenvalues().minCoeff();
  if (g.deterministic)
    std::cout << " fwd_ms=na bwd_ms=na";
  else
    std::cout << " fwd_ms=" << fwd_ms << " bwd_ms=" << bwd_ms;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"supervised convolutional kernel networks"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--threads", g.threads, "worker thread cap (0 = all cores)");
  app.add_flag("--deterministic", g.deterministic,
               "fixed reduction order and seeded RNG streams; timings suppressed");

  std::string out_path = "model.sckn";
  std::string ckpt_path, input_path, output_path, corpus_path;
  int factor = 2;

  CLI::App* unsup = app.add_subcommand("train-unsup", "unsupervised initialization + linear fit");
  unsup->add_option("--out", out_path, "checkpoint to write");

  CLI::App* sup = app.add_subcommand("train-sup", "supervised alternating training");
  sup->add_option("--out", out_path, "checkpoint to write");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a classifier checkpoint");
  ev->add_option("--checkpoint", ckpt_path, "trained model")->required();

  CLI::App* srt = app.add_subcommand("sr-train", "train the super-resolution model");
  srt->add_option("--corpus", corpus_path, "directory of training images")->required();
  srt->add_option("--out", out_path, "checkpoint to write");

  CLI::App* sra = app.add_subcommand("sr-apply", "upscale an image");
  sra->add_option("--checkpoint", ckpt_path, "trained model")->required();
  sra->add_option("--input", input_path, "input image")->required();
  sra->add_option("--output", output_path, "output image")->required();
  sra->add_option("--factor", factor, "upscaling factor (2 or 3)");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit of the gradients");
  CLI::App* kb = app.add_subcommand("kernel-bench", "forward/backward timing and kernel sanity");

  // global flags may appear after the subcommand name
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  set_max_threads(g.threads);
  try {
    if (unsup->parsed()) return cmd_train_unsup(g, out_path);
    if (sup->parsed()) return cmd_train_sup(g, out_path);
    if (ev->parsed()) return cmd_eval(g, ckpt_path);
    if (srt->parsed()) return cmd_sr_train(g, corpus_path, out_path);
    if (sra->parsed()) return cmd_sr_apply(g, ckpt_path, input_path, output_path, factor);
    if (gc->parsed()) return cmd_gradcheck(g);
    if (kb->parsed()) return cmd_kernel_bench(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
