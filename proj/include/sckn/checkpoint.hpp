#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sckn/optim.hpp"
#include "sckn/tasks.hpp"

namespace sckn {

// Versioned binary container. Layout (little-endian):
//   magic "SCKN", u32 version, u32 input_channels, u32 layer_count,
//   per layer: u32 patch_dim, u32 filters, u32 patch_size, f64 alpha,
//              f64 epsilon, u8 has_pool [f64 subsampling, f64 beta,
//              f64 truncation_radius, u8 normalize], filters f64 column-major,
//   u8 head_kind (0 none, 1 classifier, 2 super-resolution) + head block,
//   u32 history_count { f64 objective, u8 accepted, f64 eta, u32 active },
//   u64 rng_seed.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  enum class HeadKind : uint8_t { None = 0, Classifier = 1, Sr = 2 };

  std::optional<NetworkParams> net;
  HeadKind head_kind = HeadKind::None;

  // classifier head
  Matrix W;
  double lambda = 0.0;
  int classes = 0;
  WhitenStats whitening;

  // super-resolution head
  Vector sr_head;
  double sr_lambda = 0.0;
  int sr_scale = 2;
  int sr_mean_filter = 5;

  std::vector<EpochRecord> history;
  uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_classifier_checkpoint(const ClassifierHead& head,
                                      std::vector<EpochRecord> history, uint64_t seed);
ClassifierHead classifier_from_checkpoint(const Checkpoint& ckpt);

Checkpoint make_sr_checkpoint(const SrModel& model, uint64_t seed);
SrModel sr_from_checkpoint(const Checkpoint& ckpt);

}  // namespace sckn
