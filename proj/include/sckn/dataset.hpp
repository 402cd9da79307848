#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sckn/core_maps.hpp"

namespace sckn {

struct LabeledImages {
  std::vector<SpatialMap> images;
  std::vector<int> labels;
  int classes = 0;
};

// Standard CIFAR-10 binary batches. `path` may be a directory holding
// data_batch_{1..5}.bin / test_batch.bin (split selects which) or a single
// .bin file of records. Pixels come back in [0, 1].
LabeledImages load_cifar10(const std::string& path, const std::string& split);

// One subdirectory per class (sorted), PNG/PGM/PPM inside; pixels in [0, 1].
LabeledImages load_image_folder(const std::string& path);

// Flat list of images (no labels), e.g. a super-resolution corpus.
std::vector<SpatialMap> load_image_dir(const std::string& path);

// Oriented sinusoidal gratings with noise; class = orientation bucket.
LabeledImages make_synthetic_textures(int count, int classes, int height, int width,
                                      uint64_t seed);

struct DatasetSpec {
  std::string kind;  // cifar10-binary | image-folder | synthetic
  std::string path;
  std::string split = "train";
  int classes = 10;
  int synthetic_count = 512;
  int synthetic_size = 32;
  uint64_t seed = 0;
};

LabeledImages load_dataset(const DatasetSpec& spec);

}  // namespace sckn
