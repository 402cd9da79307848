#include "sckn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "sckn/image_io.hpp"

namespace fs = std::filesystem;

namespace sckn {

namespace {

constexpr int kCifarRecord = 3073;  // 1 label byte + 3*1024 planar pixels

void append_cifar_file(const std::string& file, LabeledImages& out) {
  std::FILE* f = std::fopen(file.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + file);
  std::fseek(f, 0, SEEK_END);
  const long long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (size % kCifarRecord != 0) {
    std::fclose(f);
    throw FormatError("truncated CIFAR-10 file " + file, size - size % kCifarRecord);
  }
  std::vector<unsigned char> rec(kCifarRecord);
  const long long n = size / kCifarRecord;
  for (long long i = 0; i < n; ++i) {
    if (std::fread(rec.data(), 1, rec.size(), f) != rec.size()) {
      std::fclose(f);
      throw FormatError("short read in " + file, i * kCifarRecord);
    }
    if (rec[0] > 9) {
      std::fclose(f);
      throw FormatError("label byte out of range in " + file, i * kCifarRecord);
    }
    SpatialMap img(3, 32, 32);
    for (int ch = 0; ch < 3; ++ch)
      for (int px = 0; px < 1024; ++px)
        img.data(ch, px) = rec[1 + ch * 1024 + px] / 255.0;
    out.images.push_back(std::move(img));
    out.labels.push_back(rec[0]);
  }
  std::fclose(f);
}

}  // namespace

LabeledImages load_cifar10(const std::string& path, const std::string& split) {
  LabeledImages out;
  out.classes = 10;
  if (fs::is_directory(path)) {
    if (split == "train") {
      for (int b = 1; b <= 5; ++b)
        append_cifar_file(path + "/data_batch_" + std::to_string(b) + ".bin", out);
    } else if (split == "test") {
      append_cifar_file(path + "/test_batch.bin", out);
    } else {
      throw std::invalid_argument("load_cifar10: split must be train or test");
    }
  } else {
    append_cifar_file(path, out);
  }
  return out;
}

LabeledImages load_image_folder(const std::string& path) {
  if (!fs::is_directory(path)) throw DataError("load_image_folder: not a directory: " + path);
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw DataError("load_image_folder: no class subdirectories");

  LabeledImages out;
  out.classes = static_cast<int>(classes.size());
  for (size_t k = 0; k < classes.size(); ++k) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path + "/" + classes[k]))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) {
      SpatialMap img = read_image(f);
      img.data /= 255.0;
      out.images.push_back(std::move(img));
      out.labels.push_back(static_cast<int>(k));
    }
  }
  if (out.images.empty()) throw DataError("load_image_folder: no images found");
  return out;
}

std::vector<SpatialMap> load_image_dir(const std::string& path) {
  if (!fs::is_directory(path)) throw DataError("load_image_dir: not a directory: " + path);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<SpatialMap> out;
  for (const std::string& f : files) out.push_back(read_image(f));
  if (out.empty()) throw DataError("load_image_dir: no images in " + path);
  return out;
}

LabeledImages make_synthetic_textures(int count, int classes, int height, int width,
                                      uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("make_synthetic_textures: classes >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);

  LabeledImages out;
  out.classes = classes;
  for (int i = 0; i < count; ++i) {
    const int label = i % classes;
    const double theta = M_PI * (label + 0.15 * (unif(rng) - 0.5)) / classes;
    const double freq = 0.5 + 0.4 * unif(rng);
    const double phase = 2 * M_PI * unif(rng);
    SpatialMap img(3, height, width);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        const double t = freq * (std::cos(theta) * r + std::sin(theta) * c) + phase;
        const double v = 0.5 + 0.5 * std::sin(t);
        for (int ch = 0; ch < 3; ++ch) {
          const double x = v + noise(rng);
          img.at(ch, r, c) = std::clamp(x, 0.0, 1.0);
        }
      }
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

LabeledImages load_dataset(const DatasetSpec& spec) {
  if (spec.kind == "cifar10-binary") return load_cifar10(spec.path, spec.split);
  if (spec.kind == "image-folder") return load_image_folder(spec.path);
  if (spec.kind == "synthetic")
    return make_synthetic_textures(spec.synthetic_count, spec.classes, spec.synthetic_size,
                                   spec.synthetic_size, spec.seed);
  throw std::invalid_argument("unknown dataset kind: " + spec.kind);
}

}  // namespace sckn
