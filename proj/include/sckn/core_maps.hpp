#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sckn/errors.hpp"

namespace sckn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Offset added to every patch-column norm in the map-level forward pass.
inline constexpr double kNormOffset = 1e-5;

// A p-channel feature map on a rectangular grid. Storage is one column per
// pixel in row-major order, one row per channel.
struct SpatialMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  Matrix data;  // channels x (height*width)

  SpatialMap() = default;
  SpatialMap(int channels_, int height_, int width_)
      : channels(channels_), height(height_), width(width_),
        data(Matrix::Zero(channels_, height_ * width_)) {}
  SpatialMap(int channels_, int height_, int width_, Matrix data_)
      : channels(channels_), height(height_), width(width_), data(std::move(data_)) {}

  int pixels() const { return height * width; }
  double& at(int c, int r, int x) { return data(c, r * width + x); }
  double at(int c, int r, int x) const { return data(c, r * width + x); }
  bool same_shape(const SpatialMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// All overlapping patches of a map, one column per pixel of the source grid.
struct PatchMatrix {
  int patch_dim = 0;   // channels * patch_size^2
  int patch_size = 0;
  int channels = 0;    // source map channels
  int height = 0;      // source grid
  int width = 0;
  Matrix data;         // patch_dim x (height*width)

  int columns() const { return height * width; }
};

// Gaussian pooling geometry. Output centers sit at (i*s, k*s) in input pixel
// units; a weight exp(-beta*d^2) connects every input pixel within
// truncation_radius of a center.
struct PoolSpec {
  double subsampling = 1.0;
  double beta = 0.5;
  double truncation_radius = 2.0;
  bool normalize = false;

  // beta = 1/(2 sigma^2) with sigma = s, truncation at 2 sigma.
  static PoolSpec from_subsampling(double s);
};

// Sized pooling operator with precomputed taps for a fixed input grid.
class PoolOperator {
 public:
  PoolOperator(const PoolSpec& spec, int in_height, int in_width);

  int in_height() const { return in_h_; }
  int in_width() const { return in_w_; }
  int out_height() const { return out_h_; }
  int out_width() const { return out_w_; }
  const PoolSpec& spec() const { return spec_; }

  // Both act on channels x pixels matrices; rows are carried through.
  Matrix apply(const Matrix& in) const;
  Matrix apply_adjoint(const Matrix& out) const;

 private:
  struct Tap {
    int in_index;
    double weight;
  };
  PoolSpec spec_;
  int in_h_, in_w_, out_h_, out_w_;
  std::vector<int> offsets_;  // CSR over output pixels
  std::vector<Tap> taps_;
};

PatchMatrix extract_patches(const SpatialMap& map, int patch_size);
SpatialMap combine_patches(const PatchMatrix& patches);

SpatialMap pool_forward(const SpatialMap& map, const PoolOperator& op);
SpatialMap pool_adjoint(const SpatialMap& map, const PoolOperator& op);

// l2 norm of each patch column plus the training offset of 1e-5.
Vector column_norms(const PatchMatrix& patches);

}  // namespace sckn
