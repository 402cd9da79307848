#include "sckn/core_maps.hpp"

#include <cmath>

namespace sckn {

namespace {

int ceil_div(int n, double s) {
  // ceil(n / s) for real s > 0, robust to n/s landing within rounding of an
  // integer (e.g. 32 / (32/23.0)).
  int v = static_cast<int>(std::ceil(static_cast<double>(n) / s - 1e-12));
  return v < 1 ? 1 : v;
}

}  // namespace

PoolSpec PoolSpec::from_subsampling(double s) {
  if (!(s > 0.0)) throw std::invalid_argument("pooling subsampling must be positive");
  PoolSpec spec;
  spec.subsampling = s;
  spec.beta = 1.0 / (2.0 * s * s);
  spec.truncation_radius = 2.0 * s;
  return spec;
}

PoolOperator::PoolOperator(const PoolSpec& spec, int in_height, int in_width)
    : spec_(spec), in_h_(in_height), in_w_(in_width) {
  if (in_height < 1 || in_width < 1) throw std::invalid_argument("pooling input grid is empty");
  if (!(spec.subsampling > 0.0) || !(spec.beta > 0.0) || !(spec.truncation_radius > 0.0))
    throw std::invalid_argument("pooling parameters must be positive");
  out_h_ = ceil_div(in_height, spec.subsampling);
  out_w_ = ceil_div(in_width, spec.subsampling);

  const double r = spec.truncation_radius;
  const double r2 = r * r + 1e-12;
  offsets_.reserve(static_cast<size_t>(out_h_) * out_w_ + 1);
  offsets_.push_back(0);
  for (int i = 0; i < out_h_; ++i) {
    const double cy = i * spec.subsampling;
    const int r0 = std::max(0, static_cast<int>(std::ceil(cy - r)));
    const int r1 = std::min(in_h_ - 1, static_cast<int>(std::floor(cy + r)));
    for (int k = 0; k < out_w_; ++k) {
      const double cx = k * spec.subsampling;
      const int c0 = std::max(0, static_cast<int>(std::ceil(cx - r)));
      const int c1 = std::min(in_w_ - 1, static_cast<int>(std::floor(cx + r)));
      double wsum = 0.0;
      const size_t begin = taps_.size();
      for (int rr = r0; rr <= r1; ++rr) {
        const double dy = rr - cy;
        for (int cc = c0; cc <= c1; ++cc) {
          const double dx = cc - cx;
          const double d2 = dy * dy + dx * dx;
          if (d2 <= r2) {
            const double w = std::exp(-spec.beta * d2);
            taps_.push_back({rr * in_w_ + cc, w});
            wsum += w;
          }
        }
      }
      if (spec.normalize && wsum > 0.0) {
        for (size_t t = begin; t < taps_.size(); ++t) taps_[t].weight /= wsum;
      }
      offsets_.push_back(static_cast<int>(taps_.size()));
    }
  }
}

Matrix PoolOperator::apply(const Matrix& in) const {
  if (in.cols() != static_cast<Eigen::Index>(in_h_) * in_w_)
    throw std::invalid_argument("pool_forward: map does not match operator input grid");
  Matrix out = Matrix::Zero(in.rows(), static_cast<Eigen::Index>(out_h_) * out_w_);
  for (int o = 0; o < out_h_ * out_w_; ++o) {
    auto col = out.col(o);
    for (int t = offsets_[o]; t < offsets_[o + 1]; ++t)
      col.noalias() += taps_[t].weight * in.col(taps_[t].in_index);
  }
  return out;
}

Matrix PoolOperator::apply_adjoint(const Matrix& out) const {
  if (out.cols() != static_cast<Eigen::Index>(out_h_) * out_w_)
    throw std::invalid_argument("pool_adjoint: map does not match operator output grid");
  Matrix in = Matrix::Zero(out.rows(), static_cast<Eigen::Index>(in_h_) * in_w_);
  for (int o = 0; o < out_h_ * out_w_; ++o) {
    auto col = out.col(o);
    for (int t = offsets_[o]; t < offsets_[o + 1]; ++t)
      in.col(taps_[t].in_index).noalias() += taps_[t].weight * col;
  }
  return in;
}

PatchMatrix extract_patches(const SpatialMap& map, int patch_size) {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("patch_size must be odd and >= 1");
  if (patch_size > 2 * std::min(map.height, map.width) + 1)
    throw std::invalid_argument("patch_size too large for map");
  const int e = patch_size;
  const int half = e / 2;
  const int p = map.channels, h = map.height, w = map.width;

  PatchMatrix out;
  out.patch_dim = p * e * e;
  out.patch_size = e;
  out.channels = p;
  out.height = h;
  out.width = w;
  out.data = Matrix::Zero(out.patch_dim, static_cast<Eigen::Index>(h) * w);

  // Window rows that fall outside the map stay zero (zero padding).
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int col = r * w + c;
      for (int dr = 0; dr < e; ++dr) {
        const int rr = r + dr - half;
        if (rr < 0 || rr >= h) continue;
        const int c0 = std::max(0, half - c);
        const int c1 = std::min(e - 1, w - 1 + half - c);
        for (int dc = c0; dc <= c1; ++dc) {
          const int cc = c + dc - half;
          const int src = rr * w + cc;
          for (int ch = 0; ch < p; ++ch)
            out.data(ch * e * e + dr * e + dc, col) = map.data(ch, src);
        }
      }
    }
  }
  return out;
}

SpatialMap combine_patches(const PatchMatrix& patches) {
  const int e = patches.patch_size;
  const int half = e / 2;
  const int p = patches.channels, h = patches.height, w = patches.width;
  if (patches.patch_dim != p * e * e ||
      patches.data.rows() != patches.patch_dim ||
      patches.data.cols() != static_cast<Eigen::Index>(h) * w)
    throw std::invalid_argument("combine_patches: inconsistent patch matrix");

  SpatialMap out(p, h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int col = r * w + c;
      for (int dr = 0; dr < e; ++dr) {
        const int rr = r + dr - half;
        if (rr < 0 || rr >= h) continue;
        const int c0 = std::max(0, half - c);
        const int c1 = std::min(e - 1, w - 1 + half - c);
        for (int dc = c0; dc <= c1; ++dc) {
          const int cc = c + dc - half;
          const int dst = rr * w + cc;
          for (int ch = 0; ch < p; ++ch)
            out.data(ch, dst) += patches.data(ch * e * e + dr * e + dc, col);
        }
      }
    }
  }
  return out;
}

SpatialMap pool_forward(const SpatialMap& map, const PoolOperator& op) {
  if (map.height != op.in_height() || map.width != op.in_width())
    throw std::invalid_argument("pool_forward: map shape mismatch");
  return SpatialMap(map.channels, op.out_height(), op.out_width(), op.apply(map.data));
}

SpatialMap pool_adjoint(const SpatialMap& map, const PoolOperator& op) {
  if (map.height != op.out_height() || map.width != op.out_width())
    throw std::invalid_argument("pool_adjoint: map shape mismatch");
  return SpatialMap(map.channels, op.in_height(), op.in_width(), op.apply_adjoint(map.data));
}

Vector column_norms(const PatchMatrix& patches) {
  return patches.data.colwise().norm().transpose().array() + kNormOffset;
}

}  // namespace sckn
