#pragma once

// Feature calibration driven by the activation map.
//
// Pixel-wise:  X_hat[c] = A (.) X[c] + X[c]
// Region:      X_tilde  = X_r + X_inner - X_outer, where
//   X_r      = RoI pool of the proposal,
//   X_inner  = RoI pool of the proposal with the inner box zeroed,
//   X_outer  = RoI pool of the outer box with the proposal zeroed.
// The inner box is the placement inside the proposal with the largest
// activation mass; the outer box shares its center. All boxes live on the
// feature-map grid.

#include "fcnet/activation.hpp"
#include "fcnet/box.hpp"
#include "fcnet/tensor.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace fcnet {

/// Height and width ratios that performed best for region calibration.
inline constexpr double kDefaultHeightRatio = 1.8;
inline constexpr double kDefaultWidthRatio = 1.0;

struct CalibrationRegions {
  Box proposal;
  Box inner;
  Box outer;
  double r_h = kDefaultHeightRatio;
  double r_w = kDefaultWidthRatio;
};

enum class PoolMode { Max, Mean };

namespace detail {

inline int scaled_extent(int extent, double factor) {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(extent) * factor)));
}

/// Half-open cell range covered by bin `b` of `bins` over `extent` cells.
inline std::pair<int, int> pool_bin(int b, int extent, int bins) {
  const int start = static_cast<int>((long(b) * extent) / bins);
  int end = static_cast<int>((long(b + 1) * extent) / bins);
  if (end <= start) end = start + 1;
  return {start, end};
}

inline bool in_box(const std::optional<Box>& box, int y, int x) {
  return box && y >= box->y0 && y < box->y1 && x >= box->x0 && x < box->x1;
}

template <typename Scalar>
void check_roi(const BasicTensor<Scalar>& features, const Box& roi, const char* what) {
  require_rank(features, 3, what);
  if (roi.empty() || !roi.within(static_cast<int>(features.dim(1)), static_cast<int>(features.dim(2)))) {
    throw BoxError(std::string(what) + ": roi " + to_string(roi) + " outside " + std::to_string(features.dim(1)) +
                   "x" + std::to_string(features.dim(2)) + " feature map");
  }
}

// Visits every (channel, bin) with the cell that wins the bin under `mode`
// (max: first maximum in row-major order; masked cells read as 0), or every
// cell of the bin with weight 1/count for mean mode.
template <typename Scalar, typename Visit>
void for_each_pool_route(const BasicTensor<Scalar>& features, const Box& roi, const std::optional<Box>& zero_box,
                         int out_size, PoolMode mode, Visit&& visit) {
  const int h = roi.height(), w = roi.width();
  const Index channels = features.dim(0);
  for (Index c = 0; c < channels; ++c) {
    for (int by = 0; by < out_size; ++by) {
      const auto [ys, ye] = pool_bin(by, h, out_size);
      for (int bx = 0; bx < out_size; ++bx) {
        const auto [xs, xe] = pool_bin(bx, w, out_size);
        if (mode == PoolMode::Max) {
          int best_y = roi.y0 + ys, best_x = roi.x0 + xs;
          Scalar best = in_box(zero_box, best_y, best_x) ? Scalar(0) : features(c, best_y, best_x);
          for (int y = roi.y0 + ys; y < roi.y0 + ye; ++y) {
            for (int x = roi.x0 + xs; x < roi.x0 + xe; ++x) {
              const Scalar v = in_box(zero_box, y, x) ? Scalar(0) : features(c, y, x);
              if (v > best) {
                best = v;
                best_y = y;
                best_x = x;
              }
            }
          }
          visit(c, by, bx, best_y, best_x, in_box(zero_box, best_y, best_x), Scalar(1));
        } else {
          const Scalar weight = Scalar(1) / Scalar((ye - ys) * (xe - xs));
          for (int y = roi.y0 + ys; y < roi.y0 + ye; ++y) {
            for (int x = roi.x0 + xs; x < roi.x0 + xe; ++x) {
              visit(c, by, bx, y, x, in_box(zero_box, y, x), weight);
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Inner box = best inner-sized placement inside the proposal (ties: lowest
/// row, then lowest column). Outer box = outer-sized box centered on the
/// inner box, clipped to the map and then grown to cover the proposal.
template <typename Scalar>
CalibrationRegions find_calibration_regions(const BasicActivationMap<Scalar>& map, const Box& proposal, double r_h,
                                            double r_w) {
  const int rows = static_cast<int>(map.rows()), cols = static_cast<int>(map.cols());
  if (proposal.empty() || !proposal.within(rows, cols)) {
    throw BoxError("find_calibration_regions: proposal " + to_string(proposal) + " outside " +
                   std::to_string(rows) + "x" + std::to_string(cols) + " map");
  }
  if (!(r_h >= 1.0) || !(r_w >= 1.0)) {
    throw std::invalid_argument("find_calibration_regions: ratios must be >= 1");
  }
  const int h = proposal.height(), w = proposal.width();
  const int inner_h = std::min(h, detail::scaled_extent(h, 1.0 / r_h));
  const int inner_w = std::min(w, detail::scaled_extent(w, 1.0 / r_w));

  Box inner{proposal.x0, proposal.y0, proposal.x0 + inner_w, proposal.y0 + inner_h};
  Scalar best = rect_sum(map, inner);
  for (int y = proposal.y0; y + inner_h <= proposal.y1; ++y) {
    for (int x = proposal.x0; x + inner_w <= proposal.x1; ++x) {
      const Box candidate{x, y, x + inner_w, y + inner_h};
      const Scalar s = rect_sum(map, candidate);
      if (s > best) {
        best = s;
        inner = candidate;
      }
    }
  }

  const int outer_h = std::max(h, detail::scaled_extent(h, r_h));
  const int outer_w = std::max(w, detail::scaled_extent(w, r_w));
  const int oy0 = inner.y0 - (outer_h - inner_h) / 2;
  const int ox0 = inner.x0 - (outer_w - inner_w) / 2;
  Box outer = clip(Box{ox0, oy0, ox0 + outer_w, oy0 + outer_h}, rows, cols);
  outer = bounding_union(outer, proposal);
  return {proposal, inner, outer, r_h, r_w};
}

/// Crop `roi`, zero the cells inside `zero_box`, pool to out_size x out_size.
template <typename Scalar>
BasicTensor<Scalar> roi_pool_masked(const BasicTensor<Scalar>& features, const Box& roi,
                                    const std::optional<Box>& zero_box, int out_size,
                                    PoolMode mode = PoolMode::Max) {
  detail::check_roi(features, roi, "roi_pool_masked");
  if (out_size <= 0) throw ShapeError("roi_pool_masked: output size must be positive");
  BasicTensor<Scalar> out({features.dim(0), out_size, out_size});
  detail::for_each_pool_route(features, roi, zero_box, out_size, mode,
                              [&](Index c, int by, int bx, int y, int x, bool masked, Scalar weight) {
                                const Scalar v = masked ? Scalar(0) : features(c, y, x);
                                if (mode == PoolMode::Max) {
                                  out(c, by, bx) = v;
                                } else {
                                  out(c, by, bx) += weight * v;
                                }
                              });
  return out;
}

/// Gradient of roi_pool_masked with respect to the full feature map. Masked
/// cells are constants and receive nothing.
template <typename Scalar>
BasicTensor<Scalar> roi_pool_masked_bwd(const BasicTensor<Scalar>& features, const Box& roi,
                                        const std::optional<Box>& zero_box, int out_size,
                                        const BasicTensor<Scalar>& d_output, PoolMode mode = PoolMode::Max) {
  detail::check_roi(features, roi, "roi_pool_masked_bwd");
  if (d_output.shape() != Shape{features.dim(0), out_size, out_size}) {
    throw ShapeError("roi_pool_masked_bwd: d_output " + shape_string(d_output.shape()));
  }
  BasicTensor<Scalar> d_features(features.shape());
  detail::for_each_pool_route(features, roi, zero_box, out_size, mode,
                              [&](Index c, int by, int bx, int y, int x, bool masked, Scalar weight) {
                                if (!masked) d_features(c, y, x) += weight * d_output(c, by, bx);
                              });
  return d_features;
}

// ---------------------------------------------------------------------------
// Pixel-wise calibration.

namespace detail {

template <typename Scalar>
void check_map_matches(const BasicTensor<Scalar>& features, const BasicActivationMap<Scalar>& map,
                       const char* what) {
  require_rank(features, 3, what);
  if (map.norm.shape() != Shape{features.dim(1), features.dim(2)}) {
    throw ShapeError(std::string(what) + ": map " + shape_string(map.norm.shape()) + " vs features " +
                     shape_string(features.shape()));
  }
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> pixel_calibrate_fwd(const BasicTensor<Scalar>& features, const BasicActivationMap<Scalar>& map) {
  detail::check_map_matches(features, map, "pixel_calibrate_fwd");
  const Index plane_size = map.norm.size();
  BasicTensor<Scalar> out(features.shape());
  for (Index c = 0; c < features.dim(0); ++c) {
    const auto x = features.array().segment(c * plane_size, plane_size);
    out.array().segment(c * plane_size, plane_size) = map.norm.array() * x + x;
  }
  return out;
}

template <typename Scalar>
struct PixelCalibrationGrads {
  BasicTensor<Scalar> d_features;
  /// Gradient with respect to the raw (unnormalized) map, when requested.
  std::optional<BasicTensor<Scalar>> d_raw;
};

/// With grad_through_A off the map is a constant for the iteration. With it
/// on, the map gradient is propagated back through the normalization.
template <typename Scalar>
PixelCalibrationGrads<Scalar> pixel_calibrate_bwd(const BasicTensor<Scalar>& features,
                                                  const BasicActivationMap<Scalar>& map,
                                                  const BasicTensor<Scalar>& d_output, bool grad_through_A) {
  detail::check_map_matches(features, map, "pixel_calibrate_bwd");
  BasicTensor<Scalar>::require_same_shape(features, d_output, "pixel_calibrate_bwd");
  const Index plane_size = map.norm.size();
  PixelCalibrationGrads<Scalar> grads{BasicTensor<Scalar>(features.shape()), std::nullopt};
  BasicTensor<Scalar> d_norm(map.norm.shape());
  for (Index c = 0; c < features.dim(0); ++c) {
    const auto d = d_output.array().segment(c * plane_size, plane_size);
    grads.d_features.array().segment(c * plane_size, plane_size) = d * (map.norm.array() + Scalar(1));
    if (grad_through_A) d_norm.array() += d * features.array().segment(c * plane_size, plane_size);
  }
  if (grad_through_A) grads.d_raw = normalize_activation_bwd(map.raw, d_norm);
  return grads;
}

// ---------------------------------------------------------------------------
// Region calibration.

template <typename Scalar>
BasicTensor<Scalar> region_calibrate_fwd(const BasicTensor<Scalar>& features, const CalibrationRegions& regions,
                                         int out_size, PoolMode mode = PoolMode::Max) {
  BasicTensor<Scalar> out = roi_pool_masked(features, regions.proposal, std::nullopt, out_size, mode);
  out += roi_pool_masked(features, regions.proposal, std::optional<Box>(regions.inner), out_size, mode);
  out -= roi_pool_masked(features, regions.outer, std::optional<Box>(regions.proposal), out_size, mode);
  return out;
}

/// Regions are constants: the placement search is not differentiated.
template <typename Scalar>
BasicTensor<Scalar> region_calibrate_bwd(const BasicTensor<Scalar>& features, const CalibrationRegions& regions,
                                         int out_size, const BasicTensor<Scalar>& d_output,
                                         PoolMode mode = PoolMode::Max) {
  BasicTensor<Scalar> d = roi_pool_masked_bwd(features, regions.proposal, std::nullopt, out_size, d_output, mode);
  d += roi_pool_masked_bwd(features, regions.proposal, std::optional<Box>(regions.inner), out_size, d_output, mode);
  d -= roi_pool_masked_bwd(features, regions.outer, std::optional<Box>(regions.proposal), out_size, d_output, mode);
  return d;
}

}  // namespace fcnet
