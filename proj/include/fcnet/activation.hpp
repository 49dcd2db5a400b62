#pragma once

// Pedestrian activation map: the classifier's pedestrian weight vector
// applied channel-wise to the backbone features, A = sum_c w[c] * Y[c].

#include "fcnet/box.hpp"
#include "fcnet/tensor.hpp"

#include <filesystem>

namespace fcnet {

/// Maps whose maximum positive value is at or below this are treated as
/// carrying no activation and normalize to zero.
inline constexpr double kActivationFloor = 1e-12;

template <typename Scalar>
struct BasicActivationMap {
  BasicTensor<Scalar> raw;       // [M, N], unnormalized
  BasicTensor<Scalar> norm;      // [M, N], in [0, 1]
  BasicTensor<Scalar> integral;  // [M+1, N+1], summed-area table over norm

  Index rows() const { return raw.dim(0); }
  Index cols() const { return raw.dim(1); }
};

using ActivationMap = BasicActivationMap<double>;

namespace detail {

// First minimum and first maximum in row-major order.
template <typename Scalar>
std::pair<Index, Index> extreme_positions(const BasicTensor<Scalar>& t) {
  Index lo = 0, hi = 0;
  for (Index i = 1; i < t.size(); ++i) {
    if (t[i] < t[lo]) lo = i;
    if (t[i] > t[hi]) hi = i;
  }
  return {lo, hi};
}

}  // namespace detail

/// Min-max scaling of max(0, raw) to [0, 1]. Maps whose clamped range is at
/// or below kActivationFloor (constant maps, all-negative maps) become zeros.
/// When any cell is <= 0 the minimum is 0 and this is a division by the peak.
template <typename Scalar>
BasicTensor<Scalar> normalize_activation(const BasicTensor<Scalar>& raw) {
  BasicTensor<Scalar> norm = raw;
  norm.array() = norm.array().max(Scalar(0));
  const Scalar lo = norm.array().minCoeff(), hi = norm.array().maxCoeff();
  if (hi - lo > Scalar(kActivationFloor)) {
    norm.array() = (norm.array() - lo) / (hi - lo);
  } else {
    norm.array().setZero();
  }
  return norm;
}

template <typename Scalar>
BasicTensor<Scalar> summed_area_table(const BasicTensor<Scalar>& plane) {
  require_rank(plane, 2, "summed_area_table");
  const Index rows = plane.dim(0), cols = plane.dim(1);
  BasicTensor<Scalar> table({rows + 1, cols + 1});
  for (Index i = 0; i < rows; ++i) {
    Scalar running = 0;
    for (Index j = 0; j < cols; ++j) {
      running += plane(i, j);
      table(i + 1, j + 1) = table(i, j + 1) + running;
    }
  }
  return table;
}

/// Build the normalized map and its integral image from an existing raw map.
template <typename Scalar>
BasicActivationMap<Scalar> activation_map_from_raw(BasicTensor<Scalar> raw) {
  require_rank(raw, 2, "activation map");
  BasicActivationMap<Scalar> map;
  map.norm = normalize_activation(raw);
  map.integral = summed_area_table(map.norm);
  map.raw = std::move(raw);
  return map;
}

template <typename Scalar>
BasicActivationMap<Scalar> self_activation_map(const BasicTensor<Scalar>& features,
                                               const BasicTensor<Scalar>& class_weights) {
  require_rank(features, 3, "self_activation_map features");
  if (class_weights.rank() != 1 || class_weights.dim(0) != features.dim(0)) {
    throw ShapeError("self_activation_map: " + std::to_string(features.dim(0)) + " feature channels but weights " +
                     shape_string(class_weights.shape()));
  }
  const Index channels = features.dim(0), plane_size = features.dim(1) * features.dim(2);
  BasicTensor<Scalar> raw({features.dim(1), features.dim(2)});
  // Channel-major accumulation: every element sees w[0]y[0] + w[1]y[1] + ...
  for (Index c = 0; c < channels; ++c) {
    raw.array() += class_weights[c] * features.array().segment(c * plane_size, plane_size);
  }
  return activation_map_from_raw(std::move(raw));
}

/// Sum of the normalized map over a box on the map grid, from four lookups.
template <typename Scalar>
Scalar rect_sum(const BasicActivationMap<Scalar>& map, const Box& box) {
  if (box.empty()) throw BoxError("rect_sum: empty box " + to_string(box));
  if (!box.within(static_cast<int>(map.rows()), static_cast<int>(map.cols()))) {
    throw BoxError("rect_sum: box " + to_string(box) + " outside " + std::to_string(map.rows()) + "x" +
                   std::to_string(map.cols()) + " map");
  }
  const auto& t = map.integral;
  return t(box.y1, box.x1) - t(box.y0, box.x1) - t(box.y1, box.x0) + t(box.y0, box.x0);
}

/// Gradient of normalize_activation. The minimum and maximum are the first
/// ones in row-major order.
template <typename Scalar>
BasicTensor<Scalar> normalize_activation_bwd(const BasicTensor<Scalar>& raw, const BasicTensor<Scalar>& d_norm) {
  BasicTensor<Scalar>::require_same_shape(raw, d_norm, "normalize_activation_bwd");
  BasicTensor<Scalar> clamped = raw;
  clamped.array() = clamped.array().max(Scalar(0));
  BasicTensor<Scalar> d_raw(raw.shape());
  const auto [lo_at, hi_at] = detail::extreme_positions(clamped);
  const Scalar lo = clamped[lo_at], range = clamped[hi_at] - lo;
  if (!(range > Scalar(kActivationFloor))) return d_raw;

  const auto norm = (clamped.array() - lo) / range;
  BasicTensor<Scalar> d_clamped(raw.shape());
  d_clamped.array() = d_norm.array() / range;
  d_clamped[lo_at] += (d_norm.array() * (norm - Scalar(1))).sum() / range;
  d_clamped[hi_at] -= (d_norm.array() * norm).sum() / range;
  d_raw.array() = (raw.array() > Scalar(0)).select(d_clamped.array(), Scalar(0));
  return d_raw;
}

/// Backward of the raw map: d_params = {d_class_weights}.
template <typename Scalar>
BasicLayerGrads<Scalar> self_activation_bwd(const BasicTensor<Scalar>& features,
                                            const BasicTensor<Scalar>& class_weights,
                                            const BasicTensor<Scalar>& d_raw) {
  require_rank(features, 3, "self_activation_bwd features");
  if (d_raw.shape() != Shape{features.dim(1), features.dim(2)} || class_weights.size() != features.dim(0)) {
    throw ShapeError("self_activation_bwd: features " + shape_string(features.shape()) + ", d_raw " +
                     shape_string(d_raw.shape()));
  }
  const Index channels = features.dim(0), plane_size = d_raw.size();
  BasicTensor<Scalar> d_features(features.shape());
  BasicTensor<Scalar> d_weights(class_weights.shape());
  for (Index c = 0; c < channels; ++c) {
    const auto channel = features.array().segment(c * plane_size, plane_size);
    d_features.array().segment(c * plane_size, plane_size) = class_weights[c] * d_raw.array();
    d_weights[c] = (channel * d_raw.array()).sum();
  }
  return {std::move(d_features), {std::move(d_weights)}};
}

/// Binary PGM (P5, maxval 255) of the normalized map.
void write_activation_pgm(const std::filesystem::path& path, const ActivationMap& map);
/// One CSV row per map row, raw values at full double precision.
void write_activation_csv(const std::filesystem::path& path, const ActivationMap& map);
/// Reads a CSV written by write_activation_csv back into an [M, N] tensor.
Tensor read_activation_csv(const std::filesystem::path& path);

}  // namespace fcnet
