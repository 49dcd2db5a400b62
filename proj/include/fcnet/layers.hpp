#pragma once

// Forward/backward pairs for every layer the detector uses. There is no tape:
// callers keep the forward inputs and hand them back to the matching *_bwd.

#include "fcnet/tensor.hpp"

#include <cmath>
#include <string>

namespace fcnet {

namespace detail {

template <typename Scalar>
using RowMajor = typename BasicTensor<Scalar>::RowMajorMatrix;

// Patch matrix for a 3x3, stride 1, zero-padded convolution.
// Row (c*9 + ky*3 + kx), column (y*W + x) holds input[c, y+ky-1, x+kx-1].
template <typename Scalar>
RowMajor<Scalar> im2col3x3(const BasicTensor<Scalar>& input) {
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  RowMajor<Scalar> cols = RowMajor<Scalar>::Zero(channels * 9, height * width);
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        Scalar* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (Index x = 0; x < width; ++x) {
            const Index sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            row[y * width + x] = input(c, sy, sx);
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im3x3_accumulate(const RowMajor<Scalar>& cols, BasicTensor<Scalar>& out) {
  const Index channels = out.dim(0), height = out.dim(1), width = out.dim(2);
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Scalar* row = cols.row(c * 9 + ky * 3 + kx).data();
        for (Index y = 0; y < height; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (Index x = 0; x < width; ++x) {
            const Index sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            out(c, sy, sx) += row[y * width + x];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void check_conv_shapes(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(1) != input.dim(0) || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw ShapeError("conv2d: kernels " + shape_string(kernels.shape()) + " incompatible with input " +
                     shape_string(input.shape()) + " (need [C_out, C_in, 3, 3])");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 3x3 convolution (cross-correlation), stride 1, zero padding 1.

template <typename Scalar>
BasicTensor<Scalar> conv2d_fwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                               const BasicTensor<Scalar>& bias) {
  detail::check_conv_shapes(input, kernels);
  const Index out_channels = kernels.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != out_channels) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(out_channels) + " output channels");
  }
  const auto cols = detail::im2col3x3(input);
  BasicTensor<Scalar> out({out_channels, input.dim(1), input.dim(2)});
  auto out_mat = out.as_matrix();
  out_mat.noalias() = kernels.as_matrix() * cols;
  out_mat.colwise() += bias.array().matrix();
  return out;
}

/// d_params = {d_kernels, d_bias}.
template <typename Scalar>
BasicLayerGrads<Scalar> conv2d_bwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                                   const BasicTensor<Scalar>& d_output) {
  detail::check_conv_shapes(input, kernels);
  const Shape expected{kernels.dim(0), input.dim(1), input.dim(2)};
  if (d_output.shape() != expected) {
    throw ShapeError("conv2d_bwd: d_output " + shape_string(d_output.shape()) + ", expected " +
                     shape_string(expected));
  }
  const auto cols = detail::im2col3x3(input);
  const auto d_out = d_output.as_matrix();

  BasicTensor<Scalar> d_kernels(kernels.shape());
  d_kernels.as_matrix().noalias() = d_out * cols.transpose();
  BasicTensor<Scalar> d_bias({kernels.dim(0)});
  d_bias.array() = d_out.rowwise().sum().array();

  detail::RowMajor<Scalar> d_cols = kernels.as_matrix().transpose() * d_out;
  BasicTensor<Scalar> d_input(input.shape());
  detail::col2im3x3_accumulate(d_cols, d_input);
  return {std::move(d_input), {std::move(d_kernels), std::move(d_bias)}};
}

// ---------------------------------------------------------------------------
// ReLU

template <typename Scalar>
BasicTensor<Scalar> relu_fwd(const BasicTensor<Scalar>& input) {
  BasicTensor<Scalar> out = input;
  out.array() = out.array().max(Scalar(0));
  return out;
}

template <typename Scalar>
BasicLayerGrads<Scalar> relu_bwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& d_output) {
  BasicTensor<Scalar>::require_same_shape(input, d_output, "relu_bwd");
  BasicTensor<Scalar> d_input(input.shape());
  d_input.array() = (input.array() > Scalar(0)).select(d_output.array(), Scalar(0));
  return {std::move(d_input), {}};
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties go to the first element in row-major order.

namespace detail {

template <typename Scalar>
void check_pool_input(const BasicTensor<Scalar>& input) {
  require_rank(input, 3, "maxpool2 input");
  if (input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
    throw ShapeError("maxpool2 needs even spatial extents, got " + shape_string(input.shape()));
  }
}

// Offset (dy*2 + dx) of the winning element of window (c, oy, ox).
template <typename Scalar>
int pool_argmax(const BasicTensor<Scalar>& input, Index c, Index oy, Index ox) {
  int best = 0;
  Scalar best_value = input(c, 2 * oy, 2 * ox);
  for (int k = 1; k < 4; ++k) {
    const Scalar v = input(c, 2 * oy + k / 2, 2 * ox + k % 2);
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> maxpool2_fwd(const BasicTensor<Scalar>& input) {
  detail::check_pool_input(input);
  const Index channels = input.dim(0), oh = input.dim(1) / 2, ow = input.dim(2) / 2;
  BasicTensor<Scalar> out({channels, oh, ow});
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        const int k = detail::pool_argmax(input, c, y, x);
        out(c, y, x) = input(c, 2 * y + k / 2, 2 * x + k % 2);
      }
    }
  }
  return out;
}

template <typename Scalar>
BasicLayerGrads<Scalar> maxpool2_bwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& d_output) {
  detail::check_pool_input(input);
  const Index channels = input.dim(0), oh = input.dim(1) / 2, ow = input.dim(2) / 2;
  if (d_output.shape() != Shape{channels, oh, ow}) {
    throw ShapeError("maxpool2_bwd: d_output " + shape_string(d_output.shape()) + " does not match input " +
                     shape_string(input.shape()));
  }
  BasicTensor<Scalar> d_input(input.shape());
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        const int k = detail::pool_argmax(input, c, y, x);
        d_input(c, 2 * y + k / 2, 2 * x + k % 2) += d_output(c, y, x);
      }
    }
  }
  return {std::move(d_input), {}};
}

// ---------------------------------------------------------------------------
// Global average pooling: [C,H,W] -> [C].

template <typename Scalar>
BasicTensor<Scalar> gap_fwd(const BasicTensor<Scalar>& input) {
  require_rank(input, 3, "gap input");
  BasicTensor<Scalar> out({input.dim(0)});
  out.array() = input.as_matrix().rowwise().mean().array();
  return out;
}

template <typename Scalar>
BasicLayerGrads<Scalar> gap_bwd(const Shape& input_shape, const BasicTensor<Scalar>& d_output) {
  if (input_shape.size() != 3 || d_output.rank() != 1 || d_output.dim(0) != input_shape[0]) {
    throw ShapeError("gap_bwd: d_output " + shape_string(d_output.shape()) + " vs input " +
                     shape_string(input_shape));
  }
  BasicTensor<Scalar> d_input(input_shape);
  const Scalar inv_area = Scalar(1) / static_cast<Scalar>(input_shape[1] * input_shape[2]);
  auto m = d_input.as_matrix();
  for (Index c = 0; c < input_shape[0]; ++c) m.row(c).setConstant(d_output[c] * inv_area);
  return {std::move(d_input), {}};
}

// ---------------------------------------------------------------------------
// Fully connected: y = W x + b with W [O, I].

template <typename Scalar>
BasicTensor<Scalar> linear_fwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& weights,
                               const BasicTensor<Scalar>& bias) {
  require_rank(input, 1, "linear input");
  require_rank(weights, 2, "linear weights");
  if (weights.dim(1) != input.dim(0) || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("linear: input " + shape_string(input.shape()) + ", weights " +
                     shape_string(weights.shape()) + ", bias " + shape_string(bias.shape()));
  }
  BasicTensor<Scalar> out({weights.dim(0)});
  out.array() = (weights.as_matrix() * input.array().matrix()).array() + bias.array();
  return out;
}

/// d_params = {d_weights, d_bias}.
template <typename Scalar>
BasicLayerGrads<Scalar> linear_bwd(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& weights,
                                   const BasicTensor<Scalar>& d_output) {
  require_rank(input, 1, "linear_bwd input");
  require_rank(weights, 2, "linear_bwd weights");
  if (weights.dim(1) != input.dim(0) || d_output.rank() != 1 || d_output.dim(0) != weights.dim(0)) {
    throw ShapeError("linear_bwd: input " + shape_string(input.shape()) + ", weights " +
                     shape_string(weights.shape()) + ", d_output " + shape_string(d_output.shape()));
  }
  BasicTensor<Scalar> d_input(input.shape());
  d_input.array() = (weights.as_matrix().transpose() * d_output.array().matrix()).array();
  BasicTensor<Scalar> d_weights(weights.shape());
  d_weights.as_matrix().noalias() = d_output.array().matrix() * input.array().matrix().transpose();
  return {std::move(d_input), {std::move(d_weights), d_output}};
}

// ---------------------------------------------------------------------------
// Softmax + cross-entropy.

template <typename Scalar>
struct SoftmaxXent {
  Scalar loss;
  BasicTensor<Scalar> probs;
};

template <typename Scalar>
SoftmaxXent<Scalar> softmax_xent_fwd(const BasicTensor<Scalar>& logits, Index label) {
  if (logits.empty()) throw ShapeError("softmax_xent: empty logits");
  require_rank(logits, 1, "softmax_xent logits");
  if (label < 0 || label >= logits.dim(0)) {
    throw ShapeError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.dim(0)) + " classes");
  }
  const Scalar shift = logits.array().maxCoeff();
  BasicTensor<Scalar> probs(logits.shape());
  probs.array() = (logits.array() - shift).exp();
  const Scalar total = probs.array().sum();
  probs.array() /= total;
  const Scalar loss = -(logits[label] - shift - std::log(total));
  return {loss, std::move(probs)};
}

/// Gradient of the loss with respect to the logits.
template <typename Scalar>
BasicLayerGrads<Scalar> softmax_xent_bwd(const BasicTensor<Scalar>& probs, Index label,
                                         Scalar d_loss = Scalar(1)) {
  if (probs.empty()) throw ShapeError("softmax_xent_bwd: empty probabilities");
  if (label < 0 || label >= probs.size()) throw ShapeError("softmax_xent_bwd: label out of range");
  BasicTensor<Scalar> d_logits = probs;
  d_logits[label] -= Scalar(1);
  d_logits *= d_loss;
  return {std::move(d_logits), {}};
}

}  // namespace fcnet
