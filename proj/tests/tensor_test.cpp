#include "fcnet/layers.hpp"
#include "fcnet/tensor.hpp"
#include "fcnet/tensor_io.hpp"
#include "support/oracles.hpp"
#include "support/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace fcnet;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.size(), 24);
  t(1, 2, 3) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  t(0, 1, 0) = 7.0;
  EXPECT_EQ(t[4], 7.0);
  EXPECT_EQ(t.plane(1)(2, 3), 5.0);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({-1}), ShapeError);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  Tensor a({2, 2}), b({4});
  EXPECT_THROW(a += b, ShapeError);
  EXPECT_THROW(a.reshaped({3}), ShapeError);
}

TEST(Tensor, Arithmetic) {
  const Tensor a = Tensor::from_values({3}, {1.0, 2.0, 3.0});
  const Tensor b = Tensor::from_values({3}, {0.5, -1.0, 4.0});
  EXPECT_EQ(a + b, Tensor::from_values({3}, {1.5, 1.0, 7.0}));
  EXPECT_EQ(a - b, Tensor::from_values({3}, {0.5, 3.0, -1.0}));
  EXPECT_EQ(2.0 * a, Tensor::from_values({3}, {2.0, 4.0, 6.0}));
  EXPECT_EQ(a.reshaped({1, 3}).shape(), (Shape{1, 3}));
}

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2d, IdentityKernelReproducesInput) {
  const Tensor input({1, 4, 4}, 1.0);
  Tensor kernels({1, 1, 3, 3});
  kernels[4] = 1.0;
  EXPECT_EQ(conv2d_fwd(input, kernels, Tensor({1})), input);
}

TEST(Conv2d, ZeroInputGivesBias) {
  Rng rng(1);
  const Tensor kernels = rng.tensor({3, 2, 3, 3});
  const Tensor bias = Tensor::from_values({3}, {0.5, -1.25, 2.0});
  const Tensor out = conv2d_fwd(Tensor({2, 5, 4}), kernels, bias);
  for (Index c = 0; c < 3; ++c) {
    for (Index i = 0; i < 20; ++i) EXPECT_EQ(out[c * 20 + i], bias[c]);
  }
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(2);
  const Tensor input = rng.tensor({2, 5, 5});
  const Tensor kernels = rng.tensor({3, 2, 3, 3});
  const Tensor bias = rng.tensor({3});
  const Tensor got = conv2d_fwd(input, kernels, bias);
  const Tensor want = oracle::conv3x3(input, kernels, bias);
  for (Index i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv2d, LinearInInput) {
  Rng rng(3);
  const Tensor x = rng.tensor({2, 6, 5}), y = rng.tensor({2, 6, 5});
  const Tensor kernels = rng.tensor({3, 2, 3, 3});
  const Tensor zero({3});
  const double alpha = 0.7, beta = -1.3;
  const Tensor lhs = conv2d_fwd(Tensor(alpha * x + beta * y), kernels, zero);
  const Tensor rhs = alpha * conv2d_fwd(x, kernels, zero) + beta * conv2d_fwd(y, kernels, zero);
  for (Index i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-10);
}

TEST(Conv2d, ShapeMismatchRejected) {
  EXPECT_THROW(conv2d_fwd(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1})), ShapeError);
  EXPECT_THROW(conv2d_fwd(Tensor({2, 4, 4}), Tensor({1, 2, 5, 5}), Tensor({1})), ShapeError);
  EXPECT_THROW(conv2d_fwd(Tensor({2, 4, 4}), Tensor({1, 2, 3, 3}), Tensor({2})), ShapeError);
  EXPECT_THROW(conv2d_bwd(Tensor({2, 4, 4}), Tensor({1, 2, 3, 3}), Tensor({1, 4, 5})), ShapeError);
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  const auto g = conv2d_bwd(rng.tensor({2, 4, 4}), rng.tensor({3, 2, 3, 3}), Tensor({3, 4, 4}));
  EXPECT_EQ(g.d_input, Tensor({2, 4, 4}));
  EXPECT_EQ(g.d_params[0], Tensor({3, 2, 3, 3}));
  EXPECT_EQ(g.d_params[1], Tensor({3}));
}

TEST(Conv2d, SinglePixelGradientIsCenterWeight) {
  Tensor kernels({1, 1, 3, 3}, 9.0);
  kernels[4] = 0.75;
  const auto g = conv2d_bwd(Tensor({1, 1, 1}, 2.0), kernels, Tensor({1, 1, 1}, 1.0));
  EXPECT_EQ(g.d_input[0], 0.75);
  EXPECT_EQ(g.d_params[0][4], 2.0);
  EXPECT_EQ(g.d_params[1][0], 1.0);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  Tensor input = rng.tensor({2, 4, 5});
  Tensor kernels = rng.tensor({3, 2, 3, 3});
  Tensor bias = rng.tensor({3});
  const Tensor probe = rng.tensor({3, 4, 5});
  auto loss = [&] {
    const Tensor out = conv2d_fwd(input, kernels, bias);
    return (out.array() * probe.array()).sum();
  };
  const auto g = conv2d_bwd(input, kernels, probe);
  EXPECT_LT(oracle::max_gradient_error(input, g.d_input, loss), 1e-6);
  EXPECT_LT(oracle::max_gradient_error(kernels, g.d_params[0], loss), 1e-6);
  EXPECT_LT(oracle::max_gradient_error(bias, g.d_params[1], loss), 1e-6);
}

// ---------------------------------------------------------------------------
// relu, maxpool, gap, linear, softmax

TEST(Relu, Example) {
  EXPECT_EQ(relu_fwd(Tensor::from_values({3}, {-1.0, 0.0, 2.0})), Tensor::from_values({3}, {0.0, 0.0, 2.0}));
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  Tensor x = rng.tensor({2, 3, 4});
  for (double& v : x.values()) {
    if (std::abs(v) < 1e-3) v = 0.5;  // keep away from the kink
  }
  const Tensor probe = rng.tensor({2, 3, 4});
  auto loss = [&] { return (relu_fwd(x).array() * probe.array()).sum(); };
  EXPECT_LT(oracle::max_gradient_error(x, relu_bwd(x, probe).d_input, loss), 1e-4);
}

TEST(MaxPool2, ForwardAndTieBreak) {
  const Tensor x = Tensor::from_values({1, 2, 4}, {1, 3, 5, 5, 3, 2, 5, 1});
  EXPECT_EQ(maxpool2_fwd(x), Tensor::from_values({1, 1, 2}, {3, 5}));
  const auto g = maxpool2_bwd(x, Tensor::from_values({1, 1, 2}, {10, 20}));
  // first max in row-major order wins: (0,1) for the left window, (0,2) for the right
  EXPECT_EQ(g.d_input, Tensor::from_values({1, 2, 4}, {0, 10, 20, 0, 0, 0, 0, 0}));
}

TEST(MaxPool2, RequiresEvenExtents) {
  EXPECT_THROW(maxpool2_fwd(Tensor({1, 3, 4})), ShapeError);
  EXPECT_THROW(maxpool2_fwd(Tensor({1, 4, 5})), ShapeError);
}

TEST(MaxPool2, RoutesEachGradientOnce) {
  Rng rng(7);
  const Tensor x = rng.tensor({3, 6, 4});
  const Tensor d = rng.tensor({3, 3, 2});
  const auto g = maxpool2_bwd(x, d);
  for (Index c = 0; c < 3; ++c) {
    for (Index oy = 0; oy < 3; ++oy) {
      for (Index ox = 0; ox < 2; ++ox) {
        int nonzero = 0;
        double sum = 0.0;
        for (Index dy = 0; dy < 2; ++dy) {
          for (Index dx = 0; dx < 2; ++dx) {
            const double v = g.d_input(c, 2 * oy + dy, 2 * ox + dx);
            nonzero += v != 0.0;
            sum += v;
          }
        }
        EXPECT_EQ(nonzero, 1);
        EXPECT_EQ(sum, d(c, oy, ox));
      }
    }
  }
}

TEST(MaxPool2, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Tensor x = rng.tensor({2, 4, 6});
  const Tensor probe = rng.tensor({2, 2, 3});
  auto loss = [&] { return (maxpool2_fwd(x).array() * probe.array()).sum(); };
  EXPECT_LT(oracle::max_gradient_error(x, maxpool2_bwd(x, probe).d_input, loss), 1e-4);
}

TEST(Gap, ConstantChannel) {
  Tensor x({2, 3, 3}, 4.5);
  for (Index i = 9; i < 18; ++i) x[i] = -2.0;
  EXPECT_EQ(gap_fwd(x), Tensor::from_values({2}, {4.5, -2.0}));
}

TEST(Gap, GradientConservesMass) {
  Rng rng(9);
  const Tensor d = rng.tensor({4});
  const auto g = gap_bwd({4, 3, 5}, d);
  EXPECT_NEAR(g.d_input.array().sum(), d.array().sum(), 1e-12);
}

TEST(Gap, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  Tensor x = rng.tensor({3, 4, 2});
  const Tensor probe = rng.tensor({3});
  auto loss = [&] { return (gap_fwd(x).array() * probe.array()).sum(); };
  EXPECT_LT(oracle::max_gradient_error(x, gap_bwd(x.shape(), probe).d_input, loss), 1e-4);
}

TEST(Linear, ForwardAndGradients) {
  Rng rng(11);
  Tensor x = rng.tensor({5});
  Tensor w = rng.tensor({3, 5});
  Tensor b = rng.tensor({3});
  const Tensor y = linear_fwd(x, w, b);
  for (Index o = 0; o < 3; ++o) {
    double acc = b[o];
    for (Index i = 0; i < 5; ++i) acc += w(o, i) * x[i];
    EXPECT_NEAR(y[o], acc, 1e-12);
  }
  const Tensor probe = rng.tensor({3});
  auto loss = [&] { return (linear_fwd(x, w, b).array() * probe.array()).sum(); };
  const auto g = linear_bwd(x, w, probe);
  EXPECT_LT(oracle::max_gradient_error(x, g.d_input, loss), 1e-4);
  EXPECT_LT(oracle::max_gradient_error(w, g.d_params[0], loss), 1e-4);
  EXPECT_LT(oracle::max_gradient_error(b, g.d_params[1], loss), 1e-4);
  EXPECT_THROW(linear_fwd(Tensor({4}), w, b), ShapeError);
}

TEST(SoftmaxXent, SymmetricLogits) {
  const auto r = softmax_xent_fwd(Tensor({2}), 0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.loss, 0.693147, 1e-6);
  EXPECT_EQ(r.probs, Tensor::from_values({2}, {0.5, 0.5}));
}

TEST(SoftmaxXent, Errors) {
  EXPECT_THROW(softmax_xent_fwd(Tensor(), 0), ShapeError);
  EXPECT_THROW(softmax_xent_fwd(Tensor({2}), 2), ShapeError);
  EXPECT_THROW(softmax_xent_fwd(Tensor({2}), -1), ShapeError);
}

TEST(SoftmaxXent, LargeLogitsStayFinite) {
  const auto r = softmax_xent_fwd(Tensor::from_values({2}, {1000.0, -1000.0}), 1);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
}

TEST(SoftmaxXent, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  Tensor logits = rng.tensor({4});
  auto loss = [&] { return softmax_xent_fwd(logits, 2).loss; };
  const auto g = softmax_xent_bwd(softmax_xent_fwd(logits, 2).probs, 2);
  EXPECT_LT(oracle::max_gradient_error(logits, g.d_input, loss), 1e-4);
}

// ---------------------------------------------------------------------------
// FCT1

TEST(Fct1, RoundTripThroughSinglePrecision) {
  Rng rng(13);
  const Tensor t = rng.tensor({2, 3, 4});
  std::stringstream ss;
  write_fct1(ss, t);
  EXPECT_EQ(ss.str().size(), 4u + 4u + 3 * 4u + 24 * 4u);
  const Tensor back = read_fct1(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(back, round_to_single(t));
  for (Index i = 0; i < t.size(); ++i) EXPECT_NEAR(back[i], t[i], 1e-6 * std::max(1.0, std::abs(t[i])));
}

TEST(Fct1, ByteLayout) {
  std::stringstream ss;
  write_fct1(ss, Tensor::from_values({1, 2}, {1.0, -2.0}));
  const std::string bytes = ss.str();
  const std::string expected("FCT1\x02\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00"
                             "\x00\x00\x80\x3f\x00\x00\x00\xc0",
                             24);
  EXPECT_EQ(bytes, expected);
}

TEST(Fct1, RejectsBadMagicAndTruncation) {
  std::stringstream good;
  write_fct1(good, Tensor({2, 2}, 1.0));
  std::string bytes = good.str();

  std::string bad_magic = bytes;
  bad_magic[3] = '2';
  std::stringstream a(bad_magic);
  EXPECT_THROW(read_fct1(a), FormatError);

  for (std::size_t cut : {2u, 6u, 10u, 20u, 27u}) {
    std::stringstream b(bytes.substr(0, cut));
    EXPECT_THROW(read_fct1(b), FormatError) << "cut at " << cut;
  }
}

TEST(Fct1, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "fcnet_tensor_test.fct1";
  const Tensor t = Tensor::from_values({3}, {0.25, 0.5, -8.0});
  write_fct1(path, t);
  EXPECT_EQ(read_fct1(path), t);
  std::filesystem::remove(path);
  EXPECT_THROW(read_fct1(path), FormatError);
}
