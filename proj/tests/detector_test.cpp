#include "fcnet/detector.hpp"

#include "support/oracles.hpp"
#include "support/random.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace fcnet {
namespace {

// Random parameters with non-zero biases so no layer sits on a symmetric point.
ModelParams generic_params(std::uint64_t seed) {
  ModelParams p = ModelParams::initialize(seed);
  Rng rng(static_cast<unsigned>(seed) + 100);
  for (double& v : p.conv1_bias.values()) v = rng.uniform(-0.05, 0.1);
  for (double& v : p.conv2_bias.values()) v = rng.uniform(-0.05, 0.1);
  for (double& v : p.cls_weights.values()) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.cls_bias.values()) v = rng.uniform(-0.1, 0.1);
  return p;
}

struct TinyScene {
  Tensor image;
  std::vector<Box> proposals{{0, 0, 8, 16}, {4, 2, 16, 14}};
  std::vector<int> labels{kPedestrianClass, kBackgroundClass};
};

TinyScene tiny_scene() {
  Rng rng(3);
  return {rng.tensor({1, 16, 16}, 0.0, 1.0)};
}

TrainConfig both_on(bool grad_through_A) {
  TrainConfig cfg;
  cfg.pixel = true;
  cfg.region = true;
  cfg.grad_through_A = grad_through_A;
  return cfg;
}

std::vector<CalibrationRegions> regions_of(const ForwardResult& fwd) {
  std::vector<CalibrationRegions> out;
  for (const auto& t : fwd.proposals) out.push_back(*t.regions);
  return out;
}

double whole_graph_error(bool grad_through_A) {
  const TinyScene s = tiny_scene();
  ModelParams params = generic_params(5);
  const TrainConfig cfg = both_on(grad_through_A);

  // Regions are a discrete choice, frozen at the base point. Without the A
  // branch the map itself is a constant too.
  const ForwardResult base = forward_image(params, s.image, s.proposals, cfg);
  ForwardOverrides frozen;
  frozen.regions = regions_of(base);
  if (!grad_through_A) frozen.activation = base.activation;

  const auto analytic = loss_and_gradients(params, s.image, s.proposals, s.labels, cfg, &frozen);
  EXPECT_EQ(analytic.counted, 2);
  auto loss = [&] { return loss_only(params, s.image, s.proposals, s.labels, cfg, &frozen); };
  EXPECT_NEAR(analytic.loss, loss(), 1e-14);

  double worst = 0.0;
  const auto p = params.tensors();
  const auto g = analytic.grads.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, oracle::max_gradient_error(*p[k], *g[k], loss));
  return worst;
}

TEST(WholeGraph, GradientsMatchFiniteDifferences) { EXPECT_LT(whole_graph_error(false), 1e-4); }

TEST(WholeGraph, GradientsThroughActivationMatchFiniteDifferences) { EXPECT_LT(whole_graph_error(true), 1e-4); }

TEST(WholeGraph, ActivationBranchChangesClassifierGradient) {
  const TinyScene s = tiny_scene();
  const ModelParams params = generic_params(5);
  const auto off = loss_and_gradients(params, s.image, s.proposals, s.labels, both_on(false));
  const auto on = loss_and_gradients(params, s.image, s.proposals, s.labels, both_on(true));
  EXPECT_EQ(off.loss, on.loss);
  EXPECT_NE(off.grads.cls_weights, on.grads.cls_weights);
}

TEST(Forward, ShapesAndFiniteScores) {
  const TinyScene s = tiny_scene();
  TrainConfig cfg;
  cfg.pixel = cfg.region = false;
  const auto fwd = forward_image(generic_params(1), s.image, s.proposals, cfg);
  EXPECT_EQ(fwd.features.shape(), (Shape{16, 4, 4}));
  EXPECT_EQ(fwd.activation.norm.shape(), (Shape{4, 4}));
  ASSERT_EQ(fwd.scores.size(), 2u);
  for (double v : fwd.scores) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(fwd.proposals[0].grid_box, (Box{0, 0, 2, 4}));
}

TEST(Forward, GridMappingRoundsOutward) {
  EXPECT_EQ(to_feature_grid({5, 5, 11, 13}, 24, 24), (Box{1, 1, 3, 4}));
  EXPECT_EQ(to_feature_grid({4, 8, 8, 12}, 24, 24), (Box{1, 2, 2, 3}));
  EXPECT_EQ(to_feature_grid({-6, 90, 10, 120}, 24, 24), (Box{0, 22, 3, 24}));
}

TEST(Forward, DegenerateProposalIsSkipped) {
  const TinyScene s = tiny_scene();
  const std::vector<Box> props{{0, 0, 8, 16}, {40, 40, 60, 60}};
  const std::vector<int> labels{1, 0};
  const auto fwd = forward_image(generic_params(1), s.image, props, both_on(false));
  EXPECT_TRUE(fwd.proposals[0].valid);
  EXPECT_FALSE(fwd.proposals[1].valid);
  EXPECT_EQ(fwd.scores[1], 0.0);
  EXPECT_EQ(loss_and_gradients(generic_params(1), s.image, props, labels, both_on(false)).counted, 1);
}

TEST(Forward, RejectsBadImage) {
  EXPECT_THROW(forward_image(generic_params(1), Tensor({1, 15, 16}), {}, TrainConfig{}), ShapeError);
  EXPECT_THROW(forward_image(generic_params(1), Tensor({2, 16, 16}), {}, TrainConfig{}), ShapeError);
}

TEST(Identity, ZeroActivationMakesPixelCalibrationANoOp) {
  Rng rng(8);
  const Tensor image = rng.tensor({1, 32, 32}, 0.0, 1.0);
  const std::vector<Box> props{{0, 0, 12, 28}, {8, 4, 24, 32}, {16, 0, 32, 16}};
  const ModelParams params = generic_params(2);
  ForwardOverrides zero;
  zero.activation = activation_map_from_raw(Tensor({8, 8}, 0.0));
  for (bool region : {false, true}) {
    TrainConfig cfg;
    cfg.region = region;
    cfg.pixel = false;
    const auto plain = forward_image(params, image, props, cfg, &zero);
    cfg.pixel = true;
    const auto calibrated = forward_image(params, image, props, cfg, &zero);
    EXPECT_EQ(plain.scores, calibrated.scores);
    EXPECT_EQ(plain.calibrated, calibrated.calibrated);
  }
}

TEST(Identity, UnitRatiosMatchPlainRoiPooling) {
  Rng rng(9);
  const Tensor image = rng.tensor({1, 32, 32}, 0.0, 1.0);
  const std::vector<Box> props{{0, 0, 12, 28}, {8, 4, 24, 32}, {16, 0, 32, 16}};
  const ModelParams params = generic_params(3);
  for (bool pixel : {false, true}) {
    TrainConfig cfg;
    cfg.pixel = pixel;
    cfg.r_h = cfg.r_w = 1.0;
    cfg.region = false;
    const auto plain = forward_image(params, image, props, cfg);
    cfg.region = true;
    const auto calibrated = forward_image(params, image, props, cfg);
    EXPECT_EQ(plain.scores, calibrated.scores);
  }
}

TEST(Identity, ZeroImageGivesZeroMap) {
  const Tensor image({1, 32, 32}, 0.0);
  ModelParams params = ModelParams::initialize(4);
  const auto fwd = forward_image(params, image, std::vector<Box>{{0, 0, 12, 28}}, both_on(false));
  for (double v : fwd.activation.norm.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(fwd.calibrated, fwd.features);
}

TEST(Infer, BalancedClassifierOnZeroImage) {
  const Tensor image({1, 96, 96}, 0.0);
  ModelParams params = ModelParams::initialize(4);
  params.cls_weights.array().setZero();
  params.cls_bias.array().setZero();
  const TrainConfig cfg;
  const auto props = sliding_window_proposals(96, 96, cfg.proposals);
  const auto fwd = forward_image(params, image, props, cfg);
  for (double v : fwd.scores) EXPECT_DOUBLE_EQ(v, 0.5);
  const auto a = infer(params, image, cfg);
  const auto b = infer(params, image, cfg);
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].box, b[i].box);
    EXPECT_DOUBLE_EQ(a[i].score, 0.5);
  }
}

TEST(Infer, ForwardIsDeterministic) {
  const TinyScene s = tiny_scene();
  const auto a = forward_image(generic_params(6), s.image, s.proposals, both_on(false));
  const auto b = forward_image(generic_params(6), s.image, s.proposals, both_on(false));
  EXPECT_EQ(a.scores, b.scores);
}

TEST(Nms, IdenticalBoxesKeepOne) {
  const auto kept = nms({{{0, 0, 10, 20}, 0.7}, {{0, 0, 10, 20}, 0.7}}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box, (Box{0, 0, 10, 20}));
}

TEST(Nms, HighestScoreWinsAndDistantBoxesSurvive) {
  const auto kept = nms({{{0, 0, 10, 20}, 0.6}, {{1, 0, 11, 20}, 0.9}, {{50, 50, 60, 70}, 0.3}}, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score, 0.9);
  EXPECT_EQ(kept[1].box, (Box{50, 50, 60, 70}));
}

TEST(Nms, EqualScoresBreakTiesRowMajor) {
  const auto kept = nms({{{1, 0, 11, 20}, 0.5}, {{0, 0, 10, 20}, 0.5}}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box, (Box{0, 0, 10, 20}));
}

TEST(Proposals, SlidingWindowGrid) {
  const ProposalConfig cfg;
  const auto boxes = sliding_window_proposals(96, 96, cfg);
  ASSERT_FALSE(boxes.empty());
  for (const auto& b : boxes) {
    EXPECT_TRUE(b.within(96, 96));
    EXPECT_EQ(b.x0 % cfg.stride, 0);
    EXPECT_EQ(b.y0 % cfg.stride, 0);
  }
}

std::vector<Scene> scenes(int n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.scenes = n;
  return generate(spec, seed).scenes;
}

TEST(Sampling, LabelsRespectIouRules) {
  const auto data = scenes(20, 4);
  const TrainConfig cfg;
  CounterRng rng(1, 0, 0);
  for (const auto& scene : data) {
    const auto props = sample_training_proposals(scene, cfg, rng);
    ASSERT_EQ(static_cast<int>(props.size()), cfg.proposals_per_image);
    int positives = 0;
    for (const auto& p : props) {
      double best = 0.0;
      for (const auto& o : scene.objects) best = std::max(best, iou(p.box, o.box));
      if (p.label == kPedestrianClass) {
        ++positives;
        EXPECT_GE(best, 0.5);
      } else {
        EXPECT_LT(best, 0.3);
      }
      EXPECT_TRUE(p.box.within(96, 96));
    }
    EXPECT_EQ(positives, 4);
  }
}

TEST(Train, ZeroLearningRateLeavesParams) {
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;
  const auto init = ModelParams::initialize(11);
  const auto r = train(scenes(5, 1), cfg, init);
  EXPECT_EQ(r.params, init);
  EXPECT_EQ(r.history.size(), 20u);
}

TEST(Train, SgdStepFollowsMomentumRule) {
  TrainConfig cfg;
  ModelParams p = generic_params(1), g = generic_params(2);
  SgdState state;
  for (Tensor* v : state.velocity.tensors()) v->array().setZero();
  const ModelParams p0 = p;
  sgd_step(p, g, state, cfg);
  sgd_step(p, g, state, cfg);
  // two steps from zero velocity, gradient held fixed (decay uses the moving p)
  const double lr = cfg.learning_rate, mu = cfg.momentum, wd = cfg.weight_decay;
  const double p_0 = p0.cls_bias[1], gv = g.cls_bias[1];
  const double v1 = gv + wd * p_0;
  const double p_1 = p_0 - lr * v1;
  const double v2 = mu * v1 + gv + wd * p_1;
  EXPECT_NEAR(p.cls_bias[1], p_1 - lr * v2, 1e-15);
}

TEST(Train, LossDecreases) {
  TrainConfig cfg;
  cfg.iterations = 200;
  const auto r = train(scenes(50, 2), cfg);
  ASSERT_EQ(r.history.size(), 200u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += r.history[static_cast<std::size_t>(i)];
    last += r.history[r.history.size() - 20 + static_cast<std::size_t>(i)];
  }
  EXPECT_LT(last / 20, first / 20);
  EXPECT_TRUE(r.params.all_finite());
}

TEST(Train, Deterministic) {
  TrainConfig cfg;
  cfg.iterations = 40;
  const auto data = scenes(10, 3);
  const auto a = train(data, cfg);
  const auto b = train(data, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params, b.params);
  cfg.seed = 2;
  EXPECT_NE(train(data, cfg).history, a.history);
}

TEST(Train, RejectsEmptyDataset) {
  TrainConfig cfg;
  cfg.iterations = 1;
  EXPECT_THROW(train({}, cfg), std::invalid_argument);
}

TEST(Config, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.positive_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.r_h = 0.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig cfg;
  cfg.iterations = 77;
  cfg.region = false;
  cfg.r_h = 1.4;
  cfg.grad_through_A = true;
  const nlohmann::json j = cfg;
  TrainConfig back;
  from_json(j, back);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW(from_json(nlohmann::json{{"iters", 3}}, back), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "fcnet_detector_ckpt";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.r_w = 1.2;
  const ModelParams params = generic_params(7);
  save_checkpoint(dir, params, cfg, 123);
  const Checkpoint ck = load_checkpoint(dir);
  EXPECT_EQ(ck.params, round_to_single(params));
  EXPECT_EQ(ck.iteration, 123);
  EXPECT_EQ(ck.cfg.r_w, 1.2);
  EXPECT_EQ(nlohmann::json(ck.cfg), nlohmann::json(cfg));

  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("names").get<std::vector<std::string>>(), ModelParams::names());
  EXPECT_TRUE(manifest.contains("shapes"));

  std::filesystem::remove(dir / "manifest.json");
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST(EndToEnd, FindsAClearPedestrian) {
  TrainConfig cfg;
  cfg.iterations = 1500;
  const auto model = train(scenes(100, 5), cfg);

  DatasetSpec clear;
  clear.scenes = 1;
  clear.min_objects = clear.max_objects = 1;
  clear.min_height = clear.max_height = 48;
  clear.unoccluded_share = 1.0;
  clear.partial_share = clear.heavy_share = 0.0;
  clear.max_distractors = 0;
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Scene scene = generate(clear, seed).scenes.at(0);
    const auto dets = infer(model.params, scene.image, cfg);
    ASSERT_FALSE(dets.empty());
    hits += iou(dets.front().box, scene.objects.at(0).box) >= 0.5;
  }
  EXPECT_GE(hits, 4);
}

}  // namespace
}  // namespace fcnet
