#include "fcnet/detector.hpp"

#include "fcnet/layers.hpp"
#include "fcnet/tensor_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

namespace fcnet {
namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kTrainStream = 12;
constexpr int kSampleAttempts = 60;
constexpr int kSceneResamples = 50;
constexpr double kPositiveIou = 0.5;
constexpr double kNegativeIou = 0.3;
constexpr int kMinProposalHeight = 8;
constexpr int kMinProposalWidth = 4;

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return -floor_div(-a, b); }

double max_iou_with(const Box& b, const std::vector<SceneObject>& objects) {
  double best = 0.0;
  for (const auto& o : objects) best = std::max(best, iou(b, o.box));
  return best;
}

Box box_around(double cx, double cy, int w, int h) {
  const int x0 = static_cast<int>(std::lround(cx - 0.5 * w));
  const int y0 = static_cast<int>(std::lround(cy - 0.5 * h));
  return {x0, y0, x0 + w, y0 + h};
}

bool usable(const Box& b) { return b.width() >= kMinProposalWidth && b.height() >= kMinProposalHeight; }

std::string pool_mode_name(PoolMode m) { return m == PoolMode::Max ? "max" : "mean"; }

PoolMode pool_mode_from_name(const std::string& s) {
  if (s == "max") return PoolMode::Max;
  if (s == "mean") return PoolMode::Mean;
  throw std::invalid_argument("pool_mode must be 'max' or 'mean', got '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::initialize(std::uint64_t seed) {
  CounterRng rng(seed, 0, kInitStream);
  ModelParams p;
  const double conv1_std = std::sqrt(2.0 / 9.0);
  for (double& v : p.conv1_kernels.values()) v = conv1_std * rng.normal();
  const double conv2_std = std::sqrt(2.0 / (8.0 * 9.0));
  for (double& v : p.conv2_kernels.values()) v = conv2_std * rng.normal();
  for (double& v : p.cls_weights.values()) v = 0.01 * rng.normal();
  return p;
}

std::vector<std::string> ModelParams::names() {
  return {"conv1_kernels", "conv1_bias", "conv2_kernels", "conv2_bias", "cls_weights", "cls_bias"};
}

std::vector<Tensor*> ModelParams::tensors() {
  return {&conv1_kernels, &conv1_bias, &conv2_kernels, &conv2_bias, &cls_weights, &cls_bias};
}

std::vector<const Tensor*> ModelParams::tensors() const {
  return {&conv1_kernels, &conv1_bias, &conv2_kernels, &conv2_bias, &cls_weights, &cls_bias};
}

Tensor ModelParams::pedestrian_weights() const {
  Tensor w({cls_weights.dim(1)});
  w.array() = cls_weights.as_matrix().row(kPedestrianClass).transpose().array();
  return w;
}

bool ModelParams::all_finite() const {
  return std::ranges::all_of(tensors(), [](const Tensor* t) { return t->all_finite(); });
}

ModelParams round_to_single(const ModelParams& params) {
  ModelParams out = params;
  for (Tensor* t : out.tensors()) *t = round_to_single(*t);
  return out;
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (iterations <= 0) fail("iterations must be > 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(r_h >= 1.0) || !(r_w >= 1.0)) fail("r_h and r_w must be >= 1");
  if (proposals_per_image < 2) fail("proposals_per_image must be >= 2");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) fail("positive_fraction must lie in (0, 1)");
  if (pool_size < 1) fail("pool_size must be >= 1");
  if (proposals.heights.empty() || proposals.aspects.empty()) fail("proposal heights and aspects must be non-empty");
  for (int h : proposals.heights) {
    if (h < kMinProposalHeight) fail("proposal heights must be >= 8");
  }
  for (double a : proposals.aspects) {
    if (!(a > 0.0)) fail("proposal aspects must be > 0");
  }
  if (proposals.stride < 1) fail("proposal stride must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"iterations", c.iterations},
                     {"learning_rate", c.learning_rate},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed},
                     {"pixel", c.pixel},
                     {"region", c.region},
                     {"r_h", c.r_h},
                     {"r_w", c.r_w},
                     {"proposals_per_image", c.proposals_per_image},
                     {"positive_fraction", c.positive_fraction},
                     {"grad_through_A", c.grad_through_A},
                     {"pool_size", c.pool_size},
                     {"pool_mode", pool_mode_name(c.pool_mode)},
                     {"proposals",
                      {{"heights", c.proposals.heights},
                       {"aspects", c.proposals.aspects},
                       {"stride", c.proposals.stride},
                       {"score_threshold", c.proposals.score_threshold},
                       {"nms_iou", c.proposals.nms_iou}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "iterations") c.iterations = v.get<int>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "pixel") c.pixel = v.get<bool>();
    else if (key == "region") c.region = v.get<bool>();
    else if (key == "r_h") c.r_h = v.get<double>();
    else if (key == "r_w") c.r_w = v.get<double>();
    else if (key == "proposals_per_image") c.proposals_per_image = v.get<int>();
    else if (key == "positive_fraction") c.positive_fraction = v.get<double>();
    else if (key == "grad_through_A") c.grad_through_A = v.get<bool>();
    else if (key == "pool_size") c.pool_size = v.get<int>();
    else if (key == "pool_mode") c.pool_mode = pool_mode_from_name(v.get<std::string>());
    else if (key == "proposals") {
      for (const auto& [pk, pv] : v.items()) {
        if (pk == "heights") c.proposals.heights = pv.get<std::vector<int>>();
        else if (pk == "aspects") c.proposals.aspects = pv.get<std::vector<double>>();
        else if (pk == "stride") c.proposals.stride = pv.get<int>();
        else if (pk == "score_threshold") c.proposals.score_threshold = pv.get<double>();
        else if (pk == "nms_iou") c.proposals.nms_iou = pv.get<double>();
        else throw std::invalid_argument("train config: unknown proposals key '" + pk + "'");
      }
    } else {
      throw std::invalid_argument("train config: unknown key '" + key + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

Box to_feature_grid(const Box& image_box, int grid_rows, int grid_cols) {
  const Box grid{floor_div(image_box.x0, kFeatureStride), floor_div(image_box.y0, kFeatureStride),
                 ceil_div(image_box.x1, kFeatureStride), ceil_div(image_box.y1, kFeatureStride)};
  return clip(grid, grid_rows, grid_cols);
}

ForwardResult forward_image(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                            const TrainConfig& cfg, const ForwardOverrides* overrides) {
  require_rank(image, 3, "forward_image");
  if (image.dim(0) != 1 || image.dim(1) % kFeatureStride != 0 || image.dim(2) % kFeatureStride != 0) {
    throw ShapeError("forward_image: need a [1, H, W] image with H and W divisible by 4, got " +
                     shape_string(image.shape()));
  }
  if (overrides && overrides->regions && overrides->regions->size() != proposals.size()) {
    throw ShapeError("forward_image: region overrides must cover every proposal");
  }

  ForwardResult r;
  r.conv1_out = conv2d_fwd(image, params.conv1_kernels, params.conv1_bias);
  r.relu1_out = relu_fwd(r.conv1_out);
  r.pool1_out = maxpool2_fwd(r.relu1_out);
  r.conv2_out = conv2d_fwd(r.pool1_out, params.conv2_kernels, params.conv2_bias);
  r.relu2_out = relu_fwd(r.conv2_out);
  r.features = maxpool2_fwd(r.relu2_out);

  r.activation = overrides && overrides->activation ? *overrides->activation
                                                    : self_activation_map(r.features, params.pedestrian_weights());
  r.calibrated = cfg.pixel ? pixel_calibrate_fwd(r.features, r.activation) : r.features;

  const int grid_rows = static_cast<int>(r.features.dim(1)), grid_cols = static_cast<int>(r.features.dim(2));
  r.scores.assign(proposals.size(), 0.0);
  r.proposals.resize(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    ProposalTrace& t = r.proposals[i];
    t.grid_box = to_feature_grid(proposals[i], grid_rows, grid_cols);
    if (t.grid_box.empty()) {
      spdlog::warn("proposal {} maps to an empty feature-grid box; skipped", to_string(proposals[i]));
      continue;
    }
    t.valid = true;
    if (cfg.region) {
      t.regions = overrides && overrides->regions ? (*overrides->regions)[i]
                                                  : find_calibration_regions(r.activation, t.grid_box, cfg.r_h, cfg.r_w);
      t.pooled = region_calibrate_fwd(r.calibrated, *t.regions, cfg.pool_size, cfg.pool_mode);
    } else {
      t.pooled = roi_pool_masked(r.calibrated, t.grid_box, std::nullopt, cfg.pool_size, cfg.pool_mode);
    }
    t.embedding = gap_fwd(t.pooled);
    t.logits = linear_fwd(t.embedding, params.cls_weights, params.cls_bias);
    t.probs = softmax_xent_fwd(t.logits, kPedestrianClass).probs;
    r.scores[i] = t.probs[kPedestrianClass];
  }
  if (!r.calibrated.all_finite()) throw NumericError("forward_image: non-finite calibrated features");
  return r;
}

namespace {

void check_labels(std::span<const Box> proposals, std::span<const int> labels) {
  if (proposals.size() != labels.size()) throw ShapeError("one label per proposal required");
}

}  // namespace

double loss_only(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                 std::span<const int> labels, const TrainConfig& cfg, const ForwardOverrides* overrides) {
  check_labels(proposals, labels);
  const ForwardResult fwd = forward_image(params, image, proposals, cfg, overrides);
  double loss = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (!fwd.proposals[i].valid) continue;
    loss += softmax_xent_fwd(fwd.proposals[i].logits, labels[i]).loss;
    ++counted;
  }
  return counted ? loss / counted : 0.0;
}

LossAndGrads loss_and_gradients(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                                std::span<const int> labels, const TrainConfig& cfg,
                                const ForwardOverrides* overrides) {
  check_labels(proposals, labels);
  const ForwardResult fwd = forward_image(params, image, proposals, cfg, overrides);

  LossAndGrads out;
  for (Tensor* g : out.grads.tensors()) g->array().setZero();
  for (const auto& t : fwd.proposals) out.counted += t.valid ? 1 : 0;
  if (out.counted == 0) return out;
  const double inv_n = 1.0 / out.counted;

  Tensor d_calibrated = Tensor::zeros_like(fwd.calibrated);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const ProposalTrace& t = fwd.proposals[i];
    if (!t.valid) continue;
    const auto xent = softmax_xent_fwd(t.logits, labels[i]);
    out.loss += xent.loss * inv_n;
    const auto d_logits = softmax_xent_bwd(xent.probs, labels[i], inv_n);
    auto lin = linear_bwd(t.embedding, params.cls_weights, d_logits.d_input);
    out.grads.cls_weights += lin.d_params[0];
    out.grads.cls_bias += lin.d_params[1];
    const auto d_pooled = gap_bwd(t.pooled.shape(), lin.d_input).d_input;
    if (t.regions) {
      d_calibrated += region_calibrate_bwd(fwd.calibrated, *t.regions, cfg.pool_size, d_pooled, cfg.pool_mode);
    } else {
      d_calibrated += roi_pool_masked_bwd(fwd.calibrated, t.grid_box, std::nullopt, cfg.pool_size, d_pooled,
                                          cfg.pool_mode);
    }
  }

  Tensor d_features;
  if (cfg.pixel) {
    // A frozen by an override is a constant, whatever the flag says.
    const bool through_map = cfg.grad_through_A && !(overrides && overrides->activation);
    auto pc = pixel_calibrate_bwd(fwd.features, fwd.activation, d_calibrated, through_map);
    d_features = std::move(pc.d_features);
    if (pc.d_raw) {
      auto sa = self_activation_bwd(fwd.features, params.pedestrian_weights(), *pc.d_raw);
      d_features += sa.d_input;
      out.grads.cls_weights.as_matrix().row(kPedestrianClass) += sa.d_params[0].array().matrix().transpose();
    }
  } else {
    d_features = std::move(d_calibrated);
  }

  const auto d_relu2 = maxpool2_bwd(fwd.relu2_out, d_features).d_input;
  const auto d_conv2 = relu_bwd(fwd.conv2_out, d_relu2).d_input;
  auto conv2 = conv2d_bwd(fwd.pool1_out, params.conv2_kernels, d_conv2);
  out.grads.conv2_kernels = std::move(conv2.d_params[0]);
  out.grads.conv2_bias = std::move(conv2.d_params[1]);
  const auto d_relu1 = maxpool2_bwd(fwd.relu1_out, conv2.d_input).d_input;
  const auto d_conv1 = relu_bwd(fwd.conv1_out, d_relu1).d_input;
  auto conv1 = conv2d_bwd(image, params.conv1_kernels, d_conv1);
  out.grads.conv1_kernels = std::move(conv1.d_params[0]);
  out.grads.conv1_bias = std::move(conv1.d_params[1]);
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::vector<LabeledProposal> sample_training_proposals(const Scene& scene, const TrainConfig& cfg, CounterRng& rng) {
  if (scene.objects.empty()) return {};
  const int size_rows = static_cast<int>(scene.image.dim(1)), size_cols = static_cast<int>(scene.image.dim(2));
  const int n_pos = std::clamp(static_cast<int>(std::lround(cfg.proposals_per_image * cfg.positive_fraction)), 1,
                               cfg.proposals_per_image - 1);
  const int n_neg = cfg.proposals_per_image - n_pos;
  const auto& heights = cfg.proposals.heights;
  const auto& aspects = cfg.proposals.aspects;
  const int n_objects = static_cast<int>(scene.objects.size());

  auto random_shape = [&](int& w, int& h) {
    h = heights[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(heights.size()) - 1))];
    h = static_cast<int>(std::lround(h * rng.uniform(0.85, 1.15)));
    const double a = aspects[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(aspects.size()) - 1))];
    w = std::max(kMinProposalWidth, static_cast<int>(std::lround(h * a)));
  };

  std::vector<LabeledProposal> out;
  for (int k = 0; k < n_pos; ++k) {
    bool found = false;
    for (int attempt = 0; attempt < kSampleAttempts && !found; ++attempt) {
      const Box& gt = scene.objects[static_cast<std::size_t>(rng.uniform_int(0, n_objects - 1))].box;
      const int h = static_cast<int>(std::lround(gt.height() * rng.uniform(0.85, 1.18)));
      const int w = static_cast<int>(std::lround(gt.width() * rng.uniform(0.85, 1.18)));
      const double cx = gt.center_x() + rng.uniform(-0.2, 0.2) * gt.width();
      const double cy = gt.center_y() + rng.uniform(-0.15, 0.15) * gt.height();
      const Box b = clip(box_around(cx, cy, w, h), size_rows, size_cols);
      if (usable(b) && iou(b, gt) >= kPositiveIou) {
        out.push_back({b, kPedestrianClass});
        found = true;
      }
    }
    if (!found) return {};
  }

  for (int k = 0; k < n_neg; ++k) {
    bool found = false;
    for (int attempt = 0; attempt < kSampleAttempts && !found; ++attempt) {
      Box b;
      const double kind = rng.uniform();
      const bool clutter = !scene.distractors.empty() && kind < 0.25;
      if (clutter) {
        const Box& d = scene.distractors[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(scene.distractors.size()) - 1))];
        int w = 0, h = 0;
        random_shape(w, h);
        b = box_around(d.center_x() + rng.uniform(-0.3, 0.3) * w, d.center_y() + rng.uniform(-0.3, 0.3) * h, w, h);
      } else if (kind < 0.6) {
        const Box& gt = scene.objects[static_cast<std::size_t>(rng.uniform_int(0, n_objects - 1))].box;
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        double cx = gt.center_x(), cy = gt.center_y();
        int w = gt.width(), h = gt.height();
        // shifts of just over half the box sit right under the IoU 0.3 bound
        switch (rng.uniform_int(0, 3)) {
          case 0: cx += sign * rng.uniform(0.54, 1.0) * gt.width(); break;
          case 1: cy += sign * rng.uniform(0.54, 1.0) * gt.height(); break;
          case 2:
            cx += sign * rng.uniform(0.3, 0.6) * gt.width();
            cy += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.3, 0.6) * gt.height();
            break;
          default:
            // part of the object, or a box much larger than it
            if (rng.bernoulli(0.5)) {
              h = std::max(kMinProposalHeight, static_cast<int>(std::lround(gt.height() * rng.uniform(0.3, 0.5))));
              cy = gt.y0 + rng.uniform(0.0, 1.0) * gt.height();
            } else {
              h = static_cast<int>(std::lround(gt.height() * rng.uniform(1.9, 2.6)));
              w = static_cast<int>(std::lround(gt.width() * rng.uniform(1.9, 2.6)));
            }
        }
        b = box_around(cx, cy, w, h);
      } else {
        int w = 0, h = 0;
        random_shape(w, h);
        const int x0 = rng.uniform_int(-w / 4, size_cols - w + w / 4);
        const int y0 = rng.uniform_int(-h / 4, size_rows - h + h / 4);
        b = {x0, y0, x0 + w, y0 + h};
      }
      b = clip(b, size_rows, size_cols);
      if (usable(b) && max_iou_with(b, scene.objects) < kNegativeIou) {
        out.push_back({b, kBackgroundClass});
        found = true;
      }
    }
    if (!found) return {};
  }
  return out;
}

void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state, const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto v = state.velocity.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i]->array() = cfg.momentum * v[i]->array() + (g[i]->array() + cfg.weight_decay * p[i]->array());
    p[i]->array() -= cfg.learning_rate * v[i]->array();
  }
}

TrainResult train(std::span<const Scene> dataset, const TrainConfig& cfg, std::optional<ModelParams> initial,
                  const TrainProgress& progress) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult result{initial ? std::move(*initial) : ModelParams::initialize(cfg.seed), {}};
  SgdState state;
  for (Tensor* t : state.velocity.tensors()) t->array().setZero();
  CounterRng rng(cfg.seed, 0, kTrainStream);
  const int n_scenes = static_cast<int>(dataset.size());

  std::vector<Box> boxes;
  std::vector<int> labels;
  result.history.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<LabeledProposal> batch;
    for (int attempt = 0; attempt < kSceneResamples && batch.empty(); ++attempt) {
      const Scene& scene = dataset[static_cast<std::size_t>(rng.uniform_int(0, n_scenes - 1))];
      batch = sample_training_proposals(scene, cfg, rng);
      if (!batch.empty()) {
        boxes.clear();
        labels.clear();
        for (const auto& lp : batch) {
          boxes.push_back(lp.box);
          labels.push_back(lp.label);
        }
        const auto lg = loss_and_gradients(result.params, scene.image, boxes, labels, cfg);
        sgd_step(result.params, lg.grads, state, cfg);
        if (!std::isfinite(lg.loss) || !result.params.all_finite()) {
          throw NumericError("train: non-finite loss or parameters at iteration " + std::to_string(it));
        }
        result.history.push_back(lg.loss);
        if (progress) progress(it, lg.loss);
      }
    }
    if (batch.empty()) throw std::runtime_error("train: no scene yielded a valid proposal batch");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<Box> sliding_window_proposals(int image_rows, int image_cols, const ProposalConfig& cfg) {
  std::vector<Box> out;
  for (int h : cfg.heights) {
    for (double a : cfg.aspects) {
      const int w = std::max(1, static_cast<int>(std::lround(h * a)));
      if (h > image_rows || w > image_cols) continue;
      for (int y = 0; y + h <= image_rows; y += cfg.stride) {
        for (int x = 0; x + w <= image_cols; x += cfg.stride) out.push_back({x, y, x + w, y + h});
      }
    }
  }
  return out;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh) {
  sort_detections(detections);
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    const bool suppressed =
        std::ranges::any_of(kept, [&](const Detection& k) { return iou(k.box, d.box) > iou_thresh; });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> infer(const ModelParams& params, const Tensor& image, const TrainConfig& cfg) {
  const auto proposals =
      sliding_window_proposals(static_cast<int>(image.dim(1)), static_cast<int>(image.dim(2)), cfg.proposals);
  const auto fwd = forward_image(params, image, proposals, cfg);
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (fwd.proposals[i].valid && fwd.scores[i] > cfg.proposals.score_threshold) {
      dets.push_back({proposals[i], fwd.scores[i]});
    }
  }
  return nms(std::move(dets), cfg.proposals.nms_iou);
}

std::vector<std::vector<Detection>> infer_all(const ModelParams& params, std::span<const Scene> scenes,
                                              const TrainConfig& cfg, int jobs) {
  std::vector<std::vector<Detection>> out(scenes.size());
  const auto n = scenes.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = infer(params, scenes[i].image, cfg);
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = infer(params, scenes[i].image, cfg);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const TrainConfig& cfg,
                     int iteration) {
  std::filesystem::create_directories(dir);
  const auto names = ModelParams::names();
  const auto tensors = params.tensors();
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    write_fct1(dir / (names[i] + ".fct1"), *tensors[i]);
    shapes.push_back(tensors[i]->shape());
  }
  const nlohmann::json manifest{{"names", names}, {"shapes", shapes}, {"cfg", cfg}, {"iteration", iteration}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw CheckpointError("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw CheckpointError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  Checkpoint ck;
  try {
    ck.iteration = manifest.at("iteration").get<int>();
    from_json(manifest.at("cfg"), ck.cfg);
    const auto names = manifest.at("names").get<std::vector<std::string>>();
    if (names != ModelParams::names()) throw CheckpointError("unexpected parameter names in " + dir.string());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  const auto names = ModelParams::names();
  auto tensors = ck.params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = read_fct1(dir / (names[i] + ".fct1"));
    if (t.shape() != tensors[i]->shape()) {
      throw CheckpointError(names[i] + ": shape " + shape_string(t.shape()) + ", expected " +
                            shape_string(tensors[i]->shape()));
    }
    *tensors[i] = std::move(t);
  }
  return ck;
}

}  // namespace fcnet
