#pragma once

// Toy two-stage pedestrian detector:
//   image -> conv3x3(8) -> relu -> pool2 -> conv3x3(16) -> relu -> pool2 -> X
//   A = activation map of X under the classifier's pedestrian row
//   X_hat = pixel calibration of X by A            (optional)
//   per proposal: region calibration of X_hat      (optional, else RoI pool)
//   GAP -> linear(2) -> softmax
// The classifier row that scores pedestrians is also the weight vector that
// builds A, so every SGD step changes the next step's calibration.

#include "fcnet/activation.hpp"
#include "fcnet/calibration.hpp"
#include "fcnet/eval.hpp"
#include "fcnet/rng.hpp"
#include "fcnet/synthdata.hpp"
#include "fcnet/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fcnet {

inline constexpr int kBackgroundClass = 0;
inline constexpr int kPedestrianClass = 1;
/// Image pixels per feature cell after the two pooling layers.
inline constexpr int kFeatureStride = 4;

struct ModelParams {
  Tensor conv1_kernels{{8, 1, 3, 3}};
  Tensor conv1_bias{{8}};
  Tensor conv2_kernels{{16, 8, 3, 3}};
  Tensor conv2_bias{{16}};
  Tensor cls_weights{{2, 16}};  // row 0 background, row 1 pedestrian
  Tensor cls_bias{{2}};

  /// He-initialized convolutions, small random classifier, zero biases.
  static ModelParams initialize(std::uint64_t seed);

  static std::vector<std::string> names();
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;

  /// The pedestrian row of the classifier, as a [16] vector.
  Tensor pedestrian_weights() const;

  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Every value rounded through float32, matching a checkpoint round trip.
ModelParams round_to_single(const ModelParams& params);

/// Sliding-window proposals and post-processing used at inference.
struct ProposalConfig {
  std::vector<int> heights{36, 48, 64};
  std::vector<double> aspects{0.41, 0.55};
  int stride = 8;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

struct TrainConfig {
  int iterations = 2000;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  bool pixel = true;
  bool region = true;
  double r_h = kDefaultHeightRatio;
  double r_w = kDefaultWidthRatio;
  int proposals_per_image = 16;
  double positive_fraction = 0.25;
  bool grad_through_A = false;
  int pool_size = 4;
  PoolMode pool_mode = PoolMode::Max;
  ProposalConfig proposals;

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
/// Missing keys keep their current values; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Image box -> feature grid box, rounding outward and clipping to the grid.
/// Empty when nothing of the box survives.
Box to_feature_grid(const Box& image_box, int grid_rows, int grid_cols);

/// Test hooks: a fixed activation map (e.g. forced to zero or frozen at the
/// current parameters) and fixed calibration regions per proposal.
struct ForwardOverrides {
  std::optional<ActivationMap> activation;
  std::optional<std::vector<CalibrationRegions>> regions;
};

struct ProposalTrace {
  bool valid = false;
  Box grid_box;
  std::optional<CalibrationRegions> regions;
  Tensor pooled;  // [16, P, P]
  Tensor embedding;  // GAP output, [16]
  Tensor logits;     // [2]
  Tensor probs;      // [2]
};

struct ForwardResult {
  std::vector<double> scores;  // pedestrian probability; 0 for skipped proposals
  std::vector<ProposalTrace> proposals;
  ActivationMap activation;
  // backbone intermediates, kept for the backward pass
  Tensor conv1_out, relu1_out, pool1_out, conv2_out, relu2_out;
  Tensor features;    // X
  Tensor calibrated;  // X_hat (== X when pixel calibration is off)
};

ForwardResult forward_image(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                            const TrainConfig& cfg, const ForwardOverrides* overrides = nullptr);

struct LossAndGrads {
  double loss = 0.0;  // mean cross-entropy over valid proposals
  ModelParams grads;
  int counted = 0;
};

/// Forward plus the full hand-chained backward pass.
LossAndGrads loss_and_gradients(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                                std::span<const int> labels, const TrainConfig& cfg,
                                const ForwardOverrides* overrides = nullptr);

/// Forward-only loss, for finite-difference checks.
double loss_only(const ModelParams& params, const Tensor& image, std::span<const Box> proposals,
                 std::span<const int> labels, const TrainConfig& cfg, const ForwardOverrides* overrides = nullptr);

struct LabeledProposal {
  Box box;
  int label;
};

/// Jittered ground truth with IoU >= 0.5 as positives; random, offset and
/// clutter-centred boxes with IoU < 0.3 against every object as negatives.
/// Empty when the scene cannot supply the requested mix.
std::vector<LabeledProposal> sample_training_proposals(const Scene& scene, const TrainConfig& cfg, CounterRng& rng);

struct SgdState {
  ModelParams velocity;
};

/// v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state, const TrainConfig& cfg);

struct TrainResult {
  ModelParams params;
  std::vector<double> history;  // per-iteration loss
};

using TrainProgress = std::function<void(int iteration, double loss)>;

TrainResult train(std::span<const Scene> dataset, const TrainConfig& cfg,
                  std::optional<ModelParams> initial = std::nullopt, const TrainProgress& progress = {});

std::vector<Box> sliding_window_proposals(int image_rows, int image_cols, const ProposalConfig& cfg);

/// Greedy NMS: highest score first (ties in row-major box order); a box is
/// dropped when its IoU with a kept box exceeds iou_thresh.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh);

std::vector<Detection> infer(const ModelParams& params, const Tensor& image, const TrainConfig& cfg);

/// Runs infer on every scene; results keep scene order.
std::vector<std::vector<Detection>> infer_all(const ModelParams& params, std::span<const Scene> scenes,
                                              const TrainConfig& cfg, int jobs = 1);

// Checkpoint directory: one FCT1 file per parameter plus manifest.json
// {names, shapes, cfg, iteration}.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelParams params;
  TrainConfig cfg;
  int iteration = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const TrainConfig& cfg,
                     int iteration);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fcnet
