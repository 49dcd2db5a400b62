#pragma once

// Train-then-evaluate runs shared by the sweep and ablation commands.

#include "fcnet/detector.hpp"
#include "fcnet/eval.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fcnet {

/// Half-open scene index range; `end < 0` means "to the end".
struct SceneRange {
  int begin = 0;
  int end = -1;

  /// Parses "a:b", "a:" or ":b".
  static SceneRange parse(const std::string& text);
  std::span<const Scene> slice(std::span<const Scene> scenes) const;
  std::string str() const;
};

struct RunOutcome {
  std::map<EvalSubset, double> mr2;  // subsets without ground truth are absent
  std::optional<double> background_error_at_1;  // over all objects, at FPPI = 1
  std::vector<double> history;
};

inline constexpr EvalSubset kReportedSubsets[] = {EvalSubset::Reasonable, EvalSubset::Partial, EvalSubset::Heavy};

/// Trains on `train_scenes`, rounds the parameters through float32 (as a
/// checkpoint would) and evaluates on `test_scenes`.
RunOutcome train_and_evaluate(std::span<const Scene> train_scenes, std::span<const Scene> test_scenes,
                              const TrainConfig& cfg, int infer_jobs = 1);

/// Evaluates fixed parameters on `scenes`.
RunOutcome evaluate_model(const ModelParams& params, std::span<const Scene> scenes, const TrainConfig& cfg,
                          int infer_jobs = 1);

/// The four ablation variants: baseline, +pixel, +region, +both.
struct Variant {
  std::string name;
  bool pixel;
  bool region;
};
std::vector<Variant> ablation_variants();

}  // namespace fcnet
