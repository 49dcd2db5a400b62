#include "fcnet/experiment.hpp"

#include <stdexcept>

namespace fcnet {

SceneRange SceneRange::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("scene range must look like a:b, got '" + text + "'");
  SceneRange r;
  try {
    const std::string head = text.substr(0, colon), tail = text.substr(colon + 1);
    r.begin = head.empty() ? 0 : std::stoi(head);
    r.end = tail.empty() ? -1 : std::stoi(tail);
  } catch (const std::logic_error&) {
    throw std::invalid_argument("scene range must look like a:b, got '" + text + "'");
  }
  if (r.begin < 0 || (r.end >= 0 && r.end < r.begin)) throw std::invalid_argument("bad scene range '" + text + "'");
  return r;
}

std::span<const Scene> SceneRange::slice(std::span<const Scene> scenes) const {
  const auto n = static_cast<int>(scenes.size());
  const int b = std::min(begin, n);
  const int e = end < 0 ? n : std::min(end, n);
  return scenes.subspan(static_cast<std::size_t>(b), static_cast<std::size_t>(e - b));
}

std::string SceneRange::str() const { return std::to_string(begin) + ":" + (end < 0 ? "" : std::to_string(end)); }

RunOutcome evaluate_model(const ModelParams& params, std::span<const Scene> scenes, const TrainConfig& cfg,
                          int infer_jobs) {
  if (scenes.empty()) throw std::invalid_argument("evaluate_model: no test scenes");
  const auto detections = infer_all(params, scenes, cfg, infer_jobs);
  RunOutcome out;
  const EvalSubset subsets[] = {EvalSubset::Reasonable, EvalSubset::Partial, EvalSubset::Heavy, EvalSubset::All};
  for (const auto& report : evaluate_by_subset(detections, scenes, subsets)) {
    if (report.subset == EvalSubset::All) {
      const double one[] = {1.0};
      out.background_error_at_1 =
          background_error_rate(report.matches, static_cast<int>(scenes.size()), one).front().fraction;
    } else {
      out.mr2[report.subset] = report.curve.mr2;
    }
  }
  return out;
}

RunOutcome train_and_evaluate(std::span<const Scene> train_scenes, std::span<const Scene> test_scenes,
                              const TrainConfig& cfg, int infer_jobs) {
  auto trained = train(train_scenes, cfg);
  RunOutcome out = evaluate_model(round_to_single(trained.params), test_scenes, cfg, infer_jobs);
  out.history = std::move(trained.history);
  return out;
}

std::vector<Variant> ablation_variants() {
  return {{"baseline", false, false}, {"pixel", true, false}, {"region", false, true}, {"both", true, true}};
}

}  // namespace fcnet
