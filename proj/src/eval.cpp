#include "fcnet/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace fcnet {
namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool counted(const MatchedDetection& d) { return d.label != MatchLabel::Ignored && d.score > 0.0; }

// Counted detections across all images, score descending.
std::vector<const MatchedDetection*> ranked(std::span<const ImageMatches> matches) {
  std::vector<const MatchedDetection*> out;
  for (const auto& image : matches) {
    for (const auto& d : image.detections) {
      if (counted(d)) out.push_back(&d);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->score > b->score; });
  return out;
}

}  // namespace

void sort_detections(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return row_major_less(a.box, b.box);
  });
}

std::array<double, 9> mr2_reference_fppi() {
  std::array<double, 9> refs{};
  for (int k = 0; k < 9; ++k) refs[k] = std::pow(10.0, -2.0 + k / 4.0);
  return refs;
}

ImageMatches match_detections(std::vector<Detection> detections, const std::vector<Box>& ground_truth,
                              const std::vector<bool>& ignore, double iou_thresh) {
  if (!ignore.empty() && ignore.size() != ground_truth.size()) {
    throw EvalError("match_detections: ignore flags do not match ground truth count");
  }
  auto ignored = [&](std::size_t g) { return !ignore.empty() && ignore[g]; };
  sort_detections(detections);

  ImageMatches out;
  out.gt_hit.assign(ground_truth.size(), false);
  for (std::size_t g = 0; g < ground_truth.size(); ++g) out.n_gt += ignored(g) ? 0 : 1;

  for (const auto& det : detections) {
    MatchedDetection m{det.box, det.score, MatchLabel::FalsePositive, 0.0};
    int best = -1;
    double best_iou = iou_thresh;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double o = iou(det.box, ground_truth[g]);
      m.max_iou = std::max(m.max_iou, o);
      if (ignored(g)) {
        hits_ignored = hits_ignored || o >= iou_thresh;
      } else if (!out.gt_hit[g] && o >= best_iou && (best < 0 || o > best_iou)) {
        best = static_cast<int>(g);
        best_iou = o;
      }
    }
    if (best >= 0) {
      m.label = MatchLabel::TruePositive;
      out.gt_hit[static_cast<std::size_t>(best)] = true;
    } else if (hits_ignored) {
      m.label = MatchLabel::Ignored;
    }
    out.detections.push_back(m);
  }
  return out;
}

double miss_rate_at(std::span<const CurvePoint> points, double fppi) {
  double zero_fp_miss = 1.0;
  std::vector<std::pair<double, double>> positive;  // (fppi, best miss)
  for (const auto& p : points) {
    if (p.fppi <= 0.0) {
      zero_fp_miss = std::min(zero_fp_miss, p.miss);
    } else if (!positive.empty() && positive.back().first == p.fppi) {
      positive.back().second = std::min(positive.back().second, p.miss);
    } else {
      positive.emplace_back(p.fppi, p.miss);
    }
  }
  if (positive.empty() || fppi < positive.front().first) return zero_fp_miss;
  if (fppi >= positive.back().first) return positive.back().second;
  const auto upper = std::upper_bound(positive.begin(), positive.end(), fppi,
                                      [](double f, const auto& p) { return f < p.first; });
  const auto lower = upper - 1;
  const double t = (std::log(fppi) - std::log(lower->first)) / (std::log(upper->first) - std::log(lower->first));
  return lower->second + t * (upper->second - lower->second);
}

double log_average_miss_rate(std::span<const CurvePoint> points) {
  double log_sum = 0.0;
  const auto refs = mr2_reference_fppi();
  for (double ref : refs) log_sum += std::log(std::max(miss_rate_at(points, ref), kMissRateFloor));
  return std::exp(log_sum / static_cast<double>(refs.size()));
}

EvalCurve fppi_miss_curve(std::span<const ImageMatches> matches, int n_images) {
  if (n_images < 1) throw EvalError("fppi_miss_curve: need at least one image");
  EvalCurve curve;
  for (const auto& m : matches) curve.n_gt += m.n_gt;
  if (curve.n_gt == 0) throw EvalError("fppi_miss_curve: no ground truth, miss rate undefined");

  const auto dets = ranked(matches);
  curve.n_det = static_cast<int>(dets.size());
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    (dets[i]->label == MatchLabel::TruePositive ? tp : fp) += 1;
    if (i + 1 < dets.size() && dets[i + 1]->score == dets[i]->score) continue;
    curve.points.push_back({dets[i]->score, double(fp) / n_images, 1.0 - double(tp) / curve.n_gt});
  }
  curve.mr2 = log_average_miss_rate(curve.points);
  return curve;
}

std::vector<BackgroundErrorPoint> background_error_rate(std::span<const ImageMatches> matches, int n_images,
                                                        std::span<const double> fppi_points) {
  if (n_images < 1) throw EvalError("background_error_rate: need at least one image");
  const auto dets = ranked(matches);
  std::vector<BackgroundErrorPoint> out;
  for (double target : fppi_points) {
    int fp = 0, background = 0;
    int admitted_fp = 0, admitted_background = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i]->label == MatchLabel::FalsePositive) {
        ++fp;
        if (dets[i]->max_iou < kBackgroundIou) ++background;
      }
      if (i + 1 < dets.size() && dets[i + 1]->score == dets[i]->score) continue;
      if (double(fp) / n_images > target) break;
      admitted_fp = fp;
      admitted_background = background;
    }
    BackgroundErrorPoint p{target, std::nullopt};
    if (admitted_fp > 0) p.fraction = double(admitted_background) / admitted_fp;
    out.push_back(p);
  }
  return out;
}

std::string_view to_string(EvalSubset subset) {
  switch (subset) {
    case EvalSubset::All: return "all";
    case EvalSubset::Reasonable: return "reasonable";
    case EvalSubset::Partial: return "partial";
    case EvalSubset::Heavy: return "heavy";
    case EvalSubset::ReasonableHeavy: return "reasonable+heavy";
  }
  return "all";
}

EvalSubset eval_subset_from_string(std::string_view name) {
  for (auto s : {EvalSubset::All, EvalSubset::Reasonable, EvalSubset::Partial, EvalSubset::Heavy,
                 EvalSubset::ReasonableHeavy}) {
    if (to_string(s) == name) return s;
  }
  throw EvalError("unknown subset '" + std::string(name) + "'");
}

bool in_subset(const SceneObject& object, EvalSubset subset) {
  const OcclusionTag tag = object.subset;
  switch (subset) {
    case EvalSubset::All: return true;
    case EvalSubset::Reasonable: return tag == OcclusionTag::Reasonable || tag == OcclusionTag::Partial;
    case EvalSubset::Partial: return tag == OcclusionTag::Partial;
    case EvalSubset::Heavy: return tag == OcclusionTag::Heavy;
    case EvalSubset::ReasonableHeavy: return tag != OcclusionTag::Small;
  }
  return false;
}

std::vector<SubsetReport> evaluate_by_subset(std::span<const std::vector<Detection>> detections,
                                             std::span<const Scene> scenes, std::span<const EvalSubset> subsets) {
  if (detections.size() != scenes.size()) throw EvalError("evaluate_by_subset: one detection list per scene");
  std::vector<SubsetReport> reports;
  for (EvalSubset subset : subsets) {
    SubsetReport report{subset, {}, {}};
    int n_gt = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      std::vector<Box> gt;
      std::vector<bool> ignore;
      for (const auto& obj : scenes[i].objects) {
        gt.push_back(obj.box);
        ignore.push_back(!in_subset(obj, subset));
      }
      report.matches.push_back(match_detections(detections[i], gt, ignore));
      n_gt += report.matches.back().n_gt;
    }
    if (n_gt == 0) continue;
    report.curve = fppi_miss_curve(report.matches, static_cast<int>(scenes.size()));
    reports.push_back(std::move(report));
  }
  return reports;
}

void write_curve_csv(std::ostream& os, const EvalCurve& curve) {
  os << "threshold,fppi,miss\n";
  for (const auto& p : curve.points) os << number(p.threshold) << ',' << number(p.fppi) << ',' << number(p.miss) << '\n';
}

void write_summary_csv(std::ostream& os, std::span<const SubsetReport> reports) {
  os << "subset,mr2,n_gt,n_det\n";
  for (const auto& r : reports) {
    os << to_string(r.subset) << ',' << number(r.curve.mr2) << ',' << r.curve.n_gt << ',' << r.curve.n_det << '\n';
  }
}

void write_background_csv(std::ostream& os, std::span<const BackgroundErrorPoint> points) {
  os << "fppi,bg_fraction\n";
  for (const auto& p : points) os << number(p.fppi) << ',' << (p.fraction ? number(*p.fraction) : "na") << '\n';
}

}  // namespace fcnet
