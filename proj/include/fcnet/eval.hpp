#pragma once

// Detection metrics: greedy IoU matching with ignore regions, FPPI / miss-rate
// curves, log-average miss rate over [1e-2, 1e0], per-subset reports and the
// background-error fraction of false positives.

#include "fcnet/box.hpp"
#include "fcnet/synthdata.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fcnet {

struct Detection {
  Box box;      // image pixel coordinates
  double score;  // pedestrian probability
};

/// Score descending; equal scores in row-major box order.
void sort_detections(std::vector<Detection>& detections);

inline constexpr double kMatchIou = 0.5;
/// A false positive whose best IoU with every ground truth is below this is
/// a background error.
inline constexpr double kBackgroundIou = 0.2;
/// Floor applied to miss rates before taking logs.
inline constexpr double kMissRateFloor = 1e-4;

/// 10^(-2 + k/4), k = 0..8.
std::array<double, 9> mr2_reference_fppi();

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MatchLabel { TruePositive, FalsePositive, Ignored };

struct MatchedDetection {
  Box box;
  double score = 0.0;
  MatchLabel label = MatchLabel::FalsePositive;
  double max_iou = 0.0;  // best IoU against any ground truth, ignored ones included
};

struct ImageMatches {
  std::vector<MatchedDetection> detections;
  std::vector<bool> gt_hit;  // one flag per ground truth
  int n_gt = 0;              // ground truths that are not ignored
};

/// Greedy one-to-one matching in score order. Each detection takes the
/// unmatched, non-ignored ground truth with the highest IoU >= iou_thresh.
/// Failing that, a detection overlapping an ignored ground truth at
/// >= iou_thresh is marked Ignored (neither TP nor FP); otherwise it is FP.
ImageMatches match_detections(std::vector<Detection> detections, const std::vector<Box>& ground_truth,
                              const std::vector<bool>& ignore = {}, double iou_thresh = kMatchIou);

struct CurvePoint {
  double threshold;
  double fppi;
  double miss;
};

struct EvalCurve {
  std::vector<CurvePoint> points;  // thresholds descending, fppi ascending
  double mr2 = 1.0;
  int n_gt = 0;
  int n_det = 0;  // detections counted as TP or FP
};

/// Log-average miss rate of a curve: the geometric mean of the miss rate at
/// the nine reference FPPI values, each floored at kMissRateFloor. Between
/// curve points the miss rate is interpolated linearly in log-FPPI. Below
/// the first positive FPPI it is the best miss rate reached with zero false
/// positives (1.0 if none); above the last point it is the last miss rate.
double log_average_miss_rate(std::span<const CurvePoint> points);

/// Miss rate at one FPPI value under the rule of log_average_miss_rate.
double miss_rate_at(std::span<const CurvePoint> points, double fppi);

/// Sweeps the threshold over the distinct positive detection scores.
EvalCurve fppi_miss_curve(std::span<const ImageMatches> matches, int n_images);

struct BackgroundErrorPoint {
  double fppi;
  std::optional<double> fraction;  // empty when no false positive is admitted
};

/// For each requested FPPI, picks the lowest score threshold whose FPPI does
/// not exceed it and reports the share of admitted false positives that are
/// background errors.
std::vector<BackgroundErrorPoint> background_error_rate(std::span<const ImageMatches> matches, int n_images,
                                                        std::span<const double> fppi_points);

enum class EvalSubset { All, Reasonable, Partial, Heavy, ReasonableHeavy };

std::string_view to_string(EvalSubset subset);
EvalSubset eval_subset_from_string(std::string_view name);
bool in_subset(const SceneObject& object, EvalSubset subset);

struct SubsetReport {
  EvalSubset subset;
  EvalCurve curve;
  std::vector<ImageMatches> matches;
};

/// One report per requested subset with at least one ground truth. Objects
/// outside a subset act as ignore regions while it is evaluated.
std::vector<SubsetReport> evaluate_by_subset(std::span<const std::vector<Detection>> detections,
                                             std::span<const Scene> scenes, std::span<const EvalSubset> subsets);

/// `threshold,fppi,miss`
void write_curve_csv(std::ostream& os, const EvalCurve& curve);
/// `subset,mr2,n_gt,n_det`
void write_summary_csv(std::ostream& os, std::span<const SubsetReport> reports);
/// `fppi,bg_fraction` with `na` for operating points without false positives.
void write_background_csv(std::ostream& os, std::span<const BackgroundErrorPoint> points);

}  // namespace fcnet
