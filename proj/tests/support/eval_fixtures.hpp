#pragma once

#include "fcnet/eval.hpp"

#include <cmath>
#include <vector>

namespace fixture {

// Three images, four detections, three ground truths.
//   image 0: GT a, GT b. det 0.9 on a (TP), det 0.8 far away (FP)
//   image 1: GT c.       det 0.5 on c (TP)
//   image 2: no GT.      det 0.3 (FP)
// Sweep, by hand:
//   t=0.9: TP1 FP0 -> fppi 0,   miss 2/3
//   t=0.8: TP1 FP1 -> fppi 1/3, miss 2/3
//   t=0.5: TP2 FP1 -> fppi 1/3, miss 1/3
//   t=0.3: TP2 FP2 -> fppi 2/3, miss 1/3
// Reference FPPIs 0.01 .. 0.316 lie below 1/3, so they take the zero-FP miss
// rate 2/3. 0.562 interpolates between two 1/3 values and 1.0 clamps to the
// last point, both 1/3.
inline std::vector<fcnet::ImageMatches> three_images() {
  using fcnet::Box;
  using fcnet::match_detections;
  const Box a{0, 0, 10, 20}, b{30, 0, 40, 20}, c{50, 50, 60, 70};
  return {
      match_detections({{a, 0.9}, {{70, 70, 80, 90}, 0.8}}, {a, b}),
      match_detections({{c, 0.5}}, {c}),
      match_detections({{{5, 5, 15, 25}, 0.3}}, {}),
  };
}

inline constexpr int kThreeImages = 3;

// {threshold, fppi, miss}
inline const double kThreeImageCurve[4][3] = {
    {0.9, 0.0, 2.0 / 3}, {0.8, 1.0 / 3, 2.0 / 3}, {0.5, 1.0 / 3, 1.0 / 3}, {0.3, 2.0 / 3, 1.0 / 3}};

inline double three_image_mr2() { return std::pow(2.0 / 3, 7.0 / 9) * std::pow(1.0 / 3, 2.0 / 9); }

}  // namespace fixture
