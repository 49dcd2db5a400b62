#pragma once

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fcnet {

/// Raised for boxes that are empty or fall outside the grid they index.
class BoxError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Half-open integer rectangle [x0, x1) x [y0, y1). x runs along columns,
/// y along rows.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return empty() ? 0 : long(width()) * long(height()); }
  bool empty() const { return x1 <= x0 || y1 <= y0; }

  bool contains(const Box& other) const {
    return other.x0 >= x0 && other.y0 >= y0 && other.x1 <= x1 && other.y1 <= y1;
  }
  bool within(int rows, int cols) const { return x0 >= 0 && y0 >= 0 && x1 <= cols && y1 <= rows; }

  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }

  friend bool operator==(const Box&, const Box&) = default;
  /// Row-major order of the top-left corner, then the far corner.
  friend bool row_major_less(const Box& a, const Box& b) {
    if (a.y0 != b.y0) return a.y0 < b.y0;
    if (a.x0 != b.x0) return a.x0 < b.x0;
    if (a.y1 != b.y1) return a.y1 < b.y1;
    return a.x1 < b.x1;
  }
};

inline Box intersect(const Box& a, const Box& b) {
  return {std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
}

inline Box bounding_union(const Box& a, const Box& b) {
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

inline Box clip(const Box& b, int rows, int cols) {
  return {std::clamp(b.x0, 0, cols), std::clamp(b.y0, 0, rows), std::clamp(b.x1, 0, cols),
          std::clamp(b.y1, 0, rows)};
}

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
  const long inter = intersect(a, b).area();
  if (inter == 0) return 0.0;
  return double(inter) / double(a.area() + b.area() - inter);
}

inline std::string to_string(const Box& b) {
  return "[" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
         std::to_string(b.y1) + "]";
}

inline std::ostream& operator<<(std::ostream& os, const Box& b) { return os << to_string(b); }

}  // namespace fcnet
