#pragma once

#include <array>
#include <utility>
#include <vector>

namespace coteach {

struct BoundingBox {
  double left = 0;
  double top = 0;
  double right = 0;
  double bottom = 0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double center_x() const { return 0.5 * (left + right); }
  double center_y() const { return 0.5 * (top + bottom); }
  double area() const { return width() * height(); }
  bool valid() const { return left < right && top < bottom; }

  static BoundingBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

struct GridShape {
  int rows = 1;
  int cols = 1;
  int anchors_per_cell = 1;
  int total() const { return rows * cols * anchors_per_cell; }
};

// Anchors ordered row-major over cells, then by anchor index within a cell:
// anchor_id = (row * cols + col) * anchors_per_cell + a.
struct AnchorGrid {
  std::vector<BoundingBox> anchors;
  GridShape shape;
  double image_width = 0;
  double image_height = 0;
};

AnchorGrid build_anchor_grid(double image_width, double image_height, int rows,
                             int cols,
                             const std::vector<std::pair<double, double>>& anchor_sizes);

struct MatchResult {
  static constexpr int kNegative = -1;
  static constexpr int kIgnored = -2;
  // Per anchor: gt index if positive, kNegative or kIgnored otherwise.
  std::vector<int> anchor_to_gt;
  // Per gt: the force-matched anchor, or -1 when no anchor was available.
  std::vector<int> best_anchor;

  int positive_count() const {
    int n = 0;
    for (int a : anchor_to_gt) n += (a >= 0);
    return n;
  }
};

// Matching rules, applied in order:
//  (i)  each gt is force-matched to its highest-IoU unclaimed anchor
//       (ties broken by lowest anchor index);
//  (ii) every other anchor whose best IoU against some gt reaches
//       pos_threshold becomes positive for its argmax gt (ties by lowest
//       gt index);
//  (iii) remaining anchors are negative, except those whose best IoU falls
//       in [ignore_threshold, pos_threshold) when ignore_threshold >= 0.
MatchResult match_anchors(const AnchorGrid& grid,
                          const std::vector<BoundingBox>& gts,
                          double pos_threshold,
                          double ignore_threshold = -1.0);

// SSD-style offsets: (dcx/aw, dcy/ah, log(gw/aw), log(gh/ah)).
std::array<double, 4> encode_box(const BoundingBox& gt, const BoundingBox& anchor);
BoundingBox decode_box(const std::array<double, 4>& offsets, const BoundingBox& anchor);

}  // namespace coteach
