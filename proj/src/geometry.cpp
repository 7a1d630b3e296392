#include "coteach/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coteach {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double il = std::max(a.left, b.left);
  const double it = std::max(a.top, b.top);
  const double ir = std::min(a.right, b.right);
  const double ib = std::min(a.bottom, b.bottom);
  const double iw = ir - il;
  const double ih = ib - it;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

AnchorGrid build_anchor_grid(double image_width, double image_height, int rows,
                             int cols,
                             const std::vector<std::pair<double, double>>& anchor_sizes) {
  AnchorGrid grid;
  grid.shape = {rows, cols, static_cast<int>(anchor_sizes.size())};
  grid.image_width = image_width;
  grid.image_height = image_height;
  grid.anchors.reserve(grid.shape.total());
  const double cell_w = image_width / cols;
  const double cell_h = image_height / rows;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double cx = (c + 0.5) * cell_w;
      const double cy = (r + 0.5) * cell_h;
      for (const auto& [w, h] : anchor_sizes) {
        BoundingBox box = BoundingBox::from_center(cx, cy, w, h);
        box.left = std::clamp(box.left, 0.0, image_width);
        box.right = std::clamp(box.right, 0.0, image_width);
        box.top = std::clamp(box.top, 0.0, image_height);
        box.bottom = std::clamp(box.bottom, 0.0, image_height);
        grid.anchors.push_back(box);
      }
    }
  }
  return grid;
}

MatchResult match_anchors(const AnchorGrid& grid,
                          const std::vector<BoundingBox>& gts,
                          double pos_threshold,
                          double ignore_threshold) {
  const int n_anchors = static_cast<int>(grid.anchors.size());
  const int n_gts = static_cast<int>(gts.size());
  MatchResult result;
  result.anchor_to_gt.assign(n_anchors, MatchResult::kNegative);
  result.best_anchor.assign(n_gts, -1);
  if (n_gts == 0) return result;

  // IoU table. Scenes are small; keep it simple.
  std::vector<double> table(static_cast<size_t>(n_anchors) * n_gts);
  for (int a = 0; a < n_anchors; ++a)
    for (int g = 0; g < n_gts; ++g)
      table[static_cast<size_t>(a) * n_gts + g] = iou(grid.anchors[a], gts[g]);

  // (i) force-match each gt to its best unclaimed anchor.
  std::vector<char> claimed(n_anchors, 0);
  for (int g = 0; g < n_gts; ++g) {
    int best = -1;
    double best_iou = -1.0;
    for (int a = 0; a < n_anchors; ++a) {
      if (claimed[a]) continue;
      const double v = table[static_cast<size_t>(a) * n_gts + g];
      if (v > best_iou) {
        best_iou = v;
        best = a;
      }
    }
    if (best >= 0) {
      claimed[best] = 1;
      result.anchor_to_gt[best] = g;
      result.best_anchor[g] = best;
    }
  }

  // (ii)/(iii) threshold matches and the optional ignore band.
  for (int a = 0; a < n_anchors; ++a) {
    if (claimed[a]) continue;
    int argmax = 0;
    double best_iou = table[static_cast<size_t>(a) * n_gts];
    for (int g = 1; g < n_gts; ++g) {
      const double v = table[static_cast<size_t>(a) * n_gts + g];
      if (v > best_iou) {
        best_iou = v;
        argmax = g;
      }
    }
    if (best_iou >= pos_threshold) {
      result.anchor_to_gt[a] = argmax;
    } else if (ignore_threshold >= 0 && best_iou >= ignore_threshold) {
      result.anchor_to_gt[a] = MatchResult::kIgnored;
    }
  }
  return result;
}

std::array<double, 4> encode_box(const BoundingBox& gt, const BoundingBox& anchor) {
  const double aw = anchor.width();
  const double ah = anchor.height();
  return {(gt.center_x() - anchor.center_x()) / aw,
          (gt.center_y() - anchor.center_y()) / ah,
          std::log(gt.width() / aw),
          std::log(gt.height() / ah)};
}

BoundingBox decode_box(const std::array<double, 4>& offsets, const BoundingBox& anchor) {
  const double cx = anchor.center_x() + offsets[0] * anchor.width();
  const double cy = anchor.center_y() + offsets[1] * anchor.height();
  const double w = std::exp(offsets[2]) * anchor.width();
  const double h = std::exp(offsets[3]) * anchor.height();
  return BoundingBox::from_center(cx, cy, w, h);
}

}  // namespace coteach
