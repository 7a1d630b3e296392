#include "coteach/geometry.hpp"

#include <cmath>
#include <random>

#include <doctest.h>

using namespace coteach;

namespace {

// Independent IoU for the matching oracle.
double ref_iou(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0 || h <= 0) return 0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

// Brute-force re-evaluation of the matching rules.
std::vector<int> oracle_match(const std::vector<BoundingBox>& anchors,
                              const std::vector<BoundingBox>& gts, double threshold) {
  std::vector<int> assignment(anchors.size(), MatchResult::kNegative);
  std::vector<char> claimed(anchors.size(), 0);
  for (size_t g = 0; g < gts.size(); ++g) {
    int best = -1;
    double best_iou = -1;
    for (size_t a = 0; a < anchors.size(); ++a) {
      if (claimed[a]) continue;
      const double v = ref_iou(anchors[a], gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(a);
      }
    }
    if (best >= 0) {
      claimed[best] = 1;
      assignment[best] = static_cast<int>(g);
    }
  }
  for (size_t a = 0; a < anchors.size(); ++a) {
    if (claimed[a]) continue;
    int argmax = -1;
    double best_iou = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      const double v = ref_iou(anchors[a], gts[g]);
      if (v > best_iou) {
        best_iou = v;
        argmax = static_cast<int>(g);
      }
    }
    if (argmax >= 0 && best_iou >= threshold) assignment[a] = argmax;
  }
  return assignment;
}

BoundingBox random_box(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> u(0, extent);
  while (true) {
    const double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    BoundingBox b{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    if (b.width() > 1 && b.height() > 1) return b;
  }
}

}  // namespace

TEST_CASE("iou closed-form cases") {
  const BoundingBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou symmetry and range on fuzzed boxes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const BoundingBox a = random_box(rng, 100);
    const BoundingBox b = random_box(rng, 100);
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("anchor grid 1x1 covers the image") {
  const AnchorGrid grid = build_anchor_grid(64, 48, 1, 1, {{64, 48}});
  REQUIRE(grid.anchors.size() == 1);
  CHECK(grid.anchors[0] == BoundingBox{0, 0, 64, 48});
}

TEST_CASE("anchor grid 2x2 centers") {
  const AnchorGrid grid = build_anchor_grid(100, 100, 2, 2, {{10, 10}});
  REQUIRE(grid.anchors.size() == 4);
  CHECK(grid.anchors[0].center_x() == doctest::Approx(25));
  CHECK(grid.anchors[0].center_y() == doctest::Approx(25));
  CHECK(grid.anchors[1].center_x() == doctest::Approx(75));
  CHECK(grid.anchors[3].center_y() == doctest::Approx(75));
}

TEST_CASE("anchor count equals rows*cols*anchors_per_cell") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 7);
  for (int i = 0; i < 50; ++i) {
    const int rows = dim(rng), cols = dim(rng), per_cell = dim(rng);
    std::vector<std::pair<double, double>> sizes(per_cell, {8.0, 8.0});
    const AnchorGrid grid = build_anchor_grid(128, 128, rows, cols, sizes);
    CHECK(static_cast<int>(grid.anchors.size()) == rows * cols * per_cell);
    CHECK(grid.shape.total() == static_cast<int>(grid.anchors.size()));
  }
}

TEST_CASE("matching with zero gts marks everything negative") {
  const AnchorGrid grid = build_anchor_grid(64, 64, 4, 4, {{16, 16}});
  const MatchResult m = match_anchors(grid, {}, 0.5);
  for (int a : m.anchor_to_gt) CHECK(a == MatchResult::kNegative);
  CHECK(m.positive_count() == 0);
}

TEST_CASE("matching a gt identical to one anchor") {
  const AnchorGrid grid = build_anchor_grid(64, 64, 2, 2, {{16, 16}});
  const MatchResult m = match_anchors(grid, {grid.anchors[2]}, 0.5);
  CHECK(m.anchor_to_gt[2] == 0);
  CHECK(m.best_anchor[0] == 2);
  for (int a = 0; a < 4; ++a)
    if (a != 2) CHECK(m.anchor_to_gt[a] == MatchResult::kNegative);
}

TEST_CASE("matching equals the brute-force rule oracle on fuzzed scenes") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> n_gt(0, 6);
  for (int trial = 0; trial < 60; ++trial) {
    const AnchorGrid grid = build_anchor_grid(96, 96, 6, 6, {{16, 16}, {30, 30}});
    std::vector<BoundingBox> gts;
    const int n = n_gt(rng);
    for (int g = 0; g < n; ++g) gts.push_back(random_box(rng, 96));
    const MatchResult m = match_anchors(grid, gts, 0.5);
    const auto expected = oracle_match(grid.anchors, gts, 0.5);
    CHECK(m.anchor_to_gt == expected);

    // Structural invariants.
    std::vector<int> count(gts.size(), 0);
    for (int a : m.anchor_to_gt)
      if (a >= 0) count[a] += 1;
    for (size_t g = 0; g < gts.size(); ++g) CHECK(count[g] >= 1);
  }
}

TEST_CASE("encode is zero for gt == anchor") {
  const BoundingBox anchor{10, 20, 30, 40};
  const auto offsets = encode_box(anchor, anchor);
  for (double v : offsets) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("encode for a double-size box with the same center") {
  const BoundingBox anchor{10, 10, 20, 20};
  const BoundingBox gt{5, 5, 25, 25};
  const auto offsets = encode_box(gt, anchor);
  CHECK(offsets[0] == doctest::Approx(0.0));
  CHECK(offsets[1] == doctest::Approx(0.0));
  CHECK(offsets[2] == doctest::Approx(std::log(2.0)));
  CHECK(offsets[3] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("encode/decode round-trip on fuzzed pairs") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox gt = random_box(rng, 200);
    const BoundingBox anchor = random_box(rng, 200);
    const BoundingBox back = decode_box(encode_box(gt, anchor), anchor);
    CHECK(std::abs(back.left - gt.left) < 1e-9);
    CHECK(std::abs(back.top - gt.top) < 1e-9);
    CHECK(std::abs(back.right - gt.right) < 1e-9);
    CHECK(std::abs(back.bottom - gt.bottom) < 1e-9);
  }
}
