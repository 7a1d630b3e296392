#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coteach/geometry.hpp"

namespace coteach {

enum class LossComponent { PosCE, NegCE, Box };

std::string loss_component_name(LossComponent c);
LossComponent loss_component_from_name(const std::string& name);

// One scalar loss tagged with where it came from. gt_index is -1 for
// hard-negative records.
struct LossRecord {
  std::string frame_id;
  int anchor_id = 0;
  LossComponent component = LossComponent::PosCE;
  double value = 0;
  int gt_index = -1;
};

struct LossBreakdown {
  std::vector<LossRecord> records;
  std::map<std::string, int> positives_per_frame;

  void merge(LossBreakdown&& other);
  // (sum PosCE + sum NegCE + sum Box) / max(1, n_pos), the per-image
  // ranking scalar.
  std::map<std::string, double> normalized_frame_totals() const;

  std::string to_csv() const;
  static LossBreakdown from_csv(const std::string& text);
};

// -log softmax(logits)[target], max-subtracted.
double softmax_cross_entropy(std::span<const double> logits, int target);

// Elementwise Huber at unit knee, summed over the four offsets.
double smooth_l1(const std::array<double, 4>& pred, const std::array<double, 4>& target);

// The ceil(ratio * n_pos) largest-loss negatives (ties by lowest anchor_id);
// ceil(ratio) when n_pos is zero so the background signal never vanishes.
std::vector<int> mine_hard_negatives(const std::vector<std::pair<int, double>>& neg_losses,
                                     int n_pos, double ratio);

// Per-anchor network output: K+1 logits (background last) and 4 offsets.
struct AnchorPrediction {
  std::vector<double> logits;
  std::array<double, 4> offsets{};
};

struct BreakdownParams {
  int num_categories = 1;
  double neg_ratio = 3.0;
  double box_weight = 1.0;
};

// The cached per-frame loss structure: positive anchors with their targets
// plus the negative pool. Matching happens once per frame; breakdowns are
// recomputed from predictions every step.
struct FrameTargets {
  std::string frame_id;
  std::vector<int> positive_anchors;
  std::vector<int> positive_gt;                          // gt index per positive
  std::vector<std::array<double, 4>> positive_offsets;   // encoded regression targets
  std::vector<int> gt_category;                          // per gt
  std::vector<int> negative_anchors;
  int n_pos() const { return static_cast<int>(positive_anchors.size()); }
};

FrameTargets make_frame_targets(const std::string& frame_id, const AnchorGrid& grid,
                                const std::vector<BoundingBox>& gt_boxes,
                                const std::vector<int>& gt_categories,
                                const MatchResult& match);

LossBreakdown breakdown_from_targets(const std::vector<AnchorPrediction>& predictions,
                                     const FrameTargets& targets,
                                     const BreakdownParams& params);

// Key-aligned breakdowns for a network pair: positives follow the shared
// matching, and one hard-negative set is mined per frame from the summed
// negative losses of the two networks, so cross-selection sees identical
// key sets.
std::pair<LossBreakdown, LossBreakdown> breakdown_pair_from_targets(
    const std::vector<AnchorPrediction>& predictions1,
    const std::vector<AnchorPrediction>& predictions2, const FrameTargets& targets,
    const BreakdownParams& params);

// Convenience wrapper: match-derived targets plus mining in one call.
LossBreakdown compute_breakdown(const std::string& frame_id,
                                const std::vector<AnchorPrediction>& predictions,
                                const AnchorGrid& grid,
                                const std::vector<BoundingBox>& gt_boxes,
                                const std::vector<int>& gt_categories,
                                const MatchResult& match, const BreakdownParams& params);

}  // namespace coteach
