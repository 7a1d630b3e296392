#include "coteach/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "coteach/errors.hpp"

namespace coteach {

std::string loss_component_name(LossComponent c) {
  switch (c) {
    case LossComponent::PosCE: return "pos_ce";
    case LossComponent::NegCE: return "neg_ce";
    case LossComponent::Box: return "box";
  }
  return "unknown";
}

LossComponent loss_component_from_name(const std::string& name) {
  if (name == "pos_ce") return LossComponent::PosCE;
  if (name == "neg_ce") return LossComponent::NegCE;
  if (name == "box") return LossComponent::Box;
  throw Error("unknown loss component '" + name + "'");
}

void LossBreakdown::merge(LossBreakdown&& other) {
  records.insert(records.end(), std::make_move_iterator(other.records.begin()),
                 std::make_move_iterator(other.records.end()));
  for (auto& [frame, n] : other.positives_per_frame) positives_per_frame[frame] = n;
}

std::map<std::string, double> LossBreakdown::normalized_frame_totals() const {
  std::map<std::string, double> totals;
  for (const auto& [frame, n] : positives_per_frame) totals[frame] = 0.0;
  for (const auto& r : records) totals[r.frame_id] += r.value;
  for (auto& [frame, total] : totals) {
    auto it = positives_per_frame.find(frame);
    const int n_pos = it == positives_per_frame.end() ? 0 : it->second;
    total /= std::max(1, n_pos);
  }
  return totals;
}

std::string LossBreakdown::to_csv() const {
  std::ostringstream out;
  out << "frame_id,anchor_id,component,value,gt_index\n";
  for (const auto& r : records) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.frame_id << ',' << r.anchor_id << ',' << loss_component_name(r.component)
        << ',' << buf << ',';
    if (r.gt_index >= 0) out << r.gt_index;
    out << '\n';
  }
  return out.str();
}

LossBreakdown LossBreakdown::from_csv(const std::string& text) {
  LossBreakdown b;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("frame_id,", 0) == 0) continue;
    }
    std::istringstream ls(line);
    std::string frame, anchor, component, value, gt;
    std::getline(ls, frame, ',');
    std::getline(ls, anchor, ',');
    std::getline(ls, component, ',');
    std::getline(ls, value, ',');
    std::getline(ls, gt, ',');
    LossRecord r;
    r.frame_id = frame;
    r.anchor_id = std::stoi(anchor);
    r.component = loss_component_from_name(component);
    r.value = std::stod(value);
    r.gt_index = gt.empty() ? -1 : std::stoi(gt);
    b.records.push_back(std::move(r));
  }
  // Positive counts are recoverable from the records themselves.
  for (const auto& r : b.records) {
    b.positives_per_frame.try_emplace(r.frame_id, 0);
    if (r.component == LossComponent::PosCE) b.positives_per_frame[r.frame_id] += 1;
  }
  return b;
}

double softmax_cross_entropy(std::span<const double> logits, int target) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double l : logits) sum += std::exp(l - max_logit);
  return std::log(sum) - (logits[target] - max_logit);
}

double smooth_l1(const std::array<double, 4>& pred, const std::array<double, 4>& target) {
  double total = 0;
  for (int i = 0; i < 4; ++i) {
    const double d = std::abs(pred[i] - target[i]);
    total += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  return total;
}

std::vector<int> mine_hard_negatives(const std::vector<std::pair<int, double>>& neg_losses,
                                     int n_pos, double ratio) {
  const int want = n_pos > 0 ? static_cast<int>(std::ceil(ratio * n_pos))
                             : static_cast<int>(std::ceil(ratio));
  std::vector<std::pair<int, double>> pool = neg_losses;
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const int take = std::min<int>(want, static_cast<int>(pool.size()));
  std::vector<int> selected;
  selected.reserve(take);
  for (int i = 0; i < take; ++i) selected.push_back(pool[i].first);
  return selected;
}

FrameTargets make_frame_targets(const std::string& frame_id, const AnchorGrid& grid,
                                const std::vector<BoundingBox>& gt_boxes,
                                const std::vector<int>& gt_categories,
                                const MatchResult& match) {
  if (gt_boxes.size() != gt_categories.size())
    throw ShapeMismatch("gt boxes and categories differ in length");
  if (match.anchor_to_gt.size() != grid.anchors.size())
    throw ShapeMismatch("match result does not cover the anchor grid");
  FrameTargets t;
  t.frame_id = frame_id;
  t.gt_category = gt_categories;
  for (int a = 0; a < static_cast<int>(grid.anchors.size()); ++a) {
    const int g = match.anchor_to_gt[a];
    if (g >= 0) {
      t.positive_anchors.push_back(a);
      t.positive_gt.push_back(g);
      t.positive_offsets.push_back(encode_box(gt_boxes[g], grid.anchors[a]));
    } else if (g == MatchResult::kNegative) {
      t.negative_anchors.push_back(a);
    }
  }
  return t;
}

LossBreakdown breakdown_from_targets(const std::vector<AnchorPrediction>& predictions,
                                     const FrameTargets& targets,
                                     const BreakdownParams& params) {
  const int background = params.num_categories;
  LossBreakdown b;
  b.positives_per_frame[targets.frame_id] = targets.n_pos();
  for (size_t i = 0; i < targets.positive_anchors.size(); ++i) {
    const int a = targets.positive_anchors[i];
    const AnchorPrediction& pred = predictions.at(a);
    if (static_cast<int>(pred.logits.size()) != params.num_categories + 1)
      throw ShapeMismatch("logit vector must have num_categories + 1 entries");
    const int cat = targets.gt_category.at(targets.positive_gt[i]);
    b.records.push_back({targets.frame_id, a, LossComponent::PosCE,
                         softmax_cross_entropy(pred.logits, cat), targets.positive_gt[i]});
    b.records.push_back({targets.frame_id, a, LossComponent::Box,
                         params.box_weight * smooth_l1(pred.offsets, targets.positive_offsets[i]),
                         targets.positive_gt[i]});
  }
  std::vector<std::pair<int, double>> neg_losses;
  neg_losses.reserve(targets.negative_anchors.size());
  for (int a : targets.negative_anchors) {
    const AnchorPrediction& pred = predictions.at(a);
    if (static_cast<int>(pred.logits.size()) != params.num_categories + 1)
      throw ShapeMismatch("logit vector must have num_categories + 1 entries");
    neg_losses.emplace_back(a, softmax_cross_entropy(pred.logits, background));
  }
  for (int a : mine_hard_negatives(neg_losses, targets.n_pos(), params.neg_ratio)) {
    const auto it = std::find_if(neg_losses.begin(), neg_losses.end(),
                                 [a](const auto& p) { return p.first == a; });
    b.records.push_back({targets.frame_id, a, LossComponent::NegCE, it->second, -1});
  }
  return b;
}

std::pair<LossBreakdown, LossBreakdown> breakdown_pair_from_targets(
    const std::vector<AnchorPrediction>& predictions1,
    const std::vector<AnchorPrediction>& predictions2, const FrameTargets& targets,
    const BreakdownParams& params) {
  const int background = params.num_categories;
  auto positives = [&](const std::vector<AnchorPrediction>& preds, LossBreakdown& b) {
    b.positives_per_frame[targets.frame_id] = targets.n_pos();
    for (std::size_t i = 0; i < targets.positive_anchors.size(); ++i) {
      const int a = targets.positive_anchors[i];
      const AnchorPrediction& pred = preds.at(a);
      const int cat = targets.gt_category.at(targets.positive_gt[i]);
      b.records.push_back({targets.frame_id, a, LossComponent::PosCE,
                           softmax_cross_entropy(pred.logits, cat), targets.positive_gt[i]});
      b.records.push_back(
          {targets.frame_id, a, LossComponent::Box,
           params.box_weight * smooth_l1(pred.offsets, targets.positive_offsets[i]),
           targets.positive_gt[i]});
    }
  };
  LossBreakdown b1, b2;
  positives(predictions1, b1);
  positives(predictions2, b2);

  std::vector<std::pair<int, double>> combined;
  std::vector<double> neg1, neg2;
  combined.reserve(targets.negative_anchors.size());
  for (int a : targets.negative_anchors) {
    const double l1 = softmax_cross_entropy(predictions1.at(a).logits, background);
    const double l2 = softmax_cross_entropy(predictions2.at(a).logits, background);
    neg1.push_back(l1);
    neg2.push_back(l2);
    combined.emplace_back(a, l1 + l2);
  }
  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < targets.negative_anchors.size(); ++i)
    index_of[targets.negative_anchors[i]] = i;
  for (int a : mine_hard_negatives(combined, targets.n_pos(), params.neg_ratio)) {
    const std::size_t i = index_of.at(a);
    b1.records.push_back({targets.frame_id, a, LossComponent::NegCE, neg1[i], -1});
    b2.records.push_back({targets.frame_id, a, LossComponent::NegCE, neg2[i], -1});
  }
  return {std::move(b1), std::move(b2)};
}

LossBreakdown compute_breakdown(const std::string& frame_id,
                                const std::vector<AnchorPrediction>& predictions,
                                const AnchorGrid& grid,
                                const std::vector<BoundingBox>& gt_boxes,
                                const std::vector<int>& gt_categories,
                                const MatchResult& match, const BreakdownParams& params) {
  if (predictions.size() != grid.anchors.size())
    throw ShapeMismatch("prediction count must equal anchor count");
  return breakdown_from_targets(
      predictions, make_frame_targets(frame_id, grid, gt_boxes, gt_categories, match), params);
}

}  // namespace coteach
