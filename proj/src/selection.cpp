#include "coteach/selection.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "coteach/errors.hpp"

namespace coteach {

double keep_fraction(int epoch, double tau, int epoch_constant) {
  const double ramp = std::min(static_cast<double>(epoch) / epoch_constant, 1.0);
  return 1.0 - tau * ramp;
}

double keep_fraction(int epoch, const ScheduleParams& s, LossComponent component) {
  switch (component) {
    case LossComponent::PosCE: return keep_fraction(epoch, s.tau_pos, s.epoch_constant);
    case LossComponent::NegCE: return keep_fraction(epoch, s.tau_neg, s.epoch_constant);
    case LossComponent::Box: return keep_fraction(epoch, s.tau_box, s.epoch_constant);
  }
  return 1.0;
}

double keep_fraction_per_image(int epoch, const ScheduleParams& s) {
  return keep_fraction(epoch, s.tau_image, s.epoch_constant);
}

KeepRates KeepRates::at_epoch(int epoch, const ScheduleParams& s) {
  return {keep_fraction_per_image(epoch, s),
          keep_fraction(epoch, s, LossComponent::PosCE),
          keep_fraction(epoch, s, LossComponent::NegCE),
          keep_fraction(epoch, s, LossComponent::Box)};
}

SelectionMask select_per_image(const LossBreakdown& b, double keep_ratio) {
  const auto totals = b.normalized_frame_totals();
  if (totals.empty()) throw EmptyBatch("per-image selection over an empty batch");
  std::vector<std::pair<double, std::string>> ranked;
  ranked.reserve(totals.size());
  for (const auto& [frame, total] : totals) ranked.emplace_back(total, frame);
  std::sort(ranked.begin(), ranked.end());  // ties fall back to frame_id
  const int keep = static_cast<int>(
      std::ceil(keep_ratio * static_cast<double>(ranked.size())));
  std::set<std::string> kept_frames;
  for (int i = 0; i < keep && i < static_cast<int>(ranked.size()); ++i)
    kept_frames.insert(ranked[i].second);
  SelectionMask mask;
  mask.mode = SelectionMode::PerImage;
  for (const auto& r : b.records)
    if (kept_frames.count(r.frame_id)) mask.kept.insert(key_of(r));
  return mask;
}

SelectionMask select_per_object(const LossBreakdown& b, double keep_pos, double keep_neg,
                                double keep_box) {
  if (b.records.empty()) throw EmptyBatch("per-object selection over an empty batch");
  SelectionMask mask;
  mask.mode = SelectionMode::PerObject;
  const struct {
    LossComponent component;
    double ratio;
  } plans[] = {{LossComponent::PosCE, keep_pos},
               {LossComponent::NegCE, keep_neg},
               {LossComponent::Box, keep_box}};
  for (const auto& plan : plans) {
    std::vector<const LossRecord*> pool;
    for (const auto& r : b.records)
      if (r.component == plan.component) pool.push_back(&r);
    if (pool.empty()) continue;
    std::sort(pool.begin(), pool.end(), [](const LossRecord* a, const LossRecord* b) {
      if (a->value != b->value) return a->value < b->value;
      if (a->frame_id != b->frame_id) return a->frame_id < b->frame_id;
      return a->anchor_id < b->anchor_id;
    });
    const int keep = static_cast<int>(
        std::ceil(plan.ratio * static_cast<double>(pool.size())));
    for (int i = 0; i < keep && i < static_cast<int>(pool.size()); ++i)
      mask.kept.insert(key_of(*pool[i]));
  }
  return mask;
}

namespace {

std::set<RecordKey> key_set(const LossBreakdown& b) {
  std::set<RecordKey> keys;
  for (const auto& r : b.records) keys.insert(key_of(r));
  return keys;
}

SelectionMask run_selection(const LossBreakdown& b, SelectionMode mode,
                            const KeepRates& rates) {
  if (mode == SelectionMode::PerImage) return select_per_image(b, rates.image);
  return select_per_object(b, rates.pos, rates.neg, rates.box);
}

}  // namespace

std::pair<SelectionMask, SelectionMask> cross_select(const LossBreakdown& net1,
                                                     const LossBreakdown& net2,
                                                     SelectionMode mode,
                                                     const KeepRates& rates) {
  if (key_set(net1) != key_set(net2))
    throw KeyMismatch("breakdowns disagree on record keys; matching diverged");
  return {run_selection(net2, mode, rates), run_selection(net1, mode, rates)};
}

}  // namespace coteach
