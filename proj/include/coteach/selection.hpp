#pragma once

#include <compare>
#include <set>
#include <string>
#include <utility>

#include "coteach/loss.hpp"

namespace coteach {

// Keep-fraction schedule: R(e) = 1 - tau * min(e / T_k, 1).
struct ScheduleParams {
  double tau_pos = 0;
  double tau_neg = 0;
  double tau_box = 0;
  double tau_image = 0;
  int epoch_constant = 1;  // T_k
};

double keep_fraction(int epoch, double tau, int epoch_constant);
double keep_fraction(int epoch, const ScheduleParams& s, LossComponent component);
double keep_fraction_per_image(int epoch, const ScheduleParams& s);

struct RecordKey {
  std::string frame_id;
  int anchor_id = 0;
  LossComponent component = LossComponent::PosCE;

  auto operator<=>(const RecordKey&) const = default;
};

inline RecordKey key_of(const LossRecord& r) {
  return {r.frame_id, r.anchor_id, r.component};
}

enum class SelectionMode { PerImage, PerObject };

struct SelectionMask {
  SelectionMode mode = SelectionMode::PerImage;
  std::set<RecordKey> kept;

  bool contains(const LossRecord& r) const { return kept.count(key_of(r)) > 0; }
};

// Keeps all records of the ceil(R * n_frames) frames with the lowest
// normalized totals (ties by frame_id).
SelectionMask select_per_image(const LossBreakdown& b, double keep_ratio);

// Keeps the ceil(R_c * n_c) lowest-loss records independently per component
// (ties by frame_id then anchor_id), so no component is ever emptied.
SelectionMask select_per_object(const LossBreakdown& b, double keep_pos, double keep_neg,
                                double keep_box);

struct KeepRates {
  double image = 1.0;
  double pos = 1.0;
  double neg = 1.0;
  double box = 1.0;

  static KeepRates at_epoch(int epoch, const ScheduleParams& s);
};

// Each network's update mask comes from the peer's losses. Breakdowns must
// cover identical key sets or the call raises KeyMismatch.
std::pair<SelectionMask, SelectionMask> cross_select(const LossBreakdown& net1,
                                                     const LossBreakdown& net2,
                                                     SelectionMode mode,
                                                     const KeepRates& rates);

}  // namespace coteach
