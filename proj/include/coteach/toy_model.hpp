#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coteach/eval.hpp"
#include "coteach/loss.hpp"
#include "coteach/selection.hpp"
#include "coteach/toy_scene.hpp"

namespace coteach {

struct ToyModelConfig {
  int feature_dim = 16;
  int hidden_dim = 24;
  int num_categories = 3;
  // Anchor (width, height) in pixels, one entry per anchor slot per cell.
  std::vector<std::pair<double, double>> anchor_sizes = {{20, 20}, {36, 36}};
  double pos_iou_threshold = 0.5;
  double neg_ratio = 3.0;
  double box_weight = 1.0;

  int anchors_per_cell() const { return static_cast<int>(anchor_sizes.size()); }
  int outputs_per_anchor() const { return num_categories + 1 + 4; }
  int outputs_per_cell() const { return anchors_per_cell() * outputs_per_anchor(); }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Two affine layers with tanh in between, shared across cells: a cell's
// feature vector maps to per-anchor (K+1 logits, 4 offsets).
class ToyModel {
 public:
  ToyModel(const ToyModelConfig& cfg, std::uint64_t init_seed);

  const ToyModelConfig& config() const { return cfg_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<AnchorPrediction> forward(const FeatureMap& features) const;

  // Gradient of the masked, positives-normalized frame loss, scaled by
  // frame_weight and accumulated into grad (layout = params layout).
  // Records excluded by the mask contribute exactly zero. A null mask keeps
  // everything.
  void accumulate_gradient(const FeatureMap& features, const FrameTargets& targets,
                           const std::vector<AnchorPrediction>& predictions,
                           const std::vector<LossRecord>& records, const SelectionMask* mask,
                           double frame_weight, const BreakdownParams& bparams,
                           std::vector<double>& grad) const;

  // The same masked, positives-normalized loss, recomputed from the current
  // parameters over a frozen record structure (for finite-difference
  // checks and loss reporting).
  double masked_loss(const FeatureMap& features, const FrameTargets& targets,
                     const std::vector<LossRecord>& frozen_records,
                     const SelectionMask* mask, const BreakdownParams& bparams) const;

  void adam_step(const std::vector<double>& grad, double learning_rate,
                 const AdamConfig& adam = {});

  bool parameters_finite() const;

 private:
  struct CellActivations {
    const double* input = nullptr;
    std::vector<double> hidden;
    std::vector<double> output;
  };
  CellActivations forward_cell(const FeatureMap& features, int row, int col) const;

  ToyModelConfig cfg_;
  std::vector<double> params_;  // W1 | b1 | W2 | b2
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  long adam_step_count_ = 0;

  int w1_offset_ = 0, b1_offset_ = 0, w2_offset_ = 0, b2_offset_ = 0;
};

struct DetectionExtractConfig {
  double min_score = 0.05;
  double nms_iou = 0.5;
  int max_per_frame = 100;
};

// Softmax scores per category, decoded boxes, per-category greedy NMS.
std::vector<Detection> extract_detections(const std::string& frame_id,
                                          const std::vector<AnchorPrediction>& predictions,
                                          const AnchorGrid& grid,
                                          const std::vector<std::string>& categories,
                                          const DetectionExtractConfig& cfg);

}  // namespace coteach
