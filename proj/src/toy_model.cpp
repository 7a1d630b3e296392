#include "coteach/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "coteach/errors.hpp"
#include "coteach/rng.hpp"

namespace coteach {

namespace {

void softmax(const std::vector<double>& logits, std::vector<double>& probs) {
  probs.resize(logits.size());
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
}

double huber_grad(double d) {
  if (d > 1.0) return 1.0;
  if (d < -1.0) return -1.0;
  return d;
}

}  // namespace

ToyModel::ToyModel(const ToyModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  const int f = cfg.feature_dim;
  const int h = cfg.hidden_dim;
  const int o = cfg.outputs_per_cell();
  w1_offset_ = 0;
  b1_offset_ = h * f;
  w2_offset_ = b1_offset_ + h;
  b2_offset_ = w2_offset_ + o * h;
  params_.assign(b2_offset_ + o, 0.0);
  adam_m_.assign(params_.size(), 0.0);
  adam_v_.assign(params_.size(), 0.0);

  Rng rng(derive_seed(init_seed, "toy_model_init"));
  const double limit1 = std::sqrt(6.0 / (f + h));
  for (int i = 0; i < h * f; ++i) params_[w1_offset_ + i] = rng.uniform(-limit1, limit1);
  const double limit2 = std::sqrt(6.0 / (h + o));
  for (int i = 0; i < o * h; ++i) params_[w2_offset_ + i] = rng.uniform(-limit2, limit2);
}

ToyModel::CellActivations ToyModel::forward_cell(const FeatureMap& features, int row,
                                                 int col) const {
  const int f = cfg_.feature_dim;
  const int h = cfg_.hidden_dim;
  const int o = cfg_.outputs_per_cell();
  CellActivations act;
  act.input = features.cell(row, col);
  act.hidden.resize(h);
  act.output.resize(o);
  const double* w1 = params_.data() + w1_offset_;
  const double* b1 = params_.data() + b1_offset_;
  const double* w2 = params_.data() + w2_offset_;
  const double* b2 = params_.data() + b2_offset_;
  for (int j = 0; j < h; ++j) {
    double acc = b1[j];
    const double* row_w = w1 + static_cast<std::size_t>(j) * f;
    for (int i = 0; i < f; ++i) acc += row_w[i] * act.input[i];
    act.hidden[j] = std::tanh(acc);
  }
  for (int k = 0; k < o; ++k) {
    double acc = b2[k];
    const double* row_w = w2 + static_cast<std::size_t>(k) * h;
    for (int j = 0; j < h; ++j) acc += row_w[j] * act.hidden[j];
    act.output[k] = acc;
  }
  return act;
}

std::vector<AnchorPrediction> ToyModel::forward(const FeatureMap& features) const {
  if (features.dim != cfg_.feature_dim)
    throw ShapeMismatch("feature dim " + std::to_string(features.dim) + " != model dim " +
                        std::to_string(cfg_.feature_dim));
  const int per_anchor = cfg_.outputs_per_anchor();
  const int n_logits = cfg_.num_categories + 1;
  std::vector<AnchorPrediction> preds(static_cast<std::size_t>(features.rows) *
                                      features.cols * cfg_.anchors_per_cell());
  std::size_t idx = 0;
  for (int r = 0; r < features.rows; ++r) {
    for (int c = 0; c < features.cols; ++c) {
      const CellActivations act = forward_cell(features, r, c);
      for (int a = 0; a < cfg_.anchors_per_cell(); ++a) {
        AnchorPrediction& p = preds[idx++];
        const double* slice = act.output.data() + static_cast<std::size_t>(a) * per_anchor;
        p.logits.assign(slice, slice + n_logits);
        for (int i = 0; i < 4; ++i) p.offsets[i] = slice[n_logits + i];
      }
    }
  }
  return preds;
}

void ToyModel::accumulate_gradient(const FeatureMap& features, const FrameTargets& targets,
                                   const std::vector<AnchorPrediction>& predictions,
                                   const std::vector<LossRecord>& records,
                                   const SelectionMask* mask, double frame_weight,
                                   const BreakdownParams& bparams,
                                   std::vector<double>& grad) const {
  const int per_anchor = cfg_.outputs_per_anchor();
  const int n_logits = cfg_.num_categories + 1;
  const int a_per_cell = cfg_.anchors_per_cell();
  const int background = cfg_.num_categories;
  const double w = frame_weight / std::max(1, targets.n_pos());

  // Per-cell dL/doutput, built record by record. Only touched cells get
  // backpropagated.
  std::map<int, std::vector<double>> dout_by_cell;
  std::vector<double> probs;
  // Positive offset targets are looked up by anchor id.
  std::map<int, const std::array<double, 4>*> offset_target;
  std::map<int, int> positive_index;
  for (std::size_t i = 0; i < targets.positive_anchors.size(); ++i) {
    offset_target[targets.positive_anchors[i]] = &targets.positive_offsets[i];
    positive_index[targets.positive_anchors[i]] = static_cast<int>(i);
  }

  for (const LossRecord& r : records) {
    if (mask && !mask->contains(r)) continue;
    const int anchor = r.anchor_id;
    const int cell = anchor / a_per_cell;
    const int slot = anchor % a_per_cell;
    auto& dout = dout_by_cell[cell];
    if (dout.empty()) dout.assign(cfg_.outputs_per_cell(), 0.0);
    double* slice = dout.data() + static_cast<std::size_t>(slot) * per_anchor;
    const AnchorPrediction& pred = predictions.at(anchor);
    switch (r.component) {
      case LossComponent::PosCE: {
        const int cat = targets.gt_category.at(r.gt_index);
        softmax(pred.logits, probs);
        for (int i = 0; i < n_logits; ++i)
          slice[i] += w * (probs[i] - (i == cat ? 1.0 : 0.0));
        break;
      }
      case LossComponent::NegCE: {
        softmax(pred.logits, probs);
        for (int i = 0; i < n_logits; ++i)
          slice[i] += w * (probs[i] - (i == background ? 1.0 : 0.0));
        break;
      }
      case LossComponent::Box: {
        const auto* target = offset_target.at(anchor);
        for (int i = 0; i < 4; ++i)
          slice[n_logits + i] +=
              w * bparams.box_weight * huber_grad(pred.offsets[i] - (*target)[i]);
        break;
      }
    }
  }

  const int f = cfg_.feature_dim;
  const int h = cfg_.hidden_dim;
  const int o = cfg_.outputs_per_cell();
  const double* w2 = params_.data() + w2_offset_;
  for (const auto& [cell, dout] : dout_by_cell) {
    const int row = cell / features.cols;
    const int col = cell % features.cols;
    const CellActivations act = forward_cell(features, row, col);
    std::vector<double> dhidden(h, 0.0);
    for (int k = 0; k < o; ++k) {
      const double d = dout[k];
      if (d == 0.0) continue;
      grad[b2_offset_ + k] += d;
      double* gw2 = grad.data() + w2_offset_ + static_cast<std::size_t>(k) * h;
      const double* row_w = w2 + static_cast<std::size_t>(k) * h;
      for (int j = 0; j < h; ++j) {
        gw2[j] += d * act.hidden[j];
        dhidden[j] += d * row_w[j];
      }
    }
    for (int j = 0; j < h; ++j) {
      const double dpre = dhidden[j] * (1.0 - act.hidden[j] * act.hidden[j]);
      if (dpre == 0.0) continue;
      grad[b1_offset_ + j] += dpre;
      double* gw1 = grad.data() + w1_offset_ + static_cast<std::size_t>(j) * f;
      for (int i = 0; i < f; ++i) gw1[i] += dpre * act.input[i];
    }
  }
}

double ToyModel::masked_loss(const FeatureMap& features, const FrameTargets& targets,
                             const std::vector<LossRecord>& frozen_records,
                             const SelectionMask* mask, const BreakdownParams& bparams) const {
  const int a_per_cell = cfg_.anchors_per_cell();
  const int background = cfg_.num_categories;
  std::map<int, const std::array<double, 4>*> offset_target;
  for (std::size_t i = 0; i < targets.positive_anchors.size(); ++i)
    offset_target[targets.positive_anchors[i]] = &targets.positive_offsets[i];

  std::map<int, CellActivations> cache;
  const int per_anchor = cfg_.outputs_per_anchor();
  const int n_logits = cfg_.num_categories + 1;
  double total = 0;
  for (const LossRecord& r : frozen_records) {
    if (mask && !mask->contains(r)) continue;
    const int cell = r.anchor_id / a_per_cell;
    const int slot = r.anchor_id % a_per_cell;
    auto it = cache.find(cell);
    if (it == cache.end())
      it = cache.emplace(cell, forward_cell(features, cell / features.cols,
                                            cell % features.cols)).first;
    const double* slice =
        it->second.output.data() + static_cast<std::size_t>(slot) * per_anchor;
    switch (r.component) {
      case LossComponent::PosCE:
        total += softmax_cross_entropy({slice, static_cast<std::size_t>(n_logits)},
                                       targets.gt_category.at(r.gt_index));
        break;
      case LossComponent::NegCE:
        total += softmax_cross_entropy({slice, static_cast<std::size_t>(n_logits)},
                                       background);
        break;
      case LossComponent::Box: {
        std::array<double, 4> pred;
        for (int i = 0; i < 4; ++i) pred[i] = slice[n_logits + i];
        total += bparams.box_weight * smooth_l1(pred, *offset_target.at(r.anchor_id));
        break;
      }
    }
  }
  return total / std::max(1, targets.n_pos());
}

void ToyModel::adam_step(const std::vector<double>& grad, double learning_rate,
                         const AdamConfig& adam) {
  if (grad.size() != params_.size()) throw ShapeMismatch("gradient size mismatch");
  ++adam_step_count_;
  const double bc1 = 1.0 - std::pow(adam.beta1, adam_step_count_);
  const double bc2 = 1.0 - std::pow(adam.beta2, adam_step_count_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_m_[i] = adam.beta1 * adam_m_[i] + (1.0 - adam.beta1) * grad[i];
    adam_v_[i] = adam.beta2 * adam_v_[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
    const double m_hat = adam_m_[i] / bc1;
    const double v_hat = adam_v_[i] / bc2;
    params_[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam.epsilon);
  }
}

bool ToyModel::parameters_finite() const {
  for (double p : params_)
    if (!std::isfinite(p)) return false;
  return true;
}

std::vector<Detection> extract_detections(const std::string& frame_id,
                                          const std::vector<AnchorPrediction>& predictions,
                                          const AnchorGrid& grid,
                                          const std::vector<std::string>& categories,
                                          const DetectionExtractConfig& cfg) {
  struct Candidate {
    double score;
    int category;
    int anchor;
    BoundingBox box;
  };
  const int k = static_cast<int>(categories.size());
  std::vector<std::vector<Candidate>> per_category(k);
  std::vector<double> probs;
  for (std::size_t a = 0; a < predictions.size(); ++a) {
    softmax(predictions[a].logits, probs);
    BoundingBox box = decode_box(predictions[a].offsets, grid.anchors[a]);
    const auto clamped = clamp_box_to_image(box, grid.image_width, grid.image_height);
    if (!clamped) continue;
    for (int c = 0; c < k; ++c) {
      if (probs[c] < cfg.min_score) continue;
      per_category[c].push_back({probs[c], c, static_cast<int>(a), *clamped});
    }
  }

  std::vector<Candidate> kept;
  for (auto& candidates : per_category) {
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.anchor < b.anchor;
    });
    std::vector<const Candidate*> survivors;
    for (const Candidate& cand : candidates) {
      bool suppressed = false;
      for (const Candidate* s : survivors) {
        if (iou(cand.box, s->box) > cfg.nms_iou) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) survivors.push_back(&cand);
    }
    for (const Candidate* s : survivors) kept.push_back(*s);
  }

  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.category != b.category) return a.category < b.category;
    return a.anchor < b.anchor;
  });
  if (static_cast<int>(kept.size()) > cfg.max_per_frame) kept.resize(cfg.max_per_frame);

  std::vector<Detection> dets;
  dets.reserve(kept.size());
  for (const Candidate& c : kept)
    dets.push_back({frame_id, categories[c.category], c.box, c.score});
  return dets;
}

}  // namespace coteach
