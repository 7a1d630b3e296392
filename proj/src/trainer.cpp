#include "coteach/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "coteach/rng.hpp"

namespace coteach {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TrainScene {
  FeatureMap features;
  Frame clean;                 // originals, for ledger-based attribution
  FrameTargets targets;        // against the corrupted labels
  std::vector<char> gt_noisy;  // per corrupted-label gt index
};

struct EvalScene {
  FeatureMap features;
  Frame frame;  // clean labels
};

std::vector<Detection> detect_all(const ToyModel& model, const std::vector<EvalScene>& scenes,
                                  const AnchorGrid& grid,
                                  const std::vector<std::string>& categories,
                                  const DetectionExtractConfig& extract) {
  std::vector<Detection> dets;
  for (const auto& scene : scenes) {
    auto frame_dets = extract_detections(scene.frame.frame_id, model.forward(scene.features),
                                         grid, categories, extract);
    dets.insert(dets.end(), std::make_move_iterator(frame_dets.begin()),
                std::make_move_iterator(frame_dets.end()));
  }
  return dets;
}

double mean_ap(const std::vector<Detection>& dets, const std::vector<EvalScene>& scenes,
               const std::vector<std::string>& categories, double iou_threshold) {
  Dataset gts;
  gts.categories = categories;
  for (const auto& scene : scenes) gts.frames.push_back(scene.frame);
  EvalOptions options;
  options.iou_threshold = iou_threshold;
  return evaluate(dets, gts, options).mean_ap;
}

// Deterministic Fisher-Yates so the batch composition is pinned by the
// shuffle seed alone.
void shuffle_indices(std::vector<int>& indices, Rng& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(indices[i - 1], indices[j]);
  }
}

struct NetEpochAccum {
  double pos_sum = 0, neg_sum = 0, box_sum = 0;
  long pos_n = 0, neg_n = 0, box_n = 0;
  double objective_sum = 0;
  long frames = 0;
  long excluded_pos = 0, excluded_pos_noisy = 0;
  long total_pos = 0, total_pos_noisy = 0;
};

void accumulate_stats(const LossBreakdown& breakdown, const SelectionMask* mask,
                      const std::map<std::string, const TrainScene*>& scene_by_frame,
                      NetEpochAccum& acc) {
  std::map<std::string, double> frame_loss;
  for (const auto& r : breakdown.records) {
    const bool kept = !mask || mask->contains(r);
    if (r.component == LossComponent::PosCE) {
      const TrainScene* scene = scene_by_frame.at(r.frame_id);
      const bool noisy = scene->gt_noisy.at(r.gt_index);
      acc.total_pos += 1;
      acc.total_pos_noisy += noisy;
      if (!kept) {
        acc.excluded_pos += 1;
        acc.excluded_pos_noisy += noisy;
      }
    }
    if (!kept) continue;
    frame_loss[r.frame_id] += r.value;
    switch (r.component) {
      case LossComponent::PosCE: acc.pos_sum += r.value; acc.pos_n += 1; break;
      case LossComponent::NegCE: acc.neg_sum += r.value; acc.neg_n += 1; break;
      case LossComponent::Box: acc.box_sum += r.value; acc.box_n += 1; break;
    }
  }
  for (const auto& [frame, n_pos] : breakdown.positives_per_frame) {
    const auto it = frame_loss.find(frame);
    const double total = it == frame_loss.end() ? 0.0 : it->second;
    acc.objective_sum += total / std::max(1, n_pos);
    acc.frames += 1;
  }
}

EpochStats finish_stats(const NetEpochAccum& acc, int epoch, int net, const KeepRates& rates,
                        CoteachMode mode) {
  EpochStats s;
  s.epoch = epoch;
  s.net = net;
  s.pos_loss = acc.pos_n ? acc.pos_sum / acc.pos_n : 0.0;
  s.neg_loss = acc.neg_n ? acc.neg_sum / acc.neg_n : 0.0;
  s.box_loss = acc.box_n ? acc.box_sum / acc.box_n : 0.0;
  s.objective = acc.frames ? acc.objective_sum / acc.frames : 0.0;
  switch (mode) {
    case CoteachMode::None: s.keep_pos = s.keep_neg = s.keep_box = 1.0; break;
    case CoteachMode::PerImage: s.keep_pos = s.keep_neg = s.keep_box = rates.image; break;
    case CoteachMode::PerObject:
      s.keep_pos = rates.pos;
      s.keep_neg = rates.neg;
      s.keep_box = rates.box;
      break;
  }
  s.excluded_pos_noisy_frac =
      acc.excluded_pos ? static_cast<double>(acc.excluded_pos_noisy) / acc.excluded_pos : 0.0;
  s.base_pos_noisy_frac =
      acc.total_pos ? static_cast<double>(acc.total_pos_noisy) / acc.total_pos : 0.0;
  s.noisy_excess_ratio = (acc.excluded_pos && s.base_pos_noisy_frac > 0)
                             ? s.excluded_pos_noisy_frac / s.base_pos_noisy_frac
                             : 0.0;
  return s;
}

}  // namespace

std::string coteach_mode_name(CoteachMode mode) {
  switch (mode) {
    case CoteachMode::None: return "none";
    case CoteachMode::PerImage: return "per-image";
    case CoteachMode::PerObject: return "per-object";
  }
  return "unknown";
}

CoteachMode coteach_mode_from_name(const std::string& name) {
  if (name == "none") return CoteachMode::None;
  if (name == "per-image") return CoteachMode::PerImage;
  if (name == "per-object") return CoteachMode::PerObject;
  throw Error("unknown co-teaching mode '" + name + "' (use none|per-image|per-object)");
}

std::string RunHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,net,pos_loss,neg_loss,box_loss,objective,keep_pos,keep_neg,keep_box,"
         "excluded_pos_noisy_frac,base_pos_noisy_frac,noisy_excess_ratio,val_ap,test_ap\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.net << ',' << fmt17(r.pos_loss) << ',' << fmt17(r.neg_loss)
        << ',' << fmt17(r.box_loss) << ',' << fmt17(r.objective) << ',' << fmt17(r.keep_pos)
        << ',' << fmt17(r.keep_neg) << ',' << fmt17(r.keep_box) << ','
        << fmt17(r.excluded_pos_noisy_frac) << ',' << fmt17(r.base_pos_noisy_frac) << ','
        << fmt17(r.noisy_excess_ratio) << ',' << fmt17(r.val_ap) << ',' << fmt17(r.test_ap)
        << '\n';
  }
  return out.str();
}

RunResult train_coteach(const SceneConfig& scene_cfg, const NoiseSpec& noise,
                        const TrainConfig& train_cfg, const ToyModelConfig& model_cfg_in) {
  for (const double tau : {train_cfg.schedule.tau_pos, train_cfg.schedule.tau_neg,
                           train_cfg.schedule.tau_box, train_cfg.schedule.tau_image})
    if (tau < 0 || tau >= 1) throw Error("tau must be in [0,1)");
  if (train_cfg.schedule.epoch_constant < 1) throw Error("epoch_constant must be at least 1");
  if (train_cfg.batch_size < 1) throw Error("batch_size must be at least 1");

  ToyModelConfig model_cfg = model_cfg_in;
  model_cfg.feature_dim = scene_cfg.feature_dim;
  model_cfg.num_categories = scene_cfg.num_categories;

  const auto categories = scene_categories(scene_cfg.num_categories);
  const AnchorGrid grid = build_anchor_grid(scene_cfg.image_width(), scene_cfg.image_height(),
                                            scene_cfg.rows, scene_cfg.cols,
                                            model_cfg.anchor_sizes);
  BreakdownParams bparams{model_cfg.num_categories, model_cfg.neg_ratio,
                          model_cfg.box_weight};

  // Splits by disjoint scene index ranges; only the train split is corrupted.
  std::vector<TrainScene> train;
  train.reserve(train_cfg.train_scenes);
  Dataset clean_train;
  clean_train.categories = categories;
  for (int i = 0; i < train_cfg.train_scenes; ++i) {
    auto [features, frame] = generate_scene(scene_cfg, i);
    TrainScene scene;
    scene.features = std::move(features);
    scene.clean = frame;
    clean_train.frames.push_back(std::move(frame));
    train.push_back(std::move(scene));
  }
  auto make_eval_split = [&](int offset, int count) {
    std::vector<EvalScene> scenes;
    scenes.reserve(count);
    for (int i = 0; i < count; ++i) {
      auto [features, frame] = generate_scene(scene_cfg, offset + i);
      scenes.push_back({std::move(features), std::move(frame)});
    }
    return scenes;
  };
  const auto val = make_eval_split(train_cfg.train_scenes, train_cfg.val_scenes);
  const auto test =
      make_eval_split(train_cfg.train_scenes + train_cfg.val_scenes, train_cfg.test_scenes);

  InjectionResult injected = inject(clean_train, noise);
  const auto noisy_flags = corrupted_flags(clean_train, injected.ledger);

  for (int i = 0; i < train_cfg.train_scenes; ++i) {
    const Frame& corrupted = injected.dataset.frames[i];
    std::vector<BoundingBox> gt_boxes;
    std::vector<int> gt_cats;
    std::vector<char> gt_noisy;
    const auto& flags = noisy_flags.at(corrupted.frame_id);
    for (std::size_t g = 0; g < corrupted.annotations.size(); ++g) {
      const Annotation& a = corrupted.annotations[g];
      if (a.is_dont_care()) continue;
      gt_boxes.push_back(a.box);
      gt_cats.push_back(injected.dataset.category_index(a.category));
      gt_noisy.push_back(flags[g]);
    }
    const MatchResult match = match_anchors(grid, gt_boxes, model_cfg.pos_iou_threshold);
    train[i].targets =
        make_frame_targets(corrupted.frame_id, grid, gt_boxes, gt_cats, match);
    train[i].gt_noisy = std::move(gt_noisy);
  }

  std::map<std::string, const TrainScene*> scene_by_frame;
  for (const auto& scene : train) scene_by_frame[scene.targets.frame_id] = &scene;

  ToyModel net1(model_cfg, train_cfg.seed_net1);
  ToyModel net2(model_cfg, train_cfg.seed_net2);

  RunHistory history;
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<double> grad(net1.param_count());
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const KeepRates rates = KeepRates::at_epoch(epoch, train_cfg.schedule);
    Rng shuffle_rng(derive_seed(train_cfg.shuffle_seed, "epoch_shuffle",
                                static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, shuffle_rng);

    NetEpochAccum acc1, acc2;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      const int n_frames = static_cast<int>(end - start);

      struct BatchItem {
        const TrainScene* scene;
        std::vector<AnchorPrediction> preds1, preds2;
        LossBreakdown b1, b2;
      };
      std::vector<BatchItem> batch;
      batch.reserve(n_frames);
      LossBreakdown merged1, merged2;
      for (std::size_t i = start; i < end; ++i) {
        BatchItem item;
        item.scene = &train[order[i]];
        item.preds1 = net1.forward(item.scene->features);
        item.preds2 = net2.forward(item.scene->features);
        auto pair = breakdown_pair_from_targets(item.preds1, item.preds2,
                                                item.scene->targets, bparams);
        item.b1 = std::move(pair.first);
        item.b2 = std::move(pair.second);
        LossBreakdown copy1 = item.b1, copy2 = item.b2;
        merged1.merge(std::move(copy1));
        merged2.merge(std::move(copy2));
        batch.push_back(std::move(item));
      }

      SelectionMask mask1, mask2;
      const SelectionMask* mask1_ptr = nullptr;
      const SelectionMask* mask2_ptr = nullptr;
      if (train_cfg.mode != CoteachMode::None) {
        const SelectionMode mode = train_cfg.mode == CoteachMode::PerImage
                                       ? SelectionMode::PerImage
                                       : SelectionMode::PerObject;
        auto masks = cross_select(merged1, merged2, mode, rates);
        mask1 = std::move(masks.first);
        mask2 = std::move(masks.second);
        mask1_ptr = &mask1;
        mask2_ptr = &mask2;
      }

      const double frame_weight = 1.0 / n_frames;
      auto update = [&](ToyModel& net, const SelectionMask* mask, bool first) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& item : batch) {
          const auto& preds = first ? item.preds1 : item.preds2;
          const auto& breakdown = first ? item.b1 : item.b2;
          net.accumulate_gradient(item.scene->features, item.scene->targets, preds,
                                  breakdown.records, mask, frame_weight, bparams, grad);
        }
        net.adam_step(grad, train_cfg.learning_rate);
        if (!net.parameters_finite())
          throw TrainingDiverged("non-finite parameter in net " + std::string(first ? "1" : "2") +
                                     " at epoch " + std::to_string(epoch),
                                 history);
      };
      update(net1, mask1_ptr, true);
      update(net2, mask2_ptr, false);

      accumulate_stats(merged1, mask1_ptr, scene_by_frame, acc1);
      accumulate_stats(merged2, mask2_ptr, scene_by_frame, acc2);
    }

    auto eval_net = [&](const ToyModel& net, const std::vector<EvalScene>& scenes) {
      return mean_ap(detect_all(net, scenes, grid, categories, train_cfg.extract), scenes,
                     categories, train_cfg.eval_iou);
    };
    EpochStats s1 = finish_stats(acc1, epoch, 1, rates, train_cfg.mode);
    EpochStats s2 = finish_stats(acc2, epoch, 2, rates, train_cfg.mode);
    s1.val_ap = eval_net(net1, val);
    s1.test_ap = eval_net(net1, test);
    s2.val_ap = eval_net(net2, val);
    s2.test_ap = eval_net(net2, test);
    history.rows.push_back(s1);
    history.rows.push_back(s2);
  }

  RunResult result;
  result.ledger = std::move(injected.ledger);
  result.params_net1 = net1.params();
  result.params_net2 = net2.params();
  if (!history.rows.empty()) {
    result.final_test_ap_net1 = history.rows[history.rows.size() - 2].test_ap;
    result.final_test_ap_net2 = history.rows.back().test_ap;
  }
  result.history = std::move(history);
  return result;
}

}  // namespace coteach
