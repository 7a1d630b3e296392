#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coteach/errors.hpp"
#include "coteach/noise.hpp"
#include "coteach/toy_model.hpp"

namespace coteach {

enum class CoteachMode { None, PerImage, PerObject };

std::string coteach_mode_name(CoteachMode mode);
CoteachMode coteach_mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;
  double learning_rate = 3e-3;
  ScheduleParams schedule{0.3, 0.5, 0.5, 0.5, 15};
  CoteachMode mode = CoteachMode::None;
  std::uint64_t seed_net1 = 1;
  std::uint64_t seed_net2 = 2;
  std::uint64_t shuffle_seed = 1234;
  int train_scenes = 512;
  int val_scenes = 64;
  int test_scenes = 128;
  DetectionExtractConfig extract;
  double eval_iou = 0.5;
};

struct EpochStats {
  int epoch = 0;
  int net = 1;
  double pos_loss = 0;   // mean kept record value per component
  double neg_loss = 0;
  double box_loss = 0;
  double objective = 0;  // mean masked, positives-normalized frame loss
  double keep_pos = 1;
  double keep_neg = 1;
  double keep_box = 1;
  // Exclusion quality against the corruption ledger, PosCE records.
  double excluded_pos_noisy_frac = 0;
  double base_pos_noisy_frac = 0;
  double noisy_excess_ratio = 0;  // excluded_frac / base_frac, 0 when undefined
  double val_ap = 0;
  double test_ap = 0;
};

struct RunHistory {
  std::vector<EpochStats> rows;
  std::string to_csv() const;
};

class TrainingDiverged : public DivergenceDetected {
 public:
  TrainingDiverged(const std::string& message, RunHistory partial)
      : DivergenceDetected(message), partial_history(std::move(partial)) {}
  RunHistory partial_history;
};

struct RunResult {
  RunHistory history;
  CorruptionLedger ledger;
  std::vector<double> params_net1;
  std::vector<double> params_net2;
  double final_test_ap_net1 = 0;
  double final_test_ap_net2 = 0;
};

// The full dual-network loop: generate splits, corrupt the train split only,
// train both networks with cross-selected masks, evaluate against clean
// labels every epoch.
RunResult train_coteach(const SceneConfig& scene_cfg, const NoiseSpec& noise,
                        const TrainConfig& train_cfg,
                        const ToyModelConfig& model_cfg = ToyModelConfig{});

}  // namespace coteach
