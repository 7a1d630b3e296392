#pragma once

#include <string>
#include <vector>

#include "coteach/label_io.hpp"

namespace coteach {

struct Detection {
  std::string frame_id;
  std::string category;
  BoundingBox box;
  double score = 0;
};

enum class DetFlag { TP, FP, Ignored };

struct PRPoint {
  double recall = 0;
  double precision = 0;
  double score_threshold = 0;
};

struct PRCurve {
  std::vector<PRPoint> points;
  double ap = 0;
  double max_f1 = 0;
  double op_recall = 0;     // operating point at max F1
  double op_precision = 0;
  int num_gt = 0;           // real (counted) ground truths
};

struct EvalOptions {
  double iou_threshold = 0.5;
  // KITTI-moderate style filtering: out-of-spec ground truths become ignore
  // absorbers instead of counted objects. Off by default; the default
  // protocol keeps all objects regardless of size.
  bool kitti_moderate = false;
  double min_height = 25;
  double max_truncation = 0.30;
  int max_occlusion = 1;
};

// Deterministic evaluation order: score descending, ties by frame_id then
// input position.
std::vector<std::size_t> rank_detections(const std::vector<Detection>& dets);

// Greedy matching over all categories at once; flags come back in input
// order. Each counted gt is claimed at most once, by the highest-IoU
// eligible detection processed in rank order.
std::vector<DetFlag> match_detections(const std::vector<Detection>& dets,
                                      const std::vector<Frame>& gt_frames,
                                      double iou_threshold,
                                      const EvalOptions& options = {});

// flags/scores must be in rank order (scores non-increasing). Ignored
// entries are skipped. AP is the exact area under the right-to-left maximum
// precision envelope.
PRCurve average_precision(const std::vector<DetFlag>& ranked_flags,
                          const std::vector<double>& ranked_scores, int num_gt);

struct CategoryResult {
  std::string category;
  PRCurve curve;
};

struct EvalReport {
  std::vector<CategoryResult> per_category;
  // Macro means over categories with at least one counted gt; categories
  // without gts are reported but excluded from the means.
  double mean_ap = 0;
  double mean_max_f1 = 0;
  int categories_with_gt = 0;
};

EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& gts,
                    const EvalOptions& options = {});

struct SizeBucket {
  std::string name;
  double min_height = 0;                 // inclusive
  double max_height = 0;                 // exclusive; <=0 means unbounded
  bool contains(double h) const {
    return h >= min_height && (max_height <= 0 || h < max_height);
  }
};

// small (0,25), medium [25,75), large [75,inf)
std::vector<SizeBucket> default_size_buckets();

struct BucketedReport {
  EvalReport all;
  std::vector<std::pair<SizeBucket, EvalReport>> buckets;
};

// Matching runs once against the full gt set; per-bucket curves then count a
// detection as TP only when its matched gt falls in the bucket, as Ignored
// when it matched a gt outside the bucket, and as FP when unmatched. Every
// TP of the "all" curve is therefore a TP in exactly one bucket.
BucketedReport size_bucketed_report(const std::vector<Detection>& dets, const Dataset& gts,
                                    const std::vector<SizeBucket>& buckets,
                                    const EvalOptions& options = {});

std::string pr_curve_to_csv(const PRCurve& curve);
std::string eval_report_to_json(const EvalReport& report, const EvalOptions& options);

std::vector<Detection> detections_from_csv(const std::string& text);
std::string detections_to_csv(const std::vector<Detection>& dets);

}  // namespace coteach
