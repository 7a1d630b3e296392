#include "coteach/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "coteach/errors.hpp"

namespace coteach {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct GtPool {
  // Per frame: counted gts and ignore absorbers for one category.
  struct Entry {
    BoundingBox box;
    int global_index;  // into the category's counted-gt array, -1 for absorbers
  };
  std::map<std::string, std::vector<Entry>> counted;
  std::map<std::string, std::vector<Entry>> absorbers;
  std::vector<double> gt_heights;  // per counted gt
};

bool gt_filtered_out(const Annotation& a, const EvalOptions& options) {
  if (!options.kitti_moderate) return false;
  return a.box.height() < options.min_height || a.truncated > options.max_truncation ||
         a.occluded > options.max_occlusion;
}

GtPool build_gt_pool(const std::vector<Frame>& frames, const std::string& category,
                     const EvalOptions& options) {
  GtPool pool;
  for (const auto& frame : frames) {
    for (const auto& a : frame.annotations) {
      if (a.is_dont_care()) {
        // Ignore absorbers for any category in moderate mode; excluded from
        // matching entirely otherwise.
        if (options.kitti_moderate)
          pool.absorbers[frame.frame_id].push_back({a.box, -1});
        continue;
      }
      if (a.category != category) continue;
      if (gt_filtered_out(a, options)) {
        pool.absorbers[frame.frame_id].push_back({a.box, -1});
        continue;
      }
      pool.counted[frame.frame_id].push_back(
          {a.box, static_cast<int>(pool.gt_heights.size())});
      pool.gt_heights.push_back(a.box.height());
    }
  }
  return pool;
}

struct CategoryMatch {
  std::vector<std::size_t> order;   // indices into the category's detections
  std::vector<int> det_to_gt;       // per ranked det: counted-gt index or -1
  std::vector<char> det_absorbed;   // matched an ignore absorber
  std::vector<double> scores;       // ranked
  GtPool pool;
};

CategoryMatch match_category(const std::vector<Detection>& dets,
                             const std::vector<std::size_t>& det_indices,
                             const std::vector<Frame>& frames, const std::string& category,
                             double iou_threshold, const EvalOptions& options) {
  CategoryMatch m;
  m.pool = build_gt_pool(frames, category, options);

  std::vector<std::size_t> order = det_indices;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].frame_id != dets[b].frame_id) return dets[a].frame_id < dets[b].frame_id;
    return a < b;
  });

  std::vector<char> claimed(m.pool.gt_heights.size(), 0);
  for (std::size_t det_idx : order) {
    const Detection& det = dets[det_idx];
    int matched = -1;
    double best_iou = 0;
    auto it = m.pool.counted.find(det.frame_id);
    if (it != m.pool.counted.end()) {
      for (const auto& gt : it->second) {
        if (claimed[gt.global_index]) continue;
        const double v = iou(det.box, gt.box);
        if (v >= iou_threshold && v > best_iou) {
          best_iou = v;
          matched = gt.global_index;
        }
      }
    }
    bool absorbed = false;
    if (matched < 0) {
      auto ab = m.pool.absorbers.find(det.frame_id);
      if (ab != m.pool.absorbers.end()) {
        for (const auto& gt : ab->second) {
          if (iou(det.box, gt.box) >= iou_threshold) {
            absorbed = true;
            break;
          }
        }
      }
    } else {
      claimed[matched] = 1;
    }
    m.order.push_back(det_idx);
    m.det_to_gt.push_back(matched);
    m.det_absorbed.push_back(absorbed ? 1 : 0);
    m.scores.push_back(det.score);
  }
  return m;
}

std::map<std::string, std::vector<std::size_t>> dets_by_category(
    const std::vector<Detection>& dets) {
  std::map<std::string, std::vector<std::size_t>> by_cat;
  for (std::size_t i = 0; i < dets.size(); ++i) by_cat[dets[i].category].push_back(i);
  return by_cat;
}

EvalReport finalize_report(std::vector<CategoryResult> per_category) {
  EvalReport report;
  report.per_category = std::move(per_category);
  for (const auto& c : report.per_category) {
    if (c.curve.num_gt == 0) continue;
    report.mean_ap += c.curve.ap;
    report.mean_max_f1 += c.curve.max_f1;
    report.categories_with_gt += 1;
  }
  if (report.categories_with_gt > 0) {
    report.mean_ap /= report.categories_with_gt;
    report.mean_max_f1 /= report.categories_with_gt;
  }
  return report;
}

}  // namespace

std::vector<std::size_t> rank_detections(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].frame_id != dets[b].frame_id) return dets[a].frame_id < dets[b].frame_id;
    return a < b;
  });
  return order;
}

std::vector<DetFlag> match_detections(const std::vector<Detection>& dets,
                                      const std::vector<Frame>& gt_frames,
                                      double iou_threshold, const EvalOptions& options) {
  std::vector<DetFlag> flags(dets.size(), DetFlag::FP);
  for (const auto& [category, indices] : dets_by_category(dets)) {
    const CategoryMatch m =
        match_category(dets, indices, gt_frames, category, iou_threshold, options);
    for (std::size_t i = 0; i < m.order.size(); ++i) {
      if (m.det_to_gt[i] >= 0)
        flags[m.order[i]] = DetFlag::TP;
      else if (m.det_absorbed[i])
        flags[m.order[i]] = DetFlag::Ignored;
    }
  }
  return flags;
}

PRCurve average_precision(const std::vector<DetFlag>& ranked_flags,
                          const std::vector<double>& ranked_scores, int num_gt) {
  if (ranked_flags.size() != ranked_scores.size())
    throw ShapeMismatch("flags and scores differ in length");
  PRCurve curve;
  curve.num_gt = num_gt;
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < ranked_flags.size(); ++i) {
    if (ranked_flags[i] == DetFlag::Ignored) continue;
    if (ranked_flags[i] == DetFlag::TP)
      ++tp;
    else
      ++fp;
    PRPoint point;
    point.recall = num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0;
    point.precision = static_cast<double>(tp) / (tp + fp);
    point.score_threshold = ranked_scores[i];
    curve.points.push_back(point);
  }

  // Right-to-left maximum envelope, integrated exactly over recall steps.
  double env = 0;
  std::vector<double> envelope(curve.points.size());
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    env = std::max(env, curve.points[i].precision);
    envelope[i] = env;
  }
  double prev_recall = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    curve.ap += (curve.points[i].recall - prev_recall) * envelope[i];
    prev_recall = curve.points[i].recall;
  }

  for (const auto& point : curve.points) {
    const double denom = point.precision + point.recall;
    const double f1 = denom > 0 ? 2.0 * point.precision * point.recall / denom : 0.0;
    if (f1 > curve.max_f1) {
      curve.max_f1 = f1;
      curve.op_recall = point.recall;
      curve.op_precision = point.precision;
    }
  }
  return curve;
}

EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& gts,
                    const EvalOptions& options) {
  std::vector<CategoryResult> results;
  auto by_cat = dets_by_category(dets);
  for (const auto& category : gts.categories) {
    const auto it = by_cat.find(category);
    static const std::vector<std::size_t> kNone;
    const CategoryMatch m = match_category(dets, it == by_cat.end() ? kNone : it->second,
                                           gts.frames, category, options.iou_threshold,
                                           options);
    std::vector<DetFlag> flags;
    flags.reserve(m.order.size());
    for (std::size_t i = 0; i < m.order.size(); ++i) {
      if (m.det_to_gt[i] >= 0)
        flags.push_back(DetFlag::TP);
      else if (m.det_absorbed[i])
        flags.push_back(DetFlag::Ignored);
      else
        flags.push_back(DetFlag::FP);
    }
    CategoryResult result;
    result.category = category;
    result.curve = average_precision(flags, m.scores,
                                     static_cast<int>(m.pool.gt_heights.size()));
    results.push_back(std::move(result));
  }
  return finalize_report(std::move(results));
}

std::vector<SizeBucket> default_size_buckets() {
  return {{"small", 0, 25}, {"medium", 25, 75}, {"large", 75, 0}};
}

BucketedReport size_bucketed_report(const std::vector<Detection>& dets, const Dataset& gts,
                                    const std::vector<SizeBucket>& buckets,
                                    const EvalOptions& options) {
  BucketedReport report;
  std::vector<std::vector<CategoryResult>> bucket_results(buckets.size());
  std::vector<CategoryResult> all_results;
  auto by_cat = dets_by_category(dets);
  for (const auto& category : gts.categories) {
    const auto it = by_cat.find(category);
    static const std::vector<std::size_t> kNone;
    const CategoryMatch m = match_category(dets, it == by_cat.end() ? kNone : it->second,
                                           gts.frames, category, options.iou_threshold,
                                           options);
    std::vector<DetFlag> all_flags(m.order.size());
    for (std::size_t i = 0; i < m.order.size(); ++i) {
      all_flags[i] = m.det_to_gt[i] >= 0 ? DetFlag::TP
                     : m.det_absorbed[i] ? DetFlag::Ignored
                                         : DetFlag::FP;
    }
    all_results.push_back(
        {category, average_precision(all_flags, m.scores,
                                     static_cast<int>(m.pool.gt_heights.size()))});

    for (std::size_t b = 0; b < buckets.size(); ++b) {
      const SizeBucket& bucket = buckets[b];
      int bucket_gt = 0;
      for (double h : m.pool.gt_heights) bucket_gt += bucket.contains(h);
      std::vector<DetFlag> flags(m.order.size());
      for (std::size_t i = 0; i < m.order.size(); ++i) {
        const int g = m.det_to_gt[i];
        if (g >= 0)
          flags[i] = bucket.contains(m.pool.gt_heights[g]) ? DetFlag::TP : DetFlag::Ignored;
        else if (m.det_absorbed[i])
          flags[i] = DetFlag::Ignored;
        else
          flags[i] = DetFlag::FP;
      }
      bucket_results[b].push_back({category, average_precision(flags, m.scores, bucket_gt)});
    }
  }
  report.all = finalize_report(std::move(all_results));
  for (std::size_t b = 0; b < buckets.size(); ++b)
    report.buckets.emplace_back(buckets[b], finalize_report(std::move(bucket_results[b])));
  return report;
}

std::string pr_curve_to_csv(const PRCurve& curve) {
  std::ostringstream out;
  out << "score_threshold,recall,precision\n";
  for (const auto& p : curve.points)
    out << fmt6(p.score_threshold) << ',' << fmt6(p.recall) << ',' << fmt6(p.precision)
        << '\n';
  return out.str();
}

std::string eval_report_to_json(const EvalReport& report, const EvalOptions& options) {
  nlohmann::json j;
  j["iou_threshold"] = options.iou_threshold;
  j["protocol"] = options.kitti_moderate ? "kitti_moderate" : "all_sizes";
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& c : report.per_category) {
    nlohmann::json entry;
    entry["num_gt"] = c.curve.num_gt;
    if (c.curve.num_gt > 0) {
      entry["ap"] = c.curve.ap;
      entry["max_f1"] = c.curve.max_f1;
      entry["operating_point"] = {{"recall", c.curve.op_recall},
                                  {"precision", c.curve.op_precision}};
    } else {
      entry["ap"] = nullptr;  // absent, not zero
      entry["max_f1"] = nullptr;
    }
    cats[c.category] = std::move(entry);
  }
  j["categories"] = std::move(cats);
  j["mean_ap"] = report.mean_ap;
  j["mean_max_f1"] = report.mean_max_f1;
  j["categories_with_gt"] = report.categories_with_gt;
  return j.dump(2);
}

std::vector<Detection> detections_from_csv(const std::string& text) {
  std::vector<Detection> dets;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (first) {
      first = false;
      if (line.rfind("frame_id,", 0) == 0) continue;
    }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 7)
      throw MalformedLine("detections CSV line " + std::to_string(line_no) +
                          ": expected 7 columns, got " + std::to_string(fields.size()));
    Detection d;
    d.frame_id = fields[0];
    d.category = fields[1];
    try {
      d.box = {std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4]),
               std::stod(fields[5])};
      d.score = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw MalformedLine("detections CSV line " + std::to_string(line_no) +
                          ": non-numeric field");
    }
    if (!d.box.valid())
      throw InvalidBox("detections CSV line " + std::to_string(line_no) +
                       ": degenerate box");
    dets.push_back(std::move(d));
  }
  return dets;
}

std::string detections_to_csv(const std::vector<Detection>& dets) {
  std::ostringstream out;
  out << "frame_id,category,left,top,right,bottom,score\n";
  for (const auto& d : dets)
    out << d.frame_id << ',' << d.category << ',' << fmt6(d.box.left) << ','
        << fmt6(d.box.top) << ',' << fmt6(d.box.right) << ',' << fmt6(d.box.bottom) << ','
        << fmt6(d.score) << '\n';
  return out.str();
}

}  // namespace coteach
