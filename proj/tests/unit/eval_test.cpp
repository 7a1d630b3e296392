#include "coteach/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

using namespace coteach;

namespace {

Frame frame_with(const std::string& id, std::vector<Annotation> anns) {
  Frame f;
  f.frame_id = id;
  f.image_width = 1000;
  f.image_height = 1000;
  f.annotations = std::move(anns);
  return f;
}

Annotation gt(const std::string& category, BoundingBox box) {
  Annotation a;
  a.category = category;
  a.box = box;
  return a;
}

// Threshold-sweep oracle: for every recall level k/num_gt, the best
// precision among operating points at or beyond that recall, recounted from
// scratch per prefix.
double oracle_ap(const std::vector<DetFlag>& flags, int num_gt) {
  if (num_gt <= 0) return 0;
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  for (size_t prefix = 1; prefix <= flags.size(); ++prefix) {
    if (flags[prefix - 1] == DetFlag::Ignored) continue;
    int tp = 0, fp = 0;
    for (size_t i = 0; i < prefix; ++i) {
      tp += flags[i] == DetFlag::TP;
      fp += flags[i] == DetFlag::FP;
    }
    points.emplace_back(static_cast<double>(tp) / num_gt,
                        static_cast<double>(tp) / (tp + fp));
  }
  double ap = 0;
  for (int k = 1; k <= num_gt; ++k) {
    const double level = static_cast<double>(k) / num_gt;
    double best = 0;
    for (const auto& [r, p] : points)
      if (r >= level - 1e-12) best = std::max(best, p);
    ap += best / num_gt;
  }
  return ap;
}

double ap_11_point(const PRCurve& curve) {
  double total = 0;
  for (int k = 0; k <= 10; ++k) {
    const double level = k / 10.0;
    double best = 0;
    for (const auto& p : curve.points)
      if (p.recall >= level - 1e-12) best = std::max(best, p.precision);
    total += best;
  }
  return total / 11.0;
}

std::vector<double> descending_scores(size_t n) {
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) scores[i] = 1.0 - 0.001 * static_cast<double>(i);
  return scores;
}

std::vector<DetFlag> fuzz_flags(std::mt19937_64& rng, int max_len, int num_gt) {
  const int n = std::uniform_int_distribution<int>(0, max_len)(rng);
  std::vector<DetFlag> flags;
  int tp_left = num_gt;
  for (int i = 0; i < n; ++i) {
    if (tp_left > 0 && std::bernoulli_distribution(0.45)(rng)) {
      flags.push_back(DetFlag::TP);
      --tp_left;
    } else {
      flags.push_back(DetFlag::FP);
    }
  }
  return flags;
}

}  // namespace

TEST_CASE("one detection exactly on one gt is a TP") {
  const std::vector<Frame> gts = {frame_with("f0", {gt("Car", {10, 10, 50, 50})})};
  const std::vector<Detection> dets = {{"f0", "Car", {10, 10, 50, 50}, 0.9}};
  const auto flags = match_detections(dets, gts, 0.5);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0] == DetFlag::TP);
}

TEST_CASE("a gt is claimed once; the duplicate detection is a FP") {
  const std::vector<Frame> gts = {frame_with("f0", {gt("Car", {10, 10, 50, 50})})};
  const std::vector<Detection> dets = {{"f0", "Car", {10, 10, 50, 50}, 0.4},
                                       {"f0", "Car", {10, 10, 50, 50}, 0.9}};
  const auto flags = match_detections(dets, gts, 0.5);
  CHECK(flags[0] == DetFlag::FP);  // the lower-score duplicate
  CHECK(flags[1] == DetFlag::TP);
}

TEST_CASE("category mismatch and low IoU are FPs") {
  const std::vector<Frame> gts = {frame_with("f0", {gt("Car", {10, 10, 50, 50})})};
  const std::vector<Detection> dets = {{"f0", "Van", {10, 10, 50, 50}, 0.9},
                                       {"f0", "Car", {200, 200, 240, 240}, 0.8}};
  const auto flags = match_detections(dets, gts, 0.5);
  CHECK(flags[0] == DetFlag::FP);
  CHECK(flags[1] == DetFlag::FP);
}

TEST_CASE("matching equals a brute-force greedy oracle on fuzzed scenes") {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> coord(0, 180);
  std::uniform_real_distribution<double> size(10, 60);
  std::uniform_real_distribution<double> score(0, 1);
  const std::vector<std::string> cats = {"a", "b"};
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<Frame> gts;
    std::vector<Detection> dets;
    for (int f = 0; f < 3; ++f) {
      const std::string id = "f" + std::to_string(f);
      std::vector<Annotation> anns;
      const int n_gt = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int g = 0; g < n_gt; ++g) {
        const double x = coord(rng), y = coord(rng);
        anns.push_back(gt(cats[rng() % 2], {x, y, x + size(rng), y + size(rng)}));
      }
      gts.push_back(frame_with(id, anns));
      const int n_det = std::uniform_int_distribution<int>(0, 6)(rng);
      for (int d = 0; d < n_det; ++d) {
        const double x = coord(rng), y = coord(rng);
        dets.push_back({id, cats[rng() % 2], {x, y, x + size(rng), y + size(rng)}, score(rng)});
      }
    }
    const auto flags = match_detections(dets, gts, 0.5);

    // Oracle: independent greedy re-evaluation.
    std::vector<DetFlag> expected(dets.size(), DetFlag::FP);
    std::vector<size_t> order(dets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
      if (dets[a].frame_id != dets[b].frame_id) return dets[a].frame_id < dets[b].frame_id;
      return a < b;
    });
    std::set<std::pair<std::string, int>> claimed;  // (frame, ann index)
    for (size_t idx : order) {
      const Detection& det = dets[idx];
      double best = 0;
      int best_g = -1;
      for (const auto& f : gts) {
        if (f.frame_id != det.frame_id) continue;
        for (size_t g = 0; g < f.annotations.size(); ++g) {
          if (f.annotations[g].category != det.category) continue;
          if (claimed.count({f.frame_id, static_cast<int>(g)})) continue;
          const double v = iou(det.box, f.annotations[g].box);
          if (v >= 0.5 && v > best) {
            best = v;
            best_g = static_cast<int>(g);
          }
        }
      }
      if (best_g >= 0) {
        claimed.insert({det.frame_id, best_g});
        expected[idx] = DetFlag::TP;
      }
    }
    CHECK(flags == expected);
  }
}

TEST_CASE("all gts detected cleanly gives AP 1 and max F1 1") {
  const std::vector<DetFlag> flags = {DetFlag::TP, DetFlag::TP, DetFlag::TP};
  const PRCurve curve = average_precision(flags, descending_scores(3), 3);
  CHECK(curve.ap == doctest::Approx(1.0));
  CHECK(curve.max_f1 == doctest::Approx(1.0));
  CHECK(curve.op_recall == doctest::Approx(1.0));
}

TEST_CASE("no detections with gts present gives AP 0") {
  const PRCurve curve = average_precision({}, {}, 3);
  CHECK(curve.ap == 0.0);
  CHECK(curve.max_f1 == 0.0);
}

TEST_CASE("no gts and no detections gives AP 0") {
  const PRCurve curve = average_precision({}, {}, 0);
  CHECK(curve.ap == 0.0);
}

TEST_CASE("the worked envelope example: (TP, FP, TP) with 2 gts") {
  const std::vector<DetFlag> flags = {DetFlag::TP, DetFlag::FP, DetFlag::TP};
  const PRCurve curve = average_precision(flags, descending_scores(3), 2);
  CHECK(std::abs(curve.ap - 5.0 / 6.0) < 1e-9);
  REQUIRE(curve.points.size() == 3);
  CHECK(curve.points[0].precision == doctest::Approx(1.0));
  CHECK(curve.points[1].precision == doctest::Approx(0.5));
  CHECK(curve.points[2].precision == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("AP equals the threshold-sweep oracle on fuzzed flag sequences") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 400; ++trial) {
    const int num_gt = std::uniform_int_distribution<int>(1, 12)(rng);
    const auto flags = fuzz_flags(rng, 25, num_gt);
    const PRCurve curve = average_precision(flags, descending_scores(flags.size()), num_gt);
    CHECK(std::abs(curve.ap - oracle_ap(flags, num_gt)) < 1e-9);
  }
}

TEST_CASE("max F1 dominates the F1 of every emitted operating point") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const int num_gt = std::uniform_int_distribution<int>(1, 10)(rng);
    const auto flags = fuzz_flags(rng, 20, num_gt);
    const PRCurve curve = average_precision(flags, descending_scores(flags.size()), num_gt);
    for (const auto& p : curve.points) {
      const double denom = p.precision + p.recall;
      const double f1 = denom > 0 ? 2 * p.precision * p.recall / denom : 0;
      CHECK(curve.max_f1 >= f1 - 1e-12);
    }
  }
}

TEST_CASE("an extra lowest-score FP never raises AP; a top TP never lowers it") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    const int num_gt = std::uniform_int_distribution<int>(2, 10)(rng);
    auto flags = fuzz_flags(rng, 20, num_gt - 1);  // keep one gt undetected
    const double base = average_precision(flags, descending_scores(flags.size()), num_gt).ap;
    auto with_fp = flags;
    with_fp.push_back(DetFlag::FP);
    CHECK(average_precision(with_fp, descending_scores(with_fp.size()), num_gt).ap <=
          base + 1e-12);
    std::vector<DetFlag> with_tp{DetFlag::TP};
    with_tp.insert(with_tp.end(), flags.begin(), flags.end());
    CHECK(average_precision(with_tp, descending_scores(with_tp.size()), num_gt).ap >=
          base - 1e-12);
  }
}

TEST_CASE("envelope AP and 11-point interpolation agree up to grid resolution") {
  // The exact envelope integral and the 11-point average sample the same
  // monotone envelope, so they can differ by at most one grid cell in
  // either direction.
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const int num_gt = std::uniform_int_distribution<int>(1, 12)(rng);
    const auto flags = fuzz_flags(rng, 25, num_gt);
    const PRCurve curve = average_precision(flags, descending_scores(flags.size()), num_gt);
    const double ap11 = ap_11_point(curve);
    CHECK(curve.ap >= ap11 - 1.0 / 11.0 - 1e-12);
    CHECK(ap11 >= (10.0 / 11.0) * curve.ap - 1e-12);
  }
}

TEST_CASE("AP is invariant under strictly monotone score rescaling") {
  Dataset gts;
  gts.categories = {"Car"};
  gts.frames = {frame_with("f0", {gt("Car", {10, 10, 50, 50}), gt("Car", {100, 100, 160, 160})})};
  std::vector<Detection> dets = {{"f0", "Car", {12, 10, 50, 50}, 0.3},
                                 {"f0", "Car", {300, 300, 340, 340}, 0.6},
                                 {"f0", "Car", {101, 99, 161, 161}, 0.9}};
  const double before = evaluate(dets, gts).mean_ap;
  for (auto& d : dets) d.score = std::exp(3 * d.score) + 7;
  const double after = evaluate(dets, gts).mean_ap;
  CHECK(before == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("a single unbounded bucket reproduces the plain evaluation") {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> coord(0, 150);
  std::uniform_real_distribution<double> size(8, 90);
  Dataset gts;
  gts.categories = {"a"};
  std::vector<Detection> dets;
  for (int f = 0; f < 4; ++f) {
    const std::string id = "f" + std::to_string(f);
    std::vector<Annotation> anns;
    for (int g = 0; g < 3; ++g) {
      const double x = coord(rng), y = coord(rng);
      anns.push_back(gt("a", {x, y, x + size(rng), y + size(rng)}));
    }
    gts.frames.push_back(frame_with(id, anns));
    for (int d = 0; d < 4; ++d) {
      const double x = coord(rng), y = coord(rng);
      dets.push_back({id, "a", {x, y, x + size(rng), y + size(rng)},
                      std::uniform_real_distribution<double>(0, 1)(rng)});
    }
  }
  const BucketedReport report = size_bucketed_report(dets, gts, {{"all", 0, 0}});
  const EvalReport plain = evaluate(dets, gts);
  REQUIRE(report.buckets.size() == 1);
  CHECK(report.buckets[0].second.mean_ap == doctest::Approx(plain.mean_ap));
  CHECK(report.all.mean_ap == doctest::Approx(plain.mean_ap));
}

TEST_CASE("empty buckets are reported as absent, not zero") {
  Dataset gts;
  gts.categories = {"a"};
  gts.frames = {frame_with("f0", {gt("a", {0, 0, 40, 20})})};  // height 20: small
  const std::vector<Detection> dets = {{"f0", "a", {0, 0, 40, 20}, 1.0}};
  const BucketedReport report = size_bucketed_report(dets, gts, default_size_buckets());
  REQUIRE(report.buckets.size() == 3);
  CHECK(report.buckets[0].second.per_category[0].curve.num_gt == 1);
  CHECK(report.buckets[1].second.per_category[0].curve.num_gt == 0);
  CHECK(report.buckets[1].second.categories_with_gt == 0);
  CHECK(report.buckets[2].second.per_category[0].curve.num_gt == 0);
}

TEST_CASE("every TP in the all-sizes curve is a TP in exactly one bucket") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> coord(0, 300);
  std::uniform_real_distribution<double> size(8, 120);
  for (int trial = 0; trial < 60; ++trial) {
    Dataset gts;
    gts.categories = {"a", "b"};
    std::vector<Detection> dets;
    for (int f = 0; f < 3; ++f) {
      const std::string id = "f" + std::to_string(f);
      std::vector<Annotation> anns;
      const int n_gt = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int g = 0; g < n_gt; ++g) {
        const double x = coord(rng), y = coord(rng);
        anns.push_back(gt(gts.categories[rng() % 2], {x, y, x + size(rng), y + size(rng)}));
      }
      gts.frames.push_back(frame_with(id, anns));
      const int n_det = std::uniform_int_distribution<int>(0, 6)(rng);
      for (int d = 0; d < n_det; ++d) {
        const double x = coord(rng), y = coord(rng);
        dets.push_back({id, gts.categories[rng() % 2],
                        {x, y, x + size(rng), y + size(rng)},
                        std::uniform_real_distribution<double>(0, 1)(rng)});
      }
    }
    const auto buckets = default_size_buckets();
    const BucketedReport report = size_bucketed_report(dets, gts, buckets);

    // Count TPs per curve by integrating the flags back out of the points:
    // recall * num_gt at the last point is the TP count.
    auto tp_count = [](const EvalReport& r) {
      double total = 0;
      for (const auto& c : r.per_category)
        if (!c.curve.points.empty())
          total += c.curve.points.back().recall * c.curve.num_gt;
      return total;
    };
    double bucket_total = 0;
    for (const auto& [bucket, r] : report.buckets) bucket_total += tp_count(r);
    CHECK(tp_count(report.all) == doctest::Approx(bucket_total).epsilon(1e-9));
  }
}

TEST_CASE("detections csv round-trips") {
  const std::vector<Detection> dets = {{"f0", "Car", {1, 2, 30, 40}, 0.75},
                                       {"f1", "Van", {5, 6, 70, 80}, 0.25}};
  const auto back = detections_from_csv(detections_to_csv(dets));
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame_id == "f0");
  CHECK(back[0].category == "Car");
  CHECK(back[0].score == doctest::Approx(0.75));
  CHECK(back[1].box == BoundingBox{5, 6, 70, 80});
}
