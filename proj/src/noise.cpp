#include "coteach/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "coteach/errors.hpp"
#include "coteach/rng.hpp"

namespace coteach {

namespace {

constexpr int kJitterMaxRetries = 16;
constexpr double kSpuriousMinSide = 4.0;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Rng frame_rng(const NoiseSpec& spec, NoiseKind pass, const std::string& frame_id) {
  return Rng(derive_seed(spec.seed, noise_kind_name(pass), stable_hash(frame_id)));
}

void validate(const NoiseSpec& spec) {
  if (spec.probability < 0 || spec.probability > 1)
    throw Error("noise probability must be in [0,1]");
  if (spec.jitter_shift_sigma < 0 || spec.jitter_scale_sigma < 0)
    throw Error("jitter sigmas must be non-negative");
  if (spec.spurious_per_frame < 1)
    throw Error("spurious_per_frame must be at least 1");
}

// Jitter one box; resample when clamping degenerates the result, falling
// back to the original box so the ledger stays well-formed. Corners move by
// deltas so a zero-sigma jitter is bit-exact identity.
BoundingBox jitter_box(const BoundingBox& box, const NoiseSpec& spec, double image_w,
                       double image_h, Rng& rng) {
  const double w = box.width();
  const double h = box.height();
  for (int attempt = 0; attempt < kJitterMaxRetries; ++attempt) {
    const double dx = rng.normal() * spec.jitter_shift_sigma * w;
    const double dy = rng.normal() * spec.jitter_shift_sigma * h;
    const double grow_w = w * (std::exp(rng.normal() * spec.jitter_scale_sigma) - 1.0);
    const double grow_h = h * (std::exp(rng.normal() * spec.jitter_scale_sigma) - 1.0);
    const BoundingBox moved{box.left + dx - 0.5 * grow_w, box.top + dy - 0.5 * grow_h,
                            box.right + dx + 0.5 * grow_w, box.bottom + dy + 0.5 * grow_h};
    const auto clamped = clamp_box_to_image(moved, image_w, image_h);
    if (clamped) return *clamped;
  }
  return box;
}

Annotation make_spurious(const std::vector<std::string>& categories, double image_w,
                         double image_h, Rng& rng) {
  Annotation a;
  while (true) {
    const double x1 = rng.uniform(0, image_w);
    const double x2 = rng.uniform(0, image_w);
    const double y1 = rng.uniform(0, image_h);
    const double y2 = rng.uniform(0, image_h);
    a.box = {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    if (a.box.width() >= kSpuriousMinSide && a.box.height() >= kSpuriousMinSide) break;
  }
  a.category = categories[rng.uniform_int(0, static_cast<std::int64_t>(categories.size()) - 1)];
  return a;
}

// Shared per-frame pass driver; each pass appends ledger entries and edits
// the working annotation list in place.
struct FrameState {
  std::vector<Annotation> annotations;  // originals (possibly jittered)
  std::vector<char> removed;
  std::vector<Annotation> appended;     // spurious
};

void pass_pair(const Dataset& d, const Frame& frame, const NoiseSpec& spec,
               FrameState& state, CorruptionLedger& ledger) {
  Rng rng = frame_rng(spec, NoiseKind::WholeImagePair, frame.frame_id);
  if (rng.uniform() >= spec.probability) return;
  const int k = static_cast<int>(d.categories.size());
  for (size_t i = 0; i < state.annotations.size(); ++i) {
    Annotation& a = state.annotations[i];
    if (a.is_dont_care()) continue;
    const int idx = d.category_index(a.category);
    if (idx < 0) continue;
    Annotation corrupted = a;
    corrupted.category = d.categories[(idx + 1) % k];
    ledger.entries.push_back({frame.frame_id, NoiseKind::WholeImagePair, a, corrupted,
                              static_cast<int>(i)});
    a = corrupted;
  }
}

void pass_jitter(const Frame& frame, const NoiseSpec& spec, FrameState& state,
                 CorruptionLedger& ledger) {
  Rng rng = frame_rng(spec, NoiseKind::BoxJitter, frame.frame_id);
  for (size_t i = 0; i < state.annotations.size(); ++i) {
    Annotation& a = state.annotations[i];
    if (a.is_dont_care()) continue;
    if (rng.uniform() >= spec.probability) continue;
    Annotation corrupted = a;
    corrupted.box = jitter_box(a.box, spec, frame.image_width, frame.image_height, rng);
    ledger.entries.push_back({frame.frame_id, NoiseKind::BoxJitter, a, corrupted,
                              static_cast<int>(i)});
    a = corrupted;
  }
}

void pass_spurious(const Dataset& d, const Frame& frame, const NoiseSpec& spec,
                   FrameState& state, CorruptionLedger& ledger) {
  Rng rng = frame_rng(spec, NoiseKind::Spurious, frame.frame_id);
  if (rng.uniform() >= spec.probability) return;
  for (int j = 0; j < spec.spurious_per_frame; ++j) {
    Annotation added =
        make_spurious(d.categories, frame.image_width, frame.image_height, rng);
    ledger.entries.push_back(
        {frame.frame_id, NoiseKind::Spurious, std::nullopt, added, std::nullopt});
    state.appended.push_back(std::move(added));
  }
}

void pass_missing(const Frame& frame, const NoiseSpec& spec, FrameState& state,
                  CorruptionLedger& ledger) {
  Rng rng = frame_rng(spec, NoiseKind::Missing, frame.frame_id);
  for (size_t i = 0; i < state.annotations.size(); ++i) {
    const Annotation& a = state.annotations[i];
    if (a.is_dont_care()) continue;
    if (rng.uniform() >= spec.probability) continue;
    ledger.entries.push_back({frame.frame_id, NoiseKind::Missing, a, std::nullopt,
                              static_cast<int>(i)});
    state.removed[i] = 1;
  }
}

template <typename PerFrame>
InjectionResult run_injection(const Dataset& d, const NoiseSpec& spec, PerFrame&& per_frame) {
  validate(spec);
  InjectionResult result;
  result.dataset.categories = d.categories;
  result.dataset.frames.reserve(d.frames.size());
  for (const Frame& frame : d.frames) {
    FrameState state;
    state.annotations = frame.annotations;
    state.removed.assign(frame.annotations.size(), 0);
    per_frame(frame, state, result.ledger);
    Frame out;
    out.frame_id = frame.frame_id;
    out.image_width = frame.image_width;
    out.image_height = frame.image_height;
    for (size_t i = 0; i < state.annotations.size(); ++i)
      if (!state.removed[i]) out.annotations.push_back(state.annotations[i]);
    for (auto& a : state.appended) out.annotations.push_back(std::move(a));
    result.dataset.frames.push_back(std::move(out));
  }
  return result;
}

}  // namespace

std::string noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::WholeImagePair: return "whole_image_pair";
    case NoiseKind::BoxJitter: return "box_jitter";
    case NoiseKind::Spurious: return "spurious";
    case NoiseKind::Missing: return "missing";
    case NoiseKind::Combined: return "combined";
  }
  return "unknown";
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "whole_image_pair") return NoiseKind::WholeImagePair;
  if (name == "box_jitter") return NoiseKind::BoxJitter;
  if (name == "spurious") return NoiseKind::Spurious;
  if (name == "missing") return NoiseKind::Missing;
  if (name == "combined") return NoiseKind::Combined;
  throw Error("unknown noise kind '" + name + "'");
}

std::string NoiseSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = noise_kind_name(kind);
  j["probability"] = probability;
  j["jitter_shift_sigma"] = jitter_shift_sigma;
  j["jitter_scale_sigma"] = jitter_scale_sigma;
  j["seed"] = seed;
  if (spurious_per_frame != 1) j["spurious_per_frame"] = spurious_per_frame;
  return j.dump(2);
}

NoiseSpec NoiseSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid noise spec JSON: ") + e.what());
  }
  NoiseSpec spec;
  for (const char* key : {"kind", "probability", "seed"})
    if (!j.contains(key)) throw Error(std::string("noise spec missing key '") + key + "'");
  spec.kind = noise_kind_from_name(j.at("kind").get<std::string>());
  spec.probability = j.at("probability").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("jitter_shift_sigma"))
    spec.jitter_shift_sigma = j.at("jitter_shift_sigma").get<double>();
  if (j.contains("jitter_scale_sigma"))
    spec.jitter_scale_sigma = j.at("jitter_scale_sigma").get<double>();
  if (j.contains("spurious_per_frame"))
    spec.spurious_per_frame = j.at("spurious_per_frame").get<int>();
  validate(spec);
  return spec;
}

std::string CorruptionLedger::to_csv() const {
  std::ostringstream out;
  out << "frame_id,kind,orig_category,orig_left,orig_top,orig_right,orig_bottom,"
         "corr_category,corr_left,corr_top,corr_right,corr_bottom\n";
  auto side = [&](const std::optional<Annotation>& a) {
    if (!a) {
      out << ",,,,";
      return;
    }
    out << a->category << ',' << fmt6(a->box.left) << ',' << fmt6(a->box.top) << ','
        << fmt6(a->box.right) << ',' << fmt6(a->box.bottom);
  };
  for (const auto& e : entries) {
    out << e.frame_id << ',' << noise_kind_name(e.kind) << ',';
    side(e.original);
    out << ',';
    side(e.corrupted);
    out << '\n';
  }
  return out.str();
}

InjectionResult inject_whole_image_pair_noise(const Dataset& d, const NoiseSpec& spec) {
  if (d.categories.size() < 2)
    throw SingleCategoryDataset("pair noise needs at least two categories");
  return run_injection(d, spec, [&](const Frame& f, FrameState& s, CorruptionLedger& l) {
    pass_pair(d, f, spec, s, l);
  });
}

InjectionResult inject_box_jitter(const Dataset& d, const NoiseSpec& spec) {
  return run_injection(d, spec, [&](const Frame& f, FrameState& s, CorruptionLedger& l) {
    pass_jitter(f, spec, s, l);
  });
}

InjectionResult inject_spurious_boxes(const Dataset& d, const NoiseSpec& spec) {
  return run_injection(d, spec, [&](const Frame& f, FrameState& s, CorruptionLedger& l) {
    pass_spurious(d, f, spec, s, l);
  });
}

InjectionResult inject_missing_boxes(const Dataset& d, const NoiseSpec& spec) {
  return run_injection(d, spec, [&](const Frame& f, FrameState& s, CorruptionLedger& l) {
    pass_missing(f, spec, s, l);
  });
}

InjectionResult inject_combined(const Dataset& d, const NoiseSpec& spec) {
  return run_injection(d, spec, [&](const Frame& f, FrameState& s, CorruptionLedger& l) {
    pass_jitter(f, spec, s, l);
    pass_spurious(d, f, spec, s, l);
    pass_missing(f, spec, s, l);  // spurious boxes live in `appended`, exempt here
  });
}

InjectionResult inject(const Dataset& d, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::WholeImagePair: return inject_whole_image_pair_noise(d, spec);
    case NoiseKind::BoxJitter: return inject_box_jitter(d, spec);
    case NoiseKind::Spurious: return inject_spurious_boxes(d, spec);
    case NoiseKind::Missing: return inject_missing_boxes(d, spec);
    case NoiseKind::Combined: return inject_combined(d, spec);
  }
  throw Error("unhandled noise kind");
}

namespace {

// Shared replay walk; visit(frame, annotations, removed, appended, flags).
template <typename Visit>
void replay_walk(const Dataset& input, const CorruptionLedger& ledger, Visit&& visit) {
  std::map<std::string, std::vector<const LedgerEntry*>> by_frame;
  for (const auto& e : ledger.entries) by_frame[e.frame_id].push_back(&e);
  for (const Frame& frame : input.frames) {
    std::vector<Annotation> anns = frame.annotations;
    std::vector<char> removed(anns.size(), 0);
    std::vector<char> touched(anns.size(), 0);
    std::vector<Annotation> appended;
    auto it = by_frame.find(frame.frame_id);
    if (it != by_frame.end()) {
      for (const LedgerEntry* e : it->second) {
        if (e->original && e->corrupted) {
          anns.at(*e->ann_index) = *e->corrupted;
          touched.at(*e->ann_index) = 1;
        } else if (e->original) {
          removed.at(*e->ann_index) = 1;
        } else if (e->corrupted) {
          appended.push_back(*e->corrupted);
        }
      }
    }
    visit(frame, anns, removed, appended, touched);
  }
}

}  // namespace

Dataset replay_ledger(const Dataset& input, const CorruptionLedger& ledger) {
  Dataset out;
  out.categories = input.categories;
  replay_walk(input, ledger,
              [&](const Frame& frame, std::vector<Annotation>& anns,
                  std::vector<char>& removed, std::vector<Annotation>& appended,
                  std::vector<char>&) {
                Frame f;
                f.frame_id = frame.frame_id;
                f.image_width = frame.image_width;
                f.image_height = frame.image_height;
                for (size_t i = 0; i < anns.size(); ++i)
                  if (!removed[i]) f.annotations.push_back(anns[i]);
                for (auto& a : appended) f.annotations.push_back(std::move(a));
                out.frames.push_back(std::move(f));
              });
  return out;
}

std::map<std::string, std::vector<char>> corrupted_flags(const Dataset& input,
                                                         const CorruptionLedger& ledger) {
  std::map<std::string, std::vector<char>> flags;
  replay_walk(input, ledger,
              [&](const Frame& frame, std::vector<Annotation>& anns,
                  std::vector<char>& removed, std::vector<Annotation>& appended,
                  std::vector<char>& touched) {
                std::vector<char> out;
                for (size_t i = 0; i < anns.size(); ++i)
                  if (!removed[i]) out.push_back(touched[i]);
                out.insert(out.end(), appended.size(), 1);
                flags[frame.frame_id] = std::move(out);
              });
  return flags;
}

std::map<std::string, std::vector<BoundingBox>> removed_boxes(const CorruptionLedger& ledger) {
  std::map<std::string, std::vector<BoundingBox>> out;
  for (const auto& e : ledger.entries)
    if (e.original && !e.corrupted) out[e.frame_id].push_back(e.original->box);
  return out;
}

}  // namespace coteach
