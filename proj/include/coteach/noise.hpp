#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coteach/label_io.hpp"

namespace coteach {

enum class NoiseKind { WholeImagePair, BoxJitter, Spurious, Missing, Combined };

std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Combined;
  double probability = 0;
  double jitter_shift_sigma = 0.1;   // fraction of box width/height
  double jitter_scale_sigma = 0.2;   // log-scale sigma
  std::uint64_t seed = 0;
  int spurious_per_frame = 1;

  std::string to_json() const;
  static NoiseSpec from_json(const std::string& text);
};

struct LedgerEntry {
  std::string frame_id;
  NoiseKind kind = NoiseKind::Missing;
  std::optional<Annotation> original;   // empty for spurious additions
  std::optional<Annotation> corrupted;  // empty for removals
  // Index of the original annotation within the input frame; empty for
  // spurious entries. Lets the ledger be replayed exactly.
  std::optional<int> ann_index;
};

struct CorruptionLedger {
  std::vector<LedgerEntry> entries;

  std::string to_csv() const;
};

struct InjectionResult {
  Dataset dataset;
  CorruptionLedger ledger;
};

InjectionResult inject_whole_image_pair_noise(const Dataset& d, const NoiseSpec& spec);
InjectionResult inject_box_jitter(const Dataset& d, const NoiseSpec& spec);
InjectionResult inject_spurious_boxes(const Dataset& d, const NoiseSpec& spec);
InjectionResult inject_missing_boxes(const Dataset& d, const NoiseSpec& spec);
// Jitter, then spurious, then missing, with independent seed streams.
// Spurious boxes are exempt from the missing pass.
InjectionResult inject_combined(const Dataset& d, const NoiseSpec& spec);

// Dispatch on spec.kind.
InjectionResult inject(const Dataset& d, const NoiseSpec& spec);

// Applies a ledger to the dataset it was produced from; reconstructs the
// injector output exactly.
Dataset replay_ledger(const Dataset& input, const CorruptionLedger& ledger);

// Per output frame, one flag per annotation: true when the annotation was
// produced or altered by the injector.
std::map<std::string, std::vector<char>> corrupted_flags(const Dataset& input,
                                                         const CorruptionLedger& ledger);

// Boxes removed by the missing pass, per frame (for hard-negative noise
// attribution).
std::map<std::string, std::vector<BoundingBox>> removed_boxes(const CorruptionLedger& ledger);

}  // namespace coteach
