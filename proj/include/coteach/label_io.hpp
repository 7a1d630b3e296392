#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coteach/geometry.hpp"

namespace coteach {

// The reserved KITTI category for regions excluded from matching and noise
// injection. It never appears in Dataset::categories.
inline constexpr const char* kDontCare = "DontCare";

// One labelled object in KITTI layout. The 3D fields are carried opaquely.
struct Annotation {
  std::string category;
  double truncated = 0;
  int occluded = 0;
  double alpha = 0;
  BoundingBox box;
  std::array<double, 3> dims3d{};      // height, width, length (m)
  std::array<double, 3> location3d{};  // x, y, z (m)
  double rotation_y = 0;
  std::optional<double> score;

  bool is_dont_care() const { return category == kDontCare; }
  bool operator==(const Annotation&) const = default;
};

struct Frame {
  std::string frame_id;
  double image_width = 0;
  double image_height = 0;
  std::vector<Annotation> annotations;

  bool operator==(const Frame&) const = default;
};

struct Dataset {
  std::vector<Frame> frames;
  // Ordered category tokens; pair noise cycles through this order.
  std::vector<std::string> categories;

  int category_index(std::string_view category) const;
  bool operator==(const Dataset&) const = default;
};

// One KITTI label line: 15 whitespace-separated fields, 16 with a score.
Annotation parse_label_line(std::string_view line);
std::string serialize_annotation(const Annotation& a);

// Clamp to [0,w]x[0,h]; nullopt when the clamped box is thinner than 1 px.
std::optional<BoundingBox> clamp_box_to_image(const BoundingBox& box, double image_width,
                                              double image_height);

struct LoadOptions {
  double image_width = 1242;   // KITTI labels carry no image size
  double image_height = 375;
  // strict: unknown categories raise MalformedLine; otherwise they are
  // mapped to DontCare.
  bool strict = true;
};

// One .txt per frame, filename = frame_id + ".txt". Frames come back sorted
// by frame_id regardless of directory enumeration order.
Dataset load_dataset(const std::filesystem::path& labels_dir,
                     const std::vector<std::string>& categories,
                     const LoadOptions& options = {});

// Writes one label file per frame, clamping boxes to the image and dropping
// annotations that degenerate (< 1 px wide or tall) under clamping.
void save_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

Frame parse_frame(std::string_view frame_id, std::string_view contents,
                  const std::vector<std::string>& categories, const LoadOptions& options);
std::string serialize_frame(const Frame& frame);

}  // namespace coteach
