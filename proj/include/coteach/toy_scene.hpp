#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coteach/label_io.hpp"

namespace coteach {

struct SceneConfig {
  int rows = 16;
  int cols = 16;
  int feature_dim = 16;
  int num_categories = 3;
  int objects_min = 1;
  int objects_max = 4;
  int object_cells_min = 2;  // objects are at least 2x2 cells
  int object_cells_max = 4;
  double template_snr = 5.0;
  double cell_px = 8.0;
  std::uint64_t seed = 0;

  double image_width() const { return cols * cell_px; }
  double image_height() const { return rows * cell_px; }
};

struct FeatureMap {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> data;  // row-major cells, contiguous feature vectors

  const double* cell(int r, int c) const {
    return data.data() + (static_cast<std::size_t>(r) * cols + c) * dim;
  }
  double* cell(int r, int c) {
    return data.data() + (static_cast<std::size_t>(r) * cols + c) * dim;
  }
};

std::vector<std::string> scene_categories(int num_categories);
std::string scene_frame_id(int index);

// Cells under an object receive snr * template[category] plus unit Gaussian
// noise; background cells receive noise only. The template has two parts:
// a one-hot category code on the first num_categories dimensions and four
// geometry channels (object center offset from the cell center and object
// size, in cells) on the next four, so localization is a function of the
// input the way edge and texture cues are for a real detector. Requires
// feature_dim >= num_categories + 4. When objects overlap, the later object
// wins the shared cells. The frame carries exact ground truth in pixel
// coordinates.
std::pair<FeatureMap, Frame> generate_scene(const SceneConfig& cfg, int index);

}  // namespace coteach
