#pragma once

#include <cstdint>

#include "labelaudit/datamodel.hpp"

namespace labelaudit {

// Desk-scale stand-in for a real annotated dataset: equal-resolution images
// with mutually non-overlapping objects.
struct SynthConfig {
  int num_images = 100;
  double objects_per_image = 10.0;  // mean; per-image count is Poisson
  int num_classes = 10;
  int width = 320;
  int height = 320;
  double min_extent = 16.0;
  double max_extent = 48.0;
  std::uint64_t seed = 0;
};

Dataset make_synthetic_dataset(const SynthConfig& cfg);

}  // namespace labelaudit
