#pragma once

#include <random>
#include <string>
#include <vector>

#include "labelaudit/datamodel.hpp"

namespace labelaudit::fixtures {

inline Dataset make_dataset(int num_images, int num_classes, int width = 200, int height = 200) {
  Dataset d;
  for (int c = 1; c <= num_classes; ++c) d.class_names.push_back("c" + std::to_string(c));
  for (int i = 1; i <= num_images; ++i) {
    d.images.push_back(ImageMeta{ImageId{i}, width, height, "img_" + std::to_string(i) + ".png"});
  }
  return d;
}

inline BoxLabel& add_label(Dataset& d, std::int64_t id, std::int64_t image, Box box, int cls) {
  d.labels.push_back(BoxLabel{LabelId{id}, ImageId{image}, box, cls});
  return d.labels.back();
}

inline Box random_box(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Box{extent * (0.1 + 0.8 * u(rng)), extent * (0.1 + 0.8 * u(rng)), extent * (0.02 + 0.3 * u(rng)),
             extent * (0.02 + 0.3 * u(rng))};
}

}  // namespace labelaudit::fixtures
