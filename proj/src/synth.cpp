#include "labelaudit/synth.hpp"

#include <string>

#include "labelaudit/error.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

Dataset make_synthetic_dataset(const SynthConfig& cfg) {
  if (cfg.num_images < 1 || cfg.num_classes < 1 || cfg.width < 1 || cfg.height < 1) {
    throw InputError("synthetic dataset needs positive image count, class count and size");
  }
  if (!(cfg.min_extent > 0.0 && cfg.min_extent <= cfg.max_extent &&
        cfg.max_extent <= std::min(cfg.width, cfg.height))) {
    throw InputError("synthetic object extents must satisfy 0 < min <= max <= image size");
  }
  Dataset ds;
  for (int c = 1; c <= cfg.num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

  std::int64_t next_label = 1;
  for (int i = 0; i < cfg.num_images; ++i) {
    const ImageId image{i + 1};
    ds.images.push_back(ImageMeta{image, cfg.width, cfg.height,
                                  "img_" + std::to_string(i + 1) + ".png"});
    Engine engine = make_engine(derive_stream(derive_stream(cfg.seed, "synth"), raw(image)));
    std::poisson_distribution<int> count_dist(cfg.objects_per_image);
    std::uniform_real_distribution<double> extent(cfg.min_extent, cfg.max_extent);
    std::uniform_int_distribution<int> cls(1, cfg.num_classes);
    const int target = count_dist(engine);

    std::vector<Box> placed;
    for (int attempt = 0; attempt < 50 * (target + 1) && static_cast<int>(placed.size()) < target;
         ++attempt) {
      const double w = extent(engine);
      const double h = extent(engine);
      std::uniform_real_distribution<double> px(0.5 * w, cfg.width - 0.5 * w);
      std::uniform_real_distribution<double> py(0.5 * h, cfg.height - 0.5 * h);
      const Box box{px(engine), py(engine), w, h};
      bool clear = true;
      for (const Box& other : placed) {
        if (iou(box, other) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      placed.push_back(box);
      ds.labels.push_back(BoxLabel{LabelId{next_label++}, image, box, cls(engine)});
    }
  }
  return ds;
}

}  // namespace labelaudit
