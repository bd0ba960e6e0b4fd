#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "labelaudit/datamodel.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/parallel.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

struct SimulatorConfig {
  std::uint64_t seed = 0;
  double loc_noise_factor = 0.05;  // box jitter std as a fraction of extent
  double miss_rate = 0.02;
  double clutter_per_image = 1.0;  // Poisson mean of background boxes
  double class_accuracy = 0.95;
  double dirichlet_concentration = 50.0;
  double objectness_sharpness = 8.0;
  double score_noise = 0.02;        // std of the objectness logit noise
  double refine_pull = 0.8;         // fraction of the way toward the matched object
  double background_mass = 0.92;    // background probability away from objects
  double foreground_iou = 0.5;      // IoU at which the second stage sees the object
  double clutter_min_extent = 0.05;  // fraction of min(width, height)
  double clutter_max_extent = 0.25;
};

void check_config(const SimulatorConfig& cfg, int num_classes);

// Emulates a trained two-stage detector that saw the clean labels. It only
// ever looks at the clean dataset, so its errors are independent of any
// injected label noise.
class DetectorSimulator {
 public:
  DetectorSimulator(const Dataset& clean, SimulatorConfig cfg);

  DetectionMap simulate(Execution execution = Execution::kParallel) const;
  std::vector<ScoredBox> simulate_image(ImageId image) const;

  // Second stage evaluated at an arbitrary box. Deterministic in (seed,
  // image, box).
  ScoredBox second_stage_query(const Box& box, ImageId image) const;

  const SimulatorConfig& config() const { return cfg_; }
  int num_classes() const { return num_classes_; }

 private:
  struct Evaluation {
    Box refined;
    ClassDistribution dist;
    double best_iou;
  };
  Evaluation evaluate(const std::vector<BoxLabel>& objects, const Box& box, Engine& engine) const;
  ClassDistribution foreground_dist(int true_class, Engine& engine) const;
  ClassDistribution background_dist(int near_class, double closeness, Engine& engine) const;
  double objectness(double best_iou) const;
  const std::vector<BoxLabel>& objects(ImageId image) const;

  SimulatorConfig cfg_;
  int num_classes_;
  std::vector<ImageMeta> images_;
  std::map<ImageId, std::vector<BoxLabel>> objects_;
};

inline DetectionMap simulate(const Dataset& clean, const SimulatorConfig& cfg,
                             Execution execution = Execution::kParallel) {
  return DetectorSimulator(clean, cfg).simulate(execution);
}

// Adds one source=injected_label entry per label of `noisy`, holding the
// second stage's output at the label box, so scoring can run from the file
// alone.
void record_label_queries(const DetectorSimulator& simulator, const Dataset& noisy,
                          DetectionMap& detections, Execution execution = Execution::kParallel);

inline ScoredBox second_stage_query(const Dataset& clean, const SimulatorConfig& cfg,
                                    const Box& box, ImageId image) {
  return DetectorSimulator(clean, cfg).second_stage_query(box, image);
}

}  // namespace labelaudit
