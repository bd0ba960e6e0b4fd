#pragma once

#include <cstdint>
#include <map>

#include "labelaudit/datamodel.hpp"
#include "labelaudit/parallel.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

struct CorruptionConfig {
  double gamma = 0.2;
  std::uint64_t seed = 0;
  double shift_std_factor = 0.15;
  double shift_iou_low = 0.4;
  double shift_iou_high = 0.7;
  int max_rejection_iters = 1000;
  // Use 0.15*w (instead of 0.15*h) as the std of the y/h shift draws.
  bool shift_y_uses_width = false;
  // A spawned copy annotates background: its IoU with every object of the
  // target image must stay below this.
  double spawn_max_object_iou = 0.3;
};

void check_config(const CorruptionConfig& cfg);

// Draws drops, flips, shifts and spawns as disjoint label sets of
// floor(gamma/4 * G) each, in that order, then samples every perturbation
// from a per-label RNG stream. Records are grouped by kind, ordered by label
// id within a kind.
CorruptionManifest plan(const Dataset& dataset, const CorruptionConfig& cfg,
                        Execution execution = Execution::kParallel);

// New class uniform over the other C-1 classes; box untouched.
BoxLabel sample_flip(const BoxLabel& label, int num_classes, Engine& engine);

// Redraws (x, y, w, h) jointly from normals centered on the label until the
// IoU with the original lies in [shift_iou_low, shift_iou_high] and, when an
// image is given, the box stays inside it.
BoxLabel sample_shift(const BoxLabel& label, const CorruptionConfig& cfg, Engine& engine,
                      const ImageMeta* image = nullptr);

// Moves a copy of the label to a uniformly drawn other image that can hold
// the box unchanged and has no object (from `objects`) overlapping it with
// IoU >= max_object_iou; the copy gets new_id.
BoxLabel sample_spawn(const BoxLabel& label, const Dataset& dataset,
                      const std::map<ImageId, std::vector<BoxLabel>>& objects, Engine& engine,
                      LabelId new_id, double max_object_iou = 0.3, int max_rejection_iters = 1000);

// Drops removed, flips and shifts replaced in place, spawned copies appended.
Dataset apply(const Dataset& dataset, const CorruptionManifest& manifest);

}  // namespace labelaudit
