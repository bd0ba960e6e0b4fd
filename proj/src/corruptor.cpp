#include "labelaudit/corruptor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "labelaudit/error.hpp"

namespace labelaudit {

void check_config(const CorruptionConfig& cfg) {
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw InputError("gamma must be in [0,1]");
  if (!(cfg.shift_iou_low >= 0.0 && cfg.shift_iou_low < cfg.shift_iou_high &&
        cfg.shift_iou_high <= 1.0)) {
    throw InputError("shift IoU band must satisfy 0 <= low < high <= 1");
  }
  if (!(cfg.shift_std_factor > 0.0)) throw InputError("shift_std_factor must be > 0");
  if (cfg.max_rejection_iters < 1) throw InputError("max_rejection_iters must be >= 1");
  if (!(cfg.spawn_max_object_iou > 0.0 && cfg.spawn_max_object_iou <= 1.0)) {
    throw InputError("spawn_max_object_iou must be in (0,1]");
  }
}

BoxLabel sample_flip(const BoxLabel& label, int num_classes, Engine& engine) {
  if (num_classes < 2) throw InputError("flips need at least 2 classes");
  std::uniform_int_distribution<int> pick(1, num_classes - 1);
  int c = pick(engine);
  if (c >= label.class_id) ++c;
  BoxLabel out = label;
  out.class_id = c;
  return out;
}

BoxLabel sample_shift(const BoxLabel& label, const CorruptionConfig& cfg, Engine& engine,
                      const ImageMeta* image) {
  const Box& b = label.box;
  const double sx = cfg.shift_std_factor * b.w;
  const double sy = cfg.shift_std_factor * (cfg.shift_y_uses_width ? b.w : b.h);
  std::normal_distribution<double> nx(b.cx, sx), nw(b.w, sx), ny(b.cy, sy), nh(b.h, sy);
  for (int iter = 0; iter < cfg.max_rejection_iters; ++iter) {
    Box candidate;
    candidate.cx = nx(engine);
    candidate.w = nw(engine);
    candidate.cy = ny(engine);
    candidate.h = nh(engine);
    if (!(candidate.w > 0.0 && candidate.h > 0.0)) continue;
    if (image && !box_within_image(candidate, *image, 0.0)) continue;
    const double overlap = iou(b, candidate);
    if (overlap >= cfg.shift_iou_low && overlap <= cfg.shift_iou_high) {
      BoxLabel out = label;
      out.box = candidate;
      return out;
    }
  }
  throw CorruptionError("shift of label " + std::to_string(raw(label.id)) + " found no box in the IoU band after " +
                        std::to_string(cfg.max_rejection_iters) + " draws");
}

BoxLabel sample_spawn(const BoxLabel& label, const Dataset& dataset,
                      const std::map<ImageId, std::vector<BoxLabel>>& objects, Engine& engine,
                      LabelId new_id, double max_object_iou, int max_rejection_iters) {
  std::vector<const ImageMeta*> others;
  for (const auto& im : dataset.images) {
    if (im.id != label.image_id) others.push_back(&im);
  }
  if (others.empty()) throw InputError("spawns need at least 2 images");
  std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
  for (int iter = 0; iter < max_rejection_iters; ++iter) {
    const ImageMeta* target = others[pick(engine)];
    if (!box_within_image(label.box, *target, 1e-9)) continue;
    if (auto it = objects.find(target->id); it != objects.end()) {
      const bool covers_object = std::any_of(it->second.begin(), it->second.end(), [&](const BoxLabel& o) {
        return iou(o.box, label.box) >= max_object_iou;
      });
      if (covers_object) continue;
    }
    BoxLabel out = label;
    out.id = new_id;
    out.image_id = target->id;
    return out;
  }
  throw CorruptionError("spawn of label " + std::to_string(raw(label.id)) +
                        " found no image with free background for its box");
}

namespace {

// Partial Fisher-Yates: removes `count` uniformly chosen entries from pool.
std::vector<BoxLabel> draw_subset(std::vector<BoxLabel>& pool, std::size_t count, Engine& engine) {
  std::vector<BoxLabel> chosen;
  chosen.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(engine)]);
    chosen.push_back(pool[i]);
  }
  pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  // Keep the remaining pool in a canonical order for the next draw.
  std::sort(pool.begin(), pool.end(), [](const BoxLabel& a, const BoxLabel& b) { return a.id < b.id; });
  std::sort(chosen.begin(), chosen.end(), [](const BoxLabel& a, const BoxLabel& b) { return a.id < b.id; });
  return chosen;
}

}  // namespace

CorruptionManifest plan(const Dataset& dataset, const CorruptionConfig& cfg, Execution execution) {
  check_config(cfg);
  const std::size_t g = dataset.labels.size();
  const std::size_t n = per_type_count(cfg.gamma, g);
  if (4 * n > g) throw InputError("dataset too small for the requested gamma");

  CorruptionManifest manifest;
  manifest.gamma = cfg.gamma;
  manifest.seed = cfg.seed;
  manifest.per_type_count = n;
  if (n == 0) return manifest;
  if (dataset.num_classes() < 2) throw InputError("flips need at least 2 classes");
  if (dataset.images.size() < 2) throw InputError("spawns need at least 2 images");

  std::vector<BoxLabel> pool = dataset.labels;
  std::sort(pool.begin(), pool.end(), [](const BoxLabel& a, const BoxLabel& b) { return a.id < b.id; });

  const std::uint64_t select_stream = derive_stream(cfg.seed, "select");
  std::vector<BoxLabel> chosen[4];
  for (ErrorKind kind : kAllErrorKinds) {
    Engine engine = make_engine(derive_stream(select_stream, to_string(kind)));
    chosen[static_cast<int>(kind)] = draw_subset(pool, n, engine);
  }

  const auto objects = labels_by_image(dataset);
  std::int64_t next_id = 0;
  for (const auto& l : dataset.labels) next_id = std::max(next_id, raw(l.id));
  ++next_id;

  manifest.records.resize(4 * n);
  const int num_classes = dataset.num_classes();
  parallel_for(4 * n, execution, [&](std::size_t slot) {
    const auto kind = static_cast<ErrorKind>(slot / n);
    const std::size_t i = slot % n;
    const BoxLabel& label = chosen[static_cast<int>(kind)][i];
    Engine engine = make_engine(derive_stream(derive_stream(cfg.seed, to_string(kind)), raw(label.id)));
    ErrorRecord rec;
    rec.kind = kind;
    rec.original_label = label;
    switch (kind) {
      case ErrorKind::kDrop:
        rec.anchor_image_id = label.image_id;
        rec.anchor_box = label.box;
        break;
      case ErrorKind::kFlip:
        rec.noisy_label = sample_flip(label, num_classes, engine);
        break;
      case ErrorKind::kShift:
        rec.noisy_label = sample_shift(label, cfg, engine, dataset.find_image(label.image_id));
        break;
      case ErrorKind::kSpawn:
        rec.noisy_label = sample_spawn(label, dataset, objects, engine,
                                       LabelId{next_id + static_cast<std::int64_t>(i)},
                                       cfg.spawn_max_object_iou, cfg.max_rejection_iters);
        break;
    }
    if (rec.noisy_label) {
      rec.anchor_image_id = rec.noisy_label->image_id;
      rec.anchor_box = rec.noisy_label->box;
    }
    manifest.records[slot] = std::move(rec);
  });
  return manifest;
}

Dataset apply(const Dataset& dataset, const CorruptionManifest& manifest) {
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) index.emplace(raw(dataset.labels[i].id), i);

  std::unordered_set<std::int64_t> dropped;
  std::unordered_map<std::int64_t, const BoxLabel*> replaced;
  std::vector<BoxLabel> spawned;
  for (const auto& rec : manifest.records) {
    auto it = index.find(raw(rec.original_label.id));
    if (it == index.end() || !(dataset.labels[it->second] == rec.original_label)) {
      throw InputError("manifest record for label " + std::to_string(raw(rec.original_label.id)) +
                       " does not match the dataset");
    }
    switch (rec.kind) {
      case ErrorKind::kDrop:
        dropped.insert(raw(rec.original_label.id));
        break;
      case ErrorKind::kFlip:
      case ErrorKind::kShift:
        replaced[raw(rec.original_label.id)] = &*rec.noisy_label;
        break;
      case ErrorKind::kSpawn:
        if (index.count(raw(rec.noisy_label->id))) {
          throw InputError("spawned label id " + std::to_string(raw(rec.noisy_label->id)) +
                           " collides with an existing label");
        }
        spawned.push_back(*rec.noisy_label);
        break;
    }
  }

  Dataset noisy;
  noisy.images = dataset.images;
  noisy.class_names = dataset.class_names;
  noisy.category_ids = dataset.category_ids;
  noisy.labels.reserve(dataset.labels.size() + spawned.size());
  for (const auto& l : dataset.labels) {
    if (dropped.count(raw(l.id))) continue;
    auto r = replaced.find(raw(l.id));
    noisy.labels.push_back(r == replaced.end() ? l : *r->second);
  }
  noisy.labels.insert(noisy.labels.end(), spawned.begin(), spawned.end());
  return noisy;
}

}  // namespace labelaudit
