#include "labelaudit/detector_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "labelaudit/error.hpp"

namespace labelaudit {

void check_config(const SimulatorConfig& cfg, int num_classes) {
  if (num_classes < 1) throw InputError("simulator needs at least one class");
  if (!(cfg.loc_noise_factor >= 0.0)) throw InputError("loc_noise_factor must be >= 0");
  if (!(cfg.miss_rate >= 0.0 && cfg.miss_rate <= 1.0)) throw InputError("miss_rate must be in [0,1]");
  if (!(cfg.clutter_per_image >= 0.0)) throw InputError("clutter_per_image must be >= 0");
  if (!(cfg.class_accuracy > 1.0 / num_classes && cfg.class_accuracy <= 1.0) &&
      !(num_classes == 1 && cfg.class_accuracy > 0.0 && cfg.class_accuracy <= 1.0)) {
    throw InputError("class_accuracy must be in (1/C, 1]");
  }
  if (!(cfg.dirichlet_concentration > 0.0)) throw InputError("dirichlet_concentration must be > 0");
  if (!(cfg.objectness_sharpness > 0.0)) throw InputError("objectness_sharpness must be > 0");
  if (!(cfg.score_noise >= 0.0)) throw InputError("score_noise must be >= 0");
  if (!(cfg.refine_pull >= 0.0 && cfg.refine_pull <= 1.0)) throw InputError("refine_pull must be in [0,1]");
  if (!(cfg.background_mass > 0.5 && cfg.background_mass < 1.0)) {
    throw InputError("background_mass must be in (0.5, 1)");
  }
  if (!(cfg.foreground_iou > 0.0 && cfg.foreground_iou <= 1.0)) {
    throw InputError("foreground_iou must be in (0,1]");
  }
  if (!(cfg.clutter_min_extent > 0.0 && cfg.clutter_min_extent <= cfg.clutter_max_extent &&
        cfg.clutter_max_extent <= 1.0)) {
    throw InputError("clutter extents must satisfy 0 < min <= max <= 1");
  }
}

DetectorSimulator::DetectorSimulator(const Dataset& clean, SimulatorConfig cfg)
    : cfg_(cfg), num_classes_(clean.num_classes()), images_(clean.images),
      objects_(labels_by_image(clean)) {
  check_config(cfg_, num_classes_);
}

const std::vector<BoxLabel>& DetectorSimulator::objects(ImageId image) const {
  auto it = objects_.find(image);
  if (it == objects_.end()) throw InputError("unknown image " + std::to_string(raw(image)));
  return it->second;
}

double DetectorSimulator::objectness(double best_iou) const {
  return 1.0 / (1.0 + std::exp(-cfg_.objectness_sharpness * (best_iou - 0.5)));
}

ClassDistribution DetectorSimulator::foreground_dist(int true_class, Engine& engine) const {
  const std::size_t slots = static_cast<std::size_t>(num_classes_) + 1;
  const double rest = 1.0 - cfg_.class_accuracy;
  std::vector<double> alpha(slots, 0.0);
  if (num_classes_ > 1) {
    alpha[0] = 0.5 * rest;
    for (std::size_t k = 1; k < slots; ++k) alpha[k] = 0.5 * rest / (num_classes_ - 1);
  } else {
    alpha[0] = rest;
  }
  alpha[static_cast<std::size_t>(true_class)] = cfg_.class_accuracy;
  for (double& a : alpha) a *= cfg_.dirichlet_concentration;
  return ClassDistribution::from_weights(sample_dirichlet(alpha, engine));
}

// closeness in [0,1): share of the foreground mass leaning toward near_class.
ClassDistribution DetectorSimulator::background_dist(int near_class, double closeness,
                                                     Engine& engine) const {
  const std::size_t slots = static_cast<std::size_t>(num_classes_) + 1;
  std::vector<double> alpha(slots - 1);
  for (std::size_t k = 1; k < slots; ++k) {
    double share = (1.0 - closeness) / num_classes_;
    if (static_cast<int>(k) == near_class) share += closeness;
    alpha[k - 1] = cfg_.dirichlet_concentration * share;
  }
  const auto fg = sample_dirichlet(alpha, engine);
  const double fg_mass = 1.0 - cfg_.background_mass;
  std::vector<double> probs(slots);
  probs[0] = cfg_.background_mass;
  for (std::size_t k = 1; k < slots; ++k) probs[k] = fg_mass * fg[k - 1];
  return ClassDistribution::from_weights(std::move(probs));
}

DetectorSimulator::Evaluation DetectorSimulator::evaluate(const std::vector<BoxLabel>& objects,
                                                          const Box& box, Engine& engine) const {
  const BoxLabel* best = nullptr;
  double best_iou = 0.0;
  for (const auto& o : objects) {
    const double v = iou(box, o.box);
    if (v > best_iou) {
      best_iou = v;
      best = &o;
    }
  }
  if (best && best_iou >= cfg_.foreground_iou) {
    const double t = cfg_.refine_pull;
    const Box& target = best->box;
    Box refined{box.cx + t * (target.cx - box.cx), box.cy + t * (target.cy - box.cy),
                box.w + t * (target.w - box.w), box.h + t * (target.h - box.h)};
    return {refined, foreground_dist(best->class_id, engine), best_iou};
  }
  const int near_class = best ? best->class_id : 0;
  const double closeness = best ? best_iou / cfg_.foreground_iou : 0.0;
  return {box, background_dist(near_class, closeness, engine), best_iou};
}

std::vector<ScoredBox> DetectorSimulator::simulate_image(ImageId image) const {
  const auto& objs = objects(image);
  const ImageMeta* meta = nullptr;
  for (const auto& im : images_) {
    if (im.id == image) meta = &im;
  }
  Engine engine = make_engine(derive_stream(derive_stream(cfg_.seed, "simulate"), raw(image)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> standard(0.0, 1.0);

  auto score = [&](double best_iou) {
    double logit = cfg_.objectness_sharpness * (best_iou - 0.5);
    if (cfg_.score_noise > 0.0) logit += cfg_.score_noise * standard(engine);
    return 1.0 / (1.0 + std::exp(-logit));
  };

  std::vector<ScoredBox> out;
  for (const auto& obj : objs) {
    if (unit(engine) < cfg_.miss_rate) continue;
    Box box = obj.box;
    if (cfg_.loc_noise_factor > 0.0) {
      const double s = cfg_.loc_noise_factor;
      box.cx += s * obj.box.w * standard(engine);
      box.cy += s * obj.box.h * standard(engine);
      box.w = std::max(obj.box.w * (1.0 + s * standard(engine)), 0.1 * obj.box.w);
      box.h = std::max(obj.box.h * (1.0 + s * standard(engine)), 0.1 * obj.box.h);
    }
    auto ev = evaluate(objs, box, engine);
    out.push_back(ScoredBox{image, box, score(ev.best_iou), ev.refined, std::move(ev.dist),
                            BoxSource::kDetector, std::nullopt});
  }

  if (cfg_.clutter_per_image > 0.0 && meta) {
    std::poisson_distribution<int> clutter(cfg_.clutter_per_image);
    const int n = clutter(engine);
    const double side = std::min(meta->width, meta->height);
    std::uniform_real_distribution<double> extent(cfg_.clutter_min_extent * side,
                                                  cfg_.clutter_max_extent * side);
    for (int i = 0; i < n; ++i) {
      const double w = extent(engine);
      const double h = extent(engine);
      std::uniform_real_distribution<double> px(0.5 * w, meta->width - 0.5 * w);
      std::uniform_real_distribution<double> py(0.5 * h, meta->height - 0.5 * h);
      const Box box{px(engine), py(engine), w, h};
      auto ev = evaluate(objs, box, engine);
      out.push_back(ScoredBox{image, box, score(ev.best_iou), ev.refined, std::move(ev.dist),
                              BoxSource::kDetector, std::nullopt});
    }
  }
  return out;
}

DetectionMap DetectorSimulator::simulate(Execution execution) const {
  std::vector<std::vector<ScoredBox>> per_image(images_.size());
  parallel_for(images_.size(), execution,
               [&](std::size_t i) { per_image[i] = simulate_image(images_[i].id); });
  DetectionMap out;
  for (std::size_t i = 0; i < images_.size(); ++i) out[images_[i].id] = std::move(per_image[i]);
  return out;
}

ScoredBox DetectorSimulator::second_stage_query(const Box& box, ImageId image) const {
  const auto& objs = objects(image);
  const std::array<double, 4> key{box.cx, box.cy, box.w, box.h};
  Engine engine = make_engine(
      derive_stream(derive_stream(derive_stream(cfg_.seed, "query"), raw(image)), key));
  auto ev = evaluate(objs, box, engine);
  return ScoredBox{image, box, objectness(ev.best_iou), ev.refined, std::move(ev.dist),
                   BoxSource::kDetector, std::nullopt};
}

void record_label_queries(const DetectorSimulator& simulator, const Dataset& noisy,
                          DetectionMap& detections, Execution execution) {
  std::vector<ScoredBox> queried(noisy.labels.size());
  parallel_for(noisy.labels.size(), execution, [&](std::size_t i) {
    const BoxLabel& label = noisy.labels[i];
    ScoredBox sb = simulator.second_stage_query(label.box, label.image_id);
    sb.s0 = 1.0;
    sb.source = BoxSource::kInjectedLabel;
    sb.label_ref = label.id;
    queried[i] = std::move(sb);
  });
  for (auto& sb : queried) detections[sb.image_id].push_back(std::move(sb));
}

}  // namespace labelaudit
