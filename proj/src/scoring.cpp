#include "labelaudit/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "labelaudit/error.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

void check_config(const PipelineConfig& cfg) {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(std::string(name) + " must be in [0,1]");
  };
  unit(cfg.s_epsilon, "s_epsilon");
  unit(cfg.tau, "tau");
  unit(cfg.nms_iou_stage1, "nms_iou_stage1");
  unit(cfg.nms_iou_stage2, "nms_iou_stage2");
  unit(cfg.assign_iou, "assign_iou");
  unit(cfg.pd_assign_iou, "pd_assign_iou");
  if (cfg.nms_iou_stage1 == 0.0 || cfg.nms_iou_stage2 == 0.0) {
    throw InputError("NMS IoU thresholds must be > 0");
  }
  if (!(cfg.smooth_l1_beta > 0.0)) throw InputError("smooth_l1_beta must be > 0");
  for (double s : cfg.rpn_delta_stds) {
    if (!(s > 0.0)) throw InputError("rpn_delta_stds must be > 0");
  }
  for (double s : cfg.roi_delta_stds) {
    if (!(s > 0.0)) throw InputError("roi_delta_stds must be > 0");
  }
}

RecordedSecondStage::RecordedSecondStage(const DetectionMap& detections) {
  for (const auto& [image, boxes] : detections) {
    for (const auto& sb : boxes) {
      if (sb.source == BoxSource::kInjectedLabel && sb.label_ref) by_label_[raw(*sb.label_ref)] = sb;
    }
  }
}

ScoredBox RecordedSecondStage::second_stage(const BoxLabel& label) const {
  auto it = by_label_.find(raw(label.id));
  if (it == by_label_.end()) {
    throw InputError("no second-stage result for label " + std::to_string(raw(label.id)) +
                     " in the detector output");
  }
  return it->second;
}

ScoredBox SimulatedSecondStage::second_stage(const BoxLabel& label) const {
  return simulator_.second_stage_query(label.box, label.image_id);
}

std::vector<ScoredBox> inject_labels(std::span<const BoxLabel> labels, std::vector<ScoredBox> boxes,
                                     const SecondStageSource& source) {
  boxes.reserve(boxes.size() + labels.size());
  for (const auto& label : labels) {
    ScoredBox sb = source.second_stage(label);
    sb.image_id = label.image_id;
    sb.box = label.box;
    sb.s0 = 1.0;
    sb.source = BoxSource::kInjectedLabel;
    sb.label_ref = label.id;
    boxes.push_back(std::move(sb));
  }
  return boxes;
}

namespace {

const BoxLabel* best_match(const Box& box, std::span<const BoxLabel> labels, double* best_iou) {
  const BoxLabel* best = nullptr;
  *best_iou = 0.0;
  for (const auto& l : labels) {
    const double v = iou(box, l.box);
    if (v > *best_iou) {
      *best_iou = v;
      best = &l;
    }
  }
  return best;
}

double regression_loss(const Box& from, const Box& to, const std::array<double, 4>& stds,
                       double beta) {
  const DeltaVector d = encode_deltas(from, to);
  return smooth_l1(DeltaVector{d.dx / stds[0], d.dy / stds[1], d.dw / stds[2], d.dh / stds[3]}, beta);
}

}  // namespace

LossPair rpn_loss(const ScoredBox& sb, std::span<const BoxLabel> labels, const PipelineConfig& cfg) {
  double best_iou = 0.0;
  const BoxLabel* m = best_match(sb.box, labels, &best_iou);
  if (m && best_iou >= cfg.assign_iou) {
    return {bce(sb.s0, 1), regression_loss(sb.box, m->box, cfg.rpn_delta_stds, cfg.smooth_l1_beta)};
  }
  return {bce(sb.s0, 0), 0.0};
}

LossPair roi_loss(const ScoredBox& sb, std::span<const BoxLabel> labels, const PipelineConfig& cfg) {
  double best_iou = 0.0;
  const BoxLabel* m = best_match(sb.refined_box, labels, &best_iou);
  if (m && best_iou >= cfg.assign_iou) {
    return {cross_entropy(sb.class_dist, static_cast<std::size_t>(m->class_id)),
            regression_loss(sb.refined_box, m->box, cfg.roi_delta_stds, cfg.smooth_l1_beta)};
  }
  return {cross_entropy(sb.class_dist, 0), 0.0};
}

namespace {

struct Scored {
  double key;
  std::map<std::string, double> components;
};

// Shared two-stage shape: inject labels, stage-1 NMS on stage1_key with
// labels exempt, s_epsilon filter, stage-2 NMS on the refined boxes keyed by
// the final key, labels exempt again.
template <typename Stage1Key, typename Stage2>
std::vector<Proposal> two_stage_image(std::span<const BoxLabel> labels,
                                      const std::vector<ScoredBox>* detections,
                                      const SecondStageSource& source, const PipelineConfig& cfg,
                                      Method method, bool filter_s_epsilon, Stage1Key&& stage1_key,
                                      Stage2&& stage2) {
  std::vector<ScoredBox> first;
  if (detections) {
    for (const auto& sb : *detections) {
      if (sb.source == BoxSource::kDetector) first.push_back(sb);
    }
  }
  std::vector<ScoredBox> boxes = inject_labels(labels, std::move(first), source);

  std::vector<Box> geometry;
  std::vector<double> keys;
  std::vector<std::size_t> exempt;
  geometry.reserve(boxes.size());
  keys.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    geometry.push_back(boxes[i].box);
    keys.push_back(stage1_key(i, boxes[i]));
    if (boxes[i].source == BoxSource::kInjectedLabel) exempt.push_back(i);
  }
  std::vector<std::size_t> survivors;
  for (std::size_t i : nms(geometry, keys, cfg.nms_iou_stage1, exempt)) {
    if (filter_s_epsilon && boxes[i].source == BoxSource::kDetector && boxes[i].s0 < cfg.s_epsilon) {
      continue;
    }
    survivors.push_back(i);
  }

  std::vector<Scored> scored;
  geometry.clear();
  keys.clear();
  exempt.clear();
  for (std::size_t j = 0; j < survivors.size(); ++j) {
    const std::size_t i = survivors[j];
    scored.push_back(stage2(i, boxes[i]));
    geometry.push_back(boxes[i].refined_box);
    keys.push_back(scored.back().key);
    if (boxes[i].source == BoxSource::kInjectedLabel) exempt.push_back(j);
  }

  std::vector<Proposal> out;
  for (std::size_t j : nms(geometry, keys, cfg.nms_iou_stage2, exempt)) {
    const ScoredBox& sb = boxes[survivors[j]];
    Proposal p;
    p.image_id = sb.image_id;
    p.box = sb.refined_box;
    p.key = scored[j].key;
    p.method = method;
    p.predicted_class = derived_s2(sb).predicted_class;
    p.components = std::move(scored[j].components);
    p.source = sb.source;
    p.label_ref = sb.label_ref;
    out.push_back(std::move(p));
  }
  return out;
}

template <typename PerImage>
std::vector<Proposal> run_per_image(const Dataset& noisy, Execution execution, PerImage&& per_image) {
  const auto grouped = labels_by_image(noisy);
  std::vector<const std::pair<const ImageId, std::vector<BoxLabel>>*> entries;
  for (const auto& entry : grouped) entries.push_back(&entry);

  std::vector<std::vector<Proposal>> results(entries.size());
  parallel_for(entries.size(), execution, [&](std::size_t i) {
    results[i] = per_image(entries[i]->first, std::span<const BoxLabel>(entries[i]->second));
  });

  std::vector<Proposal> merged;
  for (auto& r : results) {
    for (auto& p : r) merged.push_back(std::move(p));
  }
  // merged is in (image id, per-image position) order already
  std::stable_sort(merged.begin(), merged.end(),
                   [](const Proposal& a, const Proposal& b) { return a.key > b.key; });
  return merged;
}

const std::vector<ScoredBox>* find_detections(const DetectionMap& detections, ImageId image) {
  auto it = detections.find(image);
  return it == detections.end() ? nullptr : &it->second;
}

}  // namespace

std::vector<Proposal> run_loss_method(const Dataset& noisy, const DetectionMap& detections,
                                      const SecondStageSource& source, const PipelineConfig& cfg,
                                      Execution execution) {
  check_config(cfg);
  return run_per_image(noisy, execution, [&](ImageId image, std::span<const BoxLabel> labels) {
    std::vector<LossPair> rpn;
    return two_stage_image(
        labels, find_detections(detections, image), source, cfg, Method::kLoss,
        cfg.s_epsilon_in_loss,
        [&](std::size_t, const ScoredBox& sb) {
          rpn.push_back(rpn_loss(sb, labels, cfg));
          return rpn.back().total();
        },
        [&](std::size_t i, const ScoredBox& sb) {
          const LossPair roi = roi_loss(sb, labels, cfg);
          Scored s;
          s.components = {{"rpn_cls", rpn[i].cls},
                          {"rpn_reg", rpn[i].reg},
                          {"roi_cls", roi.cls},
                          {"roi_reg", roi.reg}};
          s.key = rpn[i].cls + rpn[i].reg + roi.cls + roi.reg;
          return s;
        });
  });
}

std::vector<Proposal> run_score_method(const Dataset& noisy, const DetectionMap& detections,
                                       const SecondStageSource& source, const PipelineConfig& cfg,
                                       Execution execution) {
  check_config(cfg);
  auto proposals = run_per_image(noisy, execution, [&](ImageId image, std::span<const BoxLabel> labels) {
    return two_stage_image(
        labels, find_detections(detections, image), source, cfg, Method::kScore, true,
        [](std::size_t, const ScoredBox& sb) { return sb.s0; },
        [](std::size_t, const ScoredBox& sb) {
          const double s2 = derived_s2(sb).s2;
          return Scored{s2, {{"s0", sb.s0}, {"s2", s2}}};
        });
  });
  if (cfg.tau > 0.0) {
    std::erase_if(proposals, [&](const Proposal& p) { return p.key < cfg.tau; });
  }
  return proposals;
}

std::vector<Proposal> run_entropy_method(const Dataset& noisy, const DetectionMap& detections,
                                         const SecondStageSource& source, const PipelineConfig& cfg,
                                         Execution execution) {
  check_config(cfg);
  return run_per_image(noisy, execution, [&](ImageId image, std::span<const BoxLabel> labels) {
    return two_stage_image(
        labels, find_detections(detections, image), source, cfg, Method::kEntropy, true,
        [](std::size_t, const ScoredBox& sb) { return binary_entropy(sb.s0); },
        [](std::size_t, const ScoredBox& sb) {
          const double h = entropy(sb.class_dist);
          return Scored{h, {{"stage1_entropy", binary_entropy(sb.s0)}, {"entropy", h}}};
        });
  });
}

double probability_differential(int label_class, std::span<const ClassDistribution> assigned) {
  if (assigned.empty()) return 1.0;
  double sum = 0.0;
  for (const auto& dist : assigned) {
    double other = 0.0;
    for (std::size_t k = 1; k < dist.size(); ++k) {
      if (static_cast<int>(k) != label_class) other = std::max(other, dist[k]);
    }
    sum += 1.0 + other - dist[static_cast<std::size_t>(label_class)];
  }
  return std::clamp(sum / (2.0 * static_cast<double>(assigned.size())), 0.0, 1.0);
}

std::vector<Proposal> run_pd(const Dataset& noisy, const DetectionMap& detections,
                             const PipelineConfig& cfg, Execution execution) {
  check_config(cfg);
  const std::size_t slots = static_cast<std::size_t>(noisy.num_classes()) + 1;
  return run_per_image(noisy, execution, [&](ImageId image, std::span<const BoxLabel> labels) {
    const auto* boxes = find_detections(detections, image);
    std::vector<Proposal> out;
    for (const auto& label : labels) {
      std::vector<ClassDistribution> assigned;
      std::vector<double> mean(slots, 0.0);
      if (boxes) {
        for (const auto& sb : *boxes) {
          if (sb.source != BoxSource::kDetector) continue;
          if (iou(sb.refined_box, label.box) < cfg.pd_assign_iou) continue;
          for (std::size_t k = 0; k < slots; ++k) mean[k] += sb.class_dist[k];
          assigned.push_back(sb.class_dist);
        }
      }
      Proposal p;
      p.image_id = label.image_id;
      p.box = label.box;
      p.key = probability_differential(label.class_id, assigned);
      p.method = Method::kPd;
      p.predicted_class = assigned.empty() ? 0 : derived_s2(ClassDistribution::from_weights(mean)).predicted_class;
      p.components = {{"pd", p.key}, {"assigned", static_cast<double>(assigned.size())}};
      p.source = BoxSource::kInjectedLabel;
      p.label_ref = label.id;
      out.push_back(std::move(p));
    }
    return out;
  });
}

std::size_t naive_cost(double gamma, std::size_t num_labels) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("gamma must be in [0,1]");
  return static_cast<std::size_t>(std::floor((1.0 + gamma / 4.0) * static_cast<double>(num_labels) + 1e-9));
}

NaiveResult run_naive(const Dataset& noisy, const CorruptionManifest& manifest, std::uint64_t seed) {
  std::vector<BoxLabel> items = noisy.labels;
  for (const auto& r : manifest.records) {
    if (r.kind == ErrorKind::kDrop) items.push_back(r.original_label);
  }
  Engine engine = make_engine(derive_stream(seed, "naive"));
  std::shuffle(items.begin(), items.end(), engine);

  NaiveResult result;
  result.cost = naive_cost(manifest.gamma, noisy.labels.size());
  const double n = static_cast<double>(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    Proposal p;
    p.image_id = items[i].image_id;
    p.box = items[i].box;
    p.key = (n - static_cast<double>(i)) / n;
    p.method = Method::kNaive;
    p.predicted_class = items[i].class_id;
    p.source = BoxSource::kInjectedLabel;
    p.label_ref = items[i].id;
    result.ranking.push_back(std::move(p));
  }
  return result;
}

std::vector<Proposal> filter_no_label_overlap(std::span<const Proposal> proposals,
                                              const Dataset& noisy, double alpha) {
  const auto grouped = labels_by_image(noisy);
  std::vector<Proposal> out;
  for (const auto& p : proposals) {
    bool overlaps = false;
    if (auto it = grouped.find(p.image_id); it != grouped.end()) {
      for (const auto& l : it->second) {
        if (iou(p.box, l.box) >= alpha) {
          overlaps = true;
          break;
        }
      }
    }
    if (!overlaps) out.push_back(p);
  }
  return out;
}

}  // namespace labelaudit
