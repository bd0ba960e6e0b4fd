#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "labelaudit/datamodel.hpp"
#include "labelaudit/detector_sim.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/parallel.hpp"

namespace labelaudit {

struct PipelineConfig {
  double s_epsilon = 0.25;  // first-stage objectness threshold
  double tau = 0.0;         // second-stage threshold; 0 keeps everything
  double nms_iou_stage1 = 0.7;
  double nms_iou_stage2 = 0.5;
  double assign_iou = 0.5;  // loss target assignment
  double pd_assign_iou = 0.5;
  double smooth_l1_beta = 1.0;
  bool s_epsilon_in_loss = true;
  // Regression targets are divided by these before smooth-L1, as the usual
  // two-stage box coders do (RPN unit, ROI head 0.1/0.1/0.2/0.2).
  std::array<double, 4> rpn_delta_stds{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> roi_delta_stds{0.1, 0.1, 0.2, 0.2};
};

void check_config(const PipelineConfig& cfg);

// Where second-stage outputs for injected label boxes come from.
class SecondStageSource {
 public:
  virtual ~SecondStageSource() = default;
  // Throws InputError naming the label when no result is available.
  virtual ScoredBox second_stage(const BoxLabel& label) const = 0;
};

// Uses the source=injected_label entries of a detector output file.
class RecordedSecondStage : public SecondStageSource {
 public:
  explicit RecordedSecondStage(const DetectionMap& detections);
  ScoredBox second_stage(const BoxLabel& label) const override;

 private:
  std::map<std::int64_t, ScoredBox> by_label_;
};

class SimulatedSecondStage : public SecondStageSource {
 public:
  explicit SimulatedSecondStage(const DetectorSimulator& simulator) : simulator_(simulator) {}
  ScoredBox second_stage(const BoxLabel& label) const override;

 private:
  const DetectorSimulator& simulator_;
};

// Appends one box per label with s0 = 1 and the label's own geometry.
std::vector<ScoredBox> inject_labels(std::span<const BoxLabel> labels, std::vector<ScoredBox> boxes,
                                     const SecondStageSource& source);

struct LossPair {
  double cls = 0.0;
  double reg = 0.0;
  double total() const { return cls + reg; }
};

LossPair rpn_loss(const ScoredBox& sb, std::span<const BoxLabel> labels, const PipelineConfig& cfg);
LossPair roi_loss(const ScoredBox& sb, std::span<const BoxLabel> labels, const PipelineConfig& cfg);

// Per-image results are merged in key-descending order, ties by image id
// then per-image position.
std::vector<Proposal> run_loss_method(const Dataset& noisy, const DetectionMap& detections,
                                      const SecondStageSource& source, const PipelineConfig& cfg,
                                      Execution execution = Execution::kParallel);
std::vector<Proposal> run_score_method(const Dataset& noisy, const DetectionMap& detections,
                                       const SecondStageSource& source, const PipelineConfig& cfg,
                                       Execution execution = Execution::kParallel);
std::vector<Proposal> run_entropy_method(const Dataset& noisy, const DetectionMap& detections,
                                         const SecondStageSource& source, const PipelineConfig& cfg,
                                         Execution execution = Execution::kParallel);
// One proposal per noisy label at the label's box; detector boxes only.
std::vector<Proposal> run_pd(const Dataset& noisy, const DetectionMap& detections,
                             const PipelineConfig& cfg, Execution execution = Execution::kParallel);

// Probability differential of a label of class `label_class` against its
// assigned predictions; 1 when nothing is assigned.
double probability_differential(int label_class, std::span<const ClassDistribution> assigned);

struct NaiveResult {
  std::size_t cost = 0;
  std::vector<Proposal> ranking;  // noisy labels plus dropped boxes, random order
};

std::size_t naive_cost(double gamma, std::size_t num_labels);
NaiveResult run_naive(const Dataset& noisy, const CorruptionManifest& manifest, std::uint64_t seed);

// Keeps proposals whose class-independent IoU with every noisy label of their
// image is below alpha.
std::vector<Proposal> filter_no_label_overlap(std::span<const Proposal> proposals,
                                              const Dataset& noisy, double alpha);

}  // namespace labelaudit
