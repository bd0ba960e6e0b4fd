#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelaudit/parallel.hpp"

namespace labelaudit {

// Symmetric flip noise: the true class keeps 1 - p_flip, every other class
// gets p_flip / (C - 1).
struct FlipNoiseModel {
  int num_classes = 10;
  double p_flip = 0.2;
  double kappa = 0.1;
  double epsilon = 1e-4;

  bool valid() const;
};

void check_model(const FlipNoiseModel& model);

struct Thresholds {
  double lower = 0.0;
  double upper = 0.0;
  bool valid = false;
};

// lower = -log(1 - p_F - kappa), upper = -log(kappa + p_F / (C - 1)).
// DomainError if 1 - p_F - kappa <= 0.
Thresholds thresholds(const FlipNoiseModel& model);

struct PinskerResult {
  double tv = 0.0;
  double kl = 0.0;  // +inf when q vanishes where p does not
  bool holds = true;
};

// tv = 0.5 * sum |p_i - q_i|, kl = KL(p || q), holds = tv <= sqrt(2 kl).
PinskerResult pinsker_check(std::span<const double> p, std::span<const double> q);

struct PinskerSweep {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // max tv / sqrt(2 kl) over pairs with finite kl > 0
};

// Random Dirichlet pairs on num_classes points; concentrations vary per pair.
PinskerSweep pinsker_sweep(std::size_t pairs, int num_classes, std::uint64_t seed,
                           Execution execution = Execution::kParallel);

struct SeparationResult {
  bool ran = false;
  std::string diagnostic;  // why the experiment did not run
  Thresholds bands;
  std::size_t samples = 0;
  double mixing_weight = 0.0;
  double mean_kl = 0.0;
  double violation_rate_correct = 0.0;
  double violation_rate_incorrect = 0.0;
  double markov_rate = 0.0;  // fraction with KL >= kappa^2 / 2
  double tv_rate = 0.0;      // fraction with TV >= kappa
  double bound = 0.0;        // 2 epsilon / kappa^2
  bool passed() const {
    return ran && violation_rate_correct <= bound && violation_rate_incorrect <= bound;
  }
};

// For each sample: true class uniform, p = flip-noise distribution, a raw
// Dirichlet draw d around p, and p_hat = (1 - t) p + t d with one mixing
// weight t shared by all samples, chosen by bisection so that the mean
// KL(p || p_hat) is at most epsilon. Losses are cross-entropies of p_hat at the
// true class and at a uniformly drawn wrong class.
SeparationResult separation_experiment(const FlipNoiseModel& model, std::size_t samples,
                                       std::uint64_t seed,
                                       Execution execution = Execution::kParallel);

struct GridPoint {
  FlipNoiseModel model;
  std::size_t samples = 10000;
};

struct GridConfig {
  std::uint64_t seed = 0;
  std::vector<GridPoint> points;
  std::size_t pinsker_pairs = 100000;
  int pinsker_classes = 10;
};

GridConfig parse_grid_config(std::string_view text);

struct GridReport {
  struct Row {
    GridPoint point;
    Thresholds bands;
    SeparationResult result;
  };
  std::vector<Row> rows;
  PinskerSweep pinsker;
  bool all_passed() const;
};

GridReport run_grid(const GridConfig& config, Execution execution = Execution::kParallel);
std::string grid_report_json(const GridReport& report);
std::string grid_report_table(const GridReport& report);

}  // namespace labelaudit
