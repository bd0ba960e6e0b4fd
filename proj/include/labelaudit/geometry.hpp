#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace labelaudit {

inline constexpr double kProbabilityEpsilon = 1e-7;

// Axis-aligned box in center/extent form, pixels.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x_min() const { return cx - 0.5 * w; }
  double y_min() const { return cy - 0.5 * h; }
  double x_max() const { return cx + 0.5 * w; }
  double y_max() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const;

  static Box from_corners(double x_min, double y_min, double x_max, double y_max);
  static Box from_xywh(double x_min, double y_min, double w, double h);

  friend bool operator==(const Box&, const Box&) = default;
};

struct DeltaVector {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;

  friend bool operator==(const DeltaVector&, const DeltaVector&) = default;
};

// Probabilities over C+1 slots; slot 0 is background, 1..C foreground.
class ClassDistribution {
 public:
  // Throws InputError unless every entry is in [0,1] and the sum is 1
  // within 1e-9.
  explicit ClassDistribution(std::vector<double> probs);

  // Scales non-negative weights to sum 1.
  static ClassDistribution from_weights(std::vector<double> weights);
  static ClassDistribution one_hot(std::size_t slots, std::size_t index);
  static ClassDistribution uniform(std::size_t slots);

  std::size_t size() const { return probs_.size(); }
  int num_foreground() const { return static_cast<int>(probs_.size()) - 1; }
  double operator[](std::size_t i) const { return probs_[i]; }
  double background() const { return probs_[0]; }
  std::span<const double> probs() const { return probs_; }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;

 private:
  std::vector<double> probs_;
};

double iou(const Box& a, const Box& b);

// Greedy non-maximum suppression in descending key order (ties: lower input
// index first). A box is dropped iff its IoU with an already kept box is
// >= iou_threshold. Exempt indices are always kept and still suppress later
// boxes. Returns kept indices in processing order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> keys,
                             double iou_threshold, std::span<const std::size_t> exempt = {});

DeltaVector encode_deltas(const Box& proposal, const Box& target);
Box decode_deltas(const Box& proposal, const DeltaVector& deltas);

double smooth_l1(double t, double beta = 1.0);
double smooth_l1(const DeltaVector& d, double beta = 1.0);

double clamp_probability(double p);
double bce(double p, int target);
double binary_entropy(double p);
double cross_entropy(const ClassDistribution& dist, std::size_t target_class);
double entropy(const ClassDistribution& dist);

}  // namespace labelaudit
