#include "labelaudit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "labelaudit/error.hpp"

namespace labelaudit {

bool Box::valid() const {
  return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
         w > 0.0 && h > 0.0;
}

Box Box::from_corners(double x_min, double y_min, double x_max, double y_max) {
  return Box{0.5 * (x_min + x_max), 0.5 * (y_min + y_max), x_max - x_min, y_max - y_min};
}

Box Box::from_xywh(double x_min, double y_min, double w, double h) {
  return Box{x_min + 0.5 * w, y_min + 0.5 * h, w, h};
}

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("class distribution must have at least one slot");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      std::ostringstream msg;
      msg << "class probability " << i << " out of [0,1]: " << p;
      throw InputError(msg.str());
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "class probabilities sum to " << sum << ", expected 1";
    throw InputError(msg.str());
  }
}

ClassDistribution ClassDistribution::from_weights(std::vector<double> weights) {
  double sum = 0.0;
  for (double v : weights) {
    if (!std::isfinite(v) || v < 0.0) throw InputError("class weights must be finite and >= 0");
    sum += v;
  }
  if (!(sum > 0.0)) throw InputError("class weights sum to zero");
  for (double& v : weights) v /= sum;
  return ClassDistribution(std::move(weights));
}

ClassDistribution ClassDistribution::one_hot(std::size_t slots, std::size_t index) {
  if (index >= slots) throw InputError("one-hot index out of range");
  std::vector<double> p(slots, 0.0);
  p[index] = 1.0;
  return ClassDistribution(std::move(p));
}

ClassDistribution ClassDistribution::uniform(std::size_t slots) {
  return from_weights(std::vector<double>(slots, 1.0));
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> keys,
                             double iou_threshold, std::span<const std::size_t> exempt) {
  if (boxes.size() != keys.size()) throw InputError("nms: boxes and keys differ in length");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw InputError("nms: iou_threshold must be in (0,1]");
  }
  const std::size_t n = boxes.size();
  std::vector<char> is_exempt(n, 0);
  for (std::size_t i : exempt) {
    if (i >= n) throw InputError("nms: exempt index out of range");
    is_exempt[i] = 1;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });

  std::vector<std::size_t> kept;
  kept.reserve(n);
  for (std::size_t i : order) {
    bool suppressed = false;
    if (!is_exempt[i]) {
      for (std::size_t k : kept) {
        if (iou(boxes[i], boxes[k]) >= iou_threshold) {
          suppressed = true;
          break;
        }
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

DeltaVector encode_deltas(const Box& proposal, const Box& target) {
  return DeltaVector{(target.cx - proposal.cx) / proposal.w, (target.cy - proposal.cy) / proposal.h,
                     std::log(target.w / proposal.w), std::log(target.h / proposal.h)};
}

Box decode_deltas(const Box& proposal, const DeltaVector& d) {
  return Box{proposal.cx + d.dx * proposal.w, proposal.cy + d.dy * proposal.h,
             proposal.w * std::exp(d.dw), proposal.h * std::exp(d.dh)};
}

double smooth_l1(double t, double beta) {
  const double a = std::abs(t);
  return a < beta ? 0.5 * t * t / beta : a - 0.5 * beta;
}

double smooth_l1(const DeltaVector& d, double beta) {
  if (!(beta > 0.0)) throw InputError("smooth_l1: beta must be > 0");
  return smooth_l1(d.dx, beta) + smooth_l1(d.dy, beta) + smooth_l1(d.dw, beta) +
         smooth_l1(d.dh, beta);
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

double bce(double p, int target) {
  const double q = clamp_probability(p);
  return target == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

double cross_entropy(const ClassDistribution& dist, std::size_t target_class) {
  if (target_class >= dist.size()) throw InputError("cross_entropy: target class out of range");
  return -std::log(clamp_probability(dist[target_class]));
}

double entropy(const ClassDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace labelaudit
