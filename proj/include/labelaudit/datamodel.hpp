#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "labelaudit/geometry.hpp"

namespace labelaudit {

enum class ImageId : std::int64_t {};
enum class LabelId : std::int64_t {};

constexpr std::int64_t raw(ImageId id) { return static_cast<std::int64_t>(id); }
constexpr std::int64_t raw(LabelId id) { return static_cast<std::int64_t>(id); }

struct ImageMeta {
  ImageId id{};
  int width = 0;
  int height = 0;
  std::string file_name;

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct BoxLabel {
  LabelId id{};
  ImageId image_id{};
  Box box;
  int class_id = 1;  // 1..C

  friend bool operator==(const BoxLabel&, const BoxLabel&) = default;
};

struct Dataset {
  std::vector<ImageMeta> images;
  std::vector<BoxLabel> labels;
  std::vector<std::string> class_names;
  // External category id for each class index 1..C (COCO ids may have gaps).
  // Empty means the identity mapping.
  std::vector<std::int64_t> category_ids;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  const ImageMeta* find_image(ImageId id) const;
  std::int64_t category_id(int class_id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Labels grouped per image; every image of the dataset has an entry.
std::map<ImageId, std::vector<BoxLabel>> labels_by_image(const Dataset& dataset);

bool box_within_image(const Box& box, const ImageMeta& image, double tolerance = 1e-6);

// Empty iff the dataset is well formed.
std::vector<std::string> validate(const Dataset& dataset);

enum class ErrorKind { kDrop, kFlip, kShift, kSpawn };
inline constexpr ErrorKind kAllErrorKinds[] = {ErrorKind::kDrop, ErrorKind::kFlip,
                                               ErrorKind::kShift, ErrorKind::kSpawn};

std::string_view to_string(ErrorKind kind);
ErrorKind parse_error_kind(std::string_view text);

// One injected error. The anchor is where a proposal must land to detect it:
// the original box for drops, the noisy box otherwise.
struct ErrorRecord {
  ErrorKind kind = ErrorKind::kDrop;
  BoxLabel original_label;
  std::optional<BoxLabel> noisy_label;  // absent for drops
  ImageId anchor_image_id{};
  Box anchor_box;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct CorruptionManifest {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::size_t per_type_count = 0;
  std::vector<ErrorRecord> records;

  std::size_t count(ErrorKind kind) const;

  friend bool operator==(const CorruptionManifest&, const CorruptionManifest&) = default;
};

// floor(gamma / 4 * G), guarded against representation error of gamma.
std::size_t per_type_count(double gamma, std::size_t num_labels);

enum class BoxSource { kDetector, kInjectedLabel };

std::string_view to_string(BoxSource source);
BoxSource parse_box_source(std::string_view text);

// One detector output: a first-stage box with objectness and the second
// stage's refined box and class distribution for it.
struct ScoredBox {
  ImageId image_id{};
  Box box;
  double s0 = 0.0;
  Box refined_box;
  ClassDistribution class_dist = ClassDistribution::one_hot(1, 0);
  BoxSource source = BoxSource::kDetector;
  std::optional<LabelId> label_ref;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

struct ForegroundPrediction {
  double s2 = 0.0;
  int predicted_class = 0;
};

// Max and argmax over foreground slots 1..C (lowest index wins ties).
ForegroundPrediction derived_s2(const ClassDistribution& dist);
inline ForegroundPrediction derived_s2(const ScoredBox& sb) { return derived_s2(sb.class_dist); }

enum class Method { kLoss, kScore, kEntropy, kPd, kNaive };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct Proposal {
  ImageId image_id{};
  Box box;
  double key = 0.0;  // higher = more suspicious
  Method method = Method::kLoss;
  int predicted_class = 0;
  std::map<std::string, double> components;
  BoxSource source = BoxSource::kDetector;
  std::optional<LabelId> label_ref;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

enum class Verdict { kTp, kFp, kUnsure };

std::string_view to_string(Verdict verdict);
Verdict parse_verdict(std::string_view text);

struct VerdictRecord {
  int proposal_rank = 0;  // 1-based
  Verdict verdict = Verdict::kFp;
  std::set<ErrorKind> error_types;
  std::string reviewer;
  std::string timestamp;

  friend bool operator==(const VerdictRecord&, const VerdictRecord&) = default;
};

// Throws InputError when a tp verdict carries no error type.
void check_verdict(const VerdictRecord& record);

}  // namespace labelaudit
