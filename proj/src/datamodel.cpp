#include "labelaudit/datamodel.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "labelaudit/error.hpp"

namespace labelaudit {

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::ostringstream out;
  out << violations.size() << " validation error(s)";
  for (std::size_t i = 0; i < violations.size() && i < 10; ++i) out << "\n  " << violations[i];
  if (violations.size() > 10) out << "\n  ...";
  return out.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

const ImageMeta* Dataset::find_image(ImageId id) const {
  for (const auto& image : images) {
    if (image.id == id) return &image;
  }
  return nullptr;
}

std::int64_t Dataset::category_id(int class_id) const {
  if (category_ids.empty()) return class_id;
  return category_ids.at(static_cast<std::size_t>(class_id - 1));
}

std::map<ImageId, std::vector<BoxLabel>> labels_by_image(const Dataset& dataset) {
  std::map<ImageId, std::vector<BoxLabel>> grouped;
  for (const auto& image : dataset.images) grouped[image.id];
  for (const auto& label : dataset.labels) grouped[label.image_id].push_back(label);
  return grouped;
}

bool box_within_image(const Box& box, const ImageMeta& image, double tolerance) {
  return box.x_min() >= -tolerance && box.y_min() >= -tolerance &&
         box.x_max() <= image.width + tolerance && box.y_max() <= image.height + tolerance;
}

std::vector<std::string> validate(const Dataset& dataset) {
  std::vector<std::string> violations;
  const int num_classes = dataset.num_classes();

  if (!dataset.category_ids.empty() &&
      dataset.category_ids.size() != dataset.class_names.size()) {
    violations.push_back("category id table size differs from class name count");
  }

  std::unordered_map<std::int64_t, const ImageMeta*> images;
  for (const auto& image : dataset.images) {
    if (!images.emplace(raw(image.id), &image).second) {
      violations.push_back("image " + std::to_string(raw(image.id)) + ": duplicate image id");
    }
    if (image.width <= 0 || image.height <= 0) {
      violations.push_back("image " + std::to_string(raw(image.id)) + ": non-positive size");
    }
  }

  std::unordered_set<std::int64_t> label_ids;
  for (const auto& label : dataset.labels) {
    const std::string name = "label " + std::to_string(raw(label.id));
    if (!label_ids.insert(raw(label.id)).second) violations.push_back(name + ": duplicate label id");
    if (label.class_id < 1 || label.class_id > num_classes) {
      violations.push_back(name + ": class_id " + std::to_string(label.class_id) +
                           " outside [1," + std::to_string(num_classes) + "]");
    }
    if (!label.box.valid()) {
      violations.push_back(name + ": box has non-positive extent or non-finite value");
    }
    auto it = images.find(raw(label.image_id));
    if (it == images.end()) {
      violations.push_back(name + ": references missing image " +
                           std::to_string(raw(label.image_id)));
    } else if (label.box.valid() && !box_within_image(label.box, *it->second)) {
      violations.push_back(name + ": box exceeds image bounds");
    }
  }
  return violations;
}

namespace {

constexpr std::string_view kErrorKindNames[] = {"drop", "flip", "shift", "spawn"};
constexpr std::string_view kMethodNames[] = {"loss", "score", "entropy", "pd", "naive"};
constexpr std::string_view kVerdictNames[] = {"tp", "fp", "unsure"};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::string_view (&names)[N], const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  throw InputError(std::string("unknown ") + what + ": '" + std::string(text) + "'");
}

}  // namespace

std::string_view to_string(ErrorKind kind) { return kErrorKindNames[static_cast<int>(kind)]; }
ErrorKind parse_error_kind(std::string_view text) {
  return parse_enum<ErrorKind>(text, kErrorKindNames, "error type");
}

std::string_view to_string(Method method) { return kMethodNames[static_cast<int>(method)]; }
Method parse_method(std::string_view text) {
  return parse_enum<Method>(text, kMethodNames, "method");
}

std::string_view to_string(Verdict verdict) { return kVerdictNames[static_cast<int>(verdict)]; }
Verdict parse_verdict(std::string_view text) {
  return parse_enum<Verdict>(text, kVerdictNames, "verdict");
}

std::string_view to_string(BoxSource source) {
  return source == BoxSource::kDetector ? "detector" : "injected_label";
}

BoxSource parse_box_source(std::string_view text) {
  if (text == "detector") return BoxSource::kDetector;
  if (text == "injected_label") return BoxSource::kInjectedLabel;
  throw InputError("unknown box source: '" + std::string(text) + "'");
}

std::size_t CorruptionManifest::count(ErrorKind kind) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.kind == kind ? 1 : 0;
  return n;
}

std::size_t per_type_count(double gamma, std::size_t num_labels) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("gamma must be in [0,1]");
  const double exact = gamma / 4.0 * static_cast<double>(num_labels);
  return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

ForegroundPrediction derived_s2(const ClassDistribution& dist) {
  ForegroundPrediction best;
  for (std::size_t k = 1; k < dist.size(); ++k) {
    if (best.predicted_class == 0 || dist[k] > best.s2) {
      best.s2 = dist[k];
      best.predicted_class = static_cast<int>(k);
    }
  }
  return best;
}

void check_verdict(const VerdictRecord& record) {
  if (record.proposal_rank < 1) throw InputError("verdict rank must be >= 1");
  if (record.verdict == Verdict::kTp && record.error_types.empty()) {
    throw InputError("a tp verdict must name at least one error type");
  }
}

}  // namespace labelaudit
