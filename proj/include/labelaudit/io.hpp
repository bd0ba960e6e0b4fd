#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labelaudit/datamodel.hpp"

namespace labelaudit {

using DetectionMap = std::map<ImageId, std::vector<ScoredBox>>;

struct FormatVersion {
  std::string schema;
  int version = 1;

  friend bool operator==(const FormatVersion&, const FormatVersion&) = default;
};

namespace schema {
inline constexpr std::string_view kDataset = "labelaudit.dataset";
inline constexpr std::string_view kDetections = "labelaudit.detections";
inline constexpr std::string_view kManifest = "labelaudit.manifest";
inline constexpr std::string_view kProposals = "labelaudit.proposals";
inline constexpr std::string_view kVerdicts = "labelaudit.verdicts";
inline constexpr int kVersion = 1;
}  // namespace schema

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a
// partially written file.
void write_text_file(const std::filesystem::path& path, std::string_view text);

// COCO-style annotations; bbox [x_min, y_min, w, h] is converted to center
// form and clamped to the image. Throws ParseError or ValidationError.
Dataset parse_dataset(std::string_view text);
std::string dump_dataset(const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// One JSON object per image per line, after an optional format header line.
DetectionMap parse_detector_output(std::string_view text, int num_classes);
std::string dump_detector_output(const DetectionMap& detections);
DetectionMap load_detector_output(const std::filesystem::path& path, int num_classes);
void save_detector_output(const DetectionMap& detections, const std::filesystem::path& path);

CorruptionManifest parse_manifest(std::string_view text);
std::string dump_manifest(const CorruptionManifest& manifest);
CorruptionManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorruptionManifest& manifest, const std::filesystem::path& path);

// Proposals are stored sorted by descending key; the writer sorts stably and
// the reader rejects files that are not monotone.
std::vector<Proposal> parse_proposals(std::string_view text);
std::string dump_proposals(std::span<const Proposal> proposals);
std::vector<Proposal> load_proposals(const std::filesystem::path& path);
void save_proposals(std::span<const Proposal> proposals, const std::filesystem::path& path);

// Append-only verdict log. The caller serializes concurrent appends.
std::vector<VerdictRecord> parse_verdicts(std::string_view text);
std::string dump_verdict_line(const VerdictRecord& record);
std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& path);
void append_verdict(const VerdictRecord& record, const std::filesystem::path& path);

// Last record per rank wins.
std::map<int, VerdictRecord> latest_verdicts(std::span<const VerdictRecord> records);

}  // namespace labelaudit
