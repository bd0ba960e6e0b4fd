#include "labelaudit/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

#include "labelaudit/error.hpp"

namespace labelaudit {

using nlohmann::json;

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset, std::size_t* column) {
  offset = std::min(offset, text.size());
  std::size_t line = 1;
  std::size_t line_start = 0;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      line_start = i + 1;
    }
  }
  if (column) *column = offset - line_start + 1;
  return line;
}

json parse_json(std::string_view text, const std::string& what, std::size_t line_base = 0) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t column = 0;
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    const std::size_t line = line_base > 0 ? line_base : line_of_offset(text, offset, &column);
    if (line_base > 0) column = offset + 1;
    std::ostringstream msg;
    msg << what << ": JSON parse error at line " << line << ", column " << column << ": "
        << e.what();
    throw ParseError(msg.str(), line, column);
  }
}

json format_header(std::string_view schema_name) {
  return json{{"schema", schema_name}, {"version", schema::kVersion}};
}

void check_format(const json& format, std::string_view expected) {
  if (!format.is_object() || !format.contains("schema") || !format.contains("version")) {
    throw SchemaError("format header needs 'schema' and 'version'");
  }
  const auto name = format.at("schema").get<std::string>();
  const int version = format.at("version").get<int>();
  if (name != expected) {
    throw SchemaError("format schema '" + name + "' where '" + std::string(expected) +
                      "' was expected");
  }
  if (version < 1 || version > schema::kVersion) {
    throw SchemaError("unsupported " + name + " version " + std::to_string(version));
  }
}

json box_to_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw SchemaError("box must be [cx, cy, w, h]");
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw SchemaError("box has non-positive extent or non-finite values");
  return b;
}

json label_to_json(const BoxLabel& l) {
  return json{{"id", raw(l.id)},
              {"image_id", raw(l.image_id)},
              {"box", box_to_json(l.box)},
              {"class_id", l.class_id}};
}

BoxLabel label_from_json(const json& j) {
  return BoxLabel{LabelId{j.at("id").get<std::int64_t>()},
                  ImageId{j.at("image_id").get<std::int64_t>()}, box_from_json(j.at("box")),
                  j.at("class_id").get<int>()};
}

// Runs fn over each non-empty line, tagging schema errors with line numbers.
void for_each_line(std::string_view text, const std::string& what,
                   const std::function<void(const json&, std::size_t)>& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    const json j = parse_json(line, what, line_no);
    try {
      fn(j, line_no);
    } catch (const json::exception& e) {
      throw ParseError(what + ": line " + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const SchemaError& e) {
      throw SchemaError(what + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw SchemaError(what + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
}

bool is_header(const json& j) { return j.is_object() && j.contains("format") && j.size() <= 2; }

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------- dataset

Dataset parse_dataset(std::string_view text) {
  const json root = parse_json(text, "dataset");
  Dataset ds;
  std::vector<std::string> violations;
  try {
    if (root.contains("format")) check_format(root.at("format"), schema::kDataset);

    std::vector<std::pair<std::int64_t, std::string>> categories;
    for (const auto& c : root.at("categories")) {
      categories.emplace_back(c.at("id").get<std::int64_t>(), c.value("name", std::string{}));
    }
    std::sort(categories.begin(), categories.end());
    std::map<std::int64_t, int> class_of_category;
    bool identity = true;
    for (std::size_t i = 0; i < categories.size(); ++i) {
      const auto& [id, name] = categories[i];
      if (!class_of_category.emplace(id, static_cast<int>(i) + 1).second) {
        violations.push_back("category " + std::to_string(id) + ": duplicate category id");
      }
      identity = identity && id == static_cast<std::int64_t>(i) + 1;
      ds.class_names.push_back(name);
      ds.category_ids.push_back(id);
    }
    if (identity) ds.category_ids.clear();

    for (const auto& im : root.at("images")) {
      ImageMeta meta;
      meta.id = ImageId{im.at("id").get<std::int64_t>()};
      meta.width = im.at("width").get<int>();
      meta.height = im.at("height").get<int>();
      meta.file_name = im.value("file_name", std::string{});
      ds.images.push_back(std::move(meta));
    }
    std::map<std::int64_t, const ImageMeta*> images;
    for (const auto& im : ds.images) images.emplace(raw(im.id), &im);

    for (const auto& a : root.at("annotations")) {
      const auto id = a.at("id").get<std::int64_t>();
      BoxLabel label;
      label.id = LabelId{id};
      label.image_id = ImageId{a.at("image_id").get<std::int64_t>()};
      const auto category = a.at("category_id").get<std::int64_t>();
      auto cls = class_of_category.find(category);
      if (cls == class_of_category.end()) {
        violations.push_back("label " + std::to_string(id) + ": unknown category_id " +
                             std::to_string(category));
        continue;
      }
      label.class_id = cls->second;
      if (a.contains("box")) {
        // Exact center form written by dump_dataset; bbox is then only for
        // other COCO tools.
        label.box = box_from_json(a.at("box"));
        ds.labels.push_back(label);
        continue;
      }
      const auto& bbox = a.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4) {
        violations.push_back("label " + std::to_string(id) + ": bbox must have 4 numbers");
        continue;
      }
      double x0 = bbox[0].get<double>();
      double y0 = bbox[1].get<double>();
      double x1 = x0 + bbox[2].get<double>();
      double y1 = y0 + bbox[3].get<double>();
      if (auto it = images.find(raw(label.image_id)); it != images.end()) {
        x0 = std::clamp(x0, 0.0, static_cast<double>(it->second->width));
        x1 = std::clamp(x1, 0.0, static_cast<double>(it->second->width));
        y0 = std::clamp(y0, 0.0, static_cast<double>(it->second->height));
        y1 = std::clamp(y1, 0.0, static_cast<double>(it->second->height));
      }
      label.box = Box::from_xywh(x0, y0, x1 - x0, y1 - y0);
      ds.labels.push_back(label);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset: ") + e.what(), 0);
  }
  auto more = validate(ds);
  violations.insert(violations.end(), more.begin(), more.end());
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return ds;
}

std::string dump_dataset(const Dataset& ds) {
  json root;
  root["format"] = format_header(schema::kDataset);
  json images = json::array();
  for (const auto& im : ds.images) {
    json j{{"id", raw(im.id)}, {"width", im.width}, {"height", im.height}};
    if (!im.file_name.empty()) j["file_name"] = im.file_name;
    images.push_back(std::move(j));
  }
  json annotations = json::array();
  for (const auto& l : ds.labels) {
    annotations.push_back(json{{"id", raw(l.id)},
                               {"image_id", raw(l.image_id)},
                               {"bbox", json::array({l.box.x_min(), l.box.y_min(), l.box.w, l.box.h})},
                               {"box", box_to_json(l.box)},
                               {"category_id", ds.category_id(l.class_id)},
                               {"area", l.box.area()},
                               {"iscrowd", 0}});
  }
  json categories = json::array();
  for (int c = 1; c <= ds.num_classes(); ++c) {
    categories.push_back(json{{"id", ds.category_id(c)}, {"name", ds.class_names[c - 1]}});
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["categories"] = std::move(categories);
  return root.dump(1) + "\n";
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_text_file(path));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(path, dump_dataset(dataset));
}

// ------------------------------------------------------------- detections

DetectionMap parse_detector_output(std::string_view text, int num_classes) {
  DetectionMap out;
  const std::size_t slots = static_cast<std::size_t>(num_classes) + 1;
  bool first = true;
  for_each_line(text, "detections", [&](const json& j, std::size_t) {
    if (is_header(j)) {
      if (!first) throw SchemaError("format header must be the first line");
      check_format(j.at("format"), schema::kDetections);
      if (j.contains("num_classes") && j.at("num_classes").get<int>() != num_classes) {
        throw SchemaError("file declares " + std::to_string(j.at("num_classes").get<int>()) +
                          " classes, dataset has " + std::to_string(num_classes));
      }
      first = false;
      return;
    }
    first = false;
    const ImageId image{j.at("image_id").get<std::int64_t>()};
    auto& boxes = out[image];
    for (const auto& b : j.at("boxes")) {
      auto probs = b.at("probs").get<std::vector<double>>();
      if (probs.size() != slots) {
        throw SchemaError("probs has " + std::to_string(probs.size()) + " entries, expected C+1 = " +
                          std::to_string(slots));
      }
      double sum = 0.0;
      for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) throw SchemaError("negative or non-finite probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        std::ostringstream msg;
        msg << "probs sum to " << sum << ", more than 1e-6 away from 1";
        throw SchemaError(msg.str());
      }
      ScoredBox sb;
      sb.image_id = image;
      sb.box = box_from_json(b.at("box"));
      sb.s0 = b.at("s0").get<double>();
      if (!(sb.s0 >= 0.0 && sb.s0 <= 1.0)) throw SchemaError("s0 outside [0,1]");
      sb.refined_box = b.contains("refined_box") ? box_from_json(b.at("refined_box")) : sb.box;
      sb.class_dist = std::abs(sum - 1.0) > 1e-12 ? ClassDistribution::from_weights(std::move(probs))
                                                  : ClassDistribution(std::move(probs));
      sb.source = parse_box_source(b.value("source", std::string("detector")));
      if (b.contains("label_ref") && !b.at("label_ref").is_null()) {
        sb.label_ref = LabelId{b.at("label_ref").get<std::int64_t>()};
      }
      if (sb.source == BoxSource::kInjectedLabel && !sb.label_ref) {
        throw SchemaError("injected_label box without label_ref");
      }
      boxes.push_back(std::move(sb));
    }
  });
  return out;
}

std::string dump_detector_output(const DetectionMap& detections) {
  std::string out;
  int num_classes = -1;
  for (const auto& [image, boxes] : detections) {
    if (!boxes.empty()) {
      num_classes = boxes.front().class_dist.num_foreground();
      break;
    }
  }
  json header{{"format", format_header(schema::kDetections)}};
  if (num_classes >= 0) header["num_classes"] = num_classes;
  out += header.dump() + "\n";
  for (const auto& [image, boxes] : detections) {
    json arr = json::array();
    for (const auto& sb : boxes) {
      json b{{"box", box_to_json(sb.box)},
             {"s0", sb.s0},
             {"refined_box", box_to_json(sb.refined_box)},
             {"probs", std::vector<double>(sb.class_dist.probs().begin(), sb.class_dist.probs().end())},
             {"source", to_string(sb.source)}};
      if (sb.label_ref) b["label_ref"] = raw(*sb.label_ref);
      arr.push_back(std::move(b));
    }
    out += json{{"image_id", raw(image)}, {"boxes", std::move(arr)}}.dump() + "\n";
  }
  return out;
}

DetectionMap load_detector_output(const std::filesystem::path& path, int num_classes) {
  return parse_detector_output(read_text_file(path), num_classes);
}

void save_detector_output(const DetectionMap& detections, const std::filesystem::path& path) {
  write_text_file(path, dump_detector_output(detections));
}

// --------------------------------------------------------------- manifest

CorruptionManifest parse_manifest(std::string_view text) {
  const json root = parse_json(text, "manifest");
  try {
    check_format(root.at("format"), schema::kManifest);
    CorruptionManifest m;
    m.gamma = root.at("gamma").get<double>();
    m.seed = root.at("seed").get<std::uint64_t>();
    m.per_type_count = root.at("per_type_count").get<std::size_t>();
    for (const auto& r : root.at("records")) {
      ErrorRecord rec;
      rec.kind = parse_error_kind(r.at("kind").get<std::string>());
      rec.original_label = label_from_json(r.at("original_label"));
      if (r.contains("noisy_label") && !r.at("noisy_label").is_null()) {
        rec.noisy_label = label_from_json(r.at("noisy_label"));
      }
      rec.anchor_image_id = ImageId{r.at("anchor_image_id").get<std::int64_t>()};
      rec.anchor_box = box_from_json(r.at("anchor_box"));
      if ((rec.kind == ErrorKind::kDrop) == rec.noisy_label.has_value()) {
        throw SchemaError("noisy_label must be present exactly for non-drop records");
      }
      m.records.push_back(std::move(rec));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what(), 0);
  } catch (const InputError& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
}

std::string dump_manifest(const CorruptionManifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back(json{{"kind", to_string(r.kind)},
                           {"original_label", label_to_json(r.original_label)},
                           {"noisy_label", r.noisy_label ? label_to_json(*r.noisy_label) : json(nullptr)},
                           {"anchor_image_id", raw(r.anchor_image_id)},
                           {"anchor_box", box_to_json(r.anchor_box)}});
  }
  json root{{"format", format_header(schema::kManifest)},
            {"gamma", m.gamma},
            {"seed", m.seed},
            {"per_type_count", m.per_type_count},
            {"records", std::move(records)}};
  return root.dump(1) + "\n";
}

CorruptionManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path));
}

void save_manifest(const CorruptionManifest& manifest, const std::filesystem::path& path) {
  write_text_file(path, dump_manifest(manifest));
}

// -------------------------------------------------------------- proposals

std::vector<Proposal> parse_proposals(std::string_view text) {
  std::vector<Proposal> out;
  bool first = true;
  for_each_line(text, "proposals", [&](const json& j, std::size_t) {
    if (is_header(j)) {
      if (!first) throw SchemaError("format header must be the first line");
      check_format(j.at("format"), schema::kProposals);
      first = false;
      return;
    }
    first = false;
    Proposal p;
    p.image_id = ImageId{j.at("image_id").get<std::int64_t>()};
    p.box = box_from_json(j.at("box"));
    p.key = j.at("key").get<double>();
    if (!std::isfinite(p.key)) throw SchemaError("key must be finite");
    p.method = parse_method(j.at("method").get<std::string>());
    p.predicted_class = j.at("predicted_class").get<int>();
    if (j.contains("components")) p.components = j.at("components").get<std::map<std::string, double>>();
    p.source = parse_box_source(j.value("source", std::string("detector")));
    if (j.contains("label_ref") && !j.at("label_ref").is_null()) {
      p.label_ref = LabelId{j.at("label_ref").get<std::int64_t>()};
    }
    if (!out.empty() && p.key > out.back().key) {
      throw SchemaError("proposals are not sorted by descending key");
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::string dump_proposals(std::span<const Proposal> proposals) {
  std::vector<std::size_t> order(proposals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].key > proposals[b].key;
  });
  std::string out = json{{"format", format_header(schema::kProposals)}}.dump() + "\n";
  int rank = 0;
  for (std::size_t i : order) {
    const auto& p = proposals[i];
    json j{{"rank", ++rank},
           {"image_id", raw(p.image_id)},
           {"box", box_to_json(p.box)},
           {"key", p.key},
           {"method", to_string(p.method)},
           {"predicted_class", p.predicted_class},
           {"components", p.components},
           {"source", to_string(p.source)}};
    if (p.label_ref) j["label_ref"] = raw(*p.label_ref);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path) {
  return parse_proposals(read_text_file(path));
}

void save_proposals(std::span<const Proposal> proposals, const std::filesystem::path& path) {
  write_text_file(path, dump_proposals(proposals));
}

// --------------------------------------------------------------- verdicts

std::vector<VerdictRecord> parse_verdicts(std::string_view text) {
  std::vector<VerdictRecord> out;
  for_each_line(text, "verdicts", [&](const json& j, std::size_t) {
    if (is_header(j)) {
      check_format(j.at("format"), schema::kVerdicts);
      return;
    }
    VerdictRecord r;
    r.proposal_rank = j.at("proposal_rank").get<int>();
    r.verdict = parse_verdict(j.at("verdict").get<std::string>());
    for (const auto& t : j.value("error_types", json::array())) {
      r.error_types.insert(parse_error_kind(t.get<std::string>()));
    }
    r.reviewer = j.value("reviewer", std::string{});
    r.timestamp = j.value("timestamp", std::string{});
    check_verdict(r);
    out.push_back(std::move(r));
  });
  return out;
}

std::string dump_verdict_line(const VerdictRecord& r) {
  json types = json::array();
  for (ErrorKind k : r.error_types) types.push_back(to_string(k));
  return json{{"proposal_rank", r.proposal_rank},
              {"verdict", to_string(r.verdict)},
              {"error_types", std::move(types)},
              {"reviewer", r.reviewer},
              {"timestamp", r.timestamp}}
             .dump() +
         "\n";
}

std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return parse_verdicts(read_text_file(path));
}

void append_verdict(const VerdictRecord& record, const std::filesystem::path& path) {
  check_verdict(record);
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (fresh && path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::string chunk;
  if (fresh) chunk = json{{"format", format_header(schema::kVerdicts)}}.dump() + "\n";
  chunk += dump_verdict_line(record);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  out.flush();
  if (!out) throw Error("append failed for " + path.string());
}

std::map<int, VerdictRecord> latest_verdicts(std::span<const VerdictRecord> records) {
  std::map<int, VerdictRecord> latest;
  for (const auto& r : records) latest[r.proposal_rank] = r;
  return latest;
}

}  // namespace labelaudit
