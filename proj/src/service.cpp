#include "labelaudit/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <httplib.h>
#include <json.hpp>

#include "labelaudit/error.hpp"
#include "labelaudit/io.hpp"

namespace labelaudit {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Response json_response(const json& j, int status = 200) {
  return Response{status, "application/json", j.dump()};
}

Response error_response(int status, const std::string& message) {
  return json_response(json{{"error", message}}, status);
}

json box_json(const Box& b) {
  return json{{"cx", b.cx},       {"cy", b.cy},       {"w", b.w},          {"h", b.h},
              {"x_min", b.x_min()}, {"y_min", b.y_min()}, {"x_max", b.x_max()}, {"y_max", b.y_max()}};
}

json verdict_json(const VerdictRecord& r) {
  json types = json::array();
  for (ErrorKind kind : r.error_types) types.push_back(to_string(kind));
  return json{{"verdict", to_string(r.verdict)},
              {"error_types", std::move(types)},
              {"reviewer", r.reviewer},
              {"timestamp", r.timestamp}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string content_type_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

bool parse_nonnegative(const std::string& text, long long& out) {
  try {
    std::size_t used = 0;
    out = std::stoll(text, &used);
    return used == text.size() && out >= 0;
  } catch (const std::exception&) {
    return false;
  }
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>labelaudit review</title></head>"
    "<body><p>No UI bundle configured. The review API is available under /api/.</p></body></html>";

}  // namespace

ReviewSession parse_session(std::string_view text, const std::filesystem::path& base_dir) {
  ReviewSession s;
  try {
    const json j = json::parse(text.begin(), text.end());
    s.session_id = j.value("session_id", std::string("review"));
    s.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
    s.proposals = resolve(base_dir, j.at("proposals").get<std::string>());
    s.k = j.value("k", s.k);
    s.verdict_log = resolve(base_dir, j.value("verdict_log", std::string("verdicts.ndjson")));
    if (j.contains("image_root")) {
      s.image_root = resolve(base_dir, j.at("image_root").get<std::string>());
    } else if (const char* env = std::getenv("LABELAUDIT_IMAGE_ROOT"); env && *env) {
      s.image_root = env;
    } else {
      s.image_root = s.dataset.parent_path();
    }
    if (j.contains("ui_dir")) s.ui_dir = resolve(base_dir, j.at("ui_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("session: ") + e.what(), 0);
  }
  if (s.k < 1) throw InputError("session k must be >= 1");
  return s;
}

ReviewSession load_session(const std::filesystem::path& path) {
  return parse_session(read_text_file(path), path.parent_path());
}

VerdictLog::VerdictLog(std::filesystem::path path)
    : path_(std::move(path)), records_(load_verdicts(path_)), writer_([this] { run(); }) {}

VerdictLog::~VerdictLog() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  writer_.join();
}

std::future<void> VerdictLog::submit(VerdictRecord record) {
  check_verdict(record);
  Pending pending{std::move(record), {}};
  std::future<void> done = pending.done.get_future();
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (stopping_) throw Error("verdict log is closed");
    queue_.push_back(std::move(pending));
  }
  wake_.notify_one();
  return done;
}

std::vector<VerdictRecord> VerdictLog::snapshot() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_;
}

void VerdictLog::run() {
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    wake_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;
    Pending pending = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    try {
      append_verdict(pending.record, path_);
      lock.lock();
      records_.push_back(pending.record);
      lock.unlock();
      pending.done.set_value();
    } catch (...) {
      pending.done.set_exception(std::current_exception());
    }
    lock.lock();
  }
}

ReviewService::ReviewService(ReviewSession session)
    : session_(std::move(session)),
      dataset_(load_dataset(session_.dataset)),
      proposals_(load_proposals(session_.proposals)),
      labels_(labels_by_image(dataset_)),
      k_(static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(session_.k), proposals_.size()))),
      log_(session_.verdict_log) {}

ReviewStats ReviewService::stats() const {
  std::vector<VerdictRecord> in_range;
  for (auto& r : log_.snapshot()) {
    if (r.proposal_rank >= 1 && r.proposal_rank <= k_) in_range.push_back(std::move(r));
  }
  return review_stats(in_range);
}

Response ReviewService::get_session() const {
  const ReviewStats s = stats();
  return json_response(json{{"session_id", session_.session_id},
                            {"k", k_},
                            {"num_proposals", proposals_.size()},
                            {"reviewed", s.reviewed},
                            {"num_images", dataset_.images.size()},
                            {"class_names", dataset_.class_names},
                            {"method", proposals_.empty() ? "" : to_string(proposals_.front().method)}});
}

Response ReviewService::get_proposals(const std::map<std::string, std::string>& query) const {
  long long offset = 0;
  long long limit = 50;
  if (auto it = query.find("offset"); it != query.end() && !parse_nonnegative(it->second, offset)) {
    return error_response(400, "offset must be a non-negative integer");
  }
  if (auto it = query.find("limit"); it != query.end() && !parse_nonnegative(it->second, limit)) {
    return error_response(400, "limit must be a non-negative integer");
  }
  limit = std::min<long long>(limit, 1000);
  const auto latest = latest_verdicts(log_.snapshot());
  json items = json::array();
  const auto total = static_cast<long long>(proposals_.size());
  for (long long i = offset; i < std::min(total, offset + limit); ++i) {
    const Proposal& p = proposals_[static_cast<std::size_t>(i)];
    const int rank = static_cast<int>(i + 1);
    json item{{"rank", rank},
              {"image_id", raw(p.image_id)},
              {"box", box_json(p.box)},
              {"key", p.key},
              {"method", to_string(p.method)},
              {"predicted_class", p.predicted_class},
              {"components", p.components},
              {"source", to_string(p.source)},
              {"label_ref", p.label_ref ? json(raw(*p.label_ref)) : json(nullptr)}};
    if (p.predicted_class >= 1 && p.predicted_class <= dataset_.num_classes()) {
      item["class_name"] = dataset_.class_names[static_cast<std::size_t>(p.predicted_class - 1)];
    }
    auto v = latest.find(rank);
    item["verdict"] = v == latest.end() ? json(nullptr) : verdict_json(v->second);
    items.push_back(std::move(item));
  }
  return json_response(json{{"offset", offset}, {"limit", limit}, {"total", total}, {"items", std::move(items)}});
}

Response ReviewService::get_image(std::int64_t image_id) const {
  const ImageMeta* image = dataset_.find_image(ImageId{image_id});
  if (!image) return error_response(404, "unknown image " + std::to_string(image_id));
  std::error_code ec;
  const auto root = std::filesystem::weakly_canonical(session_.image_root, ec);
  const auto file = std::filesystem::weakly_canonical(session_.image_root / image->file_name, ec);
  const auto rel = file.lexically_relative(root);
  if (ec || rel.empty() || *rel.begin() == "..") return error_response(403, "image path escapes image root");
  if (!std::filesystem::is_regular_file(file)) {
    return error_response(404, "image file not found: " + image->file_name);
  }
  return Response{200, content_type_for(file), read_text_file(file)};
}

Response ReviewService::get_image_labels(std::int64_t image_id) const {
  const ImageMeta* image = dataset_.find_image(ImageId{image_id});
  if (!image) return error_response(404, "unknown image " + std::to_string(image_id));
  json labels = json::array();
  for (const auto& l : labels_.at(image->id)) {
    labels.push_back(json{{"label_id", raw(l.id)},
                          {"class_id", l.class_id},
                          {"class_name", dataset_.class_names[static_cast<std::size_t>(l.class_id - 1)]},
                          {"box", box_json(l.box)}});
  }
  return json_response(json{{"image_id", image_id},
                            {"width", image->width},
                            {"height", image->height},
                            {"file_name", image->file_name},
                            {"labels", std::move(labels)}});
}

Response ReviewService::post_verdict(std::string_view body) {
  VerdictRecord record;
  try {
    const json j = json::parse(body.begin(), body.end());
    record.proposal_rank = j.at("proposal_rank").get<int>();
    record.verdict = parse_verdict(j.at("verdict").get<std::string>());
    for (const auto& t : j.value("error_types", json::array())) {
      record.error_types.insert(parse_error_kind(t.get<std::string>()));
    }
    record.reviewer = j.value("reviewer", std::string{});
    check_verdict(record);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed verdict: ") + e.what());
  } catch (const InputError& e) {
    return error_response(400, e.what());
  }
  if (record.proposal_rank < 1 || record.proposal_rank > k_) {
    return error_response(400, "proposal_rank must be in [1, " + std::to_string(k_) + "]");
  }
  record.timestamp = utc_timestamp();
  try {
    log_.submit(record).get();
  } catch (const std::exception& e) {
    return error_response(500, std::string("could not persist verdict: ") + e.what());
  }
  return get_stats();
}

Response ReviewService::get_stats() const {
  const ReviewStats s = stats();
  json per_type = json::object();
  for (ErrorKind kind : {ErrorKind::kSpawn, ErrorKind::kDrop, ErrorKind::kFlip, ErrorKind::kShift}) {
    per_type[std::string(to_string(kind))] = s.per_type.at(kind);
  }
  return json_response(json{{"k", k_},
                            {"reviewed", s.reviewed},
                            {"tp", s.tp},
                            {"fp", s.fp},
                            {"unsure", s.unsure},
                            {"precision", s.precision ? json(*s.precision) : json(nullptr)},
                            {"complete", static_cast<int>(s.reviewed) == k_},
                            {"per_type", std::move(per_type)}});
}

Response ReviewService::get_ui() const {
  if (!session_.ui_dir.empty()) {
    const auto index = session_.ui_dir / "index.html";
    if (std::filesystem::is_regular_file(index)) {
      return Response{200, "text/html; charset=utf-8", read_text_file(index)};
    }
  }
  return Response{200, "text/html; charset=utf-8", kPlaceholderPage};
}

void ReviewService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get("/api/session", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, get_session());
  });
  server.Get("/api/proposals", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [key, value] : req.params) query[key] = value;
    send(res, get_proposals(query));
  });
  server.Get(R"(/api/image/(\d+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get_image(std::stoll(req.matches[1])));
  });
  server.Get(R"(/api/image/(\d+)/labels)",
             [this, send](const httplib::Request& req, httplib::Response& res) {
               send(res, get_image_labels(std::stoll(req.matches[1])));
             });
  server.Post("/api/verdict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, post_verdict(req.body));
  });
  server.Get("/api/stats", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, get_stats());
  });
  server.Get("/", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_ui()); });
  if (!session_.ui_dir.empty() && std::filesystem::is_directory(session_.ui_dir)) {
    server.set_mount_point("/ui", session_.ui_dir.string());
  }
}

void serve(ReviewService& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace labelaudit
