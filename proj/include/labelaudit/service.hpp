#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "labelaudit/datamodel.hpp"
#include "labelaudit/evaluation.hpp"

namespace httplib {
class Server;
}

namespace labelaudit {

struct ReviewSession {
  std::string session_id;
  std::filesystem::path dataset;
  std::filesystem::path proposals;
  std::filesystem::path image_root;
  int k = 200;
  std::filesystem::path verdict_log;
  std::filesystem::path ui_dir;  // empty: built-in placeholder page
};

// Relative paths resolve against base_dir. image_root falls back to
// $LABELAUDIT_IMAGE_ROOT, then to the dataset's directory.
ReviewSession parse_session(std::string_view text, const std::filesystem::path& base_dir);
ReviewSession load_session(const std::filesystem::path& path);

// Append-only verdict log owned by a single writer thread. submit() may be
// called from any thread; the future resolves once the line is on disk.
class VerdictLog {
 public:
  explicit VerdictLog(std::filesystem::path path);
  ~VerdictLog();
  VerdictLog(const VerdictLog&) = delete;
  VerdictLog& operator=(const VerdictLog&) = delete;

  std::future<void> submit(VerdictRecord record);
  std::vector<VerdictRecord> snapshot() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  struct Pending {
    VerdictRecord record;
    std::promise<void> done;
  };

  void run();

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<Pending> queue_;
  std::vector<VerdictRecord> records_;
  bool stopping_ = false;
  std::thread writer_;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class ReviewService {
 public:
  explicit ReviewService(ReviewSession session);

  const ReviewSession& session() const { return session_; }
  int k() const { return k_; }

  Response get_session() const;
  Response get_proposals(const std::map<std::string, std::string>& query) const;
  Response get_image(std::int64_t image_id) const;
  Response get_image_labels(std::int64_t image_id) const;
  Response post_verdict(std::string_view body);
  Response get_stats() const;
  Response get_ui() const;

  // Verdicts for ranks 1..k only; ranks past k are ignored.
  ReviewStats stats() const;

  void mount(httplib::Server& server);

 private:
  ReviewSession session_;
  Dataset dataset_;
  std::vector<Proposal> proposals_;
  std::map<ImageId, std::vector<BoxLabel>> labels_;
  int k_ = 0;
  VerdictLog log_;
};

// Blocks until the server stops.
void serve(ReviewService& service, const std::string& host, int port);

}  // namespace labelaudit
