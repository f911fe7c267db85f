#pragma once

// HTTP review service over a loop state file. Reads load the state file under
// its advisory lock; every mutation goes through one mutex-guarded
// load-modify-save cycle, so reviews and loop stepping never interleave.
//
//   GET  /api/state
//   GET  /api/iterations/{l}/pending
//   GET  /api/frames/{id}
//   POST /api/frames/{id}/review        {decisions: [...], request_id}
//   POST /api/iterations/{l}/finalize

#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace s3t {

struct LoopState;

class ReviewServer {
 public:
  explicit ReviewServer(std::string state_path, std::string static_dir = "");
  ~ReviewServer();

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  bool listen();
  void stop();

 private:
  void install_routes();

  std::string state_path_;
  std::string static_dir_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex mutations_;
};

/// Summary used by GET /api/state and `loop status`.
nlohmann::json state_summary(const LoopState& state);

}  // namespace s3t
