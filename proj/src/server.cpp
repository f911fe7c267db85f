#include "s3t/server.hpp"

#include <httplib.h>

#include "s3t/loop.hpp"

namespace s3t {

using nlohmann::json;

json state_summary(const LoopState& s) {
  json history = json::array();
  for (const auto& r : s.history) history.push_back(to_json(r));
  json pending = nullptr;
  if (s.pending) {
    std::vector<FrameId> reviewed;
    for (const auto& [f, _] : s.pending->reviews) reviewed.push_back(f);
    pending = {{"iteration", s.pending->iteration},
               {"frames", s.pending->frames},
               {"reviewed", reviewed},
               {"automatic", s.pending->automatic.size()}};
  }
  return {{"iteration", s.iteration},
          {"status", to_string(s.status)},
          {"train_size", s.train.size()},
          {"unlabeled_size", s.unlabeled.size()},
          {"alpha", s.config.alpha_for(s.iteration)},
          {"history", history},
          {"pending", pending}};
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& message, const std::string& field = "") {
  json j = {{"error", message}};
  if (!field.empty()) j["field"] = field;
  return j;
}

LoopState read_locked(const std::string& path) {
  StateLock lock(path);
  return load_state(path);
}

bool parse_id(const std::string& text, long long& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(text, &pos);
    return pos == text.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

ReviewServer::ReviewServer(std::string state_path, std::string static_dir)
    : state_path_(std::move(state_path)),
      static_dir_(std::move(static_dir)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool ReviewServer::listen() { return server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

void ReviewServer::install_routes() {
  auto& srv = *server_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      reply(res, 500, error_body(e.what()));
    }
  });

  srv.Get("/api/state", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, state_summary(read_locked(state_path_)));
  });

  srv.Get(R"(/api/iterations/(-?\d+)/pending)",
          [this](const httplib::Request& req, httplib::Response& res) {
            const int l = std::stoi(req.matches[1]);
            const LoopState s = read_locked(state_path_);
            if (!s.pending || s.pending->iteration != l) {
              reply(res, 404, error_body("iteration " + std::to_string(l) + " has no pending review"));
              return;
            }
            std::vector<FrameId> reviewed;
            for (const auto& [f, _] : s.pending->reviews) reviewed.push_back(f);
            reply(res, 200, {{"iteration", l}, {"frames", s.pending->frames}, {"reviewed", reviewed}});
          });

  srv.Get(R"(/api/frames/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    long long id = 0;
    if (!parse_id(req.matches[1], id)) {
      reply(res, 400, error_body("frame id must be an integer", "id"));
      return;
    }
    const LoopState s = read_locked(state_path_);
    if (!s.pending || !s.pending->model_detections.count(id)) {
      reply(res, 404, error_body("frame " + std::to_string(id) + " is not pending review"));
      return;
    }
    json dets = json::array();
    for (const auto& d : s.pending->model_detections.at(id)) dets.push_back(to_json(d));
    const auto r = s.pending->reviews.find(id);
    reply(res, 200,
          {{"frame", id},
           {"iteration", s.pending->iteration},
           {"detections", dets},
           {"image", nullptr},
           {"review", r == s.pending->reviews.end() ? json(nullptr) : to_json(r->second)}});
  });

  srv.Post(R"(/api/frames/([^/]+)/review)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
    long long id = 0;
    if (!parse_id(req.matches[1], id)) {
      reply(res, 400, error_body("frame id must be an integer", "id"));
      return;
    }
    FrameReview review;
    try {
      review = review_from_json(json::parse(req.body), id);
    } catch (const json::parse_error& e) {
      reply(res, 400, error_body(std::string("malformed JSON: ") + e.what(), "body"));
      return;
    } catch (const InvariantError& e) {
      reply(res, 400, error_body(e.what(), e.field()));
      return;
    }

    std::lock_guard<std::mutex> queue(mutations_);
    StateLock lock(state_path_);
    LoopState s = load_state(state_path_);
    if (s.status != LoopStatus::awaiting_review || !s.pending) {
      reply(res, 409, error_body("no iteration is awaiting review"));
      return;
    }
    if (s.pending->request_ids.count(review.request_id)) {
      reply(res, 200, {{"status", "duplicate"}, {"frame", id}});
      return;
    }
    if (!s.pending->model_detections.count(id)) {
      reply(res, 404, error_body("frame " + std::to_string(id) + " is not pending review"));
      return;
    }
    try {
      submit_review(s, review);
    } catch (const InvariantError& e) {
      reply(res, 400, error_body(e.what(), e.field()));
      return;
    }
    save_state(state_path_, s);
    reply(res, 200, {{"status", "stored"}, {"frame", id}});
  });

  srv.Post(R"(/api/iterations/(-?\d+)/finalize)", [this](const httplib::Request& req,
                                                       httplib::Response& res) {
    const int l = std::stoi(req.matches[1]);
    std::lock_guard<std::mutex> queue(mutations_);
    StateLock lock(state_path_);
    LoopState s = load_state(state_path_);

    // A retry after a successful finalize finds the iteration already closed.
    for (const auto& r : s.history)
      if (r.iteration == l && (!s.pending || s.pending->iteration != l)) {
        reply(res, 200, {{"iteration", l},
                         {"status", "finalized"},
                         {"human_annotated", r.human_annotated},
                         {"auto_annotated", r.auto_annotated},
                         {"train_size", s.train.size()}});
        return;
      }
    if (!s.pending || s.pending->iteration != l) {
      reply(res, 404, error_body("iteration " + std::to_string(l) + " has no pending review"));
      return;
    }
    try {
      finalize_reviews(s);
    } catch (const PendingReviewsError& e) {
      reply(res, 409, {{"error", e.what()}, {"pending", e.frames()}});
      return;
    }
    save_state(state_path_, s);
    const auto& r = s.history.back();
    reply(res, 200, {{"iteration", l},
                     {"status", "finalized"},
                     {"human_annotated", r.human_annotated},
                     {"auto_annotated", r.auto_annotated},
                     {"train_size", s.train.size()}});
  });

  if (!static_dir_.empty()) srv.set_mount_point("/", static_dir_);
}

}  // namespace s3t
