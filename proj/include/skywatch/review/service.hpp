#pragma once

// HTTP+JSON front of the review store. Errors come back as {code, message}.

#include <skywatch/review/store.hpp>

#include <httplib.h>
#include <json.hpp>

#include <charconv>
#include <string>

namespace skywatch::review {

inline int http_status(ErrorCode code)
{
  switch (code) {
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::conflict:
      return 409;
    case ErrorCode::invalid_verdict:
      return 422;
    case ErrorCode::invalid_argument:
    case ErrorCode::format:
      return 400;
    default:
      return 500;
  }
}

inline json run_json(const ReviewRun& run, const Summary& s)
{
  return {{"run_id", run.run_id},
          {"checkpoint", run.checkpoint},
          {"detections_source", run.detections_source},
          {"created_at", format_timestamp(run.created_at)},
          {"detection_count", run.detections.size()},
          {"summary", to_json(s)}};
}

inline json pending_json(const PendingItem& item)
{
  const std::string png(item.patch.png.begin(), item.patch.png.end());
  return {{"detection_index", item.detection_index},
          {"detection", detect::to_json(item.detection)},
          {"patch",
           {{"width", kPatchSide},
            {"height", kPatchSide},
            {"origin_x", item.patch.origin_x},
            {"origin_y", item.patch.origin_y},
            {"clipped", item.patch.clipped},
            {"png_base64", httplib::detail::base64_encode(png)}}}};
}

class ReviewService {
 public:
  explicit ReviewService(ReviewStore& store) : store_(store) { routes(); }

  httplib::Server& server() { return server_; }

  /// Binds and serves until stop(); returns false if the address is unavailable.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }

 private:
  template <class F>
  httplib::Server::Handler guarded(F f)
  {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), {{"code", std::string(to_string(e.code()))}, {"message", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "internal"}, {"message", e.what()}});
      }
    };
  }

  static void reply(httplib::Response& res, int status, const json& body)
  {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json body_of(const httplib::Request& req)
  {
    try {
      json j = json::parse(req.body);
      require(j.is_object(), ErrorCode::invalid_argument, "request body must be a JSON object");
      return j;
    } catch (const json::parse_error& e) {
      fail(ErrorCode::invalid_argument, std::string("malformed JSON body: ") + e.what());
    }
  }

  static std::size_t limit_of(const httplib::Request& req)
  {
    if (!req.has_param("limit"))
      return 20;
    const std::string s = req.get_param_value("limit");
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::invalid_argument,
            "limit must be a non-negative integer, got '" + s + "'");
    return n;
  }

  void routes()
  {
    server_.Get("/api/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
                  json runs = json::array();
                  for (const auto& id : store_.run_ids())
                    runs.push_back(run_json(store_.run(id), store_.summary(id)));
                  reply(res, 200, {{"runs", std::move(runs)}});
                }));

    server_.Post("/api/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const json body = body_of(req);
                   std::optional<std::string> id;
                   std::string path, checkpoint;
                   try {
                     path = body.at("detections_path").get<std::string>();
                     checkpoint = body.value("checkpoint", "");
                     if (body.contains("run_id"))
                       id = body.at("run_id").get<std::string>();
                   } catch (const json::exception& e) {
                     fail(ErrorCode::invalid_argument, std::string("bad run request: ") + e.what());
                   }
                   const ReviewRun run = store_.create_run(path, checkpoint, id);
                   reply(res, 201, run_json(run, store_.summary(run.run_id)));
                 }));

    server_.Get(R"(/api/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  reply(res, 200, run_json(store_.run(id), store_.summary(id)));
                }));

    server_.Get(R"(/api/runs/([^/]+)/pending)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  json items = json::array();
                  for (const auto& item : store_.next_pending(id, limit_of(req)))
                    items.push_back(pending_json(item));
                  reply(res, 200, {{"run_id", id}, {"items", std::move(items)}, {"summary", to_json(store_.summary(id))}});
                }));

    server_.Post(R"(/api/runs/([^/]+)/verdicts)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const std::string id = req.matches[1];
                   VerdictRecord v = verdict_from_json(body_of(req));
                   const Summary s = store_.submit(id, v);
                   reply(res, 200, {{"run_id", id}, {"pending", s.pending}, {"summary", to_json(s)}});
                 }));

    server_.Get(R"(/api/runs/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, 200, to_json(store_.export_annotations(req.matches[1])));
                }));
  }

  ReviewStore& store_;
  httplib::Server server_;
};

}  // namespace skywatch::review
