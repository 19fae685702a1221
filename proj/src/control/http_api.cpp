#include "qnet/control/http_api.hpp"

#include <httplib.h>

#include <thread>

namespace qnet::control {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownHandle: return 404;
    case ErrorCode::Scope: return 403;
    case ErrorCode::Expired: return 410;
    case ErrorCode::Conflict:
    case ErrorCode::NotFinished:
    case ErrorCode::State: return 409;
    case ErrorCode::Schema: return 400;
    case ErrorCode::Precondition:
    case ErrorCode::Resource:
    case ErrorCode::Unroutable:
    case ErrorCode::PortRange:
    case ErrorCode::Fanout:
    case ErrorCode::Capacity:
    case ErrorCode::Path:
    case ErrorCode::Timing:
    case ErrorCode::UnknownDevice: return 422;
    default: return 500;
  }
}

json to_json(const Finding& f) {
  return {{"code", to_string(f.code)}, {"element", f.element}, {"message", f.message}};
}

json error_body(ErrorCode code, const std::string& message, const Findings& findings) {
  json list = json::array();
  for (const auto& f : findings) list.push_back(to_json(f));
  return {{"code", to_string(code)}, {"message", message}, {"findings", list}};
}

json to_json(const ScheduleWindow& w) {
  return {{"window_id", w.id},
          {"request_id", w.request_id},
          {"subscriber_id", w.subscriber_id},
          {"start_s", w.start_s},
          {"end_s", w.end_s},
          {"priority", w.priority},
          {"resources", w.resources}};
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, ErrorCode code, const std::string& message, const Findings& findings = {}) {
  reply(res, http_status(code), error_body(code, message, findings));
}

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) return {};
  return h.substr(prefix.size());
}

json request_summary(const RequestRecord& r) {
  json findings = json::array();
  for (const auto& f : r.findings) findings.push_back(to_json(f));
  json doc{{"request_id", r.request.request_id},
           {"subscriber_id", r.request.subscriber_id},
           {"valid", r.findings.empty()},
           {"findings", findings},
           {"window", r.window ? to_json(*r.window) : json(nullptr)}};
  if (!r.instantiation_id.empty()) doc["instantiation_id"] = r.instantiation_id;
  return doc;
}

bool finished(InstanceState s) { return s == InstanceState::Completed || s == InstanceState::Failed; }

}  // namespace

struct ApiServer::Impl {
  ControlPlane& plane;
  httplib::Server server;
  int port = -1;
  std::thread worker;

  explicit Impl(ControlPlane& p) : plane(p) {
    // No SO_REUSEPORT: a second server on a taken port must fail.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }

  // Runs a handler, mapping library errors to JSON error bodies.
  template <class F>
  auto guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      const auto who = bearer(req);
      if (who.empty()) return fail(res, ErrorCode::Scope, "missing bearer token");
      try {
        f(req, res, who);
      } catch (const Error& e) {
        fail(res, e.code(), e.what());
      } catch (const json::exception& e) {
        fail(res, ErrorCode::Schema, e.what());
      }
    };
  }

  void own_request(const std::string& id, const std::string& who) {
    if (plane.request(id).request.subscriber_id != who) throw Error(ErrorCode::Scope, "request " + id + " belongs to another subscriber");
  }

  Snapshot own_instance(const std::string& id, const std::string& who) {
    auto snap = plane.monitor(id);
    if (snap.subscriber_id != who) throw Error(ErrorCode::Scope, "instantiation " + id + " belongs to another subscriber");
    return snap;
  }

  void routes() {
    server.Post("/requests", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto doc = json::parse(req.body);
      if (doc.value("subscriber_id", std::string{}) != who) throw Error(ErrorCode::Scope, "subscriber_id does not match token");
      const auto rec = plane.submit(doc);
      if (!rec.findings.empty())
        return fail(res, rec.findings.front().code, "request " + rec.request.request_id + " failed validation", rec.findings);
      reply(res, 201, request_summary(rec));
    }));

    server.Get(R"(/requests/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto id = req.matches[1].str();
      own_request(id, who);
      reply(res, 200, request_summary(plane.request(id)));
    }));

    server.Post(R"(/requests/([^/]+)/schedule)", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto id = req.matches[1].str();
      own_request(id, who);
      reply(res, 200, to_json(plane.schedule(id)));
    }));

    server.Post("/instantiations", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto doc = json::parse(req.body);
      const auto request_id = doc.at("request_id").get<std::string>();
      own_request(request_id, who);
      const auto id = plane.instantiate(request_id);
      reply(res, 201, to_json(plane.monitor(id), plane.plan(id)));
    }));

    server.Get(R"(/instantiations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto id = req.matches[1].str();
      reply(res, 200, to_json(own_instance(id, who), plane.plan(id)));
    }));

    server.Get(R"(/instantiations/([^/]+)/counts)", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto id = req.matches[1].str();
      own_instance(id, who);
      std::size_t from = 0;
      if (req.has_param("from")) from = std::stoull(req.get_param_value("from"));
      const auto plan = plane.plan(id);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, id, plan, from](std::size_t, httplib::DataSink& sink) mutable {
        try {
          const auto state = plane.monitor(id).state;
          const auto records = plane.counts_since(id, from, std::chrono::milliseconds(200));
          for (const auto& r : records) {
            const auto frame = "id: " + std::to_string(from) + "\nevent: counts\ndata: " + to_json(r, plan).dump() + "\n\n";
            if (!sink.write(frame.data(), frame.size())) return false;
            ++from;
          }
          if (records.empty() && finished(state)) {
            const auto frame = "event: end\ndata: " + json{{"state", to_string(state)}, {"intervals", from}}.dump() + "\n\n";
            sink.write(frame.data(), frame.size());
            sink.done();
          }
          return true;
        } catch (const Error&) {
          return false;
        }
      });
    }));

    server.Get(R"(/archives/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto id = req.matches[1].str();
      own_instance(id, who);
      plane.archive(id);
      res.status = 200;
      res.set_header("Content-Disposition", "attachment; filename=\"" + id + ".zip\"");
      res.set_content(plane.fetch_archive(id, who), "application/zip");
    }));

    server.Get(R"(/ledger/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res, const std::string& who) {
      const auto subscriber = req.matches[1].str();
      if (subscriber != who) throw Error(ErrorCode::Scope, "ledger belongs to another subscriber");
      json entries = json::array();
      double total = 0.0;
      for (const auto& e : plane.ledger(subscriber)) {
        entries.push_back(to_json(e));
        total += e.fee_units;
      }
      reply(res, 200, {{"subscriber_id", subscriber}, {"entries", entries}, {"total_units", total}});
    }));
  }
};

ApiServer::ApiServer(ControlPlane& plane) : impl_(std::make_unique<Impl>(plane)) {}

ApiServer::~ApiServer() { stop(); }

void ApiServer::bind(const std::string& host, int port) {
  const int got = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (got <= 0) throw Error(ErrorCode::Bind, "cannot bind " + host + ":" + std::to_string(port));
  impl_->port = got;
}

int ApiServer::port() const { return impl_->port; }

void ApiServer::start() {
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace qnet::control
