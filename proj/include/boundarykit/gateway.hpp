#pragma once

// HTTP adapter over an Engine, served under /v1. Requests authenticate with
// "Authorization: Bearer <token>"; tokens map statically to role ids. Every
// capability-gated request runs governance.check, so a 403 always has exactly
// one capability_denial audit record behind it.

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "boundarykit/config.hpp"
#include "boundarykit/engine.hpp"
#include "boundarykit/reliability.hpp"

namespace boundarykit {

struct ApiSession {
  std::string id;
  std::string role;
  std::int64_t issued_at = 0;  // wall-clock ms
};

class Gateway {
 public:
  static constexpr std::uint64_t kMaxSimulationTrials = 10'000'000;
  static constexpr std::size_t kMaxAuditPage = 5000;

  Gateway(Engine& engine, std::map<std::string, std::string> tokens) : engine_(engine), tokens_(std::move(tokens)) {
    routes();
  }

  httplib::Server& server() { return server_; }

  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static void send(Res& res, int status, const nlohmann::json& body) {
    res.status = status;
    // Error text can quote raw bytes from a damaged log; never let that fail
    // the response.
    res.set_content(body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
  }

  static void error(Res& res, int status, const std::string& code, const std::string& detail) {
    send(res, status, {{"error", code}, {"detail", detail}});
  }

  std::optional<ApiSession> session(const Req& req) {
    const std::string auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string token = auth.substr(prefix.size());
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    std::lock_guard lock(mu_);
    auto s = sessions_.find(token);
    if (s == sessions_.end()) {
      ApiSession fresh{"sess-" + sha256_hex(token).substr(0, 12), it->second,
                       std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count()};
      s = sessions_.emplace(token, fresh).first;
    }
    return s->second;
  }

  std::string zone_of(const std::string& role) const {
    auto r = engine_.governance().role(role);
    return r ? r->zone : std::string{};
  }

  // Wraps a handler with authentication and error mapping. When `cap` is set,
  // the session's role must hold it in its own zone.
  template <class F>
  httplib::Server::Handler guarded(std::optional<Capability> cap, F f) {
    return [this, cap, f](const Req& req, Res& res) {
      const auto s = session(req);
      if (!s) return error(res, 401, "unauthenticated", "missing or unknown bearer token");
      try {
        if (cap) {
          const Decision d = engine_.governance().check(s->role, *cap, zone_of(s->role));
          if (!d) {
            return send(res, 403, {{"error", "capability_denied"},
                                   {"reason", std::string(to_string(*d.reason))},
                                   {"audit_seq", *d.audit_seq}});
          }
        }
        f(*s, req, res);
      } catch (const CapabilityDenied& e) {
        send(res, 403, {{"error", "capability_denied"}, {"reason", e.reason()}, {"detail", e.what()}});
      } catch (const IllegalTransition& e) {
        error(res, 409, "illegal_transition", e.what());
      } catch (const NotFoundError& e) {
        error(res, 404, "not_found", e.what());
      } catch (const ParseError& e) {
        error(res, 400, "bad_request", e.what());
      } catch (const DefinitionError& e) {
        error(res, 400, "invalid_definition", e.what());
      } catch (const nlohmann::json::exception& e) {
        error(res, 400, "bad_request", e.what());
      } catch (const Error& e) {
        error(res, 422, "rejected", e.what());
      }
    };
  }

  static nlohmann::json body_json(const Req& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("request body: ") + e.what());
    }
  }

  static std::uint64_t query_u64(const Req& req, const char* key, std::uint64_t def) {
    if (!req.has_param(key)) return def;
    const std::string v = req.get_param_value(key);
    std::uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ParseError(std::string("bad query parameter ") + key);
    return out;
  }

  nlohmann::json incident_view(const Incident& inc) const {
    nlohmann::json j = to_json(inc);
    nlohmann::json chain = nlohmann::json::array();
    for (const auto& id : inc.resolution_chain) {
      if (auto f = engine_.incidents().get(id)) chain.push_back(to_json(*f));
    }
    j["chain"] = chain;
    return j;
  }

  void routes() {
    auto& s = server_;

    s.Get("/v1/roles", guarded(std::nullopt, [this](const ApiSession&, const Req&, Res& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : engine_.governance().roles()) out.push_back(to_json(r));
      send(res, 200, out);
    }));

    s.Post("/v1/runs", guarded(Capability::route_handoff, [this](const ApiSession& sess, const Req& req, Res& res) {
      Job job = job_from_json(body_json(req), engine_);
      const std::string id = engine_.submit(job.workflow, std::move(job.stubs), std::move(job.request));
      engine_.audit().append(sess.role, AuditEvent::workflow_event,
                             {{"action", "run_submitted"}, {"run", id}, {"session", sess.id}});
      send(res, 202, {{"run_id", id}});
    }));

    s.Get(R"(/v1/runs/([^/]+))", guarded(std::nullopt, [this](const ApiSession&, const Req& req, Res& res) {
      auto run = engine_.run(req.matches[1]);
      if (!run) throw NotFoundError("unknown run " + std::string(req.matches[1]));
      send(res, 200, to_json(*run));
    }));

    s.Get("/v1/approvals/pending", guarded(std::nullopt, [this](const ApiSession&, const Req&, Res& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& p : engine_.handoffs().pending_approvals()) out.push_back(to_json(p));
      send(res, 200, out);
    }));

    s.Post(R"(/v1/approvals/([^/]+))", guarded(std::nullopt, [this](const ApiSession& sess, const Req& req, Res& res) {
      const std::string id = req.matches[1];
      const nlohmann::json body = body_json(req);
      const std::string decision = body.value("decision", "");
      Engine::DecisionResult r;
      if (decision == "approve") {
        r = engine_.approve(id, sess.role);
      } else if (decision == "block") {
        r = engine_.block(id, sess.role, body.value("reason", "blocked by operator"));
      } else {
        throw ParseError("decision must be 'approve' or 'block'");
      }
      nlohmann::json out{{"package", to_json(r.package, false)}, {"already", r.already}};
      if (r.run) out["run"] = to_json(*r.run);
      send(res, 200, out);
    }));

    s.Get("/v1/incidents", guarded(std::nullopt, [this](const ApiSession&, const Req&, Res& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& i : engine_.incidents().list()) out.push_back(to_json(i));
      send(res, 200, out);
    }));

    s.Get(R"(/v1/incidents/([^/]+))", guarded(std::nullopt, [this](const ApiSession&, const Req& req, Res& res) {
      auto inc = engine_.incidents().get(req.matches[1]);
      if (!inc) throw NotFoundError("unknown incident " + std::string(req.matches[1]));
      send(res, 200, incident_view(*inc));
    }));

    s.Get("/v1/audit", guarded(Capability::read_audit, [this](const ApiSession&, const Req& req, Res& res) {
      const auto from = query_u64(req, "from_seq", 1);
      const auto limit = std::min<std::uint64_t>(query_u64(req, "limit", 100), kMaxAuditPage);
      std::string body;
      for (const auto& r : engine_.audit().range(from, static_cast<std::size_t>(limit))) {
        body += to_json(r).dump();
        body += '\n';
      }
      res.status = 200;
      res.set_content(body, "application/x-ndjson");
    }));

    s.Get("/v1/audit/verify", guarded(Capability::read_audit, [this](const ApiSession&, const Req&, Res& res) {
      const ChainVerdict v = engine_.audit().verify_persisted();
      nlohmann::json out{{"valid", v.valid}};
      if (!v.valid) {
        out["first_bad_seq"] = *v.first_bad_seq;
        out["reason"] = v.reason;
      }
      send(res, 200, out);
    }));

    s.Post("/v1/lint", guarded(std::nullopt, [](const ApiSession&, const Req& req, Res& res) {
      const ArtifactStore store = load_store_from_json(body_json(req));
      nlohmann::json out = to_json(store.integrity());
      out["defect_count"] = store.integrity().defect_count();
      send(res, 200, out);
    }));

    s.Post("/v1/simulate", guarded(std::nullopt, [](const ApiSession&, const Req& req, Res& res) {
      const nlohmann::json b = body_json(req);
      SimulationConfig cfg;
      cfg.params.p = b.value("p", 1.0);
      cfg.params.n = b.value("n", 1u);
      cfg.params.q = b.value("q", 0.0);
      cfg.params.k = b.value("k", 0u);
      cfg.trials = b.value("trials", std::uint64_t{10000});
      cfg.seed = b.value("seed", std::uint64_t{0});
      if (cfg.trials > kMaxSimulationTrials) throw ParseError("trials exceeds " + std::to_string(kMaxSimulationTrials));
      send(res, 200, to_json(run_simulation(cfg)));
    }));
  }

  Engine& engine_;
  std::map<std::string, std::string> tokens_;
  std::mutex mu_;
  std::map<std::string, ApiSession> sessions_;
  httplib::Server server_;
};

}  // namespace boundarykit
