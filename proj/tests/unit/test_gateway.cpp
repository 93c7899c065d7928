#include <gtest/gtest.h>

#include <thread>

#include "boundarykit/gateway.hpp"
#include "boundarykit/scenarios.hpp"
#include "test_support.hpp"

using namespace boundarykit;

namespace {

class GatewayTest : public ::testing::Test {
 protected:
  void SetUp() override {
    engine_ = fixtures::station_engine(scenario_engine_options());
    gw_ = std::make_unique<Gateway>(*engine_, fixtures::station_deployment()["sessions"]
                                                  .get<std::map<std::string, std::string>>());
    port_ = gw_->bind_any_port();
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { gw_->listen_after_bind(); });
    gw_->wait_until_ready();
  }
  void TearDown() override {
    gw_->stop();
    thread_.join();
  }

  httplib::Client client(const std::string& token = "") {
    httplib::Client c("127.0.0.1", port_);
    if (!token.empty()) c.set_bearer_token_auth(token);
    c.set_read_timeout(30, 0);
    return c;
  }

  static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

  std::string pending_package() {
    Job job = job_from_json(fixtures::station_job(std::nullopt, 20), *engine_);
    return *engine_->run_workflow(job.workflow, job.stubs, job.request).pending_package;
  }

  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Gateway> gw_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(GatewayTest, UnauthenticatedIs401) {
  auto r = client().Get("/v1/roles");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 401);
  EXPECT_EQ(client("tok-unknown").Get("/v1/roles")->status, 401);
  EXPECT_EQ(engine_->audit().count(AuditEvent::capability_denial), 0u);
}

TEST_F(GatewayTest, RolesListed) {
  auto r = client("tok-envita").Get("/v1/roles");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r).size(), 5u);
}

TEST_F(GatewayTest, DeniedRequestsHaveExactlyOneAuditRecord) {
  const std::vector<std::pair<std::string, std::string>> attempts = {
      {"tok-envita", "/v1/audit"}, {"tok-envita", "/v1/audit/verify"}, {"tok-envita", "/v1/audit?from_seq=1"}};
  std::size_t denials = 0;
  for (const auto& [tok, path] : attempts) {
    auto r = client(tok).Get(path);
    ASSERT_EQ(r->status, 403) << path;
    const auto b = body(r);
    EXPECT_EQ(b["reason"], "capability_missing");
    ++denials;
    EXPECT_EQ(engine_->audit().count(AuditEvent::capability_denial), denials);
    const auto rec = engine_->audit().range(b["audit_seq"].get<std::uint64_t>(), 1).at(0);
    EXPECT_EQ(rec.event, AuditEvent::capability_denial);
  }
  // POST /v1/runs needs route_handoff.
  auto r = client("tok-diva").Post("/v1/runs", fixtures::station_job().dump(), "application/json");
  EXPECT_EQ(r->status, 403);
  EXPECT_EQ(engine_->audit().count(AuditEvent::capability_denial), denials + 1);
  EXPECT_TRUE(engine_->runs().empty());
}

TEST_F(GatewayTest, ApprovalFlow) {
  const std::string pkg = pending_package();
  auto pend = client("tok-stori").Get("/v1/approvals/pending");
  ASSERT_EQ(pend->status, 200);
  ASSERT_EQ(body(pend).size(), 1u);
  EXPECT_EQ(body(pend)[0]["id"], pkg);

  const std::string approve = R"({"decision":"approve"})";
  auto denied = client("tok-diva").Post("/v1/approvals/" + pkg, approve, "application/json");
  EXPECT_EQ(denied->status, 403);
  EXPECT_EQ(engine_->audit().count(AuditEvent::capability_denial), 1u);

  auto ok = client("tok-curator").Post("/v1/approvals/" + pkg, approve, "application/json");
  ASSERT_EQ(ok->status, 200) << ok->body;
  EXPECT_EQ(body(ok)["already"], false);
  EXPECT_EQ(body(ok)["run"]["status"], "done");
  auto again = client("tok-curator").Post("/v1/approvals/" + pkg, approve, "application/json");
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(body(again)["already"], true);
  auto block = client("tok-curator").Post("/v1/approvals/" + pkg, R"({"decision":"block"})", "application/json");
  EXPECT_EQ(block->status, 409);
  EXPECT_EQ(engine_->audit().count(AuditEvent::approval), 1u);
  EXPECT_EQ(client("tok-curator").Post("/v1/approvals/" + pkg, R"({"decision":"maybe"})", "application/json")->status,
            400);
  EXPECT_EQ(client("tok-curator").Post("/v1/approvals/pkg-404", approve, "application/json")->status, 404);
}

TEST_F(GatewayTest, ApprovalRaceCommitsOnce) {
  const std::string pkg = pending_package();
  std::atomic<int> fresh{0}, ok{0};
  {
    std::vector<std::jthread> ts;
    for (int i = 0; i < 6; ++i) {
      ts.emplace_back([&] {
        auto r = client("tok-curator").Post("/v1/approvals/" + pkg, R"({"decision":"approve"})", "application/json");
        if (r && r->status == 200) {
          ++ok;
          if (!nlohmann::json::parse(r->body)["already"].get<bool>()) ++fresh;
        }
      });
    }
  }
  EXPECT_EQ(ok.load(), 6);
  EXPECT_EQ(fresh.load(), 1);
  EXPECT_EQ(engine_->audit().count(AuditEvent::approval), 1u);
  EXPECT_EQ(engine_->sink().size(), 5u);
}

TEST_F(GatewayTest, SubmitRunAsynchronously) {
  auto r = client("tok-conductor").Post("/v1/runs", fixtures::station_job(std::nullopt, 30).dump(), "application/json");
  ASSERT_EQ(r->status, 202) << r->body;
  const std::string id = body(r)["run_id"];
  engine_->wait_idle();
  auto got = client("tok-envita").Get("/v1/runs/" + id);
  ASSERT_EQ(got->status, 200);
  EXPECT_EQ(body(got)["status"], "awaiting_approval");
  EXPECT_EQ(client("tok-envita").Get("/v1/runs/run-9999")->status, 404);
  EXPECT_EQ(client("tok-conductor").Post("/v1/runs", "{not json", "application/json")->status, 400);
  nlohmann::json bad = fixtures::station_job();
  bad["workflow"] = "ghost";
  EXPECT_EQ(client("tok-conductor").Post("/v1/runs", bad.dump(), "application/json")->status, 404);
}

TEST_F(GatewayTest, IncidentsIncludeChain) {
  replay_into(*engine_, "iss004_chain");
  auto list = client("tok-envita").Get("/v1/incidents");
  ASSERT_EQ(list->status, 200);
  EXPECT_EQ(body(list).size(), 3u);
  auto one = client("tok-envita").Get("/v1/incidents/ISS-001");
  ASSERT_EQ(one->status, 200);
  const auto b = body(one);
  EXPECT_EQ(b["status"], "verified");
  ASSERT_EQ(b["chain"].size(), 3u);
  EXPECT_EQ(b["chain"][2]["kind"], "verification");
  EXPECT_EQ(client("tok-envita").Get("/v1/incidents/ISS-999")->status, 404);
}

TEST_F(GatewayTest, AuditPagingIsNdjson) {
  replay_into(*engine_, "audit_differential");
  const auto all = engine_->audit().snapshot();
  ASSERT_GT(all.size(), 30u);
  std::vector<AuditRecord> paged;
  std::uint64_t from = 1;
  while (true) {
    auto r = client("tok-stori").Get("/v1/audit?from_seq=" + std::to_string(from) + "&limit=7");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/x-ndjson");
    std::istringstream in(r->body);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      paged.push_back(audit_record_from_json(nlohmann::json::parse(line)));
      ++n;
    }
    if (n < 7) break;
    from += 7;
  }
  ASSERT_EQ(paged.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(paged[i].hash, all[i].hash);
  EXPECT_TRUE(verify_chain(paged).valid);
  EXPECT_EQ(client("tok-stori").Get("/v1/audit?from_seq=abc")->status, 400);
  auto v = client("tok-stori").Get("/v1/audit/verify");
  ASSERT_EQ(v->status, 200);
  EXPECT_EQ(body(v)["valid"], true);
}

TEST_F(GatewayTest, LintAndSimulate) {
  auto lint = client("tok-envita").Post("/v1/lint", serialize(fixtures::corrupted_bundle()).dump(), "application/json");
  ASSERT_EQ(lint->status, 200) << lint->body;
  EXPECT_EQ(body(lint)["defect_count"], 39);
  EXPECT_EQ(body(lint)["traversable"], false);
  auto sim = client("tok-envita").Post("/v1/simulate", R"({"p":0.95,"n":10,"trials":20000,"seed":1})",
                                       "application/json");
  ASSERT_EQ(sim->status, 200) << sim->body;
  EXPECT_TRUE(body(sim)["end_to_end_success"]["within_3sigma"].get<bool>());
  EXPECT_EQ(client("tok-envita").Post("/v1/simulate", R"({"trials":100000000})", "application/json")->status, 400);
  EXPECT_EQ(client("tok-envita").Post("/v1/simulate", R"({"p":2})", "application/json")->status, 422);
}

class PersistedGatewayTest : public ::testing::Test {};

TEST_F(PersistedGatewayTest, VerifyReportsTamperedRecord) {
  const auto dir = test_support::temp_dir("gw");
  const auto file = dir / "audit.log";
  EngineOptions opts = scenario_engine_options();
  opts.audit_file = file;
  auto engine = fixtures::station_engine(opts);
  replay_into(*engine, "iss004_chain");
  Gateway gw(*engine, {{"tok", "stori-audit"}});
  const int port = gw.bind_any_port();
  std::thread t([&] { gw.listen_after_bind(); });
  gw.wait_until_ready();
  httplib::Client c("127.0.0.1", port);
  c.set_bearer_token_auth("tok");
  EXPECT_EQ(nlohmann::json::parse(c.Get("/v1/audit/verify")->body)["valid"], true);
  std::string bytes = read_file_bytes(file);
  const auto frames = test_support::frame_spans(bytes);
  bytes[frames[4].begin + 30] ^= 0x20;
  std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes;
  const auto v = nlohmann::json::parse(c.Get("/v1/audit/verify")->body);
  EXPECT_EQ(v["valid"], false);
  EXPECT_EQ(v["first_bad_seq"], frames[4].seq);
  // An invalid UTF-8 byte ends up quoted in the decoder's reason.
  bytes = read_file_bytes(file);
  bytes[frames[4].begin + 30] ^= 0x20;
  const auto actor = bytes.find("\"actor\":\"", frames[7].begin);
  ASSERT_LT(actor, frames[7].end);
  bytes[actor + 9] = '\xff';
  std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes;
  auto r = c.Get("/v1/audit/verify");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(nlohmann::json::parse(r->body)["first_bad_seq"], frames[7].seq);
  gw.stop();
  t.join();
  std::filesystem::remove_all(dir);
}
