#include <gtest/gtest.h>

#include "boundarykit/incident.hpp"

using namespace boundarykit;

namespace {

struct Registry {
  ManualClock clock;
  AuditLog audit{clock};
  IncidentRegistry reg{audit, clock};

  Incident detection() {
    DetectionReport r;
    r.boundary_point = "pre-publication";
    r.defect_class = "spatial_plausibility";
    r.impacted_scope = {2452, "stations"};
    r.produced_at = 10;
    r.blocked_at = 94;
    r.commits_prevented = {1, 1};
    return reg.open_incident(r);
  }

  Incident follow(const std::string& parent, IncidentKind kind, std::optional<VerificationEvidence> ev = {}) {
    FollowUpReport f;
    f.kind = kind;
    f.parent = parent;
    f.boundary_point = "pre-publication";
    f.defect_class = "spatial_plausibility";
    f.evidence = std::move(ev);
    return reg.open_follow_up(f);
  }
};

VerificationEvidence passing_evidence() { return {true, "stori-audit", "envita", 5, {}}; }

}  // namespace

TEST(Incidents, DetectionRecordsMetricsAndAudits) {
  Registry r;
  auto inc = r.detection();
  EXPECT_EQ(inc.id, "ISS-001");
  EXPECT_EQ(inc.status, IncidentStatus::open);
  EXPECT_EQ(inc.metrics.detection_latency_ms, 84u);
  EXPECT_EQ(inc.metrics.irreversible_commits_prevented.str(), "1/1");
  EXPECT_EQ(inc.resolution_chain, std::vector<std::string>{"ISS-001"});
  EXPECT_EQ(r.audit.count(AuditEvent::incident_event), 1u);
}

TEST(Incidents, FullResolutionChain) {
  Registry r;
  auto d = r.detection();
  auto rem = r.follow(d.id, IncidentKind::remediation);
  r.reg.link_resolution(d.id, rem.id, IncidentStatus::remediated);
  auto ver = r.follow(d.id, IncidentKind::verification, passing_evidence());
  auto after = r.reg.link_resolution(d.id, ver.id, IncidentStatus::verified);
  EXPECT_EQ(after.status, IncidentStatus::verified);
  EXPECT_EQ(after.resolution_chain, (std::vector<std::string>{"ISS-001", "ISS-002", "ISS-003"}));
  EXPECT_EQ(r.reg.get(rem.id)->status, IncidentStatus::closed);
  EXPECT_EQ(r.reg.get(ver.id)->status, IncidentStatus::closed);
  EXPECT_EQ(r.reg.link_resolution(d.id, "", IncidentStatus::closed).status, IncidentStatus::closed);
}

// Exhaustive over (from, to): only the three forward edges are legal.
TEST(Incidents, OnlyForwardEdgesAreLegal) {
  const IncidentStatus all[] = {IncidentStatus::open, IncidentStatus::remediated, IncidentStatus::verified,
                                IncidentStatus::closed};
  for (auto from : all) {
    for (auto to : all) {
      Registry r;
      auto d = r.detection();
      auto rem = r.follow(d.id, IncidentKind::remediation);
      auto ver = r.follow(d.id, IncidentKind::verification, passing_evidence());
      // Drive d to `from` along the legal path.
      if (from != IncidentStatus::open) r.reg.link_resolution(d.id, rem.id, IncidentStatus::remediated);
      if (from == IncidentStatus::verified || from == IncidentStatus::closed) {
        r.reg.link_resolution(d.id, ver.id, IncidentStatus::verified);
      }
      if (from == IncidentStatus::closed) r.reg.link_resolution(d.id, "", IncidentStatus::closed);
      const bool legal = (from == IncidentStatus::open && to == IncidentStatus::remediated) ||
                         (from == IncidentStatus::remediated && to == IncidentStatus::verified) ||
                         (from == IncidentStatus::verified && to == IncidentStatus::closed);
      const std::string link = to == IncidentStatus::remediated ? rem.id : to == IncidentStatus::verified ? ver.id : "";
      if (legal) {
        EXPECT_NO_THROW(r.reg.link_resolution(d.id, link, to)) << to_string(from) << "->" << to_string(to);
      } else {
        EXPECT_THROW(r.reg.link_resolution(d.id, link, to), IllegalTransition) << to_string(from) << "->" << to_string(to);
      }
    }
  }
}

TEST(Incidents, VerificationNeedsIndependentPassingEvidence) {
  Registry r;
  auto d = r.detection();
  auto rem = r.follow(d.id, IncidentKind::remediation);
  r.reg.link_resolution(d.id, rem.id, IncidentStatus::remediated);
  auto same_role = r.follow(d.id, IncidentKind::verification, VerificationEvidence{true, "envita", "envita", 5, {}});
  EXPECT_THROW(r.reg.link_resolution(d.id, same_role.id, IncidentStatus::verified), IllegalTransition);
  auto failed = r.follow(d.id, IncidentKind::verification, VerificationEvidence{false, "stori-audit", "envita", 5, {}});
  EXPECT_THROW(r.reg.link_resolution(d.id, failed.id, IncidentStatus::verified), IllegalTransition);
  auto none = r.follow(d.id, IncidentKind::verification);
  EXPECT_THROW(r.reg.link_resolution(d.id, none.id, IncidentStatus::verified), IllegalTransition);
  // A remediation incident cannot stand in for verification.
  auto rem2 = r.follow(d.id, IncidentKind::remediation);
  EXPECT_THROW(r.reg.link_resolution(d.id, rem2.id, IncidentStatus::verified), IllegalTransition);
  EXPECT_EQ(r.reg.get(d.id)->status, IncidentStatus::remediated);
}

TEST(Incidents, FollowUpMustBelongToParent) {
  Registry r;
  auto a = r.detection();
  auto b = r.detection();
  auto rem_b = r.follow(b.id, IncidentKind::remediation);
  EXPECT_THROW(r.reg.link_resolution(a.id, rem_b.id, IncidentStatus::remediated), Error);
  EXPECT_THROW(r.follow("ISS-999", IncidentKind::remediation), NotFoundError);
  EXPECT_THROW(r.follow(a.id, IncidentKind::detection), Error);
  EXPECT_THROW(r.reg.link_resolution("ISS-999", "", IncidentStatus::remediated), NotFoundError);
}

TEST(Incidents, JsonCarriesChainAndEvidence) {
  Registry r;
  auto d = r.detection();
  auto ver = r.follow(d.id, IncidentKind::verification, passing_evidence());
  auto j = to_json(*r.reg.get(ver.id));
  EXPECT_EQ(j["kind"], "verification");
  EXPECT_EQ(j["parent"], "ISS-001");
  EXPECT_EQ(j["evidence"]["layers_checked"], 5);
  EXPECT_EQ(to_json(d)["metrics"]["irreversible_commits_prevented"], "1/1");
}
