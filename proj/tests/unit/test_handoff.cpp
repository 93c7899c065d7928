#include <gtest/gtest.h>

#include <random>

#include "boundarykit/fixtures.hpp"
#include "boundarykit/handoff.hpp"

using namespace boundarykit;

namespace {

const std::string kGood = R"({"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[-80.2,25.8]},"properties":{"station_id":"S1"}}]})";
const std::string kBad = R"({"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[-80.2,45.0]},"properties":{"station_id":"S1"}}]})";

struct World {
  ManualClock clock;
  AuditLog audit{clock};
  Governance gov{audit};
  IncidentRegistry incidents{audit, clock};
  WorkingStore working;
  std::shared_ptr<const ArtifactStore> store = std::make_shared<ArtifactStore>(fixtures::station_bundle());
  HandoffManager hm{gov, audit, incidents, working, clock, [this] { return store; }};

  World() {
    gov.register_zone({"prep", ""});
    gov.register_zone({"pub", ""});
    gov.register_role({"envita", RoleKind::worker, {Capability::read_working, Capability::write_working}, "prep"});
    gov.register_role({"diva", RoleKind::publisher,
                       {Capability::read_working, Capability::write_working, Capability::publish_external}, "pub"});
    gov.register_role({"curator", RoleKind::human_supervisor, {Capability::approve_handoff}, "pub"});
  }

  HandoffPackage prepare(const std::string& content = kGood, const std::string& zone = "prep") {
    const std::string ref = working.put(zone, "work", content);
    PrepareRequest req{"run-1", "envita", "diva", {{"l.geojson", PayloadFormat::geojson, sha256_hex(content), ref}},
                       {"prepare-station-layers", {}, clock.now_ms(), std::nullopt, {}}};
    return hm.prepare(req);
  }

  GateBinding gate(bool approval = false) {
    GateBinding g;
    g.specs.push_back(validator_spec_from_json(nlohmann::json::parse(
        R"({"id":"fl","kind":"numeric_range","params":{"ranges":[{"field":"lat","min":24.5,"max":31}]}})")));
    g.requires_approval = approval;
    g.boundary_point = "pre-publication";
    g.actor = "diva";
    g.scope_unit = "stations";
    g.irreversible_downstream = 1;
    return g;
  }

  std::size_t transitions() const { return audit.count(AuditEvent::handoff_transition); }
};

}  // namespace

TEST(Handoff, TransitionTableIsExactlyTheLegalEdges) {
  using P = HandoffPhase;
  const P all[] = {P::prepared, P::validating, P::approved, P::committed, P::blocked, P::quarantined};
  const std::set<std::pair<P, P>> legal = {{P::prepared, P::validating}, {P::validating, P::approved},
                                           {P::validating, P::blocked},  {P::approved, P::committed},
                                           {P::approved, P::blocked},    {P::blocked, P::quarantined}};
  for (auto a : all) {
    for (auto b : all) EXPECT_EQ(legal_transition(a, b), legal.count({a, b}) > 0) << to_string(a) << "->" << to_string(b);
  }
}

TEST(Handoff, CleanPathCommitsAndPublishes) {
  World w;
  auto p = w.prepare();
  EXPECT_EQ(p.phase, HandoffPhase::prepared);
  p = w.hm.validate(p.id, w.gate());
  EXPECT_EQ(p.phase, HandoffPhase::approved);
  p = w.hm.commit(p.id, w.gate());
  EXPECT_EQ(p.phase, HandoffPhase::committed);
  EXPECT_EQ(WorkingStore::zone_of(p.artifacts[0].storage_ref), "pub");
  // Copy, not move: the producer keeps its original.
  EXPECT_TRUE(w.working.get("prep/work/" + sha256_hex(kGood)).has_value());
  auto pub = w.hm.resolve_for_publish(p.id, "diva");
  ASSERT_EQ(pub.size(), 1u);
  EXPECT_EQ(pub[0].content, kGood);
  EXPECT_EQ(pub[0].phase, HandoffPhase::committed);
  EXPECT_EQ(w.transitions(), p.phase_history.size());
  EXPECT_EQ(w.incidents.size(), 0u);
}

TEST(Handoff, ApprovalPathIsIdempotent) {
  World w;
  auto p = w.hm.validate(w.prepare().id, w.gate(true));
  EXPECT_EQ(p.phase, HandoffPhase::validating);
  EXPECT_EQ(w.hm.pending_approvals().size(), 1u);
  EXPECT_THROW(w.hm.commit(p.id, w.gate(true)), IllegalTransition);
  EXPECT_THROW(w.hm.record_approval(p.id, "envita"), CapabilityDenied);
  bool already = true;
  p = w.hm.record_approval(p.id, "curator", &already);
  EXPECT_FALSE(already);
  EXPECT_EQ(p.phase, HandoffPhase::approved);
  const auto before = w.audit.size();
  p = w.hm.record_approval(p.id, "curator", &already);
  EXPECT_TRUE(already);
  EXPECT_EQ(w.audit.size(), before);
  EXPECT_EQ(w.audit.count(AuditEvent::approval), 1u);
  EXPECT_TRUE(w.hm.pending_approvals().empty());
}

TEST(Handoff, FailingGateBlocksWithOneIncident) {
  World w;
  auto p = w.hm.validate(w.prepare(kBad).id, w.gate(true));
  EXPECT_EQ(p.phase, HandoffPhase::blocked);
  ASSERT_TRUE(p.incident_id);
  auto inc = *w.incidents.get(*p.incident_id);
  EXPECT_EQ(inc.boundary_point, "pre-publication");
  EXPECT_EQ(inc.defect_class, "numeric_range");
  EXPECT_EQ(inc.impacted_scope.count, 1u);
  EXPECT_EQ(inc.impacted_scope.unit, "stations");
  EXPECT_EQ(inc.metrics.irreversible_commits_prevented.str(), "1/1");
  EXPECT_THROW(w.hm.record_approval(p.id, "curator"), IllegalTransition);
  p = w.hm.quarantine(p.id);
  EXPECT_EQ(WorkingStore::zone_of(p.artifacts[0].storage_ref), "quarantine");
  EXPECT_EQ(w.hm.quarantine(p.id).phase, HandoffPhase::quarantined);
  const auto denials = w.audit.count(AuditEvent::capability_denial);
  EXPECT_THROW(w.hm.resolve_for_publish(p.id, "diva"), CapabilityDenied);
  EXPECT_EQ(w.audit.count(AuditEvent::capability_denial), denials + 1);
  EXPECT_EQ(w.incidents.size(), 1u);
  EXPECT_EQ(w.transitions(), w.hm.get(p.id)->phase_history.size());
}

TEST(Handoff, SupervisorRejectBlocks) {
  World w;
  auto p = w.hm.validate(w.prepare().id, w.gate(true));
  p = w.hm.reject(p.id, "curator", w.gate(true), "wrong DOI");
  EXPECT_EQ(p.phase, HandoffPhase::blocked);
  EXPECT_EQ(w.incidents.get(*p.incident_id)->defect_class, "operator_block");
  EXPECT_THROW(w.hm.reject(p.id, "curator", w.gate(true), "again"), IllegalTransition);
}

TEST(Handoff, DriftBeforeValidationBlocks) {
  World w;
  auto p = w.prepare();
  w.working.overwrite(p.artifacts[0].storage_ref, kBad);
  p = w.hm.validate(p.id, w.gate());
  EXPECT_EQ(p.phase, HandoffPhase::blocked);
  EXPECT_NE(w.incidents.get(*p.incident_id)->defect_class.find("artifact_integrity"), std::string::npos);
}

TEST(Handoff, DriftAfterApprovalBlocksAtCommit) {
  World w;
  auto p = w.hm.validate(w.prepare().id, w.gate());
  ASSERT_EQ(p.phase, HandoffPhase::approved);
  w.working.overwrite(p.artifacts[0].storage_ref, kGood + " ");
  p = w.hm.commit(p.id, w.gate());
  EXPECT_EQ(p.phase, HandoffPhase::blocked);
  const auto inc = *w.incidents.get(*p.incident_id);
  EXPECT_EQ(inc.defect_class, "digest_drift");
  EXPECT_EQ(inc.impacted_scope.unit, "artifacts");
}

TEST(Handoff, PrepareChecksZoneDigestAndSkill) {
  World w;
  EXPECT_THROW(w.prepare(kGood, "pub"), CapabilityDenied);
  const std::string ref = w.working.put("prep", "work", kGood);
  PrepareRequest bad_digest{"r", "envita", "diva", {{"l", PayloadFormat::geojson, sha256_hex("x"), ref}},
                            {"prepare-station-layers", {}, 0, std::nullopt, {}}};
  EXPECT_THROW(w.hm.prepare(bad_digest), DigestMismatch);
  PrepareRequest bad_skill{"r", "envita", "diva", {{"l", PayloadFormat::geojson, sha256_hex(kGood), ref}},
                           {"no-such-skill", {}, 0, std::nullopt, {}}};
  EXPECT_THROW(w.hm.prepare(bad_skill), DanglingReferenceError);
  PrepareRequest empty{"r", "envita", "diva", {}, {"prepare-station-layers", {}, 0, std::nullopt, {}}};
  EXPECT_THROW(w.hm.prepare(empty), Error);
  PrepareRequest no_writer{"r", "curator", "diva", {{"l", PayloadFormat::geojson, sha256_hex(kGood), ref}},
                           {"prepare-station-layers", {}, 0, std::nullopt, {}}};
  EXPECT_THROW(w.hm.prepare(no_writer), CapabilityDenied);
  EXPECT_THROW(w.hm.validate("pkg-99999", w.gate()), NotFoundError);
}

TEST(Handoff, PublishRequiresDeliveryToPublisher) {
  World w;
  w.gov.register_role({"other-pub", RoleKind::publisher, {Capability::publish_external}, "pub"});
  auto p = w.hm.commit(w.hm.validate(w.prepare().id, w.gate()).id, w.gate());
  EXPECT_THROW(w.hm.resolve_for_publish(p.id, "other-pub"), CapabilityDenied);
  EXPECT_THROW(w.hm.resolve_for_publish(p.id, "envita"), CapabilityDenied);
  w.working.overwrite(p.artifacts[0].storage_ref, "tampered");
  EXPECT_THROW(w.hm.resolve_for_publish(p.id, "diva"), CapabilityDenied);
  EXPECT_EQ(w.audit.count(AuditEvent::capability_denial), 3u);
}

// Random interleavings of every operation over several packages. After each
// step: history edges are legal, transition records equal history entries,
// blocked packages own exactly one incident, publish succeeds only when
// committed, and every denial the caller saw has one audit record.
TEST(Handoff, RandomOperationSequencesKeepInvariants) {
  std::mt19937_64 rng(42);
  std::size_t publishes = 0;
  for (int round = 0; round < 60; ++round) {
    World w;
    std::vector<std::string> ids;
    std::size_t denials_seen = 0;
    for (int step = 0; step < 80; ++step) {
      const int op = static_cast<int>(rng() % 9);
      if (op == 0 || ids.empty()) {
        ids.push_back(w.prepare(rng() % 3 ? kGood : kBad).id);
        continue;
      }
      const std::string id = ids[rng() % ids.size()];
      const bool approval = rng() % 2;
      try {
        switch (op) {
          case 1: w.hm.validate(id, w.gate(approval)); break;
          case 2: w.hm.record_approval(id, "curator"); break;
          case 3: w.hm.reject(id, "curator", w.gate(true), "no"); break;
          case 4: w.hm.commit(id, w.gate()); break;
          case 5: w.hm.quarantine(id); break;
          case 6: {
            const auto p = *w.hm.get(id);
            w.working.overwrite(p.artifacts[0].storage_ref, rng() % 2 ? kGood : kBad);
            break;
          }
          default: {
            const auto before = *w.hm.get(id);
            auto out = w.hm.resolve_for_publish(id, "diva");
            ASSERT_EQ(before.phase, HandoffPhase::committed);
            for (const auto& a : out) ASSERT_EQ(a.phase, HandoffPhase::committed);
            ++publishes;
            break;
          }
        }
      } catch (const CapabilityDenied&) {
        ++denials_seen;
      } catch (const IllegalTransition&) {
      }
      std::size_t history = 0, blocked = 0;
      for (const auto& p : w.hm.list()) {
        history += p.phase_history.size();
        for (std::size_t k = 1; k < p.phase_history.size(); ++k) {
          ASSERT_TRUE(legal_transition(p.phase_history[k - 1], p.phase_history[k]));
        }
        const bool was_blocked = std::find(p.phase_history.begin(), p.phase_history.end(), HandoffPhase::blocked) !=
                                 p.phase_history.end();
        ASSERT_EQ(was_blocked, p.incident_id.has_value());
        blocked += was_blocked;
      }
      ASSERT_EQ(w.transitions(), history);
      ASSERT_EQ(w.incidents.size(), blocked);
      ASSERT_EQ(w.audit.count(AuditEvent::capability_denial), denials_seen);
    }
    ASSERT_TRUE(w.audit.verify().valid);
  }
  EXPECT_GT(publishes, 0u);
}
