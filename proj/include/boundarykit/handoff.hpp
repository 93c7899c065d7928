#pragma once

// Four-phase audited handoff: prepare -> validate -> approve -> commit.
//
// Legal phase edges:
//   prepared   -> validating
//   validating -> approved | blocked
//   approved   -> committed | blocked   (blocked only on digest drift at commit)
//   blocked    -> quarantined
// Every edge appends exactly one handoff_transition audit record.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/artifact_store.hpp"
#include "boundarykit/audit.hpp"
#include "boundarykit/governance.hpp"
#include "boundarykit/incident.hpp"
#include "boundarykit/validation.hpp"

namespace boundarykit {

// Content-addressed working storage. Refs look like "<zone>/<namespace>/<digest>";
// the reserved "quarantine" zone is never resolvable on the publish path.
class WorkingStore {
 public:
  static constexpr const char* kQuarantine = "quarantine";

  std::string put(const std::string& zone, const std::string& ns, std::string content) {
    std::string ref = zone + "/" + ns + "/" + sha256_hex(content);
    std::lock_guard lock(mu_);
    blobs_[ref] = std::move(content);
    return ref;
  }

  std::optional<std::string> get(const std::string& ref) const {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(ref);
    if (it == blobs_.end()) return std::nullopt;
    return it->second;
  }

  // Replaces content in place without re-keying. Models an out-of-band edit;
  // digest checks downstream are what catch it.
  void overwrite(const std::string& ref, std::string content) {
    std::lock_guard lock(mu_);
    blobs_[ref] = std::move(content);
  }

  std::string move(const std::string& ref, const std::string& zone, const std::string& ns) {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(ref);
    if (it == blobs_.end()) throw NotFoundError("no working artifact at " + ref);
    const auto slash = ref.rfind('/');
    std::string dest = zone + "/" + ns + "/" + ref.substr(slash + 1);
    std::string content = std::move(it->second);
    blobs_.erase(it);
    blobs_[dest] = std::move(content);
    return dest;
  }

  std::string copy(const std::string& ref, const std::string& zone, const std::string& ns) {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(ref);
    if (it == blobs_.end()) throw NotFoundError("no working artifact at " + ref);
    std::string dest = zone + "/" + ns + "/" + ref.substr(ref.rfind('/') + 1);
    blobs_[dest] = it->second;
    return dest;
  }

  static std::string zone_of(const std::string& ref) { return ref.substr(0, ref.find('/')); }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> blobs_;
};

enum class HandoffPhase { prepared, validating, approved, committed, blocked, quarantined };

NLOHMANN_JSON_SERIALIZE_ENUM(HandoffPhase, {{HandoffPhase::prepared, "prepared"},
                                            {HandoffPhase::validating, "validating"},
                                            {HandoffPhase::approved, "approved"},
                                            {HandoffPhase::committed, "committed"},
                                            {HandoffPhase::blocked, "blocked"},
                                            {HandoffPhase::quarantined, "quarantined"}})

inline std::string to_string(HandoffPhase p) { return nlohmann::json(p).get<std::string>(); }

inline bool legal_transition(HandoffPhase from, HandoffPhase to) {
  using P = HandoffPhase;
  switch (from) {
    case P::prepared: return to == P::validating;
    case P::validating: return to == P::approved || to == P::blocked;
    case P::approved: return to == P::committed || to == P::blocked;
    case P::blocked: return to == P::quarantined;
    default: return false;
  }
}

struct PackagedArtifact {
  std::string name;
  PayloadFormat format = PayloadFormat::geojson;
  std::string digest;
  std::string storage_ref;
};

struct Provenance {
  std::string producing_skill;
  std::vector<std::string> input_digests;
  std::uint64_t produced_at = 0;
  std::optional<std::string> remediates;           // incident a remediation package answers
  std::map<std::string, std::string> context;      // e.g. expected_dataset
};

struct Approval {
  std::string approver;
  std::uint64_t at = 0;
};

struct HandoffPackage {
  std::string id;
  std::string workflow_run;
  std::string from_role;
  std::string to_role;
  std::vector<PackagedArtifact> artifacts;
  Provenance provenance;
  HandoffPhase phase = HandoffPhase::prepared;
  std::optional<GateResult> gate_result;
  std::optional<Approval> approval;
  bool requires_approval = false;
  std::string boundary_point;
  std::optional<std::string> incident_id;
  std::vector<HandoffPhase> phase_history;  // every phase entered, in order
  std::string block_reason;
};

inline nlohmann::json to_json(const HandoffPackage& p, bool with_outcomes = true) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : p.artifacts) {
    arts.push_back({{"name", a.name}, {"format", a.format}, {"digest", a.digest}, {"storage_ref", a.storage_ref}});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (auto h : p.phase_history) hist.push_back(h);
  nlohmann::json j{{"id", p.id},
                   {"workflow_run", p.workflow_run},
                   {"from_role", p.from_role},
                   {"to_role", p.to_role},
                   {"artifacts", arts},
                   {"provenance",
                    {{"producing_skill", p.provenance.producing_skill},
                     {"input_digests", p.provenance.input_digests},
                     {"produced_at", p.provenance.produced_at},
                     {"context", p.provenance.context}}},
                   {"phase", p.phase},
                   {"phase_history", hist},
                   {"requires_approval", p.requires_approval},
                   {"boundary_point", p.boundary_point}};
  if (p.provenance.remediates) j["provenance"]["remediates"] = *p.provenance.remediates;
  if (p.gate_result) {
    j["gate"] = with_outcomes ? to_json(*p.gate_result)
                              : nlohmann::json{{"approved", p.gate_result->approved}};
  }
  if (p.approval) j["approval"] = {{"approver", p.approval->approver}, {"at", p.approval->at}};
  if (p.incident_id) j["incident_id"] = *p.incident_id;
  if (!p.block_reason.empty()) j["block_reason"] = p.block_reason;
  return j;
}

struct PrepareRequest {
  std::string run;
  std::string from_role;
  std::string to_role;
  std::vector<PackagedArtifact> artifacts;
  Provenance provenance;
};

// What the receiving stage's boundary enforces, plus the facts needed to
// score an incident if it blocks.
struct GateBinding {
  std::vector<ValidatorSpec> specs;
  bool requires_approval = false;
  std::string boundary_point;
  std::string actor;  // who runs the validators
  std::string scope_unit = "records";
  std::uint64_t user_exposure = 0;         // already-published artifacts of this lineage
  std::uint32_t irreversible_downstream = 0;
  GateOptions options;
};

class DigestMismatch : public Error {
 public:
  using Error::Error;
};

class HandoffManager {
 public:
  using StoreProvider = std::function<std::shared_ptr<const ArtifactStore>()>;

  HandoffManager(Governance& gov, AuditLog& audit, IncidentRegistry& incidents, WorkingStore& working,
                 EngineClock& clock, StoreProvider store)
      : gov_(gov), audit_(audit), incidents_(incidents), working_(working), clock_(clock), store_(std::move(store)) {}

  HandoffPackage prepare(const PrepareRequest& req) {
    const auto from = gov_.role(req.from_role);
    gov_.require(req.from_role, Capability::write_working, from ? from->zone : std::string{});
    if (!gov_.role(req.to_role)) throw NotFoundError("unknown receiving role " + req.to_role);
    if (req.artifacts.empty()) throw Error("handoff: artifact list is empty");
    // A role packages only what sits in its own zone.
    for (const auto& a : req.artifacts) gov_.require(req.from_role, Capability::write_working, WorkingStore::zone_of(a.storage_ref));
    for (const auto& a : req.artifacts) {
      auto content = working_.get(a.storage_ref);
      if (!content) throw NotFoundError("handoff: no content at " + a.storage_ref);
      const std::string actual = sha256_hex(*content);
      if (actual != a.digest) {
        throw DigestMismatch("handoff: artifact " + a.name + " digest " + a.digest + " does not match content " + actual);
      }
    }
    auto store = store_();
    if (!store || !store->skill(req.provenance.producing_skill)) {
      throw DanglingReferenceError("producing_skill", req.from_role, req.provenance.producing_skill);
    }
    auto entry = std::make_shared<Entry>();
    HandoffPackage& p = entry->pkg;
    p.workflow_run = req.run;
    p.from_role = req.from_role;
    p.to_role = req.to_role;
    p.artifacts = req.artifacts;
    p.provenance = req.provenance;
    {
      std::lock_guard lock(mu_);
      char buf[24];
      std::snprintf(buf, sizeof buf, "pkg-%05u", ++counter_);
      p.id = buf;
      packages_.emplace(p.id, entry);
    }
    std::lock_guard lock(entry->mu);
    p.phase = HandoffPhase::prepared;
    p.phase_history.push_back(p.phase);
    audit_.append(p.from_role, AuditEvent::handoff_transition,
                  {{"package", p.id}, {"from", nullptr}, {"to", "prepared"}, {"run", p.workflow_run},
                   {"artifacts", to_json(p)["artifacts"]}});
    return p;
  }

  // Runs the receiving boundary's gate. Ends in approved, blocked (incident
  // opened), or validating when a human approval is still required.
  HandoffPackage validate(const std::string& id, const GateBinding& gate) {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    HandoffPackage& p = e->pkg;
    if (p.phase != HandoffPhase::prepared) throw illegal(p, HandoffPhase::validating);
    p.requires_approval = gate.requires_approval;
    p.boundary_point = gate.boundary_point;
    transition(p, HandoffPhase::validating, gate.actor);

    std::vector<std::string> contents;
    contents.reserve(p.artifacts.size());
    for (const auto& a : p.artifacts) contents.push_back(working_.get(a.storage_ref).value_or(std::string{}));
    std::vector<ArtifactView> views;
    for (std::size_t i = 0; i < p.artifacts.size(); ++i) {
      views.push_back({p.artifacts[i].name, p.artifacts[i].format, contents[i], &p.provenance.context});
    }
    GateResult result = run_gate(gate.specs, views, audit_, gate.actor, clock_.now_ms(), gate.options);
    for (std::size_t i = 0; i < p.artifacts.size(); ++i) {
      if (sha256_hex(contents[i]) != p.artifacts[i].digest) {
        ValidationOutcome drift;
        drift.validator_id = "digest-check";
        drift.kind = ValidatorKind::artifact_integrity;
        drift.artifact = p.artifacts[i].name;
        drift.verdict = Verdict::fail;
        drift.offending_items.push_back({p.artifacts[i].name, "digest", sha256_hex(contents[i]) + "!=" + p.artifacts[i].digest});
        drift.input_digest = sha256_hex(contents[i]);
        result.audit_seqs.push_back(audit_.append(gate.actor, AuditEvent::validation_outcome, to_json(drift)).seq);
        result.outcomes.push_back(drift);
        result.blocking_failures.push_back(drift);
        result.approved = false;
      }
    }
    p.gate_result = result;

    if (!result.approved) {
      block(p, gate, result, gate.actor);
    } else if (!gate.requires_approval) {
      transition(p, HandoffPhase::approved, gate.actor);
    }
    return p;
  }

  // Records a human approval on a package waiting in validating. Returns the
  // package unchanged (and appends nothing) if it already carries an approval.
  HandoffPackage record_approval(const std::string& id, const std::string& approver, bool* already = nullptr) {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    HandoffPackage& p = e->pkg;
    gov_.require(approver, Capability::approve_handoff, zone_of_role(p.to_role));
    if (already) *already = false;
    if (p.approval && (p.phase == HandoffPhase::approved || p.phase == HandoffPhase::committed)) {
      if (already) *already = true;
      return p;
    }
    if (p.phase != HandoffPhase::validating || !p.gate_result || !p.gate_result->approved || !p.requires_approval) {
      throw IllegalTransition("package " + p.id + " in phase " + to_string(p.phase) + " is not awaiting approval");
    }
    p.approval = Approval{approver, clock_.now_ms()};
    audit_.append(approver, AuditEvent::approval, {{"package", p.id}, {"approver", approver}, {"decision", "approve"}});
    transition(p, HandoffPhase::approved, approver);
    return p;
  }

  // Supervisor rejects a package waiting for approval.
  HandoffPackage reject(const std::string& id, const std::string& approver, const GateBinding& gate,
                        const std::string& reason) {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    HandoffPackage& p = e->pkg;
    gov_.require(approver, Capability::approve_handoff, zone_of_role(p.to_role));
    if (p.phase != HandoffPhase::validating) {
      throw IllegalTransition("package " + p.id + " in phase " + to_string(p.phase) + " cannot be rejected");
    }
    audit_.append(approver, AuditEvent::approval, {{"package", p.id}, {"approver", approver}, {"decision", "block"}, {"reason", reason}});
    GateResult none;
    none.approved = false;
    p.block_reason = "operator block: " + reason;
    block(p, gate, none, approver, "operator_block");
    return p;
  }

  // Re-verifies digests and copies the artifacts into the receiving zone's
  // inbox. Drift since approval blocks the package instead.
  HandoffPackage commit(const std::string& id, const GateBinding& gate) {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    HandoffPackage& p = e->pkg;
    if (p.phase != HandoffPhase::approved) throw illegal(p, HandoffPhase::committed);
    std::vector<OffendingItem> drift;
    for (const auto& a : p.artifacts) {
      auto content = working_.get(a.storage_ref);
      const std::string actual = content ? sha256_hex(*content) : "missing";
      if (actual != a.digest) drift.push_back({a.name, "digest", actual + "!=" + a.digest});
    }
    if (!drift.empty()) {
      ValidationOutcome o;
      o.validator_id = "commit-digest-check";
      o.kind = ValidatorKind::artifact_integrity;
      o.verdict = Verdict::fail;
      o.offending_items = drift;
      o.impacted_count = drift.size();
      o.ran_at = clock_.now_ms();
      GateResult g;
      g.approved = false;
      g.audit_seqs.push_back(audit_.append(gate.actor, AuditEvent::validation_outcome, to_json(o)).seq);
      g.outcomes.push_back(o);
      g.blocking_failures.push_back(o);
      p.block_reason = "digest drift between approval and commit";
      GateBinding scoped = gate;
      scoped.scope_unit = "artifacts";
      block(p, scoped, g, gate.actor, "digest_drift");
      return p;
    }
    const std::string dest_zone = zone_of_role(p.to_role);
    for (auto& a : p.artifacts) a.storage_ref = working_.copy(a.storage_ref, dest_zone, "inbox/" + p.id);
    transition(p, HandoffPhase::committed, gate.actor);
    return p;
  }

  // Idempotent on an already-quarantined package.
  HandoffPackage quarantine(const std::string& id, const std::string& actor = "engine") {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    HandoffPackage& p = e->pkg;
    if (p.phase == HandoffPhase::quarantined) return p;
    if (p.phase != HandoffPhase::blocked) throw illegal(p, HandoffPhase::quarantined);
    for (auto& a : p.artifacts) {
      if (working_.get(a.storage_ref)) {
        a.storage_ref = working_.move(a.storage_ref, WorkingStore::kQuarantine, p.id);
      }
    }
    transition(p, HandoffPhase::quarantined, actor);
    return p;
  }

  struct PublishableArtifact {
    PackagedArtifact artifact;
    std::string content;
    HandoffPhase phase;  // package phase observed at resolution
  };

  // The only path from a package to a publish action. Anything but a committed
  // package delivered to the publisher's own zone is denied and audited.
  std::vector<PublishableArtifact> resolve_for_publish(const std::string& id, const std::string& publisher) {
    const auto role = gov_.role(publisher);
    const std::string zone = role ? role->zone : std::string{};
    gov_.require(publisher, Capability::publish_external, zone);
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    const HandoffPackage& p = e->pkg;
    auto refuse = [&](const std::string& why) {
      gov_.record_denial(publisher, Capability::publish_external, zone, "package_not_publishable",
                         {{"package", p.id}, {"phase", to_string(p.phase)}, {"detail", why}});
      return CapabilityDenied("package_not_publishable", p.id + ": " + why);
    };
    if (p.phase != HandoffPhase::committed) throw refuse("phase " + to_string(p.phase));
    if (p.to_role != publisher) throw refuse("package was not delivered to " + publisher);
    std::vector<PublishableArtifact> out;
    for (const auto& a : p.artifacts) {
      if (WorkingStore::zone_of(a.storage_ref) != zone) throw refuse(a.name + " is outside zone " + zone);
      auto content = working_.get(a.storage_ref);
      if (!content || sha256_hex(*content) != a.digest) throw refuse(a.name + " does not match its committed digest");
      out.push_back({a, *content, p.phase});
    }
    return out;
  }

  std::optional<HandoffPackage> get(const std::string& id) const {
    std::shared_ptr<Entry> e;
    {
      std::lock_guard lock(mu_);
      auto it = packages_.find(id);
      if (it == packages_.end()) return std::nullopt;
      e = it->second;
    }
    std::lock_guard lock(e->mu);
    return e->pkg;
  }

  std::vector<HandoffPackage> list() const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
      std::lock_guard lock(mu_);
      for (const auto& [_, e] : packages_) entries.push_back(e);
    }
    std::vector<HandoffPackage> out;
    for (const auto& e : entries) {
      std::lock_guard lock(e->mu);
      out.push_back(e->pkg);
    }
    return out;
  }

  std::vector<HandoffPackage> pending_approvals() const {
    std::vector<HandoffPackage> out;
    for (auto& p : list()) {
      if (p.phase == HandoffPhase::validating && p.requires_approval && p.gate_result && p.gate_result->approved) {
        out.push_back(std::move(p));
      }
    }
    return out;
  }

 private:
  struct Entry {
    std::mutex mu;
    HandoffPackage pkg;
  };

  std::shared_ptr<Entry> entry(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = packages_.find(id);
    if (it == packages_.end()) throw NotFoundError("unknown package " + id);
    return it->second;
  }

  std::string zone_of_role(const std::string& role_id) const {
    auto r = gov_.role(role_id);
    return r ? r->zone : std::string{};
  }

  static IllegalTransition illegal(const HandoffPackage& p, HandoffPhase to) {
    return IllegalTransition("package " + p.id + ": " + to_string(p.phase) + " -> " + to_string(to) +
                             " is not a legal transition");
  }

  void transition(HandoffPackage& p, HandoffPhase to, const std::string& actor) {
    if (!legal_transition(p.phase, to)) throw illegal(p, to);
    const HandoffPhase from = p.phase;
    p.phase = to;
    p.phase_history.push_back(to);
    nlohmann::json payload{{"package", p.id}, {"from", from}, {"to", to}, {"run", p.workflow_run}};
    if (p.incident_id) payload["incident"] = *p.incident_id;
    if (to == HandoffPhase::committed || to == HandoffPhase::quarantined) {
      nlohmann::json refs = nlohmann::json::array();
      for (const auto& a : p.artifacts) refs.push_back(a.storage_ref);
      payload["storage_refs"] = refs;
    }
    audit_.append(actor, AuditEvent::handoff_transition, payload);
  }

  void block(HandoffPackage& p, const GateBinding& gate, const GateResult& result, const std::string& actor,
             std::string defect_class = {}) {
    // Impacted scope: per artifact, the widest failing outcome.
    std::map<std::string, std::uint64_t> per_artifact;
    std::vector<std::string> failing;
    for (const auto& o : result.blocking_failures) {
      per_artifact[o.artifact] = std::max(per_artifact[o.artifact], o.impacted_count);
      const std::string k = to_string(o.kind);
      if (std::find(failing.begin(), failing.end(), k) == failing.end()) failing.push_back(k);
    }
    std::uint64_t impacted = 0;
    for (const auto& [_, n] : per_artifact) impacted += n;
    if (defect_class.empty()) {
      for (const auto& k : failing) defect_class += (defect_class.empty() ? "" : "+") + k;
    }
    if (p.block_reason.empty()) p.block_reason = "blocking validators failed: " + defect_class;
    const std::uint64_t blocked_at = clock_.now_ms();
    transition(p, HandoffPhase::blocked, actor);

    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& o : result.blocking_failures) {
      nlohmann::json items = nlohmann::json::array();
      for (std::size_t i = 0; i < o.offending_items.size() && i < 5; ++i) {
        items.push_back({o.offending_items[i].record, o.offending_items[i].field, o.offending_items[i].value});
      }
      evidence.push_back({{"validator", o.validator_id}, {"artifact", o.artifact}, {"offending_sample", items},
                          {"offending_total", o.offending_items.size()}});
    }
    audit_.append(actor, AuditEvent::workflow_event,
                  {{"action", "escalation"}, {"package", p.id}, {"boundary_point", gate.boundary_point},
                   {"evidence", evidence}});
    if (!p.incident_id) {
      DetectionReport r;
      r.boundary_point = gate.boundary_point;
      r.defect_class = defect_class;
      r.impacted_scope = {impacted, gate.scope_unit};
      r.produced_at = p.provenance.produced_at;
      r.blocked_at = blocked_at;
      r.user_exposure = gate.user_exposure;
      r.commits_prevented = {gate.irreversible_downstream, gate.irreversible_downstream};
      r.package_id = p.id;
      r.actor = actor;
      p.incident_id = incidents_.open_incident(r).id;
    }
  }

  Governance& gov_;
  AuditLog& audit_;
  IncidentRegistry& incidents_;
  WorkingStore& working_;
  EngineClock& clock_;
  StoreProvider store_;
  mutable std::mutex mu_;
  unsigned counter_ = 0;
  std::map<std::string, std::shared_ptr<Entry>> packages_;
};

}  // namespace boundarykit
