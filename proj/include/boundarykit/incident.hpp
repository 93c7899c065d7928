#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/audit.hpp"
#include "boundarykit/errors.hpp"

namespace boundarykit {

enum class IncidentStatus { open, remediated, verified, closed };
// detection incidents are opened by a blocked boundary; remediation and
// verification incidents are follow-ups that close out a detection.
enum class IncidentKind { detection, remediation, verification };

inline std::string to_string(IncidentStatus s) {
  switch (s) {
    case IncidentStatus::open: return "open";
    case IncidentStatus::remediated: return "remediated";
    case IncidentStatus::verified: return "verified";
    case IncidentStatus::closed: return "closed";
  }
  return "?";
}

inline std::string to_string(IncidentKind k) {
  switch (k) {
    case IncidentKind::detection: return "detection";
    case IncidentKind::remediation: return "remediation";
    case IncidentKind::verification: return "verification";
  }
  return "?";
}

struct ImpactedScope {
  std::uint64_t count = 0;
  std::string unit = "records";
};

struct CommitFraction {
  std::uint32_t prevented = 0;
  std::uint32_t total = 0;
  std::string str() const { return std::to_string(prevented) + "/" + std::to_string(total); }
};

struct IncidentMetrics {
  std::uint64_t detection_latency_ms = 0;
  std::uint64_t user_exposure = 0;
  CommitFraction irreversible_commits_prevented;
};

// Evidence that a verification follow-up is an independent re-validation.
struct VerificationEvidence {
  bool revalidation_passed = false;
  std::string verifier_role;
  std::string producer_role;
  std::uint32_t layers_checked = 0;
  std::vector<std::uint64_t> audit_seqs;  // validation_outcome records backing the check
};

struct Incident {
  std::string id;
  IncidentKind kind = IncidentKind::detection;
  std::uint64_t opened_at = 0;
  std::string boundary_point;
  std::string defect_class;
  ImpactedScope impacted_scope;
  IncidentStatus status = IncidentStatus::open;
  std::vector<std::string> resolution_chain;  // starts with the incident's own id
  IncidentMetrics metrics;
  std::optional<std::string> package_id;
  std::optional<std::string> parent;
  std::optional<VerificationEvidence> evidence;
  std::string summary;
};

inline nlohmann::json to_json(const Incident& i) {
  nlohmann::json j{{"id", i.id},
                   {"kind", to_string(i.kind)},
                   {"opened_at", i.opened_at},
                   {"boundary_point", i.boundary_point},
                   {"defect_class", i.defect_class},
                   {"impacted_scope", {{"count", i.impacted_scope.count}, {"unit", i.impacted_scope.unit}}},
                   {"status", to_string(i.status)},
                   {"resolution_chain", i.resolution_chain},
                   {"metrics",
                    {{"detection_latency_ms", i.metrics.detection_latency_ms},
                     {"user_exposure", i.metrics.user_exposure},
                     {"irreversible_commits_prevented", i.metrics.irreversible_commits_prevented.str()}}},
                   {"summary", i.summary}};
  if (i.package_id) j["package_id"] = *i.package_id;
  if (i.parent) j["parent"] = *i.parent;
  if (i.evidence) {
    j["evidence"] = {{"revalidation_passed", i.evidence->revalidation_passed},
                     {"verifier_role", i.evidence->verifier_role},
                     {"producer_role", i.evidence->producer_role},
                     {"layers_checked", i.evidence->layers_checked},
                     {"audit_seqs", i.evidence->audit_seqs}};
  }
  return j;
}

struct DetectionReport {
  std::string boundary_point;
  std::string defect_class;
  ImpactedScope impacted_scope;
  std::uint64_t produced_at = 0;  // producing package's provenance timestamp
  std::uint64_t blocked_at = 0;
  std::uint64_t user_exposure = 0;
  CommitFraction commits_prevented;
  std::optional<std::string> package_id;
  std::string actor = "engine";
};

struct FollowUpReport {
  IncidentKind kind = IncidentKind::remediation;
  std::string parent;
  std::string boundary_point;
  std::string defect_class;
  ImpactedScope impacted_scope;
  std::string summary;
  std::optional<VerificationEvidence> evidence;
  std::optional<std::string> package_id;
  std::string actor = "engine";
};

class IncidentRegistry {
 public:
  IncidentRegistry(AuditLog& audit, EngineClock& clock) : audit_(audit), clock_(clock) {}

  Incident open_incident(const DetectionReport& r) {
    std::lock_guard lock(mu_);
    Incident inc;
    inc.id = next_id();
    inc.kind = IncidentKind::detection;
    inc.opened_at = clock_.now_ms();
    inc.boundary_point = r.boundary_point;
    inc.defect_class = r.defect_class;
    inc.impacted_scope = r.impacted_scope;
    inc.resolution_chain = {inc.id};
    inc.metrics.detection_latency_ms = r.blocked_at >= r.produced_at ? r.blocked_at - r.produced_at : 0;
    inc.metrics.user_exposure = r.user_exposure;
    inc.metrics.irreversible_commits_prevented = r.commits_prevented;
    inc.package_id = r.package_id;
    audit_.append(r.actor, AuditEvent::incident_event, {{"action", "open"}, {"incident", to_json(inc)}});
    incidents_.emplace(inc.id, inc);
    return inc;
  }

  Incident open_follow_up(const FollowUpReport& r) {
    std::lock_guard lock(mu_);
    if (!incidents_.count(r.parent)) throw NotFoundError("unknown incident " + r.parent);
    if (r.kind == IncidentKind::detection) throw Error("follow-up must be remediation or verification");
    Incident inc;
    inc.id = next_id();
    inc.kind = r.kind;
    inc.opened_at = clock_.now_ms();
    inc.boundary_point = r.boundary_point;
    inc.defect_class = r.defect_class;
    inc.impacted_scope = r.impacted_scope;
    inc.resolution_chain = {inc.id};
    inc.parent = r.parent;
    inc.evidence = r.evidence;
    inc.summary = r.summary;
    inc.package_id = r.package_id;
    audit_.append(r.actor, AuditEvent::incident_event, {{"action", "open_follow_up"}, {"incident", to_json(inc)}});
    incidents_.emplace(inc.id, inc);
    return inc;
  }

  // Extends `incident_id`'s resolution chain with `follow_up_id` and moves it
  // along open -> remediated -> verified -> closed. `follow_up_id` may be empty
  // only for the verified -> closed edge.
  Incident link_resolution(const std::string& incident_id, const std::string& follow_up_id,
                           IncidentStatus new_status, const std::string& actor = "engine") {
    std::lock_guard lock(mu_);
    auto it = incidents_.find(incident_id);
    if (it == incidents_.end()) throw NotFoundError("unknown incident " + incident_id);
    Incident& inc = it->second;
    if (!legal_edge(inc.status, new_status)) {
      throw IllegalTransition("incident " + incident_id + ": " + to_string(inc.status) + " -> " +
                              to_string(new_status));
    }
    Incident* follow = nullptr;
    if (!follow_up_id.empty()) {
      auto f = incidents_.find(follow_up_id);
      if (f == incidents_.end()) throw NotFoundError("unknown incident " + follow_up_id);
      follow = &f->second;
      if (follow->parent != incident_id) {
        throw Error("incident " + follow_up_id + " is not a follow-up of " + incident_id);
      }
    }
    if (new_status == IncidentStatus::remediated) {
      if (!follow || follow->kind != IncidentKind::remediation) {
        throw IllegalTransition("remediated requires a linked remediation incident");
      }
    } else if (new_status == IncidentStatus::verified) {
      if (!follow || follow->kind != IncidentKind::verification || !follow->evidence ||
          !follow->evidence->revalidation_passed || follow->evidence->verifier_role.empty() ||
          follow->evidence->verifier_role == follow->evidence->producer_role) {
        throw IllegalTransition("verified requires a linked independent re-validation pass");
      }
    }
    inc.status = new_status;
    if (follow) {
      inc.resolution_chain.push_back(follow->id);
      follow->status = IncidentStatus::closed;
    }
    audit_.append(actor, AuditEvent::incident_event,
                  {{"action", "link_resolution"},
                   {"incident", incident_id},
                   {"follow_up", follow_up_id},
                   {"status", to_string(new_status)}});
    return inc;
  }

  std::optional<Incident> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = incidents_.find(id);
    if (it == incidents_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Incident> list() const {
    std::lock_guard lock(mu_);
    std::vector<Incident> out;
    for (const auto& [_, inc] : incidents_) out.push_back(inc);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return incidents_.size();
  }

 private:
  static bool legal_edge(IncidentStatus from, IncidentStatus to) {
    return (from == IncidentStatus::open && to == IncidentStatus::remediated) ||
           (from == IncidentStatus::remediated && to == IncidentStatus::verified) ||
           (from == IncidentStatus::verified && to == IncidentStatus::closed);
  }

  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ISS-%03u", ++counter_);
    return buf;
  }

  AuditLog& audit_;
  EngineClock& clock_;
  mutable std::mutex mu_;
  unsigned counter_ = 0;
  std::map<std::string, Incident> incidents_;
};

}  // namespace boundarykit
