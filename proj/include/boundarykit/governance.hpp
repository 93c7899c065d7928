#pragma once

// Default-deny capability matrix with flat zone isolation.
//
// Role-kind rules are enforced at registration, so a role that exists is
// always well-formed; `check` is then a pure lookup plus zone equality.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/audit.hpp"
#include "boundarykit/errors.hpp"

namespace boundarykit {

enum class Capability {
  read_working,
  write_working,
  run_validation,
  publish_external,
  route_handoff,
  approve_handoff,
  read_audit,
};

inline constexpr std::array<std::string_view, 7> kCapabilityNames = {
    "read_working",  "write_working",   "run_validation", "publish_external",
    "route_handoff", "approve_handoff", "read_audit"};

inline constexpr std::array<Capability, 7> kAllCapabilities = {
    Capability::read_working,  Capability::write_working,   Capability::run_validation,
    Capability::publish_external, Capability::route_handoff, Capability::approve_handoff,
    Capability::read_audit};

inline std::string_view to_string(Capability c) { return kCapabilityNames[static_cast<std::size_t>(c)]; }

inline std::optional<Capability> capability_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kCapabilityNames.size(); ++i) {
    if (kCapabilityNames[i] == s) return static_cast<Capability>(i);
  }
  return std::nullopt;
}

enum class RoleKind { worker, validator, publisher, orchestrator, human_supervisor };

inline constexpr std::array<std::string_view, 5> kRoleKindNames = {"worker", "validator", "publisher",
                                                                   "orchestrator", "human_supervisor"};

inline std::string_view to_string(RoleKind k) { return kRoleKindNames[static_cast<std::size_t>(k)]; }

inline std::optional<RoleKind> role_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kRoleKindNames.size(); ++i) {
    if (kRoleKindNames[i] == s) return static_cast<RoleKind>(i);
  }
  return std::nullopt;
}

struct Zone {
  std::string id;
  std::string description;
};

struct Role {
  std::string id;
  RoleKind kind = RoleKind::worker;
  std::set<Capability> capabilities;
  std::string zone;

  bool holds(Capability c) const { return capabilities.count(c) > 0; }
};

inline nlohmann::json to_json(const Role& r) {
  nlohmann::json caps = nlohmann::json::array();
  for (auto c : r.capabilities) caps.push_back(std::string(to_string(c)));
  return {{"id", r.id}, {"kind", std::string(to_string(r.kind))}, {"capabilities", caps}, {"zone", r.zone}};
}

inline Role role_from_json(const nlohmann::json& j) {
  try {
    Role r;
    r.id = j.at("id").get<std::string>();
    auto kind = role_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("role " + r.id + ": unknown kind");
    r.kind = *kind;
    for (const auto& c : j.at("capabilities")) {
      auto cap = capability_from_string(c.get<std::string>());
      if (!cap) throw ParseError("role " + r.id + ": unknown capability '" + c.get<std::string>() + "'");
      r.capabilities.insert(*cap);
    }
    r.zone = j.at("zone").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("role definition: ") + e.what());
  }
}

enum class DenyReason { unknown_role, capability_missing, zone_violation };

inline std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::unknown_role: return "unknown_role";
    case DenyReason::capability_missing: return "capability_missing";
    case DenyReason::zone_violation: return "zone_violation";
  }
  return "?";
}

struct Decision {
  bool allowed = false;
  std::optional<DenyReason> reason;
  std::optional<std::uint64_t> audit_seq;  // set on deny

  explicit operator bool() const { return allowed; }
};

// Returns the violated rule, or nullopt when the role satisfies its kind.
inline std::optional<std::string> role_invariant_violation(const Role& r) {
  if (r.id.empty()) return "role id must be non-empty";
  if (r.zone.empty()) return "role " + r.id + " must belong to exactly one zone";
  if (r.kind != RoleKind::human_supervisor && r.holds(Capability::approve_handoff)) {
    return "approve_handoff is held only by human_supervisor roles";
  }
  switch (r.kind) {
    case RoleKind::worker:
      if (r.holds(Capability::publish_external)) return "worker roles never hold publish_external";
      break;
    case RoleKind::validator:
      for (auto c : r.capabilities) {
        if (c != Capability::run_validation && c != Capability::read_audit) {
          return "validator roles hold only {run_validation, read_audit}";
        }
      }
      break;
    case RoleKind::publisher:
      if (!r.holds(Capability::publish_external)) return "publisher roles hold publish_external";
      if (r.holds(Capability::route_handoff)) return "publisher roles never hold route_handoff";
      break;
    case RoleKind::orchestrator:
      if (!r.holds(Capability::route_handoff)) return "orchestrator roles hold route_handoff";
      if (r.holds(Capability::publish_external) || r.holds(Capability::write_working)) {
        return "orchestrator roles hold neither publish_external nor write_working";
      }
      break;
    case RoleKind::human_supervisor:
      break;
  }
  return std::nullopt;
}

class Governance {
 public:
  explicit Governance(AuditLog& audit) : audit_(audit) {}

  void register_zone(Zone z) {
    std::unique_lock lock(mu_);
    if (z.id.empty()) throw RegistrationError("zone id must be non-empty");
    if (zones_.count(z.id)) throw DuplicateIdError("zone", z.id);
    zones_.emplace(z.id, std::move(z));
  }

  std::string register_role(const Role& spec) { return install(spec, /*replace=*/false); }

  // The only way to change a registered role's capabilities. Re-runs every
  // role invariant.
  std::string reregister_role(const Role& spec) { return install(spec, /*replace=*/true); }

  Decision check(const std::string& role_id, Capability action, const std::string& resource_zone) const {
    std::shared_lock lock(mu_);
    auto it = roles_.find(role_id);
    if (it == roles_.end()) return deny(role_id, action, resource_zone, DenyReason::unknown_role);
    const Role& role = it->second;
    if (!role.holds(action)) return deny(role_id, action, resource_zone, DenyReason::capability_missing);
    if (resource_zone != role.zone) return deny(role_id, action, resource_zone, DenyReason::zone_violation);
    return Decision{true, std::nullopt, std::nullopt};
  }

  // check() that throws CapabilityDenied on deny.
  void require(const std::string& role_id, Capability action, const std::string& resource_zone) const {
    Decision d = check(role_id, action, resource_zone);
    if (!d) {
      throw CapabilityDenied(std::string(to_string(*d.reason)),
                             role_id + " " + std::string(to_string(action)) + " @" + resource_zone);
    }
  }

  // Audits a denial decided outside the matrix (e.g. publishing a package
  // that never committed). One record per denial, like check().
  std::uint64_t record_denial(const std::string& role_id, Capability action, const std::string& zone,
                              const std::string& reason, const nlohmann::json& detail = nlohmann::json::object()) const {
    nlohmann::json payload{{"role", role_id}, {"action", std::string(to_string(action))}, {"zone", zone}, {"reason", reason}};
    if (!detail.empty()) payload["detail"] = detail;
    return audit_.append(role_id, AuditEvent::capability_denial, payload).seq;
  }

  std::optional<Role> role(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = roles_.find(id);
    if (it == roles_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Role> roles() const {
    std::shared_lock lock(mu_);
    std::vector<Role> out;
    for (const auto& [_, r] : roles_) out.push_back(r);
    return out;
  }

  std::vector<Zone> zones() const {
    std::shared_lock lock(mu_);
    std::vector<Zone> out;
    for (const auto& [_, z] : zones_) out.push_back(z);
    return out;
  }

 private:
  std::string install(const Role& spec, bool replace) {
    if (auto why = role_invariant_violation(spec)) throw RegistrationError(*why);
    std::unique_lock lock(mu_);
    if (!zones_.count(spec.zone)) throw RegistrationError("role " + spec.id + ": unknown zone '" + spec.zone + "'");
    const bool exists = roles_.count(spec.id) > 0;
    if (exists && !replace) throw DuplicateIdError("role", spec.id);
    if (!exists && replace) throw NotFoundError("role " + spec.id + " is not registered");
    roles_[spec.id] = spec;
    audit_.append("governance", AuditEvent::workflow_event,
                  {{"action", replace ? "reregister_role" : "register_role"}, {"role", to_json(spec)}});
    return spec.id;
  }

  Decision deny(const std::string& role_id, Capability action, const std::string& zone, DenyReason why) const {
    auto rec = audit_.append(role_id, AuditEvent::capability_denial,
                             {{"role", role_id},
                              {"action", std::string(to_string(action))},
                              {"zone", zone},
                              {"reason", std::string(to_string(why))}});
    return Decision{false, why, rec.seq};
  }

  AuditLog& audit_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Zone> zones_;
  std::map<std::string, Role> roles_;
};

}  // namespace boundarykit
