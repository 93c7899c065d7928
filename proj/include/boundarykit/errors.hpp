#pragma once

#include <stdexcept>
#include <string>

namespace boundarykit {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input document could not be parsed (bundle, config, payload).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Two artifacts/roles/etc. share an id. `id()` names the conflicting id.
class DuplicateIdError : public Error {
 public:
  DuplicateIdError(std::string what_kind, std::string id)
      : Error("duplicate " + what_kind + " id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// A reference that must resolve does not. `missing_id()` names the target.
class DanglingReferenceError : public Error {
 public:
  DanglingReferenceError(std::string what_kind, std::string owner, std::string missing)
      : Error("dangling " + what_kind + " reference from '" + owner + "' to '" + missing + "'"),
        kind_(std::move(what_kind)),
        missing_(std::move(missing)) {}
  const std::string& kind() const noexcept { return kind_; }
  const std::string& missing_id() const noexcept { return missing_; }

 private:
  std::string kind_;
  std::string missing_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Role spec violates a role-kind invariant, or re-uses an id.
class RegistrationError : public Error {
 public:
  using Error::Error;
};

// A governance check denied the action. The denial has already been audited.
class CapabilityDenied : public Error {
 public:
  CapabilityDenied(std::string reason, const std::string& detail)
      : Error("capability denied (" + reason + "): " + detail), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

// State machine (handoff phase, incident status) refused an edge.
class IllegalTransition : public Error {
 public:
  using Error::Error;
};

// Workflow definition does not validate against the deployment.
class DefinitionError : public Error {
 public:
  using Error::Error;
};

// Audit storage failed. The engine must halt.
class AuditStorageError : public Error {
 public:
  using Error::Error;
};

}  // namespace boundarykit
