#pragma once

// Append-only, hash-chained audit log.
//
// Every record hashes (seq, at, actor, event, payload_digest, prev_hash); the
// genesis record chains onto the all-zero hash. When file-backed, records are
// persisted as 4-byte big-endian length + compact JSON body behind a one-line
// header naming the hash function, and a sparse `<log>.idx` file maps every
// kIndexStride-th seq to its byte offset.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/clock.hpp"
#include "boundarykit/digest.hpp"
#include "boundarykit/errors.hpp"

namespace boundarykit {

enum class AuditEvent {
  handoff_transition,
  validation_outcome,
  capability_denial,
  approval,
  incident_event,
  workflow_event,
};

inline constexpr std::array<std::string_view, 6> kAuditEventNames = {
    "handoff_transition", "validation_outcome", "capability_denial",
    "approval",           "incident_event",     "workflow_event"};

inline std::string_view to_string(AuditEvent e) { return kAuditEventNames[static_cast<std::size_t>(e)]; }

inline std::optional<AuditEvent> audit_event_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kAuditEventNames.size(); ++i) {
    if (kAuditEventNames[i] == s) return static_cast<AuditEvent>(i);
  }
  return std::nullopt;
}

struct AuditRecord {
  std::uint64_t seq = 0;
  std::uint64_t at = 0;  // engine-clock ms
  std::string actor;
  AuditEvent event = AuditEvent::workflow_event;
  std::string payload;  // canonical JSON text
  std::string payload_digest;
  std::string prev_hash;
  std::string hash;

  nlohmann::json payload_json() const { return nlohmann::json::parse(payload); }
};

inline std::string audit_record_hash(std::uint64_t seq, std::uint64_t at, std::string_view actor,
                                     AuditEvent event, std::string_view payload_digest,
                                     std::string_view prev_hash) {
  nlohmann::json tuple = nlohmann::json::array(
      {seq, at, std::string(actor), std::string(to_string(event)), std::string(payload_digest),
       std::string(prev_hash)});
  return sha256_hex(tuple.dump());
}

inline nlohmann::json to_json(const AuditRecord& r) {
  return nlohmann::json{{"seq", r.seq},
                        {"at", r.at},
                        {"actor", r.actor},
                        {"event", std::string(to_string(r.event))},
                        {"payload", r.payload},
                        {"payload_digest", r.payload_digest},
                        {"prev_hash", r.prev_hash},
                        {"hash", r.hash}};
}

// Strict decode: exactly the eight fields with the expected types.
inline AuditRecord audit_record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 8) throw ParseError("audit record: expected 8-field object");
  auto str = [&](const char* k) -> std::string {
    auto it = j.find(k);
    if (it == j.end() || !it->is_string()) throw ParseError(std::string("audit record: bad field ") + k);
    return it->get<std::string>();
  };
  auto num = [&](const char* k) -> std::uint64_t {
    auto it = j.find(k);
    if (it == j.end() || !it->is_number_unsigned()) throw ParseError(std::string("audit record: bad field ") + k);
    return it->get<std::uint64_t>();
  };
  AuditRecord r;
  r.seq = num("seq");
  r.at = num("at");
  r.actor = str("actor");
  auto ev = audit_event_from_string(str("event"));
  if (!ev) throw ParseError("audit record: unknown event");
  r.event = *ev;
  r.payload = str("payload");
  r.payload_digest = str("payload_digest");
  r.prev_hash = str("prev_hash");
  r.hash = str("hash");
  return r;
}

struct ChainVerdict {
  bool valid = true;
  std::optional<std::uint64_t> first_bad_seq;
  std::string reason;

  static ChainVerdict ok() { return {}; }
  static ChainVerdict bad(std::uint64_t seq, std::string why) { return {false, seq, std::move(why)}; }
};

// Recomputes every payload digest and record hash and checks the links.
// Records are identified positionally: the i-th record must carry seq i+1.
inline ChainVerdict verify_chain(std::span<const AuditRecord> records) {
  std::string_view prev = zero_hash();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::uint64_t expected = i + 1;
    if (r.seq != expected) return ChainVerdict::bad(expected, "sequence gap");
    if (r.prev_hash != prev) return ChainVerdict::bad(expected, "prev_hash mismatch");
    if (sha256_hex(r.payload) != r.payload_digest) return ChainVerdict::bad(expected, "payload digest mismatch");
    if (audit_record_hash(r.seq, r.at, r.actor, r.event, r.payload_digest, r.prev_hash) != r.hash) {
      return ChainVerdict::bad(expected, "record hash mismatch");
    }
    prev = r.hash;
  }
  return ChainVerdict::ok();
}

namespace detail {

inline std::string audit_header(std::int64_t epoch_wall_ms) {
  return "BKAUDIT1 " + std::string(kHashAlgorithm) + " epoch_wall_ms=" + std::to_string(epoch_wall_ms) + "\n";
}

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline std::string frame_record(const AuditRecord& r) {
  std::string body = to_json(r).dump();
  std::string out;
  out.reserve(body.size() + 4);
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  out += body;
  return out;
}

}  // namespace detail

// Result of decoding a persisted log. `framing_error_seq` is set when the
// byte stream stops decoding at that (positional) record.
struct PersistedLog {
  std::string header;
  std::vector<AuditRecord> records;
  std::optional<std::uint64_t> framing_error_seq;
  std::string framing_error;
};

inline PersistedLog decode_log_bytes(std::string_view bytes) {
  PersistedLog out;
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos || bytes.substr(0, 9) != "BKAUDIT1 ") {
    out.framing_error_seq = 1;
    out.framing_error = "malformed header";
    return out;
  }
  out.header = std::string(bytes.substr(0, nl));
  if (out.header.find(std::string(" ") + std::string(kHashAlgorithm) + " ") == std::string::npos) {
    out.framing_error_seq = 1;
    out.framing_error = "unsupported hash in header";
    return out;
  }
  std::size_t pos = nl + 1;
  while (pos < bytes.size()) {
    const std::uint64_t expected = out.records.size() + 1;
    if (bytes.size() - pos < 4) {
      out.framing_error_seq = expected;
      out.framing_error = "truncated length prefix";
      return out;
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    const std::uint32_t len = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                              (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    pos += 4;
    if (len > bytes.size() - pos) {
      out.framing_error_seq = expected;
      out.framing_error = "length prefix exceeds file";
      return out;
    }
    try {
      const std::string_view body = bytes.substr(pos, len);
      AuditRecord r = audit_record_from_json(nlohmann::json::parse(body));
      // Only the canonical encoding is accepted, so no byte can change
      // without changing what decodes.
      if (to_json(r).dump() != body) throw ParseError("non-canonical encoding");
      out.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.framing_error_seq = expected;
      out.framing_error = std::string("undecodable record: ") + e.what();
      return out;
    }
    pos += len;
  }
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditStorageError("cannot open audit log " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Verifies a persisted log: decoding failures and chain failures both report
// the earliest offending record.
inline ChainVerdict verify_persisted_bytes(std::string_view bytes) {
  PersistedLog log = decode_log_bytes(bytes);
  ChainVerdict chain = verify_chain(log.records);
  if (!chain.valid) return chain;
  if (log.framing_error_seq) return ChainVerdict::bad(*log.framing_error_seq, log.framing_error);
  return ChainVerdict::ok();
}

class AuditLog {
 public:
  static constexpr std::uint64_t kIndexStride = 64;

  explicit AuditLog(EngineClock& clock, std::optional<std::filesystem::path> file = std::nullopt)
      : clock_(clock), file_(std::move(file)) {
    if (!file_) return;
    std::error_code ec;
    if (std::filesystem::exists(*file_, ec) && std::filesystem::file_size(*file_, ec) > 0) {
      PersistedLog existing = decode_log_bytes(read_file_bytes(*file_));
      if (existing.framing_error_seq) {
        throw AuditStorageError("existing audit log is corrupt at seq " +
                                std::to_string(*existing.framing_error_seq) + ": " + existing.framing_error);
      }
      records_ = std::move(existing.records);
      offset_ = std::filesystem::file_size(*file_);
      out_.open(*file_, std::ios::binary | std::ios::app);
    } else {
      out_.open(*file_, std::ios::binary | std::ios::trunc);
      const std::string header = detail::audit_header(clock_.epoch_wall_ms());
      out_ << header;
      out_.flush();
      offset_ = header.size();
      std::ofstream idx(index_path(), std::ios::trunc);
    }
    if (!out_) throw AuditStorageError("cannot open audit log " + file_->string());
  }

  AuditLog(const AuditLog&) = delete;
  AuditLog& operator=(const AuditLog&) = delete;

  AuditRecord append(std::string actor, AuditEvent event, const nlohmann::json& payload) {
    std::lock_guard lock(mu_);
    AuditRecord r;
    r.seq = records_.size() + 1;
    r.at = clock_.now_ms();
    r.actor = std::move(actor);
    r.event = event;
    r.payload = payload.dump();
    r.payload_digest = sha256_hex(r.payload);
    r.prev_hash = records_.empty() ? zero_hash() : records_.back().hash;
    r.hash = audit_record_hash(r.seq, r.at, r.actor, r.event, r.payload_digest, r.prev_hash);
    if (file_) persist(r);
    records_.push_back(r);
    return r;
  }

  std::vector<AuditRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  // Records with seq >= from_seq, at most `limit` of them.
  std::vector<AuditRecord> range(std::uint64_t from_seq, std::size_t limit) const {
    std::lock_guard lock(mu_);
    std::vector<AuditRecord> out;
    const std::size_t start = from_seq == 0 ? 0 : static_cast<std::size_t>(from_seq - 1);
    for (std::size_t i = start; i < records_.size() && out.size() < limit; ++i) out.push_back(records_[i]);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  std::size_t count(AuditEvent e) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [e](const AuditRecord& r) { return r.event == e; }));
  }

  ChainVerdict verify() const {
    auto snap = snapshot();
    return verify_chain(snap);
  }

  // Verifies what is on disk, or the in-memory chain when not file-backed.
  ChainVerdict verify_persisted() const {
    if (!file_) return verify();
    std::lock_guard lock(mu_);
    return verify_persisted_bytes(read_file_bytes(*file_));
  }

  const std::optional<std::filesystem::path>& file() const { return file_; }
  std::filesystem::path index_path() const { return file_ ? std::filesystem::path(file_->string() + ".idx") : std::filesystem::path{}; }

 private:
  void persist(const AuditRecord& r) {
    const std::string framed = detail::frame_record(r);
    out_.write(framed.data(), static_cast<std::streamsize>(framed.size()));
    out_.flush();
    if (!out_) throw AuditStorageError("audit append failed at seq " + std::to_string(r.seq));
    if ((r.seq - 1) % kIndexStride == 0) {
      std::ofstream idx(index_path(), std::ios::app);
      idx << r.seq << ' ' << offset_ << '\n';
      if (!idx) throw AuditStorageError("audit index append failed at seq " + std::to_string(r.seq));
    }
    offset_ += framed.size();
  }

  EngineClock& clock_;
  std::optional<std::filesystem::path> file_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
  mutable std::mutex mu_;
  std::vector<AuditRecord> records_;
};

// Reads a persisted log file without attaching an appender.
inline PersistedLog load_log_file(const std::filesystem::path& path) { return decode_log_bytes(read_file_bytes(path)); }

}  // namespace boundarykit
