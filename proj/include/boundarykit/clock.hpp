#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <string>

namespace boundarykit {

// Engine time in milliseconds on a monotonic source. Audit records, package
// provenance and incident latencies all use this; wall time is only an
// annotation anchored at `epoch_wall()`.
class EngineClock {
 public:
  virtual ~EngineClock() = default;
  virtual std::uint64_t now_ms() = 0;
  // Wall-clock time (unix ms) corresponding to engine time 0.
  virtual std::int64_t epoch_wall_ms() const = 0;
};

class SteadyClock final : public EngineClock {
 public:
  SteadyClock()
      : start_(std::chrono::steady_clock::now()),
        wall_(std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count()) {}

  std::uint64_t now_ms() override {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - start_)
                                          .count());
  }
  std::int64_t epoch_wall_ms() const override { return wall_; }

 private:
  std::chrono::steady_clock::time_point start_;
  std::int64_t wall_;
};

// Deterministic clock for replays and tests: every read advances by `step_ms`.
class ManualClock final : public EngineClock {
 public:
  explicit ManualClock(std::uint64_t step_ms = 1, std::uint64_t start_ms = 0)
      : now_(start_ms), step_(step_ms) {}

  std::uint64_t now_ms() override { return now_.fetch_add(step_); }
  std::int64_t epoch_wall_ms() const override { return 0; }

  void advance(std::uint64_t ms) { now_.fetch_add(ms); }
  std::uint64_t peek() const { return now_.load(); }

 private:
  std::atomic<std::uint64_t> now_;
  std::uint64_t step_;
};

}  // namespace boundarykit
