#pragma once

// Composition math for multi-stage pipelines and a Monte Carlo harness that
// checks it.
//
//   end-to-end success of n stages each succeeding w.p. p:   p^n
//   escape through k independent layers each catching w.p. q: (1-q)^k

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/errors.hpp"

namespace boundarykit {

struct ReliabilityParams {
  double p = 1.0;       // per-stage success probability
  std::uint32_t n = 1;  // stage count
  double q = 0.0;       // per-layer catch probability
  std::uint32_t k = 0;  // layer count

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("reliability: p must lie in [0,1]");
    if (!(q >= 0.0 && q <= 1.0)) throw Error("reliability: q must lie in [0,1]");
    if (n < 1) throw Error("reliability: n must be >= 1");
  }
};

inline double chain_reliability(const ReliabilityParams& params) {
  params.validate();
  return std::pow(params.p, static_cast<double>(params.n));
}

inline double escape_probability(const ReliabilityParams& params) {
  params.validate();
  return std::pow(1.0 - params.q, static_cast<double>(params.k));
}

struct SimulationConfig {
  ReliabilityParams params;
  std::uint64_t trials = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// An empirical Bernoulli rate next to its closed form, with the binomial
// 3-sigma band around the closed form.
struct RateEstimate {
  std::uint64_t hits = 0;
  std::uint64_t trials = 0;
  double empirical = 0.0;
  double analytic = 0.0;
  double sigma = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  bool within_3sigma = true;

  static RateEstimate make(std::uint64_t hits, std::uint64_t trials, double analytic) {
    RateEstimate r;
    r.hits = hits;
    r.trials = trials;
    r.analytic = analytic;
    if (trials == 0) return r;  // no observations: vacuously consistent
    r.empirical = static_cast<double>(hits) / static_cast<double>(trials);
    r.sigma = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(trials));
    r.band_lo = analytic - 3.0 * r.sigma;
    r.band_hi = analytic + 3.0 * r.sigma;
    // Tiny slack so that exact cases (sigma == 0) compare robustly.
    r.within_3sigma = std::abs(r.empirical - analytic) <= 3.0 * r.sigma + 1e-12;
    return r;
  }
};

struct SimulationReport {
  SimulationConfig config;
  RateEstimate end_to_end_success;  // over all trials
  RateEstimate escape;              // over trials with >= 1 injected error
  std::uint64_t error_bearing = 0;
  std::uint64_t caught = 0;
  std::uint64_t escaped = 0;
};

namespace detail {

// Per-trial stream seed; makes results independent of thread scheduling.
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t{words[0]} << 32) | words[1];
}

struct TrialCounts {
  std::uint64_t success = 0;
  std::uint64_t error_bearing = 0;
  std::uint64_t escaped = 0;
};

inline TrialCounts simulate_range(const SimulationConfig& cfg, std::uint64_t begin, std::uint64_t end) {
  TrialCounts c;
  const auto& prm = cfg.params;
  std::bernoulli_distribution stage_error(1.0 - prm.p);
  std::bernoulli_distribution layer_catch(prm.q);
  for (std::uint64_t t = begin; t < end; ++t) {
    std::mt19937_64 rng(trial_seed(cfg.seed, t));
    bool errored = false;
    for (std::uint32_t s = 0; s < prm.n; ++s) {
      if (stage_error(rng)) errored = true;
    }
    if (!errored) {
      ++c.success;
      continue;
    }
    ++c.error_bearing;
    bool caught = false;
    for (std::uint32_t l = 0; l < prm.k && !caught; ++l) caught = layer_catch(rng);
    if (!caught) ++c.escaped;
  }
  return c;
}

}  // namespace detail

// Runs `trials` synthetic pipelines: n stages with independent Bernoulli(1-p)
// error injection, then k independent Bernoulli(q) catch layers for trials
// that carry an error. Reproducible for a fixed seed regardless of threads.
inline SimulationReport run_simulation(const SimulationConfig& cfg) {
  cfg.params.validate();
  if (cfg.trials < 1) throw Error("simulation: trials must be >= 1");
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, cfg.trials));
  std::vector<detail::TrialCounts> parts(threads);
  {
    std::vector<std::jthread> pool;
    const std::uint64_t chunk = cfg.trials / threads;
    for (unsigned i = 0; i < threads; ++i) {
      const std::uint64_t b = i * chunk;
      const std::uint64_t e = i + 1 == threads ? cfg.trials : b + chunk;
      pool.emplace_back([&, i, b, e] { parts[i] = detail::simulate_range(cfg, b, e); });
    }
  }
  detail::TrialCounts total;
  for (const auto& p : parts) {
    total.success += p.success;
    total.error_bearing += p.error_bearing;
    total.escaped += p.escaped;
  }
  SimulationReport rep;
  rep.config = cfg;
  rep.end_to_end_success = RateEstimate::make(total.success, cfg.trials, chain_reliability(cfg.params));
  rep.escape = RateEstimate::make(total.escaped, total.error_bearing, escape_probability(cfg.params));
  rep.error_bearing = total.error_bearing;
  rep.escaped = total.escaped;
  rep.caught = total.error_bearing - total.escaped;
  return rep;
}

inline nlohmann::json to_json(const RateEstimate& r) {
  return {{"hits", r.hits},         {"trials", r.trials},   {"empirical", r.empirical},
          {"analytic", r.analytic}, {"sigma", r.sigma},     {"band_lo", r.band_lo},
          {"band_hi", r.band_hi},   {"within_3sigma", r.within_3sigma}};
}

inline nlohmann::json to_json(const SimulationReport& r) {
  const auto& p = r.config.params;
  return {{"params", {{"p", p.p}, {"n", p.n}, {"q", p.q}, {"k", p.k}}},
          {"trials", r.config.trials},
          {"seed", r.config.seed},
          {"end_to_end_success", to_json(r.end_to_end_success)},
          {"escape", to_json(r.escape)},
          {"error_bearing", r.error_bearing},
          {"caught", r.caught},
          {"escaped", r.escaped}};
}

inline std::string to_csv(const SimulationReport& r) {
  std::ostringstream os;
  os.precision(10);
  const auto& p = r.config.params;
  os << "metric,p,n,q,k,trials,seed,hits,denominator,empirical,analytic,sigma,band_lo,band_hi,within_3sigma\n";
  auto row = [&](const char* name, const RateEstimate& e) {
    os << name << ',' << p.p << ',' << p.n << ',' << p.q << ',' << p.k << ',' << r.config.trials << ','
       << r.config.seed << ',' << e.hits << ',' << e.trials << ',' << e.empirical << ',' << e.analytic << ','
       << e.sigma << ',' << e.band_lo << ',' << e.band_hi << ',' << (e.within_3sigma ? "true" : "false") << '\n';
  };
  row("end_to_end_success", r.end_to_end_success);
  row("escape_rate", r.escape);
  return os.str();
}

}  // namespace boundarykit
