#pragma once

// Scripted stand-ins for agents. Outputs are well-formed by construction;
// injected faults are the plausible-but-wrong kind that pass a producer's own
// structural check and only deterministic boundary validation catches.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/errors.hpp"
#include "boundarykit/payload.hpp"

namespace boundarykit {

enum class ErrorClass { coordinate_swap, schema_drift, wrong_dataset, boundary_crossing };

NLOHMANN_JSON_SERIALIZE_ENUM(ErrorClass, {{ErrorClass::coordinate_swap, "coordinate_swap"},
                                          {ErrorClass::schema_drift, "schema_drift"},
                                          {ErrorClass::wrong_dataset, "wrong_dataset"},
                                          {ErrorClass::boundary_crossing, "boundary_crossing"}})

inline constexpr ErrorClass kAllErrorClasses[] = {ErrorClass::coordinate_swap, ErrorClass::schema_drift,
                                                  ErrorClass::wrong_dataset, ErrorClass::boundary_crossing};

inline std::string to_string(ErrorClass c) { return nlohmann::json(c).get<std::string>(); }

inline ErrorClass error_class_from_string(const std::string& s) {
  for (auto c : kAllErrorClasses) {
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown error class '" + s + "'");
}

struct FaultConfig {
  double error_rate = 0.0;  // probability that a produce() step is faulty
  ErrorClass error_class = ErrorClass::coordinate_swap;
  std::uint64_t seed = 0;
};

struct ProducedArtifact {
  std::string name;
  PayloadFormat format = PayloadFormat::geojson;
  std::string content;
};

struct StageInput {
  std::string run_id;
  std::string stage;
  std::vector<ProducedArtifact> artifacts;
  std::map<std::string, std::string> context;
  std::vector<std::string> knowledge_context;  // retrieved node ids
};

class AgentStub {
 public:
  AgentStub(std::string id, std::string role) : id_(std::move(id)), role_(std::move(role)) {}
  virtual ~AgentStub() = default;

  const std::string& id() const { return id_; }
  const std::string& role() const { return role_; }

  virtual std::vector<ProducedArtifact> produce(const StageInput& input) = 0;

  // The producer's own output predicate. Default: every artifact parses.
  virtual bool self_check(const std::vector<ProducedArtifact>& out) const {
    try {
      for (const auto& a : out) {
        if (a.format == PayloadFormat::geojson) {
          if (parse_geojson(a.content).features.empty()) return false;
        } else if (a.format == PayloadFormat::csv) {
          parse_csv(a.content);
        } else {
          [[maybe_unused]] auto doc = nlohmann::json::parse(a.content);
        }
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  // Fault class injected on the most recent produce(), if any.
  std::optional<ErrorClass> last_fault() const { return last_fault_; }

 protected:
  std::optional<ErrorClass> last_fault_;

 private:
  std::string id_;
  std::string role_;
};

// Replays a fixed list of outputs, one entry per produce() call (the last
// entry repeats).
class ScriptedStub : public AgentStub {
 public:
  ScriptedStub(std::string id, std::string role, std::vector<std::vector<ProducedArtifact>> script)
      : AgentStub(std::move(id), std::move(role)), script_(std::move(script)) {}

  std::vector<ProducedArtifact> produce(const StageInput&) override {
    if (script_.empty()) return {};
    const auto& out = script_[std::min(step_, script_.size() - 1)];
    ++step_;
    return out;
  }

 private:
  std::vector<std::vector<ProducedArtifact>> script_;
  std::size_t step_ = 0;
};

// Passes its inputs through unchanged; stands in for roles that review or
// publish rather than produce.
class PassThroughStub : public AgentStub {
 public:
  using AgentStub::AgentStub;
  std::vector<ProducedArtifact> produce(const StageInput& input) override { return input.artifacts; }
};

// ---------------------------------------------------------------------------
// Synthetic station network

struct StationTableSpec {
  std::uint32_t stations = 2452;
  std::vector<std::string> layers = {"stage", "discharge", "groundwater", "rainfall", "water_quality"};
  std::uint64_t seed = 7;
  // Sampling box, kept inside the Florida bounds used by the fixture gates.
  double lon_min = -87.3, lon_max = -79.7;
  double lat_min = 24.7, lat_max = 30.8;
  // Network reference point carried in every row's LAT/LON columns.
  double ref_lat = 25.7617, ref_lon = -80.1918;
};

// CSV with per-station X_COORD/Y_COORD (lon/lat) and the network reference
// point repeated in LAT/LON. Picking the wrong pair is the coordinate field
// mismatch fault.
inline std::string make_station_table(const StationTableSpec& spec) {
  if (spec.layers.empty()) throw Error("station table needs at least one layer");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> lon(spec.lon_min, spec.lon_max);
  std::uniform_real_distribution<double> lat(spec.lat_min, spec.lat_max);
  std::string out = "STATION_ID,NAME,LAYER,X_COORD,Y_COORD,LAT,LON\n";
  char buf[256];
  const auto nl = spec.layers.size();
  for (std::uint32_t i = 0; i < spec.stations; ++i) {
    // Contiguous blocks per layer; earlier layers take the remainder.
    const std::size_t base = spec.stations / nl, extra = spec.stations % nl;
    std::size_t layer = 0, start = 0;
    for (; layer < nl; ++layer) {
      const std::size_t size = base + (layer < extra ? 1 : 0);
      if (i < start + size) break;
      start += size;
    }
    const double x = lon(rng), y = lat(rng);
    std::snprintf(buf, sizeof buf, "SF%05u,Station %u,%s,%.6f,%.6f,%.4f,%.4f\n", i + 1, i + 1,
                  spec.layers[layer].c_str(), x, y, spec.ref_lat, spec.ref_lon);
    out += buf;
  }
  return out;
}

// Converts the station table into one GeoJSON FeatureCollection per layer.
// A faulty step applies exactly one error class to every layer it emits.
class StationLayerStub : public AgentStub {
 public:
  StationLayerStub(std::string id, std::string role, std::string dataset_id,
                   std::optional<FaultConfig> fault = std::nullopt)
      : AgentStub(std::move(id), std::move(role)),
        dataset_id_(std::move(dataset_id)),
        fault_(fault),
        rng_(fault ? fault->seed : 0) {}

  std::vector<ProducedArtifact> produce(const StageInput& input) override {
    last_fault_.reset();
    if (fault_) {
      std::bernoulli_distribution draw(fault_->error_rate);
      if (draw(rng_)) last_fault_ = fault_->error_class;
    }
    const ProducedArtifact* table = nullptr;
    for (const auto& a : input.artifacts) {
      if (a.format == PayloadFormat::csv) table = &a;
    }
    if (!table) throw Error("station layer stub: no CSV station table among inputs");
    const TabularPayload t = parse_csv(table->content);
    auto col = [&](const char* name) {
      auto c = t.column(name);
      if (!c) throw ParseError(std::string("station table: missing column ") + name);
      return *c;
    };
    const std::size_t c_id = col("STATION_ID"), c_name = col("NAME"), c_layer = col("LAYER");
    // The faulty producer reads the LAT/LON pair instead of the per-station
    // X_COORD/Y_COORD pair.
    const bool swap = last_fault_ == ErrorClass::coordinate_swap;
    const std::size_t c_lon = swap ? col("LON") : col("X_COORD");
    const std::size_t c_lat = swap ? col("LAT") : col("Y_COORD");
    const std::string id_key = last_fault_ == ErrorClass::schema_drift ? "StationID" : "station_id";
    const std::string dataset =
        last_fault_ == ErrorClass::wrong_dataset ? dataset_id_ + "-legacy" : dataset_id_;

    std::vector<std::string> order;
    std::map<std::string, nlohmann::json> features;
    std::size_t shifted = 0;
    for (const auto& row : t.rows) {
      const std::string& layer = row[c_layer];
      if (!features.count(layer)) {
        order.push_back(layer);
        features[layer] = nlohmann::json::array();
      }
      auto lon = parse_double(row[c_lon]);
      auto lat = parse_double(row[c_lat]);
      if (!lon || !lat) throw ParseError("station table: bad coordinate for " + row[c_id]);
      if (last_fault_ == ErrorClass::boundary_crossing && features[layer].size() % 7 == 0) {
        // Every seventh station per layer lands north of the state line.
        *lat = 31.25 + 0.01 * static_cast<double>(shifted++ % 50);
      }
      features[layer].push_back({{"type", "Feature"},
                                 {"id", row[c_id]},
                                 {"geometry", {{"type", "Point"}, {"coordinates", {*lon, *lat}}}},
                                 {"properties", {{id_key, row[c_id]}, {"name", row[c_name]}, {"layer", layer}}}});
    }
    std::vector<ProducedArtifact> out;
    for (const auto& layer : order) {
      nlohmann::json doc{{"type", "FeatureCollection"},
                         {"dataset_id", dataset},
                         {"layer", layer},
                         {"features", std::move(features[layer])}};
      out.push_back({layer + ".geojson", PayloadFormat::geojson, doc.dump()});
    }
    return out;
  }

  // Structural self-check: a FeatureCollection of Point features with two
  // finite coordinates each.
  bool self_check(const std::vector<ProducedArtifact>& out) const override {
    if (out.empty()) return false;
    try {
      for (const auto& a : out) {
        const GeoPayload g = parse_geojson(a.content);
        if (g.features.empty()) return false;
        for (const auto& f : g.features) {
          if (f.geometry_type != "Point" || !f.lon || !f.lat) return false;
          if (!std::isfinite(*f.lon) || !std::isfinite(*f.lat)) return false;
        }
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  const std::optional<FaultConfig>& fault() const { return fault_; }

 private:
  std::string dataset_id_;
  std::optional<FaultConfig> fault_;
  std::mt19937_64 rng_;
};

using StubMap = std::map<std::string, std::shared_ptr<AgentStub>>;

}  // namespace boundarykit
