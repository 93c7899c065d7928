#pragma once

// Parsing for the payloads validators inspect: GeoJSON FeatureCollections of
// point features and CSV tables with a header row.

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/errors.hpp"

namespace boundarykit {

enum class PayloadFormat { geojson, csv, json };

NLOHMANN_JSON_SERIALIZE_ENUM(PayloadFormat, {{PayloadFormat::geojson, "geojson"},
                                             {PayloadFormat::csv, "csv"},
                                             {PayloadFormat::json, "json"}})

// Shortest round-trip text for a double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct GeoFeature {
  std::string id;
  std::string geometry_type;  // empty when geometry is null
  std::optional<double> lon;
  std::optional<double> lat;
  nlohmann::json properties = nlohmann::json::object();
};

struct GeoPayload {
  nlohmann::json members = nlohmann::json::object();  // top-level members other than features
  std::vector<GeoFeature> features;
};

inline std::string feature_record_id(const nlohmann::json& feature, std::size_t index, const std::string& id_field) {
  if (auto it = feature.find("id"); it != feature.end()) {
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
  }
  if (!id_field.empty()) {
    if (auto p = feature.find("properties"); p != feature.end() && p->is_object()) {
      if (auto v = p->find(id_field); v != p->end()) return v->is_string() ? v->get<std::string>() : v->dump();
    }
  }
  return "#" + std::to_string(index);
}

// Structural parse only: semantic checks belong to validators.
inline GeoPayload parse_geojson(std::string_view text, const std::string& id_field = "station_id") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("geojson: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw ParseError("geojson: not a FeatureCollection");
  }
  auto feats = doc.find("features");
  if (feats == doc.end() || !feats->is_array()) throw ParseError("geojson: 'features' must be an array");
  GeoPayload out;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "features") out.members[it.key()] = it.value();
  }
  out.features.reserve(feats->size());
  std::size_t index = 0;
  for (const auto& f : *feats) {
    if (!f.is_object() || f.value("type", "") != "Feature") {
      throw ParseError("geojson: feature " + std::to_string(index) + " is not a Feature");
    }
    GeoFeature g;
    g.id = feature_record_id(f, index, id_field);
    if (auto p = f.find("properties"); p != f.end() && p->is_object()) g.properties = *p;
    if (auto geom = f.find("geometry"); geom != f.end() && geom->is_object()) {
      g.geometry_type = geom->value("type", "");
      if (g.geometry_type == "Point") {
        auto c = geom->find("coordinates");
        if (c == geom->end() || !c->is_array() || c->size() < 2 || !(*c)[0].is_number() || !(*c)[1].is_number()) {
          throw ParseError("geojson: feature " + g.id + " has malformed Point coordinates");
        }
        g.lon = (*c)[0].get<double>();
        g.lat = (*c)[1].get<double>();
      }
    }
    out.features.push_back(std::move(g));
    ++index;
  }
  return out;
}

struct TabularPayload {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }
};

// RFC 4180-style CSV: quoted fields, doubled quotes, CRLF or LF.
inline TabularPayload parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    lines.push_back(std::move(row));
  }
  if (lines.empty()) throw ParseError("csv: missing header row");
  TabularPayload out;
  out.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() == 1 && lines[i][0].empty()) continue;  // blank line
    if (lines[i].size() != out.header.size()) {
      throw ParseError("csv: row " + std::to_string(i) + " has " + std::to_string(lines[i].size()) +
                       " fields, header has " + std::to_string(out.header.size()));
    }
    out.rows.push_back(std::move(lines[i]));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace boundarykit
