#pragma once

// Built-in fixtures: a small station-publication deployment (three roles in
// three zones plus a supervisor and an orchestrator), its clean knowledge
// bundle, and a deliberately corrupted bundle for the integrity linter.
// `export_fixtures` writes the same data to disk for the CLI.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/artifact_store.hpp"
#include "boundarykit/config.hpp"
#include "boundarykit/stubs.hpp"

namespace boundarykit::fixtures {

inline constexpr const char* kDatasetId = "sf2bench-stations";
inline constexpr const char* kWorkflowId = "station-publication";
inline constexpr std::uint32_t kStationCount = 2452;

inline std::vector<Behavior> station_behaviors() {
  return {
      {"beh-fair-metadata", "FAIR metadata", "Every published layer carries dataset identity and layer name.",
       Enforcement::advisory, {"*"}, 1},
      {"beh-coordinate-bounds", "Coordinates inside the study area",
       "Station coordinates must fall inside the Florida bounding box before publication.", Enforcement::hard_gate,
       {"publish-*"}, 2},
      {"beh-doi-confirm", "Confirm before minting", "A supervisor confirms every irreversible publication.",
       Enforcement::human_confirm, {"publish-*"}, 1},
      {"beh-readonly-review", "Read-only review", "Reviewers inspect artifacts and never modify them.",
       Enforcement::hard_gate, {"review-*"}, 1},
  };
}

inline std::vector<KnowledgeNode> station_nodes() {
  return {
      {"kn-sf2bench", NodeKind::dataset, {{"stations", "2452"}, {"layers", "5"}}, {"sf2bench", "stations", "florida"}},
      {"kn-station-network", NodeKind::domain_entity, {{"agency", "water management districts"}},
       {"stations", "hydrology"}},
      {"kn-fdep-gis", NodeKind::system, {{"format", "geojson"}}, {"gis", "florida"}},
      {"kn-wgs84", NodeKind::convention, {{"axis_order", "lon,lat"}, {"x_field", "X_COORD"}, {"y_field", "Y_COORD"}},
       {"crs", "coordinates"}},
      {"kn-dataverse", NodeKind::platform, {{"action", "doi minting"}}, {"publication", "doi"}},
  };
}

inline std::vector<KnowledgeEdge> station_edges() {
  return {
      {"kn-station-network", "kn-sf2bench", Relation::part_of},
      {"kn-sf2bench", "kn-fdep-gis", Relation::references},
      {"kn-wgs84", "prepare-station-layers", Relation::supports_skill},
      {"kn-sf2bench", "prepare-station-layers", Relation::supports_skill},
      {"kn-station-network", "review-station-layers", Relation::supports_skill},
      {"kn-dataverse", "publish-station-layers", Relation::supports_skill},
  };
}

inline std::vector<Skill> station_skills() {
  Skill prepare{"prepare-station-layers",
                "Prepare station layers",
                {"kn-sf2bench", "kn-wgs84"},
                {"beh-fair-metadata"},
                {{"csv_to_geojson", {{"x", "X_COORD"}, {"y", "Y_COORD"}, {"split_by", "LAYER"}}, ""}},
                {{"florida-bounds", "pass"}, {"station-clustering", "pass"}},
                {Capability::read_working, Capability::write_working}};
  Skill review{"review-station-layers",
               "Review station layers",
               {"kn-station-network"},
               {},
               {{"inspect_layers", nlohmann::json::object(), ""}},
               {{"station-schema", "pass"}},
               {Capability::run_validation}};
  Skill publish{"publish-station-layers",
                "Publish station layers",
                {"kn-dataverse"},
                {"beh-doi-confirm"},
                {{"dataverse_publish", {{"mint_doi", true}}, ""}},
                {{"florida-bounds", "pass"}},
                {Capability::publish_external}};
  return {prepare, review, publish};
}

inline BundleDocuments station_bundle_documents() {
  return {station_behaviors(), station_nodes(), station_edges(), station_skills()};
}

inline ArtifactStore station_bundle() { return build_store(station_bundle_documents()); }

// The clean bundle plus eight legacy skills whose references rotted:
//   16 broken skill->behavior references (two per legacy skill),
//   20 missing knowledge links (12 dangling prerequisites, 8 supports_skill
//      edges from retired nodes),
//    3 orphaned nodes.
inline BundleDocuments corrupted_bundle_documents() {
  BundleDocuments d = station_bundle_documents();
  const char* legacy[] = {"convert-shapefile", "mint-doi-legacy", "sync-pelican", "index-gis-archive",
                          "reproject-layers", "harvest-metadata", "stage-rasters", "export-arcgis"};
  for (int i = 0; i < 8; ++i) {
    Skill s;
    s.id = legacy[i];
    s.name = std::string("Legacy ") + legacy[i];
    s.behavior_gates = {"beh-retired-" + std::to_string(2 * i + 1), "beh-retired-" + std::to_string(2 * i + 2)};
    s.prerequisites = {"kn-sf2bench"};
    // 12 dangling prerequisites: the first four skills carry two, the rest one.
    const int dangling = i < 4 ? 2 : 1;
    for (int k = 0; k < dangling; ++k) s.prerequisites.push_back("kn-missing-" + std::to_string(i) + "-" + std::to_string(k));
    s.recipe = {{"legacy_tool", {{"skill", legacy[i]}}, ""}};
    d.skills.push_back(std::move(s));
    d.edges.push_back({"kn-retired-" + std::to_string(i + 1), legacy[i], Relation::supports_skill});
  }
  d.nodes.push_back({"kn-orphan-a", NodeKind::system, {{"note", "decommissioned mirror"}}, {"legacy"}});
  d.nodes.push_back({"kn-orphan-b", NodeKind::platform, {{"note", "retired portal"}}, {"legacy"}});
  d.nodes.push_back({"kn-orphan-c", NodeKind::convention, {{"note", "superseded naming scheme"}}, {"legacy"}});
  d.edges.push_back({"kn-orphan-a", "kn-orphan-b", Relation::references});
  return d;
}

inline ArtifactStore corrupted_bundle() { return build_store(corrupted_bundle_documents()); }

inline nlohmann::json station_validators() {
  return nlohmann::json::array({
      {{"id", "florida-bounds"},
       {"kind", "numeric_range"},
       {"params",
        {{"ranges",
          {{{"field", "lat"}, {"min", 24.5}, {"max", 31.0}}, {{"field", "lon"}, {"min", -87.5}, {"max", -79.5}}}}}}},
      {{"id", "station-clustering"},
       {"kind", "spatial_plausibility"},
       {"params", {{"max_collocated_fraction", 0.5}, {"epsilon", 1e-9}}}},
      {{"id", "station-schema"},
       {"kind", "schema_conformance"},
       {"params",
        {{"geometry_type", "Point"},
         {"required_members", {"dataset_id", "layer"}},
         {"required_properties", {"station_id", "name", "layer"}},
         {"property_types", {{"station_id", "string"}, {"name", "string"}, {"layer", "string"}}}}}},
      {{"id", "dataset-identity"},
       {"kind", "artifact_integrity"},
       {"params", {{"check", "dataset_identity"}, {"field", "dataset_id"}, {"context_key", "expected_dataset"}}}},
  });
}

inline nlohmann::json station_workflow() {
  return {{"id", kWorkflowId},
          {"metadata", {{"scope_unit", "stations"}, {"orchestrator", "conductor"}}},
          {"stages",
           {{{"name", "preparation"}, {"role", "envita"}, {"skill", "prepare-station-layers"}},
            {{"name", "review"}, {"role", "stori-audit"}, {"skill", "review-station-layers"}, {"gate", {"station-schema"}}},
            {{"name", "pre-publication"},
             {"role", "diva"},
             {"skill", "publish-station-layers"},
             {"gate", {"florida-bounds", "station-clustering", "station-schema", "dataset-identity"}},
             {"requires_approval", true},
             {"irreversible", true}}}}};
}

inline nlohmann::json station_roles() {
  return nlohmann::json::array({
      {{"id", "envita"}, {"kind", "worker"}, {"capabilities", {"read_working", "write_working"}}, {"zone", "prep-server"}},
      {{"id", "stori-audit"}, {"kind", "validator"}, {"capabilities", {"run_validation", "read_audit"}}, {"zone", "pipeline-server"}},
      {{"id", "diva"},
       {"kind", "publisher"},
       {"capabilities", {"read_working", "write_working", "publish_external", "read_audit"}},
       {"zone", "pub-server"}},
      {{"id", "curator"}, {"kind", "human_supervisor"}, {"capabilities", {"approve_handoff", "read_audit"}}, {"zone", "pub-server"}},
      {{"id", "conductor"}, {"kind", "orchestrator"}, {"capabilities", {"route_handoff", "read_audit"}}, {"zone", "control-plane"}},
  });
}

// `artifacts` is either embedded documents or a path (for the on-disk copy).
inline nlohmann::json station_deployment(std::optional<std::string> artifacts_path = std::nullopt) {
  nlohmann::json d{{"zones",
                    {{{"id", "prep-server"}, {"description", "data preparation host"}},
                     {{"id", "pipeline-server"}, {"description", "review and audit host"}},
                     {{"id", "pub-server"}, {"description", "publication host"}},
                     {{"id", "control-plane"}, {"description", "orchestration"}}}},
                   {"roles", station_roles()},
                   {"validators", station_validators()},
                   {"sessions",
                    {{"tok-envita", "envita"},
                     {"tok-stori", "stori-audit"},
                     {"tok-diva", "diva"},
                     {"tok-curator", "curator"},
                     {"tok-conductor", "conductor"}}},
                   {"workflows", nlohmann::json::array({station_workflow()})}};
  if (artifacts_path) {
    d["artifacts"] = *artifacts_path;
  } else {
    d["artifacts"] = serialize(station_bundle());
  }
  return d;
}

// A job for the station workflow; `fault` turns the producer faulty.
inline nlohmann::json station_job(std::optional<FaultConfig> fault = std::nullopt, std::uint32_t stations = kStationCount,
                                  std::uint64_t table_seed = 7, std::optional<std::string> remediates = std::nullopt) {
  nlohmann::json stub{{"kind", "station_layers"}, {"dataset_id", kDatasetId}};
  if (fault) {
    stub["fault"] = {{"error_rate", fault->error_rate}, {"error_class", to_string(fault->error_class)}, {"seed", fault->seed}};
  }
  nlohmann::json j{{"workflow", kWorkflowId},
                   {"stubs", {{"envita", stub}}},
                   {"inputs", {{"station_table", {{"stations", stations}, {"seed", table_seed}}}}},
                   {"context", {{"expected_dataset", kDatasetId}}}};
  if (remediates) j["remediates"] = *remediates;
  return j;
}

inline std::unique_ptr<Engine> station_engine(EngineOptions opts = {}) {
  return make_engine(deployment_from_json(station_deployment()), std::move(opts));
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

// Writes:
//   <dir>/sf2bench/            clean bundle, one document per file
//   <dir>/corrupted/           corrupted bundle
//   <dir>/deployment.json      deployment referencing sf2bench/
//   <dir>/jobs/*.json          sample jobs
inline void export_fixtures(const std::filesystem::path& dir) {
  for (const char* sub : {"sf2bench", "corrupted"}) std::filesystem::remove_all(dir / sub);
  write_bundle_dir(station_bundle(), dir / "sf2bench");
  write_bundle_dir(corrupted_bundle(), dir / "corrupted");
  write_json(dir / "deployment.json", station_deployment("sf2bench"));
  nlohmann::json clean = station_job();
  clean["deployment"] = "../deployment.json";
  write_json(dir / "jobs" / "clean_publication.json", clean);
  nlohmann::json faulty = station_job(FaultConfig{1.0, ErrorClass::coordinate_swap, 4});
  faulty["deployment"] = "../deployment.json";
  write_json(dir / "jobs" / "coordinate_swap.json", faulty);
}

}  // namespace boundarykit::fixtures
