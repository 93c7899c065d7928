#include <gtest/gtest.h>

#include <random>

#include "boundarykit/fixtures.hpp"
#include "boundarykit/validation.hpp"

using namespace boundarykit;

namespace {

struct Pt {
  std::string id;
  double lon, lat;
};

std::string geojson(const std::vector<Pt>& pts, const std::string& dataset = "ds") {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& p : pts) {
    feats.push_back({{"type", "Feature"},
                     {"geometry", {{"type", "Point"}, {"coordinates", {p.lon, p.lat}}}},
                     {"properties", {{"station_id", p.id}}}});
  }
  return nlohmann::json{{"type", "FeatureCollection"}, {"dataset_id", dataset}, {"features", feats}}.dump();
}

ValidatorSpec spec(const nlohmann::json& j) { return validator_spec_from_json(j); }

ValidatorSpec florida() {
  return spec(nlohmann::json::parse(R"({"id":"fl","kind":"numeric_range","params":{"ranges":[
    {"field":"lat","min":24.5,"max":31.0},{"field":"lon","min":-87.5,"max":-79.5}]}})"));
}

// Brute-force dominant cluster size: O(n^2) box count.
std::size_t oracle_cluster(const std::vector<GeoPoint>& pts, double eps) {
  std::size_t best = 0;
  for (const auto& a : pts) {
    std::size_t n = 0;
    for (const auto& b : pts) n += std::abs(a.lon - b.lon) <= eps && std::abs(a.lat - b.lat) <= eps;
    best = std::max(best, n);
  }
  return best;
}

}  // namespace

TEST(NumericRange, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lat(23.0, 32.0), lon(-89.0, -78.0);
  const ValidatorSpec s = florida();
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Pt> pts;
    std::set<std::string> expect;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      Pt p{"S" + std::to_string(i), lon(rng), lat(rng)};
      if (rng() % 4 == 0) p.lat = 24.5;   // inclusive edge
      if (rng() % 5 == 0) p.lon = -79.5;  // inclusive edge
      if (!(p.lat >= 24.5 && p.lat <= 31.0 && p.lon >= -87.5 && p.lon <= -79.5)) expect.insert(p.id);
      pts.push_back(p);
    }
    const std::string text = geojson(pts);
    const auto out = run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text});
    std::set<std::string> got;
    for (const auto& i : out.offending_items) got.insert(i.record);
    ASSERT_EQ(got, expect);
    ASSERT_EQ(out.impacted_count, expect.size());
    ASSERT_EQ(out.passed(), expect.empty());
  }
}

TEST(NumericRange, ExclusiveBoundsAndLegacyShape) {
  auto s = spec({{"id", "x"}, {"kind", "numeric_range"}, {"params", {{"field", "v"}, {"min", 0}, {"max", 1}, {"max_inclusive", false}}}});
  ASSERT_EQ(s.params["ranges"].size(), 1u);
  const std::string csv = "station_id,v\na,0\nb,1\nc,0.5\nd,\ne,abc\n";
  const auto out = run_validator(s, ArtifactView{"t.csv", PayloadFormat::csv, csv});
  std::vector<std::string> recs;
  for (const auto& i : out.offending_items) recs.push_back(i.record + ":" + i.value);
  EXPECT_EQ(recs, (std::vector<std::string>{"b:1", "d:missing", "e:non-numeric:abc"}));
  EXPECT_THROW(spec({{"id", "x"}, {"kind", "numeric_range"}, {"params", {{"field", "v"}, {"min", 2}, {"max", 1}}}}), ParseError);
}

TEST(SpatialPlausibility, SweepMatchesBruteForce) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GeoPoint> pts;
    const int n = 1 + static_cast<int>(rng() % 60);
    const double eps = (rng() % 2) ? 1e-9 : 0.05;
    for (int i = 0; i < n; ++i) {
      // Coarse grid so collisions and near-collisions are common.
      pts.push_back({"P" + std::to_string(i), -80.0 + 0.05 * static_cast<double>(rng() % 6),
                     25.0 + 0.05 * static_cast<double>(rng() % 6)});
    }
    ASSERT_EQ(dominant_cluster(pts, eps).count, oracle_cluster(pts, eps)) << trial;
    const double frac = 0.25 + 0.25 * static_cast<double>(rng() % 3);
    const auto out = spatial_plausibility(pts, {frac, eps});
    const bool expect_fail = n >= 2 && static_cast<double>(oracle_cluster(pts, eps)) > frac * n;
    ASSERT_EQ(!out.passed(), expect_fail);
  }
}

TEST(SpatialPlausibility, CollapsedLayerFails) {
  std::vector<Pt> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({"S" + std::to_string(i), 0.0, 0.0});
  const std::string text = geojson(pts);
  const auto s = spec({{"id", "sp"}, {"kind", "spatial_plausibility"}, {"params", {{"max_collocated_fraction", 0.5}}}});
  const auto out = run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text});
  EXPECT_FALSE(out.passed());
  EXPECT_EQ(out.impacted_count, 100u);
  EXPECT_THROW(spec({{"id", "sp"}, {"kind", "spatial_plausibility"}}), ParseError);
}

TEST(Schema, GeoJsonAndCsvChecks) {
  const auto s = spec({{"id", "sc"},
                       {"kind", "schema_conformance"},
                       {"params",
                        {{"required_members", {"dataset_id", "crs"}},
                         {"geometry_type", "Point"},
                         {"required_properties", {"station_id"}},
                         {"property_types", {{"station_id", "string"}}}}}});
  const std::string text = geojson({{"a", 0, 0}});
  const auto out = run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text});
  ASSERT_EQ(out.offending_items.size(), 1u);
  EXPECT_EQ(out.offending_items[0].field, "crs");

  const auto c = spec({{"id", "c"},
                       {"kind", "schema_conformance"},
                       {"params", {{"required_columns", {"station_id", "LAT"}}, {"column_types", {{"n", "integer"}}}}}});
  const auto o2 = run_validator(c, ArtifactView{"t.csv", PayloadFormat::csv, "station_id,n\na,1\nb,1.5\n"});
  std::vector<std::string> got;
  for (const auto& i : o2.offending_items) got.push_back(i.record + "/" + i.field);
  EXPECT_EQ(got, (std::vector<std::string>{"t.csv/LAT", "b/n"}));
}

TEST(ArtifactIntegrity, DatasetIdentityUsesContext) {
  const auto s = spec({{"id", "di"}, {"kind", "artifact_integrity"}});
  const std::string text = geojson({{"a", 0, 0}, {"b", 1, 1}}, "sf2bench-stations-legacy");
  std::map<std::string, std::string> ctx{{"expected_dataset", "sf2bench-stations"}};
  const auto bad = run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text, &ctx});
  EXPECT_FALSE(bad.passed());
  EXPECT_EQ(bad.impacted_count, 2u);
  ctx["expected_dataset"] = "sf2bench-stations-legacy";
  EXPECT_TRUE(run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text, &ctx}).passed());
  EXPECT_FALSE(run_validator(s, ArtifactView{"l.geojson", PayloadFormat::geojson, text}).passed());
}

TEST(ArtifactIntegrity, BundleModeCountsDefects) {
  const auto s = spec({{"id", "bi"}, {"kind", "artifact_integrity"}, {"params", {{"check", "bundle"}}}});
  const std::string bad = serialize(fixtures::corrupted_bundle()).dump();
  const auto out = run_validator(s, ArtifactView{"bundle.json", PayloadFormat::json, bad});
  EXPECT_EQ(out.offending_items.size(), 39u);
  EXPECT_EQ(out.observations["defects"], 39);
  const std::string good = serialize(fixtures::station_bundle()).dump();
  EXPECT_TRUE(run_validator(s, ArtifactView{"bundle.json", PayloadFormat::json, good}).passed());
}

TEST(Validators, UnparseableInputFailsClosed) {
  const ValidatorSpec specs[] = {
      florida(),
      spec({{"id", "sp"}, {"kind", "spatial_plausibility"}, {"params", {{"max_collocated_fraction", 0.5}}}}),
      spec({{"id", "sc"}, {"kind", "schema_conformance"}}),
      spec({{"id", "di"}, {"kind", "artifact_integrity"}}),
  };
  for (const auto& s : specs) {
    const auto out = run_validator(s, ArtifactView{"x.geojson", PayloadFormat::geojson, "{not json"});
    EXPECT_FALSE(out.passed()) << s.id;
    ASSERT_EQ(out.offending_items.size(), 1u);
    EXPECT_EQ(out.offending_items[0].field, "parse");
  }
}

TEST(Validators, PureAndDigestPinned) {
  std::vector<Pt> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({"S" + std::to_string(i), -80.0 + i * 0.01, 40.0});
  const std::string text = geojson(pts);
  const std::string before = text;
  const auto a = run_validator(florida(), ArtifactView{"l.geojson", PayloadFormat::geojson, text}, 5);
  const auto b = run_validator(florida(), ArtifactView{"l.geojson", PayloadFormat::geojson, text}, 5);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(text, before);
  EXPECT_EQ(a.input_digest, sha256_hex(text));
}

TEST(ScriptedPredicate, PurityRules) {
  PredicateRegistry reg;
  int calls = 0;
  reg.add("none", [](const ArtifactView&, const nlohmann::json&) { return std::vector<OffendingItem>{}; }, true);
  reg.add("flaky", [&calls](const ArtifactView& a, const nlohmann::json&) {
    return ++calls % 2 ? std::vector<OffendingItem>{} : std::vector<OffendingItem>{{std::string(a.name), "x", "y"}};
  }, true);
  reg.add("undeclared", [](const ArtifactView&, const nlohmann::json&) { return std::vector<OffendingItem>{}; }, false);
  ValidationOptions opts{&reg, true};
  auto run = [&](const std::string& name) {
    return run_validator(spec({{"id", name}, {"kind", "scripted_predicate"}, {"params", {{"predicate", name}}}}),
                         ArtifactView{"a", PayloadFormat::json, "{}"}, 0, opts);
  };
  EXPECT_TRUE(run("none").passed());
  EXPECT_FALSE(run("flaky").passed());
  EXPECT_FALSE(run("undeclared").passed());
  EXPECT_FALSE(run("missing").passed());
}

TEST(Gate, RecordsEveryOutcomeAndAdvisoryDoesNotBlock) {
  ManualClock clock;
  AuditLog audit(clock);
  auto advisory = florida();
  advisory.id = "fl-advisory";
  advisory.severity = Severity::advisory;
  const std::string bad = geojson({{"a", 0, 0}});
  const std::string good = geojson({{"b", -80, 26}});
  const std::vector<ValidatorSpec> adv_only = {advisory};
  const std::vector<ArtifactView> views = {{"bad", PayloadFormat::geojson, bad}, {"good", PayloadFormat::geojson, good}};
  auto r = run_gate(adv_only, views, audit, "stori-audit", 1);
  EXPECT_TRUE(r.approved);
  EXPECT_EQ(audit.count(AuditEvent::validation_outcome), 2u);
  const std::vector<ValidatorSpec> both = {florida(), advisory};
  r = run_gate(both, views, audit, "stori-audit", 2);
  EXPECT_FALSE(r.approved);
  EXPECT_EQ(r.blocking_failures.size(), 1u);
  EXPECT_EQ(r.failing_kinds(), std::vector<ValidatorKind>{ValidatorKind::numeric_range});
  EXPECT_EQ(audit.count(AuditEvent::validation_outcome), 6u);
}

TEST(Gate, ConcurrentEqualsSequential) {
  std::vector<Pt> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({"S" + std::to_string(i), -80.0 + (i % 7) * 0.3, 24.0 + (i % 11) * 0.7});
  const std::string text = geojson(pts, "sf2bench-stations");
  std::map<std::string, std::string> ctx{{"expected_dataset", "sf2bench-stations"}};
  std::vector<ValidatorSpec> specs;
  for (const auto& v : fixtures::station_validators()) specs.push_back(validator_spec_from_json(v));
  const std::vector<std::string> names = {"l0", "l1", "l2", "l3", "l4"};
  std::vector<ArtifactView> views;
  for (const auto& n : names) views.push_back({n, PayloadFormat::geojson, text, &ctx});
  ManualClock c1, c2;
  AuditLog a1(c1), a2(c2);
  auto seq = run_gate(specs, views, a1, "v", 3);
  auto con = run_gate(specs, views, a2, "v", 3, GateOptions{{}, true});
  EXPECT_EQ(to_json(seq), to_json(con));
  auto s1 = a1.snapshot(), s2 = a2.snapshot();
  ASSERT_EQ(s1.size(), s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_EQ(s1[i].payload, s2[i].payload);
}
