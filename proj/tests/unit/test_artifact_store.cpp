#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "boundarykit/fixtures.hpp"
#include "test_support.hpp"

using namespace boundarykit;
namespace fs = std::filesystem;

namespace {

// Random bundle: some references dangle, some nodes are disconnected.
BundleDocuments random_bundle(std::mt19937_64& rng) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  const char* tags[] = {"gis", "stations", "crs", "doi", "florida", "schema"};
  BundleDocuments d;
  const int nb = 1 + pick(4), nn = 2 + pick(8), ns = 1 + pick(4);
  for (int i = 0; i < nb; ++i) d.behaviors.push_back({"b" + std::to_string(i), "", "", Enforcement::advisory, {"*"}, 1});
  for (int i = 0; i < nn; ++i) {
    KnowledgeNode n;
    n.id = "n" + std::to_string(i);
    for (int t = 0; t < 1 + pick(3); ++t) n.retrieval_tags.insert(tags[pick(6)]);
    d.nodes.push_back(n);
  }
  auto node_ref = [&] { return pick(5) == 0 ? "ghost" + std::to_string(pick(3)) : "n" + std::to_string(pick(nn)); };
  for (int i = 0; i < ns; ++i) {
    Skill s;
    s.id = "s" + std::to_string(i);
    s.recipe.push_back({"tool", {}, ""});
    for (int k = 0; k < pick(3); ++k) s.behavior_gates.push_back(pick(4) == 0 ? "gone" : "b" + std::to_string(pick(nb)));
    for (int k = 0; k < pick(3); ++k) s.prerequisites.push_back(node_ref());
    d.skills.push_back(s);
  }
  for (int i = 0; i < pick(10); ++i) {
    const int rel = pick(3);
    if (rel == 2) {
      d.edges.push_back({node_ref(), pick(4) == 0 ? "no-skill" : "s" + std::to_string(pick(ns)), Relation::supports_skill});
    } else {
      d.edges.push_back({node_ref(), node_ref(), rel == 0 ? Relation::part_of : Relation::references});
    }
  }
  return d;
}

struct Counts {
  std::size_t broken = 0, missing = 0, orphans = 0;
};

// Independent integrity oracle: fixed-point reachability over an edge list.
Counts oracle_counts(const BundleDocuments& d) {
  std::set<std::string> nodes, skills, behaviors;
  for (auto& n : d.nodes) nodes.insert(n.id);
  for (auto& s : d.skills) skills.insert(s.id);
  for (auto& b : d.behaviors) behaviors.insert(b.id);
  Counts c;
  std::set<std::string> reached;
  for (auto& s : d.skills) {
    for (auto& b : s.behavior_gates) c.broken += !behaviors.count(b);
    for (auto& p : s.prerequisites) {
      if (nodes.count(p)) reached.insert(p); else ++c.missing;
    }
  }
  for (auto& e : d.edges) {
    const bool f = nodes.count(e.from), t = e.relation == Relation::supports_skill ? skills.count(e.to) : nodes.count(e.to);
    c.missing += !f + !t;
    if (e.relation == Relation::supports_skill && f && t) reached.insert(e.from);
  }
  for (bool grew = true; grew;) {
    grew = false;
    for (auto& e : d.edges) {
      if (e.relation == Relation::supports_skill || !nodes.count(e.from) || !nodes.count(e.to)) continue;
      if (reached.count(e.from) != reached.count(e.to)) {
        reached.insert(e.from);
        reached.insert(e.to);
        grew = true;
      }
    }
  }
  c.orphans = nodes.size() - reached.size();
  return c;
}

}  // namespace

TEST(ArtifactStore, CleanBundleIsTraversable) {
  const ArtifactStore s = fixtures::station_bundle();
  EXPECT_TRUE(s.integrity().traversable);
  EXPECT_EQ(s.integrity().defect_count(), 0u);
  EXPECT_EQ(s.skills().size(), 3u);
}

TEST(ArtifactStore, CorruptedBundleCounts) {
  const ArtifactStore s = fixtures::corrupted_bundle();
  EXPECT_EQ(s.integrity().broken_behavior_refs.size(), 16u);
  EXPECT_EQ(s.integrity().missing_knowledge_links.size(), 20u);
  EXPECT_EQ(s.integrity().orphan_nodes.size(), 3u);
  EXPECT_FALSE(s.integrity().traversable);
  EXPECT_THROW(retrieve_subgraph(s, {"stations"}, 4), RetrievalRefused);
}

TEST(ArtifactStore, OnDiskCorruptedFixtureMatchesInMemory) {
  const ArtifactStore disk = load_store(fs::path(BOUNDARYKIT_SOURCE_DIR) / "fixtures" / "corrupted");
  const ArtifactStore mem = fixtures::corrupted_bundle();
  EXPECT_EQ(to_json(disk.integrity()), to_json(mem.integrity()));
  EXPECT_EQ(serialize(disk), serialize(mem));
}

TEST(ArtifactStore, IntegrityMatchesOracleOnRandomBundles) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    BundleDocuments d = random_bundle(rng);
    const Counts expect = oracle_counts(d);
    const ArtifactStore s = build_store(d);
    ASSERT_EQ(s.integrity().broken_behavior_refs.size(), expect.broken) << i;
    ASSERT_EQ(s.integrity().missing_knowledge_links.size(), expect.missing) << i;
    ASSERT_EQ(s.integrity().orphan_nodes.size(), expect.orphans) << i;
    ASSERT_EQ(s.integrity().traversable, expect.broken + expect.missing + expect.orphans == 0);
  }
}

// Brute force: score every node by shared tags, sort, truncate.
TEST(ArtifactStore, RetrievalRankingMatchesBruteForce) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> vocab = {"gis", "stations", "crs", "doi", "florida", "schema"};
  int checked = 0;
  for (int i = 0; i < 400; ++i) {
    BundleDocuments d = random_bundle(rng);
    // Keep only well-formed parts so the store is traversable.
    for (auto& s : d.skills) s.behavior_gates.clear();
    d.edges.clear();
    for (auto& s : d.skills) s.prerequisites.clear();
    d.skills.front().prerequisites.clear();
    for (auto& n : d.nodes) d.skills.front().prerequisites.push_back(n.id);
    const ArtifactStore s = build_store(d);
    ASSERT_TRUE(s.integrity().traversable);
    std::set<std::string> query;
    for (const auto& t : vocab) if (rng() % 2) query.insert(t);
    const std::size_t limit = 1 + rng() % 5;
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto& n : d.nodes) {
      std::size_t m = 0;
      for (const auto& t : n.retrieval_tags) m += query.count(t);
      if (m) scored.push_back({m, n.id});
    }
    std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    if (scored.size() > limit) scored.resize(limit);
    const auto got = retrieve_subgraph(s, query, limit);
    ASSERT_EQ(got.size(), scored.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      ASSERT_EQ(got[k].node.id, scored[k].second);
      ASSERT_EQ(got[k].matched_tags, scored[k].first);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 400);
  EXPECT_THROW(retrieve_subgraph(fixtures::station_bundle(), {"gis"}, 0), Error);
}

TEST(ArtifactStore, RetrievalIncludesOneHopEdges) {
  const auto got = retrieve_subgraph(fixtures::station_bundle(), {"stations"}, 8);
  ASSERT_FALSE(got.empty());
  for (const auto& r : got) {
    for (const auto& e : r.edges) EXPECT_TRUE(e.from == r.node.id || e.to == r.node.id);
  }
}

TEST(ArtifactStore, SerializeRoundTripsRandomBundles) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const ArtifactStore a = build_store(random_bundle(rng));
    const ArtifactStore b = load_store_from_json(serialize(a));
    ASSERT_EQ(serialize(a), serialize(b));
    ASSERT_EQ(to_json(a.integrity()), to_json(b.integrity()));
  }
}

TEST(ArtifactStore, DirectoryRoundTrip) {
  const auto dir = test_support::temp_dir("bundle");
  const ArtifactStore a = fixtures::corrupted_bundle();
  write_bundle_dir(a, dir / "b");
  EXPECT_EQ(serialize(load_store(dir / "b")), serialize(a));
  fs::remove_all(dir);
}

TEST(ArtifactStore, DuplicateIdsAcrossTracksRejected) {
  BundleDocuments d = fixtures::station_bundle_documents();
  KnowledgeNode clash;
  clash.id = d.skills.front().id;
  clash.retrieval_tags = {"x"};
  d.nodes.push_back(clash);
  EXPECT_THROW(build_store(d), DuplicateIdError);
}

TEST(ArtifactStore, MalformedDocumentsRejected) {
  auto load = [](nlohmann::json doc) { return load_store_from_json(nlohmann::json::array({doc})); };
  EXPECT_THROW(load({{"track", "behavior"}, {"id", "Bad_Id"}, {"enforcement", "advisory"}}), ParseError);
  EXPECT_THROW(load({{"track", "behavior"}, {"id", "b"}, {"enforcement", "sometimes"}}), ParseError);
  EXPECT_THROW(load({{"track", "knowledge_node"}, {"id", "n"}, {"kind", "dataset"}, {"retrieval_tags", nlohmann::json::array()}}), ParseError);
  EXPECT_THROW(load({{"track", "skill"}, {"id", "s"}, {"recipe", nlohmann::json::array()}}), ParseError);
  EXPECT_THROW(load({{"track", "spell"}, {"id", "s"}}), ParseError);
  EXPECT_THROW(load_store_from_json(nlohmann::json::object()), ParseError);
}

TEST(ArtifactStore, ResolveSkillFailsFastOnDanglingRefs) {
  const ArtifactStore clean = fixtures::station_bundle();
  for (const auto& [id, _] : clean.skills()) EXPECT_NO_THROW(resolve_skill(clean, id));
  const ArtifactStore bad = fixtures::corrupted_bundle();
  int dangling = 0;
  for (const auto& [id, _] : bad.skills()) {
    try {
      resolve_skill(bad, id);
    } catch (const DanglingReferenceError&) {
      ++dangling;
    }
  }
  EXPECT_EQ(dangling, 8);
  EXPECT_THROW(resolve_skill(clean, "no-such-skill"), NotFoundError);
}

TEST(ArtifactStore, GlobMatch) {
  EXPECT_TRUE(glob_match("*", "anything"));
  EXPECT_TRUE(glob_match("publish-*", "publish-station-layers"));
  EXPECT_FALSE(glob_match("publish-*", "review-station-layers"));
  EXPECT_TRUE(glob_match("*-layers", "review-station-layers"));
  EXPECT_TRUE(glob_match("a*b*c", "axxbyyc"));
  EXPECT_FALSE(glob_match("a*b*c", "axxbyy"));
  EXPECT_TRUE(glob_match("", ""));
  EXPECT_FALSE(glob_match("", "x"));
}
