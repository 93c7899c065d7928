#pragma once

// Three-track artifact store: behaviors (governance constraints), a knowledge
// graph (retrievable context) and skills (governed procedures).
//
// A store is immutable once built. Integrity defects do not prevent loading;
// they are reported by validate_integrity() and make retrieval refuse.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/errors.hpp"
#include "boundarykit/governance.hpp"

namespace boundarykit {

enum class Enforcement { hard_gate, human_confirm, advisory };
enum class NodeKind { system, dataset, domain_entity, platform, convention };
enum class Relation { part_of, references, supports_skill };

NLOHMANN_JSON_SERIALIZE_ENUM(Enforcement, {{Enforcement::hard_gate, "hard_gate"},
                                           {Enforcement::human_confirm, "human_confirm"},
                                           {Enforcement::advisory, "advisory"}})
NLOHMANN_JSON_SERIALIZE_ENUM(NodeKind, {{NodeKind::system, "system"},
                                        {NodeKind::dataset, "dataset"},
                                        {NodeKind::domain_entity, "domain_entity"},
                                        {NodeKind::platform, "platform"},
                                        {NodeKind::convention, "convention"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Relation, {{Relation::part_of, "part_of"},
                                        {Relation::references, "references"},
                                        {Relation::supports_skill, "supports_skill"}})

struct Behavior {
  std::string id;
  std::string title;
  std::string constraint_text;
  Enforcement enforcement = Enforcement::advisory;
  std::set<std::string> applies_to;  // skill-id glob patterns ('*' wildcard)
  int version = 1;

  bool operator==(const Behavior&) const = default;
};

struct KnowledgeNode {
  std::string id;
  NodeKind kind = NodeKind::domain_entity;
  std::map<std::string, std::string> attributes;
  std::set<std::string> retrieval_tags;

  bool operator==(const KnowledgeNode&) const = default;
};

struct KnowledgeEdge {
  std::string from;
  std::string to;  // node id, or skill id for supports_skill
  Relation relation = Relation::references;

  bool operator==(const KnowledgeEdge&) const = default;
  auto operator<=>(const KnowledgeEdge&) const = default;
};

// A recipe step is either a tool invocation or a sub-skill call.
struct Step {
  std::string tool;
  nlohmann::json args = nlohmann::json::object();
  std::string sub_skill;

  bool is_tool() const { return !tool.empty(); }
  bool operator==(const Step&) const = default;
};

struct ExpectedOutcome {
  std::string validator;
  std::string verdict = "pass";

  bool operator==(const ExpectedOutcome&) const = default;
};

struct Skill {
  std::string id;
  std::string name;
  std::vector<std::string> prerequisites;   // knowledge node ids
  std::vector<std::string> behavior_gates;  // behavior ids
  std::vector<Step> recipe;
  std::vector<ExpectedOutcome> expected_outcomes;
  std::set<Capability> required_capabilities;

  bool operator==(const Skill&) const = default;
};

struct BrokenBehaviorRef {
  std::string skill_id;
  std::string behavior_id;
  bool operator==(const BrokenBehaviorRef&) const = default;
};

// A prerequisite or knowledge edge whose endpoint does not resolve. `owner` is
// the resolvable side (a skill for prerequisites), `missing` the dangling id.
struct MissingKnowledgeLink {
  std::string owner;
  std::string missing;
  std::string via;  // "prerequisite" or the edge relation
  bool operator==(const MissingKnowledgeLink&) const = default;
};

struct IntegrityReport {
  std::vector<BrokenBehaviorRef> broken_behavior_refs;
  std::vector<MissingKnowledgeLink> missing_knowledge_links;
  std::vector<std::string> orphan_nodes;
  bool traversable = true;

  std::size_t defect_count() const {
    return broken_behavior_refs.size() + missing_knowledge_links.size() + orphan_nodes.size();
  }
  bool operator==(const IntegrityReport&) const = default;
};

class RetrievalRefused : public Error {
 public:
  using Error::Error;
};

inline bool valid_artifact_id(const std::string& id) {
  static const std::regex kId("[a-z0-9-]+");
  return std::regex_match(id, kId);
}

// '*' matches any run of characters.
inline bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

class ArtifactStore;
IntegrityReport validate_integrity(const ArtifactStore& store);

class ArtifactStore {
 public:
  ArtifactStore() : integrity_(IntegrityReport{}) {}

  // Indexes the four tracks. Throws DuplicateIdError on any id collision
  // (ids are unique across tracks, since edges may target nodes or skills).
  ArtifactStore(std::vector<Behavior> behaviors, std::vector<KnowledgeNode> nodes,
                std::vector<KnowledgeEdge> edges, std::vector<Skill> skills)
      : edges_(std::move(edges)) {
    std::set<std::string> seen;
    auto claim = [&](const std::string& kind, const std::string& id) {
      if (!seen.insert(id).second) throw DuplicateIdError(kind, id);
    };
    for (auto& b : behaviors) {
      claim("behavior", b.id);
      behaviors_.emplace(b.id, std::move(b));
    }
    for (auto& n : nodes) {
      claim("knowledge_node", n.id);
      for (const auto& tag : n.retrieval_tags) tag_index_[tag].push_back(n.id);
      nodes_.emplace(n.id, std::move(n));
    }
    for (auto& s : skills) {
      claim("skill", s.id);
      skills_.emplace(s.id, std::move(s));
    }
    for (auto& [_, ids] : tag_index_) std::sort(ids.begin(), ids.end());
    integrity_ = validate_integrity(*this);
  }

  const std::map<std::string, Behavior>& behaviors() const { return behaviors_; }
  const std::map<std::string, KnowledgeNode>& nodes() const { return nodes_; }
  const std::vector<KnowledgeEdge>& edges() const { return edges_; }
  const std::map<std::string, Skill>& skills() const { return skills_; }
  const std::map<std::string, std::vector<std::string>>& tag_index() const { return tag_index_; }

  const Behavior* behavior(const std::string& id) const { return find(behaviors_, id); }
  const KnowledgeNode* node(const std::string& id) const { return find(nodes_, id); }
  const Skill* skill(const std::string& id) const { return find(skills_, id); }

  // Integrity computed once at construction; the store never changes.
  const IntegrityReport& integrity() const { return integrity_; }

  std::vector<const Behavior*> behaviors_applying_to(const std::string& skill_id) const {
    std::vector<const Behavior*> out;
    for (const auto& [_, b] : behaviors_) {
      for (const auto& pat : b.applies_to) {
        if (glob_match(pat, skill_id)) {
          out.push_back(&b);
          break;
        }
      }
    }
    return out;
  }

 private:
  template <class M>
  static const typename M::mapped_type* find(const M& m, const std::string& id) {
    auto it = m.find(id);
    return it == m.end() ? nullptr : &it->second;
  }

  std::map<std::string, Behavior> behaviors_;
  std::map<std::string, KnowledgeNode> nodes_;
  std::vector<KnowledgeEdge> edges_;
  std::map<std::string, Skill> skills_;
  std::map<std::string, std::vector<std::string>> tag_index_;
  IntegrityReport integrity_;
};

inline IntegrityReport validate_integrity(const ArtifactStore& store) {
  IntegrityReport rep;
  const auto& nodes = store.nodes();
  const auto& skills = store.skills();

  // Undirected adjacency over node-node edges, plus skill anchors.
  std::map<std::string, std::vector<std::string>> adj;
  std::vector<std::string> frontier;

  for (const auto& [sid, s] : skills) {
    for (const auto& b : s.behavior_gates) {
      if (!store.behavior(b)) rep.broken_behavior_refs.push_back({sid, b});
    }
    for (const auto& n : s.prerequisites) {
      if (!nodes.count(n)) {
        rep.missing_knowledge_links.push_back({sid, n, "prerequisite"});
      } else {
        frontier.push_back(n);
      }
    }
  }
  for (const auto& e : store.edges()) {
    const bool from_ok = nodes.count(e.from) > 0;
    if (e.relation == Relation::supports_skill) {
      const bool to_ok = skills.count(e.to) > 0;
      if (!from_ok) rep.missing_knowledge_links.push_back({e.to, e.from, "supports_skill"});
      if (!to_ok) rep.missing_knowledge_links.push_back({e.from, e.to, "supports_skill"});
      if (from_ok && to_ok) frontier.push_back(e.from);
      continue;
    }
    const bool to_ok = nodes.count(e.to) > 0;
    const std::string via = e.relation == Relation::part_of ? "part_of" : "references";
    if (!from_ok) rep.missing_knowledge_links.push_back({e.to, e.from, via});
    if (!to_ok) rep.missing_knowledge_links.push_back({e.from, e.to, via});
    if (from_ok && to_ok) {
      adj[e.from].push_back(e.to);
      adj[e.to].push_back(e.from);
    }
  }

  std::set<std::string> reached;
  std::queue<std::string> q;
  for (auto& n : frontier) {
    if (reached.insert(n).second) q.push(n);
  }
  while (!q.empty()) {
    auto cur = q.front();
    q.pop();
    for (const auto& nb : adj[cur]) {
      if (reached.insert(nb).second) q.push(nb);
    }
  }
  for (const auto& [nid, _] : nodes) {
    if (!reached.count(nid)) rep.orphan_nodes.push_back(nid);
  }
  rep.traversable = rep.broken_behavior_refs.empty() && rep.missing_knowledge_links.empty() &&
                    rep.orphan_nodes.empty();
  return rep;
}

struct RetrievedNode {
  KnowledgeNode node;
  std::size_t matched_tags = 0;
  std::vector<KnowledgeEdge> edges;  // one-hop, either direction
};

// Nodes sharing at least one tag with `tags`, by descending match count then
// ascending id. Refused on a non-traversable store.
inline std::vector<RetrievedNode> retrieve_subgraph(const ArtifactStore& store, const std::set<std::string>& tags,
                                                    std::size_t limit) {
  if (limit == 0) throw Error("retrieve_subgraph: limit must be positive");
  if (!store.integrity().traversable) {
    throw RetrievalRefused("knowledge graph is not traversable (" +
                           std::to_string(store.integrity().defect_count()) + " integrity defects)");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& tag : tags) {
    auto it = store.tag_index().find(tag);
    if (it == store.tag_index().end()) continue;
    for (const auto& id : it->second) ++counts[id];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > limit) ranked.resize(limit);

  std::vector<RetrievedNode> out;
  out.reserve(ranked.size());
  for (const auto& [id, n] : ranked) {
    RetrievedNode r{*store.node(id), n, {}};
    for (const auto& e : store.edges()) {
      if (e.from == id || e.to == id) r.edges.push_back(e);
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct ResolvedSkill {
  Skill skill;
  std::vector<Behavior> behaviors;
  std::vector<KnowledgeNode> prerequisites;
};

// Materializes a skill's behavior gates and prerequisites, failing fast on
// the first dangling reference (including a supports_skill edge into the skill
// from a missing node).
inline ResolvedSkill resolve_skill(const ArtifactStore& store, const std::string& skill_id) {
  const Skill* s = store.skill(skill_id);
  if (!s) throw NotFoundError("unknown skill '" + skill_id + "'");
  ResolvedSkill out{*s, {}, {}};
  for (const auto& b : s->behavior_gates) {
    const Behavior* beh = store.behavior(b);
    if (!beh) throw DanglingReferenceError("behavior", skill_id, b);
    out.behaviors.push_back(*beh);
  }
  for (const auto& n : s->prerequisites) {
    const KnowledgeNode* node = store.node(n);
    if (!node) throw DanglingReferenceError("prerequisite", skill_id, n);
    out.prerequisites.push_back(*node);
  }
  for (const auto& e : store.edges()) {
    if (e.relation == Relation::supports_skill && e.to == skill_id && !store.node(e.from)) {
      throw DanglingReferenceError("supports_skill", skill_id, e.from);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundle serialization. One JSON document per artifact with a `track` field.

inline nlohmann::json to_document(const Behavior& b) {
  return {{"track", "behavior"},       {"id", b.id},
          {"title", b.title},          {"constraint_text", b.constraint_text},
          {"enforcement", b.enforcement}, {"applies_to", b.applies_to},
          {"version", b.version}};
}

inline nlohmann::json to_document(const KnowledgeNode& n) {
  return {{"track", "knowledge_node"},
          {"id", n.id},
          {"kind", n.kind},
          {"attributes", n.attributes},
          {"retrieval_tags", n.retrieval_tags}};
}

inline nlohmann::json to_document(const KnowledgeEdge& e) {
  return {{"track", "knowledge_edge"}, {"from", e.from}, {"to", e.to}, {"relation", e.relation}};
}

inline nlohmann::json to_document(const Skill& s) {
  nlohmann::json recipe = nlohmann::json::array();
  for (const auto& st : s.recipe) {
    if (st.is_tool()) {
      recipe.push_back({{"tool", st.tool}, {"args", st.args}});
    } else {
      recipe.push_back({{"skill", st.sub_skill}});
    }
  }
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : s.expected_outcomes) outcomes.push_back({{"validator", o.validator}, {"verdict", o.verdict}});
  nlohmann::json caps = nlohmann::json::array();
  for (auto c : s.required_capabilities) caps.push_back(std::string(to_string(c)));
  return {{"track", "skill"},
          {"id", s.id},
          {"name", s.name},
          {"prerequisites", s.prerequisites},
          {"behavior_gates", s.behavior_gates},
          {"recipe", recipe},
          {"expected_outcomes", outcomes},
          {"required_capabilities", caps}};
}

namespace detail {

template <class E>
E parse_enum(const nlohmann::json& j, const char* field) {
  E value = j.get<E>();
  // NLOHMANN_JSON_SERIALIZE_ENUM maps unknown strings to the first entry.
  if (nlohmann::json(value) != j) throw ParseError(std::string("unknown ") + field + " value " + j.dump());
  return value;
}

inline void require_id(const std::string& id, const std::string& what) {
  if (!valid_artifact_id(id)) throw ParseError(what + " id '" + id + "' does not match [a-z0-9-]+");
}

}  // namespace detail

struct BundleDocuments {
  std::vector<Behavior> behaviors;
  std::vector<KnowledgeNode> nodes;
  std::vector<KnowledgeEdge> edges;
  std::vector<Skill> skills;
};

inline void add_document(BundleDocuments& out, const nlohmann::json& doc) {
  try {
    const std::string track = doc.at("track").get<std::string>();
    if (track == "behavior") {
      Behavior b;
      b.id = doc.at("id").get<std::string>();
      detail::require_id(b.id, "behavior");
      b.title = doc.value("title", "");
      b.constraint_text = doc.value("constraint_text", "");
      b.enforcement = detail::parse_enum<Enforcement>(doc.at("enforcement"), "enforcement");
      b.applies_to = doc.value("applies_to", std::set<std::string>{});
      b.version = doc.value("version", 1);
      if (b.version < 1) throw ParseError("behavior " + b.id + ": version must be >= 1");
      out.behaviors.push_back(std::move(b));
    } else if (track == "knowledge_node") {
      KnowledgeNode n;
      n.id = doc.at("id").get<std::string>();
      detail::require_id(n.id, "knowledge_node");
      n.kind = detail::parse_enum<NodeKind>(doc.at("kind"), "kind");
      n.attributes = doc.value("attributes", std::map<std::string, std::string>{});
      n.retrieval_tags = doc.at("retrieval_tags").get<std::set<std::string>>();
      if (n.retrieval_tags.empty()) throw ParseError("knowledge_node " + n.id + ": retrieval_tags must be non-empty");
      out.nodes.push_back(std::move(n));
    } else if (track == "knowledge_edge") {
      KnowledgeEdge e;
      e.from = doc.at("from").get<std::string>();
      e.to = doc.at("to").get<std::string>();
      detail::require_id(e.from, "edge endpoint");
      detail::require_id(e.to, "edge endpoint");
      e.relation = detail::parse_enum<Relation>(doc.at("relation"), "relation");
      out.edges.push_back(std::move(e));
    } else if (track == "skill") {
      Skill s;
      s.id = doc.at("id").get<std::string>();
      detail::require_id(s.id, "skill");
      s.name = doc.value("name", "");
      s.prerequisites = doc.value("prerequisites", std::vector<std::string>{});
      s.behavior_gates = doc.value("behavior_gates", std::vector<std::string>{});
      for (const auto& st : doc.at("recipe")) {
        Step step;
        if (st.contains("tool")) {
          step.tool = st.at("tool").get<std::string>();
          step.args = st.value("args", nlohmann::json::object());
        } else {
          step.sub_skill = st.at("skill").get<std::string>();
        }
        if (step.tool.empty() && step.sub_skill.empty()) throw ParseError("skill " + s.id + ": empty recipe step");
        s.recipe.push_back(std::move(step));
      }
      if (s.recipe.empty()) throw ParseError("skill " + s.id + ": recipe must be non-empty");
      for (const auto& o : doc.value("expected_outcomes", nlohmann::json::array())) {
        s.expected_outcomes.push_back({o.at("validator").get<std::string>(), o.value("verdict", "pass")});
      }
      for (const auto& c : doc.value("required_capabilities", nlohmann::json::array())) {
        auto cap = capability_from_string(c.get<std::string>());
        if (!cap) throw ParseError("skill " + s.id + ": unknown capability " + c.dump());
        s.required_capabilities.insert(*cap);
      }
      out.skills.push_back(std::move(s));
    } else {
      throw ParseError("unknown track '" + track + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed artifact document: ") + e.what());
  }
}

inline ArtifactStore build_store(BundleDocuments docs) {
  return ArtifactStore(std::move(docs.behaviors), std::move(docs.nodes), std::move(docs.edges),
                       std::move(docs.skills));
}

// Accepts an archive object {"documents": [...]} or a bare array.
inline ArtifactStore load_store_from_json(const nlohmann::json& archive) {
  const nlohmann::json* docs = &archive;
  if (archive.is_object()) {
    auto it = archive.find("documents");
    if (it == archive.end()) throw ParseError("artifact archive: missing 'documents'");
    docs = &*it;
  }
  if (!docs->is_array()) throw ParseError("artifact archive: 'documents' must be an array");
  BundleDocuments out;
  for (const auto& d : *docs) add_document(out, d);
  return build_store(std::move(out));
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Loads a bundle directory (every *.json file, in filename order, one
// document each) or a single archive file.
inline ArtifactStore load_store(const std::filesystem::path& source) {
  if (std::filesystem::is_directory(source)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(source)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    BundleDocuments out;
    for (const auto& f : files) {
      try {
        add_document(out, parse_json_file(f));
      } catch (const ParseError& e) {
        throw ParseError(f.filename().string() + ": " + e.what());
      }
    }
    return build_store(std::move(out));
  }
  if (!std::filesystem::exists(source)) throw ParseError("artifact bundle not found: " + source.string());
  return load_store_from_json(parse_json_file(source));
}

inline nlohmann::json serialize(const ArtifactStore& store) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& [_, b] : store.behaviors()) docs.push_back(to_document(b));
  for (const auto& [_, n] : store.nodes()) docs.push_back(to_document(n));
  for (const auto& e : store.edges()) docs.push_back(to_document(e));
  for (const auto& [_, s] : store.skills()) docs.push_back(to_document(s));
  return {{"documents", docs}};
}

// Writes one file per artifact, named so that directory order is stable.
inline void write_bundle_dir(const ArtifactStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const nlohmann::json& doc) {
    std::ofstream out(dir / name);
    out << doc.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / name).string());
  };
  for (const auto& [id, b] : store.behaviors()) write("behavior-" + id + ".json", to_document(b));
  for (const auto& [id, n] : store.nodes()) write("node-" + id + ".json", to_document(n));
  std::size_t i = 0;
  for (const auto& e : store.edges()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "edge-%04zu.json", ++i);
    write(buf, to_document(e));
  }
  for (const auto& [id, s] : store.skills()) write("skill-" + id + ".json", to_document(s));
}

inline nlohmann::json to_json(const IntegrityReport& r) {
  nlohmann::json broken = nlohmann::json::array();
  for (const auto& b : r.broken_behavior_refs) broken.push_back({{"skill", b.skill_id}, {"behavior", b.behavior_id}});
  nlohmann::json missing = nlohmann::json::array();
  for (const auto& m : r.missing_knowledge_links) {
    missing.push_back({{"owner", m.owner}, {"missing", m.missing}, {"via", m.via}});
  }
  return {{"broken_behavior_refs", broken},
          {"missing_knowledge_links", missing},
          {"orphan_nodes", r.orphan_nodes},
          {"traversable", r.traversable},
          {"defect_count", r.defect_count()}};
}

}  // namespace boundarykit
