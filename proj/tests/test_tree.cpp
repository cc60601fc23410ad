#include <gtest/gtest.h>

#include <random>

#include "trunk/tree.hpp"

using namespace trunk;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "trunk_test_tree";
  fs::create_directories(dir);
  return dir;
}

TreeNode node(std::string id, int depth, std::set<int> cats,
              std::vector<std::vector<int>> partition,
              std::vector<std::string> children, std::string kind) {
  TreeNode n;
  n.id = std::move(id);
  n.depth = depth;
  n.categories = std::move(cats);
  n.grouping.partition = std::move(partition);
  n.grouping.gv_used = 0.7;
  n.children = std::move(children);
  n.kind = std::move(kind);
  return n;
}

// root {0..3} -> supergroup {0,1} + leaves 2, 3
Trunk sample_tree() {
  Trunk t;
  t.dataset = "synthetic";
  t.gv = 0.7;
  t.root_id = "r";
  t.nodes["r"] = node("r", 0, {0, 1, 2, 3}, {{0, 1}, {2}, {3}},
                      {"s", "l2", "l3"}, "root");
  t.nodes["s"] = node("s", 1, {0, 1}, {{0}, {1}}, {"l0", "l1"}, "supergroup");
  t.nodes["l0"] = node("l0", 2, {0}, {}, {}, "leaf");
  t.nodes["l1"] = node("l1", 2, {1}, {}, {}, "leaf");
  t.nodes["l2"] = node("l2", 1, {2}, {}, {}, "leaf");
  t.nodes["l3"] = node("l3", 1, {3}, {}, {}, "leaf");
  return t;
}

// random valid tree over categories 0..n-1 built by recursive splitting
Trunk random_tree(size_t n_cats, std::mt19937_64& rng) {
  Trunk t;
  t.dataset = "synthetic";
  t.gv = 1.0;
  int counter = 0;
  std::function<std::string(std::vector<int>, int)> build =
      [&](std::vector<int> cats, int depth) -> std::string {
    std::string id = "n" + std::to_string(counter++);
    if (cats.size() == 1) {
      t.nodes[id] =
          node(id, depth, {cats[0]}, {}, {}, depth == 0 ? "root" : "leaf");
      return id;
    }
    std::shuffle(cats.begin(), cats.end(), rng);
    std::uniform_int_distribution<size_t> cut_dist(1, cats.size() - 1);
    size_t parts = cut_dist(rng) + 1;
    parts = std::min(parts, cats.size());
    std::vector<std::vector<int>> partition(parts);
    for (size_t i = 0; i < cats.size(); ++i)
      partition[i % parts].push_back(cats[i]);
    for (auto& p : partition) std::sort(p.begin(), p.end());
    TreeNode nd;
    nd.id = id;
    nd.depth = depth;
    nd.categories = std::set<int>(cats.begin(), cats.end());
    nd.kind = depth == 0 ? "root" : "supergroup";
    nd.grouping.partition = partition;
    nd.grouping.gv_used = 1.0;
    t.nodes[id] = nd;
    for (const auto& p : partition)
      t.nodes[id].children.push_back(build(p, depth + 1));
    return id;
  };
  std::vector<int> cats(n_cats);
  std::iota(cats.begin(), cats.end(), 0);
  t.root_id = build(cats, 0);
  return t;
}

}  // namespace

TEST(Validate, SingleRootLeafIsValid) {
  Trunk t;
  t.dataset = "synthetic";
  t.gv = 1.0;
  t.root_id = "r";
  t.nodes["r"] = node("r", 0, {0}, {}, {}, "root");
  EXPECT_TRUE(validate(t).empty());
}

TEST(Validate, SampleTreeIsValid) {
  EXPECT_EQ(validate(sample_tree()), std::vector<std::string>{});
}

TEST(Validate, MissingLeafForCategoryReported) {
  Trunk t = sample_tree();
  t.nodes["r"].categories.insert(4);  // claims category 4 with no leaf
  auto v = validate(t);
  bool found = false;
  for (const auto& s : v)
    if (s.find("missing leaf for category 4") != std::string::npos)
      found = true;
  EXPECT_TRUE(found) << join(v, "; ");
}

TEST(Validate, DeletedChildLinkLeavesOneOrphan) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Trunk t = random_tree(6, rng);
    ASSERT_TRUE(validate(t).empty());
    // pick an internal node and delete one child link
    std::vector<std::string> internals;
    for (auto& [id, n] : t.nodes)
      if (!n.is_leaf()) internals.push_back(id);
    std::uniform_int_distribution<size_t> pick(0, internals.size() - 1);
    TreeNode& victim = t.nodes[internals[pick(rng)]];
    std::uniform_int_distribution<size_t> cpick(0, victim.children.size() - 1);
    size_t ci = cpick(rng);
    std::string orphaned = victim.children[ci];
    victim.children.erase(victim.children.begin() + ci);
    victim.grouping.partition.erase(victim.grouping.partition.begin() + ci);

    auto v = validate(t);
    size_t orphan_violations = 0;
    for (const auto& s : v)
      if (s.find(orphaned + ": orphan node") != std::string::npos)
        ++orphan_violations;
    EXPECT_EQ(orphan_violations, 1u) << join(v, "; ");
  }
}

TEST(Canonicalize, Idempotent) {
  std::mt19937_64 rng(17);
  Trunk t = random_tree(7, rng);
  Trunk c1 = canonicalize(t);
  Trunk c2 = canonicalize(c1);
  EXPECT_EQ(tree_to_json(c1), tree_to_json(c2));
}

TEST(Canonicalize, ChildOrderDoesNotMatter) {
  Trunk t = sample_tree();
  Trunk shuffled = t;
  auto& r = shuffled.nodes["r"];
  std::swap(r.children[0], r.children[2]);
  std::swap(r.grouping.partition[0], r.grouping.partition[2]);
  EXPECT_TRUE(validate(shuffled).empty());
  EXPECT_EQ(tree_to_json(canonicalize(t)), tree_to_json(canonicalize(shuffled)));
}

TEST(Canonicalize, ShuffleThenCanonicalizeOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    Trunk t = random_tree(8, rng);
    nlohmann::json before = tree_to_json(canonicalize(t));
    Trunk shuffled = t;
    for (auto& [id, n] : shuffled.nodes) {
      if (n.children.size() < 2) continue;
      std::vector<size_t> perm(n.children.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      auto ch = n.children;
      auto pa = n.grouping.partition;
      for (size_t i = 0; i < perm.size(); ++i) {
        n.children[i] = ch[perm[i]];
        n.grouping.partition[i] = pa[perm[i]];
      }
    }
    EXPECT_EQ(before, tree_to_json(canonicalize(shuffled)));
  }
}

TEST(Fingerprint, StableAcrossIdsAndWeights) {
  Trunk t = sample_tree();
  Trunk renamed = canonicalize(t);  // different ids
  renamed.nodes[renamed.root_id].weights_ref = "elsewhere/weights";
  EXPECT_EQ(fingerprint(t), fingerprint(renamed));
}

TEST(Fingerprint, DifferentStructuresDiffer) {
  Trunk a = sample_tree();
  // flat tree over the same categories
  Trunk b;
  b.dataset = "synthetic";
  b.gv = 1.0;
  b.root_id = "r";
  b.nodes["r"] = node("r", 0, {0, 1, 2, 3}, {{0}, {1}, {2}, {3}},
                      {"l0", "l1", "l2", "l3"}, "root");
  for (int c = 0; c < 4; ++c)
    b.nodes["l" + std::to_string(c)] =
        node("l" + std::to_string(c), 1, {c}, {}, {}, "leaf");
  EXPECT_TRUE(validate(b).empty());
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Compare, SelfComparisonIsIdentical) {
  Trunk t = sample_tree();
  auto cmp = compare(t, t);
  EXPECT_TRUE(cmp.identical);
  EXPECT_DOUBLE_EQ(cmp.similarity, 1.0);
}

TEST(Compare, HandComputedJaccardOnToyPair) {
  // two flat-vs-nested trees over {0,1,2}: internal sets {0,1,2} both; the
  // nested one adds {0,1}. Jaccard = 1/2.
  Trunk flat;
  flat.dataset = "d";
  flat.gv = 1;
  flat.root_id = "r";
  flat.nodes["r"] =
      node("r", 0, {0, 1, 2}, {{0}, {1}, {2}}, {"a", "b", "c"}, "root");
  flat.nodes["a"] = node("a", 1, {0}, {}, {}, "leaf");
  flat.nodes["b"] = node("b", 1, {1}, {}, {}, "leaf");
  flat.nodes["c"] = node("c", 1, {2}, {}, {}, "leaf");

  Trunk nested;
  nested.dataset = "d";
  nested.gv = 1;
  nested.root_id = "r";
  nested.nodes["r"] =
      node("r", 0, {0, 1, 2}, {{0, 1}, {2}}, {"s", "c"}, "root");
  nested.nodes["s"] = node("s", 1, {0, 1}, {{0}, {1}}, {"a", "b"},
                           "supergroup");
  nested.nodes["a"] = node("a", 2, {0}, {}, {}, "leaf");
  nested.nodes["b"] = node("b", 2, {1}, {}, {}, "leaf");
  nested.nodes["c"] = node("c", 1, {2}, {}, {}, "leaf");

  auto cmp = compare(flat, nested);
  EXPECT_FALSE(cmp.identical);
  EXPECT_DOUBLE_EQ(cmp.similarity, 0.5);

  auto sym = compare(nested, flat);
  EXPECT_DOUBLE_EQ(sym.similarity, cmp.similarity);
  EXPECT_EQ(sym.identical, cmp.identical);
}

TEST(Compare, SharingOnlyTheFullSetGivesOneOverUnion) {
  // both trees place one supergroup under the root, but over different
  // category pairs; internal sets are {012},{01} vs {012},{12}, so the
  // Jaccard index is 1/|union| = 1/3
  auto build = [](std::vector<int> grouped, int lone) {
    Trunk t;
    t.dataset = "d";
    t.gv = 1;
    t.root_id = "r";
    t.nodes["r"] = node("r", 0, {0, 1, 2}, {{grouped[0], grouped[1]}, {lone}},
                        {"s", "c"}, "root");
    std::sort(grouped.begin(), grouped.end());
    t.nodes["s"] = node("s", 1, {grouped[0], grouped[1]},
                        {{grouped[0]}, {grouped[1]}}, {"a", "b"},
                        "supergroup");
    t.nodes["a"] = node("a", 2, {grouped[0]}, {}, {}, "leaf");
    t.nodes["b"] = node("b", 2, {grouped[1]}, {}, {}, "leaf");
    t.nodes["c"] = node("c", 1, {lone}, {}, {}, "leaf");
    return t;
  };
  Trunk a = build({0, 1}, 2);
  Trunk b = build({1, 2}, 0);
  ASSERT_TRUE(validate(a).empty());
  ASSERT_TRUE(validate(b).empty());
  auto cmp = compare(a, b);
  EXPECT_FALSE(cmp.identical);
  EXPECT_DOUBLE_EQ(cmp.similarity, 1.0 / 3.0);
}

TEST(Compare, DifferentUniversesRejected) {
  Trunk a = sample_tree();
  Trunk b;
  b.dataset = "d";
  b.gv = 1;
  b.root_id = "r";
  b.nodes["r"] = node("r", 0, {0}, {}, {}, "root");
  EXPECT_THROW(compare(a, b), ValidationError);
}

TEST(Dot, ColorsAndCounts) {
  Trunk t = sample_tree();
  std::string dot = to_dot(t, {"zero", "one", "two", "three"});
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("fillcolor=red"), std::string::npos);
  EXPECT_NE(dot.find("fillcolor=gray"), std::string::npos);
  EXPECT_NE(dot.find("fillcolor=green"), std::string::npos);
  EXPECT_NE(dot.find("label=\"two\""), std::string::npos);
  // node and edge counts
  size_t nodes = 0, edges = 0;
  for (const auto& line : split(dot, '\n')) {
    if (line.find("fillcolor=") != std::string::npos) ++nodes;
    if (line.find("->") != std::string::npos) ++edges;
  }
  EXPECT_EQ(nodes, t.nodes.size());
  EXPECT_EQ(edges, t.nodes.size() - 1);
}

TEST(Dot, DegenerateRootIsRed) {
  Trunk t;
  t.dataset = "d";
  t.gv = 1;
  t.root_id = "r";
  t.nodes["r"] = node("r", 0, {0}, {}, {}, "root");
  std::string dot = to_dot(t, {"only"});
  EXPECT_NE(dot.find("fillcolor=red"), std::string::npos);
  EXPECT_EQ(dot.find("fillcolor=green"), std::string::npos);
}

TEST(Dot, BalancedDotIsWellFormed) {
  // structural well-formedness: braces balance, every edge references a
  // declared node id
  std::mt19937_64 rng(23);
  Trunk t = random_tree(10, rng);
  std::string dot = to_dot(t);
  EXPECT_EQ(std::count(dot.begin(), dot.end(), '{'),
            std::count(dot.begin(), dot.end(), '}'));
  std::set<std::string> declared;
  for (const auto& line : split(dot, '\n')) {
    auto lb = line.find(" [label=");
    if (lb != std::string::npos && line.rfind("  ", 0) == 0)
      declared.insert(trim(line.substr(0, lb)));
  }
  for (const auto& line : split(dot, '\n')) {
    auto arrow = line.find(" -> ");
    if (arrow == std::string::npos) continue;
    std::string from = trim(line.substr(0, arrow));
    std::string to = trim(line.substr(arrow + 4));
    to = to.substr(0, to.find(';'));
    EXPECT_TRUE(declared.count(from)) << from;
    EXPECT_TRUE(declared.count(to)) << to;
  }
}

TEST(SaveLoad, RoundTripCanonicalEqual) {
  auto dir = temp_dir();
  std::mt19937_64 rng(29);
  Trunk t = random_tree(9, rng);
  t.nodes[t.root_id].weights_ref = "nodes/n0/weights";
  save_tree(t, dir / "t.json");
  Trunk loaded = load_tree(dir / "t.json");
  auto cmp = compare(t, loaded);
  EXPECT_TRUE(cmp.identical);
  EXPECT_EQ(loaded.nodes.at(t.root_id).weights_ref, "nodes/n0/weights");
  EXPECT_EQ(loaded.created_with, t.created_with);
}

TEST(SaveLoad, CycleFileRejected) {
  auto dir = temp_dir();
  Trunk t = sample_tree();
  nlohmann::json j = tree_to_json(t);
  // introduce a cycle: supergroup points back to the root
  j["nodes"]["s"]["children"][0] = "r";
  j["nodes"]["s"]["grouping"]["partition"][0] = {0, 1, 2, 3};
  write_text_file(dir / "cycle.json", j.dump());
  EXPECT_THROW(load_tree(dir / "cycle.json"), ValidationError);
}

TEST(SaveLoad, MalformedFileDiagnostic) {
  auto dir = temp_dir();
  write_text_file(dir / "bad.json", "{not json");
  EXPECT_THROW(load_tree(dir / "bad.json"), ValidationError);
}

TEST(Invariants, FingerprintRespectsCompare) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Trunk a = random_tree(6, rng);
    Trunk b = random_tree(6, rng);
    auto cmp = compare(a, b);
    if (cmp.identical) {
      EXPECT_EQ(fingerprint(a), fingerprint(b));
    }
    if (fingerprint(a) != fingerprint(b)) {
      EXPECT_FALSE(cmp.identical);
    }
  }
}
