#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/common.hpp"
#include "trunk/hash.hpp"
#include "trunk/sim.hpp"
#include "trunk/version.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// The built tree: a root, supergroup nodes, and one leaf per category.
// ---------------------------------------------------------------------------

struct TreeNode {
  std::string id;
  int depth = 0;
  std::set<int> categories;  // what this node discriminates
  Grouping grouping;         // empty partition for leaves
  std::vector<std::string> children;  // aligned with grouping.partition
  std::string weights_ref;   // checkpoint prefix, empty when absent
  std::string kind;          // root | supergroup | leaf

  bool is_leaf() const { return children.empty(); }
};

struct Trunk {
  std::string dataset;
  double gv = 0.0;
  std::map<std::string, TreeNode> nodes;
  std::string root_id;
  std::string created_with;  // config digest

  const TreeNode& node(const std::string& id) const {
    auto it = nodes.find(id);
    if (it == nodes.end())
      throw std::runtime_error("tree references missing node: " + id);
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Validation: returns one violation string per broken invariant, empty when
// the tree is well-formed.
// ---------------------------------------------------------------------------

inline std::vector<std::string> validate(const Trunk& tree) {
  std::vector<std::string> violations;
  auto bad = [&](const std::string& node_id, const std::string& rule) {
    violations.push_back(node_id + ": " + rule);
  };

  if (!tree.nodes.count(tree.root_id)) {
    violations.push_back("tree: root id " + tree.root_id + " not in nodes");
    return violations;
  }

  std::map<std::string, int> parent_count;
  for (const auto& [id, node] : tree.nodes) {
    (void)node;
    parent_count[id] = 0;
  }
  for (const auto& [id, node] : tree.nodes) {
    for (const auto& child : node.children) {
      if (!tree.nodes.count(child)) {
        bad(id, "references missing child " + child);
        continue;
      }
      ++parent_count[child];
    }
  }
  for (const auto& [id, cnt] : parent_count) {
    if (id == tree.root_id) {
      if (cnt != 0) bad(id, "root must not have a parent");
    } else if (cnt == 0) {
      bad(id, "orphan node (no parent)");
    } else if (cnt > 1) {
      bad(id, "node has " + std::to_string(cnt) + " parents");
    }
  }

  // reachability / cycle guard
  std::set<std::string> visited;
  std::vector<std::string> stack = {tree.root_id};
  while (!stack.empty()) {
    std::string id = stack.back();
    stack.pop_back();
    if (visited.count(id)) {
      bad(id, "cycle detected");
      break;
    }
    visited.insert(id);
    auto it = tree.nodes.find(id);
    if (it == tree.nodes.end()) continue;
    for (const auto& c : it->second.children)
      if (tree.nodes.count(c)) stack.push_back(c);
  }
  if (visited.size() != tree.nodes.size() && violations.empty())
    violations.push_back("tree: unreachable nodes present");

  std::set<int> leaf_categories;
  for (const auto& [id, node] : tree.nodes) {
    if (node.categories.empty()) bad(id, "empty category set");
    bool structural_leaf = node.children.empty();
    if (structural_leaf && node.categories.size() != 1)
      bad(id, "childless node must hold exactly one category");
    if (!structural_leaf && node.categories.size() == 1)
      bad(id, "single-category node must be a leaf");
    // the root keeps kind "root" even in the degenerate one-category tree
    std::string expected_kind = id == tree.root_id  ? "root"
                                : structural_leaf   ? "leaf"
                                                    : "supergroup";
    if (node.kind != expected_kind)
      bad(id, "kind " + node.kind + " should be " + expected_kind);
    if (structural_leaf) {
      for (int c : node.categories) {
        if (leaf_categories.count(c))
          bad(id, "duplicate leaf for category " + std::to_string(c));
        leaf_categories.insert(c);
      }
      continue;
    }
    if (node.children.size() != node.grouping.partition.size()) {
      bad(id, "children count != grouping set count");
      continue;
    }
    std::set<int> union_cats;
    for (size_t i = 0; i < node.children.size(); ++i) {
      auto it = tree.nodes.find(node.children[i]);
      if (it == tree.nodes.end()) continue;
      std::set<int> expected(node.grouping.partition[i].begin(),
                             node.grouping.partition[i].end());
      if (it->second.categories != expected)
        bad(id, "child " + node.children[i] +
                    " categories do not match grouping set " +
                    std::to_string(i));
      for (int c : expected) {
        if (union_cats.count(c))
          bad(id, "grouping sets overlap on category " + std::to_string(c));
        union_cats.insert(c);
      }
    }
    if (union_cats != node.categories)
      bad(id, "grouping does not partition the node's categories");
  }

  const TreeNode& root = tree.nodes.at(tree.root_id);
  for (int c : root.categories)
    if (!leaf_categories.count(c))
      violations.push_back("tree: missing leaf for category " +
                           std::to_string(c));
  for (int c : leaf_categories)
    if (!root.categories.count(c))
      violations.push_back("tree: leaf category " + std::to_string(c) +
                           " not under root");
  return violations;
}

inline void require_valid(const Trunk& tree) {
  auto v = validate(tree);
  if (!v.empty())
    throw ValidationError("invalid tree: " + join(v, "; "));
}

// ---------------------------------------------------------------------------
// Canonical form: children ordered by smallest category, ids renumbered in
// DFS order. Idempotent; weights_refs ride along untouched.
// ---------------------------------------------------------------------------

inline Trunk canonicalize(const Trunk& tree) {
  require_valid(tree);
  Trunk out;
  out.dataset = tree.dataset;
  out.gv = tree.gv;
  out.created_with = tree.created_with;

  int counter = 0;
  // recursive rebuild with sorted children
  std::function<std::string(const std::string&, int)> walk =
      [&](const std::string& id, int depth) -> std::string {
    const TreeNode& src = tree.node(id);
    TreeNode dst;
    dst.id = "n" + std::to_string(counter++);
    dst.depth = depth;
    dst.categories = src.categories;
    dst.kind = src.kind;
    dst.weights_ref = src.weights_ref;
    dst.grouping.gv_used = src.grouping.gv_used;
    std::string dst_id = dst.id;

    std::vector<size_t> order(src.children.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return src.grouping.partition[a][0] < src.grouping.partition[b][0];
    });
    out.nodes[dst_id] = dst;  // reserve id before recursing
    for (size_t oi : order) {
      auto set = src.grouping.partition[oi];
      std::sort(set.begin(), set.end());
      out.nodes[dst_id].grouping.partition.push_back(set);
      out.nodes[dst_id].children.push_back(walk(src.children[oi], depth + 1));
    }
    return dst_id;
  };
  out.root_id = walk(tree.root_id, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Fingerprint: digest of the canonical (depth, category-set) multiset.
// Structure-only, so retraining weights never changes it.
// ---------------------------------------------------------------------------

inline std::string fingerprint(const Trunk& tree) {
  Trunk canon = canonicalize(tree);
  std::vector<std::string> lines;
  for (const auto& [id, node] : canon.nodes) {
    (void)id;
    std::string line = std::to_string(node.depth) + ":";
    bool first = true;
    for (int c : node.categories) {
      if (!first) line += ",";
      line += std::to_string(c);
      first = false;
    }
    lines.push_back(std::move(line));
  }
  std::sort(lines.begin(), lines.end());
  return sha256_hex(join(lines, "\n")).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Comparison: identical means equal canonical forms; similarity is the
// Jaccard index over the two trees' multisets of internal category-sets.
// ---------------------------------------------------------------------------

struct TreeComparison {
  bool identical = false;
  double similarity = 0.0;
};

namespace detail {

inline bool canonical_equal(const Trunk& a, const Trunk& b,
                            const std::string& ia, const std::string& ib) {
  const TreeNode& na = a.node(ia);
  const TreeNode& nb = b.node(ib);
  if (na.categories != nb.categories) return false;
  if (na.children.size() != nb.children.size()) return false;
  for (size_t i = 0; i < na.children.size(); ++i)
    if (!canonical_equal(a, b, na.children[i], nb.children[i])) return false;
  return true;
}

inline std::map<std::string, int> internal_set_multiset(const Trunk& t) {
  std::map<std::string, int> ms;
  for (const auto& [id, node] : t.nodes) {
    (void)id;
    if (node.is_leaf()) continue;
    std::string key;
    for (int c : node.categories) key += std::to_string(c) + ",";
    ++ms[key];
  }
  return ms;
}

}  // namespace detail

inline TreeComparison compare(const Trunk& a, const Trunk& b) {
  require_valid(a);
  require_valid(b);
  const auto& ra = a.node(a.root_id).categories;
  const auto& rb = b.node(b.root_id).categories;
  if (ra != rb)
    throw ValidationError(
        "cannot compare trees over different category universes");
  Trunk ca = canonicalize(a);
  Trunk cb = canonicalize(b);
  TreeComparison cmp;
  cmp.identical = detail::canonical_equal(ca, cb, ca.root_id, cb.root_id);
  auto ma = detail::internal_set_multiset(ca);
  auto mb = detail::internal_set_multiset(cb);
  int inter = 0, uni = 0;
  for (const auto& [k, va] : ma) {
    auto it = mb.find(k);
    int vb = it == mb.end() ? 0 : it->second;
    inter += std::min(va, vb);
    uni += std::max(va, vb);
  }
  for (const auto& [k, vb] : mb)
    if (!ma.count(k)) uni += vb;
  cmp.similarity = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  return cmp;
}

// ---------------------------------------------------------------------------
// DOT rendering: red root, gray supergroups, green leaves (root wins on a
// degenerate single-node tree). Leaf labels show category names.
// ---------------------------------------------------------------------------

inline std::string to_dot(const Trunk& tree,
                          const std::vector<std::string>& category_names = {}) {
  require_valid(tree);
  std::string out = "digraph trunk {\n  node [style=filled];\n";
  Trunk canon = canonicalize(tree);
  std::vector<std::string> ids;
  for (const auto& [id, n] : canon.nodes) {
    (void)n;
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
  });
  for (const auto& id : ids) {
    const TreeNode& n = canon.nodes.at(id);
    std::string color = id == canon.root_id ? "red"
                        : n.is_leaf()       ? "green"
                                            : "gray";
    std::string label;
    if (n.is_leaf()) {
      int c = *n.categories.begin();
      label = static_cast<size_t>(c) < category_names.size()
                  ? category_names[c]
                  : std::to_string(c);
    } else {
      label = id + " (" + std::to_string(n.categories.size()) + ")";
    }
    out += "  " + id + " [label=\"" + label + "\", fillcolor=" + color + "];\n";
  }
  for (const auto& id : ids)
    for (const auto& child : canon.nodes.at(id).children)
      out += "  " + id + " -> " + child + ";\n";
  out += "}\n";
  return out;
}

// ---------------------------------------------------------------------------
// JSON round-trip
// ---------------------------------------------------------------------------

inline nlohmann::json tree_to_json(const Trunk& tree) {
  nlohmann::json j;
  j["schema_version"] = kTreeSchemaVersion;
  j["dataset"] = tree.dataset;
  j["gv"] = tree.gv;
  j["root_id"] = tree.root_id;
  j["created_with"] = tree.created_with;
  nlohmann::json nodes = nlohmann::json::object();
  for (const auto& [id, n] : tree.nodes) {
    nlohmann::json nj;
    nj["depth"] = n.depth;
    nj["categories"] = n.categories;
    nj["children"] = n.children;
    nj["kind"] = n.kind;
    if (!n.weights_ref.empty()) nj["weights_ref"] = n.weights_ref;
    if (!n.grouping.partition.empty()) {
      nj["grouping"] = {{"partition", n.grouping.partition},
                        {"gv_used", n.grouping.gv_used}};
    }
    nodes[id] = std::move(nj);
  }
  j["nodes"] = std::move(nodes);
  return j;
}

inline Trunk tree_from_json(const nlohmann::json& j) {
  Trunk tree;
  if (j.at("schema_version").get<int>() != kTreeSchemaVersion)
    throw ValidationError("unsupported tree schema version");
  tree.dataset = j.at("dataset").get<std::string>();
  tree.gv = j.at("gv").get<double>();
  tree.root_id = j.at("root_id").get<std::string>();
  tree.created_with = j.value("created_with", "");
  for (const auto& [id, nj] : j.at("nodes").items()) {
    TreeNode n;
    n.id = id;
    n.depth = nj.at("depth").get<int>();
    for (int c : nj.at("categories")) n.categories.insert(c);
    for (const auto& c : nj.at("children"))
      n.children.push_back(c.get<std::string>());
    n.kind = nj.at("kind").get<std::string>();
    n.weights_ref = nj.value("weights_ref", "");
    if (nj.contains("grouping")) {
      for (const auto& set : nj["grouping"].at("partition"))
        n.grouping.partition.push_back(set.get<std::vector<int>>());
      n.grouping.gv_used = nj["grouping"].at("gv_used").get<double>();
    }
    tree.nodes[id] = std::move(n);
  }
  require_valid(tree);
  return tree;
}

inline void save_tree(const Trunk& tree, const fs::path& path) {
  write_text_file(path, tree_to_json(tree).dump(2) + "\n");
}

inline Trunk load_tree(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed tree file " + path.string() + ": " +
                          e.what());
  }
  try {
    return tree_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed tree file " + path.string() + ": " +
                          e.what());
  }
}

}  // namespace trunk
