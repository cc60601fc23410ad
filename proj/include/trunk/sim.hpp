#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "trunk/common.hpp"
#include "trunk/dataset.hpp"
#include "trunk/model.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Average-softmax similarity among a node's groups: entry (i,j) is the mean
// probability mass images of group i place on group j, so every row is a
// mean of softmax vectors and sums to 1.
// ---------------------------------------------------------------------------

struct SimilarityMatrix {
  std::vector<std::vector<double>> entries;  // K x K, row-stochastic
  std::vector<int> labels;                   // the K group identities

  size_t size() const { return entries.size(); }

  void check_row_stochastic(double tol = 1e-6) const {
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].size() != entries.size())
        throw ValidationError("similarity matrix is not square");
      double sum = 0.0;
      for (double v : entries[i]) {
        if (v < 0.0 || v > 1.0)
          throw ValidationError("similarity entries must lie in [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol)
        throw ValidationError("similarity row " + std::to_string(i) +
                              " sums to " + format_double(sum) +
                              ", expected 1");
    }
  }

  std::string to_csv() const {
    std::string out = "label";
    for (int l : labels) out += "," + std::to_string(l);
    out += "\n";
    for (size_t i = 0; i < entries.size(); ++i) {
      out += std::to_string(labels[i]);
      for (double v : entries[i]) out += "," + format_double(v);
      out += "\n";
    }
    return out;
  }
};

struct Grouping {
  std::vector<std::vector<int>> partition;  // disjoint, covering, canonical
  double gv_used = 0.0;

  size_t group_count() const { return partition.size(); }
};

// Mean softmax output per true group over a validation set. Every group in
// `labels` must have at least one example, otherwise its row is inestimable.
inline SimilarityMatrix compute_similarity(NodeNetwork& node_model,
                                           const Dataset& val_data,
                                           const std::vector<int>& labels,
                                           size_t batch_size = 64) {
  size_t k = labels.size();
  if (node_model.out_groups != k)
    throw ValidationError("compute_similarity: model output width " +
                          std::to_string(node_model.out_groups) +
                          " != label count " + std::to_string(k));
  std::vector<std::vector<double>> acc(k, std::vector<double>(k, 0.0));
  std::vector<size_t> counts(k, 0);
  size_t n = val_data.size();
  for (size_t start = 0; start < n; start += batch_size) {
    size_t take = std::min(batch_size, n - start);
    Tensor batch({take, val_data.shape.channels, val_data.shape.height,
                  val_data.shape.width});
    for (size_t b = 0; b < take; ++b) {
      const auto& img = val_data.images[start + b];
      std::copy(img.begin(), img.end(), batch.data.begin() + b * img.size());
    }
    Tensor probs = node_model.forward(batch, /*train=*/false);
    for (size_t b = 0; b < take; ++b) {
      int lab = val_data.labels[start + b];
      if (lab < 0 || static_cast<size_t>(lab) >= k)
        throw ValidationError("compute_similarity: label " +
                              std::to_string(lab) + " out of range");
      ++counts[lab];
      for (size_t j = 0; j < k; ++j) acc[lab][j] += probs.at2(b, j);
    }
  }
  SimilarityMatrix sim;
  sim.labels = labels;
  sim.entries.assign(k, std::vector<double>(k, 0.0));
  for (size_t i = 0; i < k; ++i) {
    if (counts[i] == 0)
      throw ValidationError(
          "compute_similarity: no validation images for group " +
          std::to_string(labels[i]));
    for (size_t j = 0; j < k; ++j)
      sim.entries[i][j] = acc[i][j] / static_cast<double>(counts[i]);
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Grouping under the volatility threshold. Categories i and j link when the
// symmetrized confusion (S[i][j]+S[j][i])/2 strictly exceeds gv/K, i.e. gv
// scales how far above uniform chance two categories must be confused to
// merge. The partition is the transitive closure of the link relation,
// emitted canonically: each set sorted, sets ordered by smallest member.
// ---------------------------------------------------------------------------

inline Grouping group_categories(const SimilarityMatrix& s, double gv) {
  if (!(gv > 0.0)) throw ValidationError("grouping volatility must be > 0");
  s.check_row_stochastic();
  size_t k = s.size();
  double threshold = gv / static_cast<double>(k);

  // union-find over the link relation
  std::vector<size_t> parent(k);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<size_t(size_t)> find = [&](size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (size_t i = 0; i < k; ++i)
    for (size_t j = i + 1; j < k; ++j) {
      double c = (s.entries[i][j] + s.entries[j][i]) / 2.0;
      if (c > threshold) parent[find(i)] = find(j);
    }

  std::map<size_t, std::vector<int>> comps;
  for (size_t i = 0; i < k; ++i) comps[find(i)].push_back(s.labels[i]);
  Grouping g;
  g.gv_used = gv;
  for (auto& [root, members] : comps) {
    std::sort(members.begin(), members.end());
    g.partition.push_back(std::move(members));
  }
  std::sort(g.partition.begin(), g.partition.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  return g;
}

// Group counts across a sorted list of gv values; non-decreasing since the
// link set only shrinks as the threshold rises.
inline std::vector<std::pair<double, size_t>> grouping_profile(
    const SimilarityMatrix& s, const std::vector<double>& gv_values) {
  for (size_t i = 1; i < gv_values.size(); ++i)
    if (gv_values[i] < gv_values[i - 1])
      throw ValidationError("grouping_profile: gv values must be ascending");
  std::vector<std::pair<double, size_t>> out;
  for (double gv : gv_values)
    out.emplace_back(gv, group_categories(s, gv).group_count());
  return out;
}

// True when every set of `fine` sits inside one set of `coarse`.
inline bool refines(const Grouping& fine, const Grouping& coarse) {
  std::map<int, size_t> coarse_of;
  for (size_t gi = 0; gi < coarse.partition.size(); ++gi)
    for (int c : coarse.partition[gi]) coarse_of[c] = gi;
  for (const auto& set : fine.partition) {
    auto it = coarse_of.find(set[0]);
    if (it == coarse_of.end()) return false;
    for (int c : set) {
      auto jt = coarse_of.find(c);
      if (jt == coarse_of.end() || jt->second != it->second) return false;
    }
  }
  return true;
}

}  // namespace trunk
