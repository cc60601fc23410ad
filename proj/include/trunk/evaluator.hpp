#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/config.hpp"
#include "trunk/dataset.hpp"
#include "trunk/model.hpp"
#include "trunk/tree.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Runtime tree: the structure plus one loaded network per internal node.
// Leaves are weightless labels; all classification happens at internal nodes.
// ---------------------------------------------------------------------------

class TreeRuntime {
 public:
  Trunk tree;
  std::map<std::string, NodeNetwork> networks;
  std::map<std::string, uint64_t> node_flops;
  ImageShape input_shape;

  static TreeRuntime load(const Trunk& tree_in,
                          const fs::path& weights_root = {}) {
    TreeRuntime rt;
    rt.tree = tree_in;
    require_valid(rt.tree);
    for (const auto& [id, node] : rt.tree.nodes) {
      if (node.is_leaf()) continue;
      fs::path prefix = node.weights_ref;
      if (!weights_root.empty())
        prefix = weights_root / "nodes" / id / "weights";
      fs::path metap = prefix;
      metap += ".json";
      if (!fs::exists(metap))
        throw std::runtime_error("missing checkpoint for node " + id + ": " +
                                 metap.string());
      nlohmann::json meta = nlohmann::json::parse(read_text_file(metap));
      ImageShape shape{meta.at("input_shape")[0].get<size_t>(),
                       meta.at("input_shape")[1].get<size_t>(),
                       meta.at("input_shape")[2].get<size_t>()};
      BackboneSpec spec =
          default_backbone(meta.at("family").get<std::string>(), shape);
      NodeNetwork net = make_node_network(
          spec, meta.at("out_groups").get<size_t>(), /*init_seed=*/0,
          meta.at("norm_mode").get<std::string>());
      load_weights(net, prefix);
      rt.input_shape = shape;
      rt.node_flops[id] = count_flops(net, shape);
      rt.networks[id] = std::move(net);
    }
    return rt;
  }

  uint64_t total_internal_flops() const {
    uint64_t sum = 0;
    for (const auto& [id, f] : node_flops) {
      (void)id;
      sum += f;
    }
    return sum;
  }
};

struct InferenceResult {
  int category = -1;
  std::vector<std::string> path;  // node ids visited, leaf included
  uint64_t flops = 0;             // sum over internal nodes on the path
};

// Routes one image from the root: each internal node picks the argmax group
// (ties break to the lowest index) and descends; a leaf ends the walk.
inline InferenceResult infer_image(TreeRuntime& rt,
                                   const std::vector<double>& image) {
  InferenceResult res;
  std::string cur = rt.tree.root_id;
  while (true) {
    const TreeNode& node = rt.tree.node(cur);
    res.path.push_back(cur);
    if (node.is_leaf() || node.children.empty()) {
      res.category = *node.categories.begin();
      return res;
    }
    auto it = rt.networks.find(cur);
    if (it == rt.networks.end())
      throw std::runtime_error("missing checkpoint on path at node " + cur);
    NodeNetwork& net = it->second;
    Tensor batch({1, rt.input_shape.channels, rt.input_shape.height,
                  rt.input_shape.width});
    std::copy(image.begin(), image.end(), batch.data.begin());
    Tensor logits = net.forward_logits(batch, /*train=*/false);
    size_t arg = 0;
    for (size_t j = 1; j < net.out_groups; ++j)
      if (logits.at2(0, j) > logits.at2(0, arg)) arg = j;
    res.flops += rt.node_flops.at(cur);
    cur = node.children.at(arg);
  }
}

// ---------------------------------------------------------------------------
// Full-test-set evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;  // correct / total, exact
  double total_time = 0.0;
  double mean_flops_per_image = 0.0;
  std::map<int, double> per_category_accuracy;
  std::map<size_t, size_t> path_length_histogram;  // path node count -> images
  size_t total = 0;
  size_t correct = 0;
};

inline EvalResult evaluate(TreeRuntime& rt, const Dataset& test_data) {
  EvalResult out;
  std::map<int, size_t> cat_total, cat_correct;
  uint64_t flops_sum = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < test_data.size(); ++i) {
    const auto& raw = test_data.images[i];
    std::vector<double> img(raw.begin(), raw.end());
    InferenceResult r = infer_image(rt, img);
    int truth = test_data.labels[i];
    ++cat_total[truth];
    if (r.category == truth) {
      ++out.correct;
      ++cat_correct[truth];
    }
    flops_sum += r.flops;
    ++out.path_length_histogram[r.path.size()];
  }
  out.total_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.total = test_data.size();
  out.accuracy = out.total == 0
                     ? 0.0
                     : static_cast<double>(out.correct) /
                           static_cast<double>(out.total);
  out.mean_flops_per_image =
      out.total == 0 ? 0.0
                     : static_cast<double>(flops_sum) /
                           static_cast<double>(out.total);
  for (const auto& [cat, tot] : cat_total)
    out.per_category_accuracy[cat] =
        static_cast<double>(cat_correct[cat]) / static_cast<double>(tot);
  return out;
}

inline nlohmann::json eval_to_json(const EvalResult& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["total_time_seconds"] = r.total_time;
  j["mean_flops_per_image"] = r.mean_flops_per_image;
  nlohmann::json pca = nlohmann::json::object();
  for (const auto& [c, a] : r.per_category_accuracy)
    pca[std::to_string(c)] = a;
  j["per_category_accuracy"] = std::move(pca);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [d, n] : r.path_length_histogram)
    hist[std::to_string(d)] = n;
  j["path_length_histogram"] = std::move(hist);
  return j;
}

inline std::string eval_csv_row(const EvalResult& r) {
  return format_double(r.accuracy) + "," + format_double(r.total_time) + "," +
         format_double(r.mean_flops_per_image) + "," +
         std::to_string(r.total) + "\n";
}

// ---------------------------------------------------------------------------
// Pretrained-weight verification against a claims file:
//   {"dataset": "...", "accuracy": <percent>}
// ---------------------------------------------------------------------------

struct VerifyReport {
  double measured_percent = 0.0;
  double claimed_percent = 0.0;
  double gap_percent = 0.0;
  double tolerance_percent = 0.0;
  bool has_claim = false;
  bool pass = false;  // meaningful only when has_claim
  std::string dataset;
};

inline VerifyReport verify_pretrained(const fs::path& weights_dir,
                                      const fs::path& tree_file,
                                      const ExperimentConfig& config,
                                      const fs::path& claims_path,
                                      double tolerance_percent = 0.1,
                                      const fs::path& data_dir = data_root()) {
  Trunk tree = load_tree(tree_file);
  TreeRuntime rt = TreeRuntime::load(tree, weights_dir);
  Dataset test = load_raw_split(config.dataset_name, "test", config, data_dir);
  Dataset cooked = apply_pipeline_once(
      test, build_pipeline(config.splits.test.transforms, test.shape),
      named_stream("augment/test"));
  EvalResult res = evaluate(rt, cooked);

  VerifyReport rep;
  rep.dataset = config.dataset_name;
  rep.measured_percent = res.accuracy * 100.0;
  rep.tolerance_percent = tolerance_percent;
  if (fs::exists(claims_path)) {
    nlohmann::json claims = nlohmann::json::parse(read_text_file(claims_path));
    rep.claimed_percent = claims.at("accuracy").get<double>();
    rep.has_claim = true;
    rep.gap_percent = std::abs(rep.measured_percent - rep.claimed_percent);
    rep.pass = rep.gap_percent <= tolerance_percent;
  }
  return rep;
}

inline std::string verify_report_text(const VerifyReport& r) {
  std::string out = "dataset: " + r.dataset + "\n";
  out += "measured accuracy: " + format_double(r.measured_percent) + "%\n";
  if (!r.has_claim) {
    out += "claimed accuracy: (no claims file) — unverifiable\n";
    return out;
  }
  out += "claimed accuracy: " + format_double(r.claimed_percent) + "%\n";
  out += "absolute gap: " + format_double(r.gap_percent) + "%\n";
  out += "tolerance: " + format_double(r.tolerance_percent) + "%\n";
  out += std::string("verdict: ") + (r.pass ? "PASS" : "FAIL") + "\n";
  return out;
}

}  // namespace trunk
