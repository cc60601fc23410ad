#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/config.hpp"
#include "trunk/dataset.hpp"
#include "trunk/model.hpp"
#include "trunk/provenance.hpp"
#include "trunk/rng.hpp"
#include "trunk/sim.hpp"
#include "trunk/tree.hpp"

namespace trunk {

struct NodeTrainReport {
  std::string node_id;
  int epochs_run = 0;
  double final_train_loss = 0.0;
  double val_accuracy = 0.0;
  double wall_time = 0.0;
  std::string checkpoint;
};

struct BuildReport {
  Trunk tree;
  std::vector<NodeTrainReport> node_reports;  // one per non-leaf node
  std::string config_digest;
  uint64_t seed = 0;
  double total_wall_time = 0.0;
  size_t dataset_cap = 0;  // debug cap applied to split sizes; 0 = uncapped
  fs::path build_dir;
};

inline double evaluate_accuracy(NodeNetwork& net, const Dataset& ds,
                                size_t batch_size = 64) {
  if (ds.size() == 0) return 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < ds.size(); start += batch_size) {
    size_t take = std::min(batch_size, ds.size() - start);
    Tensor batch({take, ds.shape.channels, ds.shape.height, ds.shape.width});
    for (size_t b = 0; b < take; ++b) {
      const auto& img = ds.images[start + b];
      std::copy(img.begin(), img.end(), batch.data.begin() + b * img.size());
    }
    Tensor logits = net.forward_logits(batch, /*train=*/false);
    for (size_t b = 0; b < take; ++b) {
      size_t arg = 0;
      for (size_t j = 1; j < net.out_groups; ++j)
        if (logits.at2(b, j) > logits.at2(b, arg)) arg = j;
      if (static_cast<int>(arg) == ds.labels[start + b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Per-node training: the configured loss, optimizer, and cosine LR schedule,
// keeping the best-validation parameter snapshot.
// ---------------------------------------------------------------------------

struct NodeTrainOptions {
  size_t batch_size = 32;
  bool shuffle = true;
  // per-epoch stochastic train transforms; validation data arrives cooked
  const AugmentationPipeline* augment = nullptr;
};

inline NodeTrainReport train_node(NodeNetwork& network, const Dataset& train,
                                  const Dataset& val, const TrainSpec& spec,
                                  const std::string& node_id,
                                  const NodeTrainOptions& options = {}) {
  auto t0 = std::chrono::steady_clock::now();
  NodeTrainReport report;
  report.node_id = node_id;

  std::set<int> groups_present(train.labels.begin(), train.labels.end());
  for (size_t g = 0; g < network.out_groups; ++g)
    if (!groups_present.count(static_cast<int>(g)))
      throw ValidationError("train_node " + node_id + ": group " +
                            std::to_string(g) + " has no training images");

  if (network.out_groups == 1) {
    // single-group degenerate: softmax over one logit is identically 1
    report.epochs_run = 0;
    report.final_train_loss = 0.0;
    report.val_accuracy = 1.0;
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return report;
  }

  nn::Adam adam(spec.optimizer.lr, spec.optimizer.weight_decay);
  nn::SGD sgd(spec.optimizer.lr, spec.optimizer.weight_decay);
  auto params = network.params();

  std::mt19937_64 shuffle_rng = named_stream("train/" + node_id + "/shuffle");
  std::mt19937_64 aug_rng = named_stream("train/" + node_id + "/augment");
  size_t batch_size = std::max<size_t>(1, options.batch_size);

  double best_val = -1.0;
  std::vector<std::vector<double>> best_params;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> best_running;

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    double lr = nn::cosine_annealing_lr(spec.optimizer.lr,
                                        spec.lr_scheduler.eta_min, epoch,
                                        spec.lr_scheduler.t_max);
    adam.lr = lr;
    sgd.lr = lr;
    if (options.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
      size_t take = std::min(batch_size, order.size() - start);
      Tensor batch(
          {take, train.shape.channels, train.shape.height, train.shape.width});
      std::vector<int> targets(take);
      for (size_t b = 0; b < take; ++b) {
        const auto& raw = train.images[order[start + b]];
        std::vector<double> img(raw.begin(), raw.end());
        if (options.augment) img = options.augment->apply(img, aug_rng);
        std::copy(img.begin(), img.end(), batch.data.begin() + b * img.size());
        targets[b] = train.labels[order[start + b]];
      }
      Tensor logits = network.forward_logits(batch, /*train=*/true);
      Tensor grad;
      double loss = nn::nll_loss(logits, targets, &grad);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_node " + node_id +
                                 ": loss became non-finite at epoch " +
                                 std::to_string(epoch) + " (lr=" +
                                 format_double(lr) + ")");
      nn::zero_grads(params);
      network.backward(grad);
      if (spec.optimizer.kind == "Adam")
        adam.step(params);
      else
        sgd.step(params);
      loss_sum += loss * static_cast<double>(take);
      seen += take;
    }
    report.final_train_loss = loss_sum / static_cast<double>(seen);
    report.epochs_run = epoch + 1;

    double acc = evaluate_accuracy(network, val);
    if (acc > best_val) {
      best_val = acc;
      best_params.clear();
      for (auto& p : params) best_params.push_back(*p.value);
      best_running.clear();
      for (auto& l : network.layers)
        if (auto* n = std::get_if<nn::Norm>(&l))
          best_running.emplace_back(n->running_mean, n->running_var);
    }
  }

  // restore the best-validation snapshot
  for (size_t i = 0; i < params.size(); ++i) *params[i].value = best_params[i];
  size_t ri = 0;
  for (auto& l : network.layers)
    if (auto* n = std::get_if<nn::Norm>(&l)) {
      n->running_mean = best_running[ri].first;
      n->running_var = best_running[ri].second;
      ++ri;
    }
  report.val_accuracy = best_val;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Recursive build: train a discovery classifier over the node's categories,
// group its validation confusions under the configured volatility, then
// retrain the node to route by group and recurse into multi-category groups.
// ---------------------------------------------------------------------------

namespace detail {

struct BuildContext {
  const ExperimentConfig* config;
  const Dataset* train;  // raw; train transforms run per epoch
  const Dataset* val;    // cooked with the validation pipeline
  AugmentationPipeline train_pipeline;
  BackboneSpec backbone;
  fs::path build_dir;
  bool resuming = false;
  int node_counter = 0;
  Trunk tree;
  std::vector<NodeTrainReport> reports;

  std::string next_id() { return "n" + std::to_string(node_counter++); }

  NodeTrainOptions train_options() const {
    NodeTrainOptions o;
    o.batch_size = static_cast<size_t>(config->splits.train.batch_size);
    o.shuffle = config->splits.train.shuffle;
    o.augment = &train_pipeline;
    return o;
  }
};

inline nlohmann::json node_record_json(const TreeNode& node,
                                       const NodeTrainReport& report,
                                       size_t out_groups) {
  nlohmann::json j;
  j["node_id"] = node.id;
  j["categories"] = node.categories;
  j["grouping"] = {{"partition", node.grouping.partition},
                   {"gv_used", node.grouping.gv_used}};
  j["out_groups"] = out_groups;
  j["report"] = {{"epochs_run", report.epochs_run},
                 {"final_train_loss", report.final_train_loss},
                 {"val_accuracy", report.val_accuracy},
                 {"wall_time", report.wall_time},
                 {"checkpoint", report.checkpoint}};
  return j;
}

inline std::string build_node(BuildContext& ctx, const std::set<int>& cats,
                              int depth);

inline std::string make_leaf(BuildContext& ctx, int category, int depth) {
  TreeNode leaf;
  leaf.id = ctx.next_id();
  leaf.depth = depth;
  leaf.categories = {category};
  leaf.kind = depth == 0 ? "root" : "leaf";
  ctx.tree.nodes[leaf.id] = leaf;
  return leaf.id;
}

inline std::string build_node(BuildContext& ctx, const std::set<int>& cats,
                              int depth) {
  const ExperimentConfig& config = *ctx.config;
  if (depth > static_cast<int>(ctx.train->category_counts().size()))
    throw std::runtime_error("build recursion exceeded category count");
  if (cats.size() == 1) return make_leaf(ctx, *cats.begin(), depth);

  std::string id = ctx.next_id();
  fs::path node_dir = ctx.build_dir / "nodes" / id;
  fs::path record_path = node_dir / "report.json";
  std::string checkpoint_prefix = (node_dir / "weights").string();

  std::vector<int> sorted_cats(cats.begin(), cats.end());
  std::map<int, int> identity_map;
  for (size_t i = 0; i < sorted_cats.size(); ++i)
    identity_map[sorted_cats[i]] = static_cast<int>(i);

  Grouping grouping;
  NodeTrainReport report;
  size_t out_groups = 0;

  bool reused = false;
  if (ctx.resuming && fs::exists(record_path) &&
      fs::exists(checkpoint_prefix + ".bin")) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(record_path));
    std::set<int> stored_cats;
    for (int c : j.at("categories")) stored_cats.insert(c);
    if (stored_cats == cats) {
      for (const auto& set : j["grouping"].at("partition"))
        grouping.partition.push_back(set.get<std::vector<int>>());
      grouping.gv_used = j["grouping"].at("gv_used").get<double>();
      out_groups = j.at("out_groups").get<size_t>();
      report.node_id = id;
      report.epochs_run = j["report"].at("epochs_run").get<int>();
      report.final_train_loss =
          j["report"].at("final_train_loss").get<double>();
      report.val_accuracy = j["report"].at("val_accuracy").get<double>();
      report.wall_time = j["report"].at("wall_time").get<double>();
      report.checkpoint = j["report"].at("checkpoint").get<std::string>();
      reused = true;
    }
  }

  if (!reused) {
    size_t k = cats.size();
    Dataset node_train = restrict_and_relabel(*ctx.train, cats, identity_map);
    Dataset node_val = restrict_and_relabel(*ctx.val, cats, identity_map);

    // phase 1: discover confusions with a K-way classifier
    NodeNetwork discover = make_node_network(
        ctx.backbone, k, global_seed() ^ fnv1a64("init/" + id + "/discover"),
        config.training.batch_norm_mode);
    NodeTrainReport discover_report =
        train_node(discover, node_train, node_val, config.training, id,
                   ctx.train_options());

    SimilarityMatrix sim =
        compute_similarity(discover, node_val, sorted_cats);
    grouping = group_categories(sim, config.training.grouping_volatility);
    write_text_file(node_dir / "similarity.csv", sim.to_csv());

    bool no_refinement = grouping.partition.size() == 1;
    bool all_singletons = grouping.partition.size() == k;
    if (no_refinement || all_singletons) {
      // the node classifies its categories directly; children are leaves
      grouping.partition.clear();
      for (int c : sorted_cats) grouping.partition.push_back({c});
      grouping.gv_used = config.training.grouping_volatility;
      out_groups = k;
      report = discover_report;
      report.checkpoint = checkpoint_prefix;
      save_weights(discover, checkpoint_prefix);
    } else {
      // phase 2: retrain to route by group
      std::map<int, int> group_map;
      for (size_t gi = 0; gi < grouping.partition.size(); ++gi)
        for (int c : grouping.partition[gi])
          group_map[c] = static_cast<int>(gi);
      Dataset route_train = restrict_and_relabel(*ctx.train, cats, group_map);
      Dataset route_val = restrict_and_relabel(*ctx.val, cats, group_map);
      out_groups = grouping.partition.size();
      NodeNetwork router = make_node_network(
          ctx.backbone, out_groups,
          global_seed() ^ fnv1a64("init/" + id + "/route"),
          config.training.batch_norm_mode);
      report = train_node(router, route_train, route_val, config.training, id,
                          ctx.train_options());
      report.checkpoint = checkpoint_prefix;
      save_weights(router, checkpoint_prefix);
    }
    report.node_id = id;
  }

  log_line("[node " + id + "] depth=" + std::to_string(depth) +
           " categories=" + std::to_string(cats.size()) + " groups=" +
           std::to_string(grouping.partition.size()) + " val_acc=" +
           format_double(report.val_accuracy) +
           (reused ? " (resumed)" : ""));

  TreeNode node;
  node.id = id;
  node.depth = depth;
  node.categories = cats;
  node.grouping = grouping;
  node.kind = depth == 0 ? "root" : "supergroup";
  node.weights_ref = checkpoint_prefix;
  ctx.tree.nodes[id] = node;  // children filled below

  for (const auto& group : grouping.partition) {
    std::set<int> group_cats(group.begin(), group.end());
    std::string child_id = group_cats.size() == 1
                               ? make_leaf(ctx, *group_cats.begin(), depth + 1)
                               : build_node(ctx, group_cats, depth + 1);
    ctx.tree.nodes[id].children.push_back(child_id);
  }

  ctx.reports.push_back(report);
  if (!reused)
    write_text_file(record_path,
                    node_record_json(ctx.tree.nodes[id], report, out_groups)
                            .dump(2) +
                        "\n");
  return id;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline BuildReport build_and_train(const ExperimentConfig& config,
                                   const fs::path& build_dir,
                                   size_t debug_cap = 0,
                                   bool resuming = false,
                                   const fs::path& data_dir = data_root()) {
  auto t0 = std::chrono::steady_clock::now();
  validate(config);
  if (config.dataset_name.empty())
    throw ValidationError("config has no dataset name (set dataset.name or "
                          "pass --dataset)");
  if (config.model_backbone.empty())
    throw ValidationError(
        "config has no model_backbone (set model_backbone or pass "
        "--model_backbone)");
  seed_all(config.seed);
  fs::create_directories(build_dir);

  RunManifest manifest = capture(config, data_dir);
  if (!resuming || !fs::exists(build_dir / "manifest.json"))
    save_manifest(manifest, build_dir / "manifest.json");
  save_config(config, build_dir / "config.yaml");

  Dataset train =
      load_raw_split(config.dataset_name, "train", config, data_dir);
  Dataset val =
      load_raw_split(config.dataset_name, "validation", config, data_dir);
  if (debug_cap > 0) {
    auto cap = [&](Dataset& ds) {
      if (ds.size() > debug_cap) {
        ds.images.resize(debug_cap);
        ds.labels.resize(debug_cap);
      }
    };
    cap(train);
    cap(val);
  }
  Dataset val_cooked = apply_pipeline_once(
      val, build_pipeline(config.splits.validation.transforms, val.shape),
      named_stream("augment/validation"));

  detail::BuildContext ctx;
  ctx.config = &config;
  ctx.train = &train;
  ctx.val = &val_cooked;
  ctx.train_pipeline =
      build_pipeline(config.splits.train.transforms, train.shape);
  ctx.backbone = default_backbone(config.model_backbone, train.shape);
  ctx.build_dir = build_dir;
  ctx.resuming = resuming;
  ctx.tree.dataset = config.dataset_name;
  ctx.tree.gv = config.training.grouping_volatility;
  ctx.tree.created_with = config_digest(config);

  std::set<int> all_cats = train.categories();
  ctx.tree.root_id = detail::build_node(ctx, all_cats, 0);

  require_valid(ctx.tree);
  save_tree(ctx.tree, build_dir / "tree.json");

  BuildReport report;
  report.tree = ctx.tree;
  report.node_reports = ctx.reports;
  report.config_digest = ctx.tree.created_with;
  report.seed = config.seed;
  report.dataset_cap = debug_cap;
  report.build_dir = build_dir;
  report.total_wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  nlohmann::json bj;
  bj["config_digest"] = report.config_digest;
  bj["seed"] = report.seed;
  bj["total_wall_time"] = report.total_wall_time;
  bj["dataset_cap"] = report.dataset_cap;
  bj["node_count"] = ctx.tree.nodes.size();
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : ctx.reports)
    reports.push_back({{"node_id", r.node_id},
                       {"epochs_run", r.epochs_run},
                       {"final_train_loss", r.final_train_loss},
                       {"val_accuracy", r.val_accuracy},
                       {"wall_time", r.wall_time},
                       {"checkpoint", r.checkpoint}});
  bj["node_reports"] = std::move(reports);
  write_text_file(build_dir / "build.json", bj.dump(2) + "\n");
  return report;
}

// Continues an interrupted build. Completed nodes (record + checkpoint on
// disk) are not retrained. Refuses when the stored config digest differs
// from the caller's config.
inline BuildReport resume(const fs::path& build_dir,
                          const std::optional<ExperimentConfig>& current =
                              std::nullopt,
                          std::optional<size_t> cap_override = std::nullopt,
                          const fs::path& data_dir = data_root()) {
  fs::path config_path = build_dir / "config.yaml";
  if (!fs::exists(config_path))
    throw std::runtime_error("resume: no config.yaml in " +
                             build_dir.string());
  ExperimentConfig stored = load_config(config_path);
  if (current) {
    std::string stored_digest = config_digest(stored);
    std::string current_digest = config_digest(*current);
    if (stored_digest != current_digest)
      throw ValidationError(
          "resume: config digest mismatch\n  stored:  " + stored_digest +
          "\n  current: " + current_digest +
          "\nrefusing to mix configurations in one build directory");
  }
  size_t cap = 0;
  if (cap_override) {
    cap = *cap_override;
  } else if (fs::exists(build_dir / "build.json")) {
    // a completed run records its cap; interrupted runs fall back to 0
    nlohmann::json bj =
        nlohmann::json::parse(read_text_file(build_dir / "build.json"));
    cap = bj.value("dataset_cap", 0);
  }
  return build_and_train(stored, build_dir, cap, /*resuming=*/true, data_dir);
}

}  // namespace trunk
