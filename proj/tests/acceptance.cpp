// Acceptance suite: every desk-scale criterion runs at its stated tolerance
// and prints one [ACCEPT] pass/fail line.

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "trunk/envkit.hpp"
#include "trunk/evaluator.hpp"
#include "trunk/sweep.hpp"
#include "trunk/trainer.hpp"

using namespace trunk;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "trunk_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path fixture(const std::string& name) {
  return fs::path(FIXTURES_DIR) / name;
}
fs::path golden(const std::string& name) {
  return fs::path(GOLDEN_DIR) / name;
}
fs::path config_file(const std::string& name) {
  return fs::path(CONFIGS_DIR) / name;
}

SimilarityMatrix random_row_stochastic(size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SimilarityMatrix s;
  s.entries.assign(k, std::vector<double>(k));
  for (size_t i = 0; i < k; ++i) {
    double sum = 0;
    for (size_t j = 0; j < k; ++j) {
      s.entries[i][j] = u(rng);
      sum += s.entries[i][j];
    }
    for (size_t j = 0; j < k; ++j) s.entries[i][j] /= sum;
    s.labels.push_back(static_cast<int>(i));
  }
  return s;
}

std::vector<std::vector<int>> closure_oracle(const SimilarityMatrix& s,
                                             double gv) {
  size_t k = s.size();
  double threshold = gv / static_cast<double>(k);
  std::vector<std::vector<bool>> linked(k, std::vector<bool>(k, false));
  for (size_t i = 0; i < k; ++i) linked[i][i] = true;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j)
      if (i != j && (s.entries[i][j] + s.entries[j][i]) / 2.0 > threshold) {
        linked[i][j] = linked[j][i] = true;
      }
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t i = 0; i < k; ++i)
      for (size_t j = 0; j < k; ++j)
        if (linked[i][j])
          for (size_t l = 0; l < k; ++l)
            if (linked[j][l] && !linked[i][l]) {
              linked[i][l] = true;
              changed = true;
            }
  }
  std::vector<bool> taken(k, false);
  std::vector<std::vector<int>> partition;
  for (size_t i = 0; i < k; ++i) {
    if (taken[i]) continue;
    std::vector<int> comp;
    for (size_t j = 0; j < k; ++j)
      if (linked[i][j]) {
        comp.push_back(s.labels[j]);
        taken[j] = true;
      }
    std::sort(comp.begin(), comp.end());
    partition.push_back(comp);
  }
  std::sort(partition.begin(), partition.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  return partition;
}

// The desk build is shared by several criteria; run it once.
struct DeskBuild {
  BuildReport report;
  EvalResult eval;
  double build_seconds = 0;
};

const DeskBuild& desk_build() {
  static DeskBuild desk = [] {
    DeskBuild d;
    auto dir = fresh_dir("desk_build");
    ExperimentConfig cfg = load_config(config_file("synthetic.yaml"));
    auto t0 = std::chrono::steady_clock::now();
    d.report = build_and_train(cfg, dir, 0, false, "unused");
    d.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    TreeRuntime rt = TreeRuntime::load(d.report.tree);
    Dataset test = load_raw_split("synthetic", "test", cfg, "unused");
    Dataset cooked = apply_pipeline_once(
        test, build_pipeline(cfg.splits.test.transforms, test.shape),
        named_stream("augment/test"));
    d.eval = evaluate(rt, cooked);
    return d;
  }();
  return desk;
}

}  // namespace

TEST(Acceptance, GroupingOracleEquivalence) {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> gv_dist(0.5, 1.5);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    size_t k = 2 + trial % 5;  // K in {2..6}
    SimilarityMatrix s = random_row_stochastic(k, rng);
    double gv = gv_dist(rng);
    if (group_categories(s, gv).partition != closure_oracle(s, gv))
      ++mismatches;
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  EXPECT_EQ(mismatches, 0);
  EXPECT_LT(secs, 10.0);
}

TEST(Acceptance, GvMonotonicityAndRefinement) {
  std::mt19937_64 rng(4321);
  auto gvs = sweep_range(0.60, 1.20, 0.03);
  ASSERT_EQ(gvs.size(), 21u);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    size_t k = 2 + trial % 5;
    SimilarityMatrix s = random_row_stochastic(k, rng);
    Grouping prev;
    for (size_t gi = 0; gi < gvs.size(); ++gi) {
      Grouping cur = group_categories(s, gvs[gi]);
      if (gi > 0) {
        if (cur.group_count() < prev.group_count()) ++violations;
        if (!refines(cur, prev)) ++violations;
      }
      prev = cur;
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(Acceptance, EndToEndDeskBuild) {
  const DeskBuild& d = desk_build();
  EXPECT_TRUE(validate(d.report.tree).empty());
  size_t leaves = 0;
  for (const auto& [id, n] : d.report.tree.nodes)
    if (n.is_leaf()) ++leaves;
  EXPECT_EQ(leaves, 4u);
  EXPECT_GE(d.eval.accuracy, 0.90);
  EXPECT_LT(d.build_seconds, 300.0);
}

TEST(Acceptance, Determinism) {
  const DeskBuild& first = desk_build();
  auto dir = fresh_dir("desk_build_again");
  ExperimentConfig cfg = load_config(config_file("synthetic.yaml"));
  BuildReport second = build_and_train(cfg, dir, 0, false, "unused");
  EXPECT_EQ(fingerprint(first.report.tree), fingerprint(second.tree));
  ASSERT_EQ(first.report.node_reports.size(), second.node_reports.size());
  for (size_t i = 0; i < second.node_reports.size(); ++i) {
    EXPECT_EQ(first.report.node_reports[i].final_train_loss,
              second.node_reports[i].final_train_loss);  // bit-identical
  }
}

TEST(Acceptance, ConfigFidelity) {
  ExperimentConfig c = load_config(fixture("listing_svhn_config.yaml"));
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.splits.train.batch_size, 16);
  EXPECT_EQ(c.splits.validation.batch_size, 16);
  EXPECT_EQ(c.splits.test.batch_size, 1);
  EXPECT_DOUBLE_EQ(c.training.grouping_volatility, 0.70);
  EXPECT_EQ(c.training.optimizer.kind, "Adam");
  EXPECT_DOUBLE_EQ(c.training.optimizer.lr, 0.005);
  EXPECT_DOUBLE_EQ(c.training.optimizer.weight_decay, 0.0005);
  EXPECT_EQ(c.training.lr_scheduler.kind, "CosineAnnealingLR");
  EXPECT_EQ(c.training.lr_scheduler.t_max, 10);
  EXPECT_DOUBLE_EQ(c.training.lr_scheduler.eta_min, 0.0);
  EXPECT_EQ(c.training.epochs, 20);
  EXPECT_EQ(c.training.loss, "NLLLoss");

  // byte-stable round trip
  auto dir = fresh_dir("config_fidelity");
  save_config(c, dir / "a.yaml");
  ExperimentConfig c2 = load_config(dir / "a.yaml");
  save_config(c2, dir / "b.yaml");
  EXPECT_EQ(read_text_file(dir / "a.yaml"), read_text_file(dir / "b.yaml"));
}

TEST(Acceptance, PipelineConstructionGoldens) {
  for (int tr = 1; tr <= 6; ++tr) {
    std::string name = "tr" + std::to_string(tr);
    ExperimentConfig cfg =
        load_config(config_file("regimes/" + name + ".yaml"));
    AugmentationPipeline pipe =
        build_pipeline(cfg.splits.train.transforms, {3, 32, 32});
    std::string got = "lr=" + format_double(cfg.training.optimizer.lr) +
                      "\nbatch_size=" +
                      std::to_string(cfg.splits.train.batch_size) +
                      "\ngrouping_volatility=" +
                      format_double(cfg.training.grouping_volatility) + "\n" +
                      pipe.describe();
    EXPECT_EQ(got, read_text_file(golden(name + ".txt"))) << name;
  }

  // normalization statistics: a fixture whose per-channel moments are the
  // Table-8 CIFAR-10 values by construction (half the pixels at mean-std,
  // half at mean+std) must be recovered within +-0.01
  std::vector<double> want_mean = {0.49, 0.48, 0.45};
  std::vector<double> want_std = {0.25, 0.24, 0.26};
  Dataset ds;
  ds.shape = {3, 32, 32};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    std::vector<float> img(3 * 1024);
    for (size_t c = 0; c < 3; ++c)
      for (size_t p = 0; p < 1024; ++p)
        img[c * 1024 + p] = static_cast<float>(
            p % 2 == 0 ? want_mean[c] - want_std[c]
                       : want_mean[c] + want_std[c]);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(i % 10);
  }
  auto st = compute_normalization_stats(ds);
  for (size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(st.mean[c], want_mean[c], 0.01);
    EXPECT_NEAR(st.std[c], want_std[c], 0.01);
  }

  // with the real archives present, check the published statistics directly
  fs::path root = data_root();
  bool have_cifar = fs::exists(root / "cifar-10-batches-bin") ||
                    fs::exists(root / "data_batch_1.bin");
  if (have_cifar) {
    Dataset cifar = load_cifar10(root, "train");
    auto real = compute_normalization_stats(cifar);
    for (size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(real.mean[c], want_mean[c], 0.01);
      EXPECT_NEAR(real.std[c], want_std[c], 0.01);
    }
  } else {
    std::cout << "[ACCEPT] (info) real CIFAR-10 archives not present under "
              << root.string() << "; statistics checked on the moment-exact "
              << "fixture only\n";
  }
}

TEST(Acceptance, ManifestGoldens) {
  DependencySet deps = scan_imports(fixture("pyproj_listing1"));
  deps.find_links = "https://download.pytorch.org/whl/cu121";
  EXPECT_EQ(emit_pip_manifest(deps),
            read_text_file(golden("listing1_requirements.txt")));

  DependencySet conda_deps;
  conda_deps.names = {"numpy", "python", "pytorch", "pytorch-cuda",
                      "torchvision", "scipy"};
  conda_deps.pins = {{"python", "3.9.18=h955ad1f_0"},
                     {"pytorch", "2.3.0=py3.9_cuda12.1_cudnn8.9.2_0"},
                     {"pytorch-cuda", "12.1=ha16c6d3_5"},
                     {"torchvision", "0.18.0=py39_cu121"}};
  EXPECT_EQ(emit_conda_manifest(conda_deps, "trunk",
                                {"pytorch", "nvidia", "defaults"}, {"scipy"}),
            read_text_file(golden("listing2_environment.yaml")));

  ManifestReport rep = validate_manifest(fixture("manifest_with_extras.txt"),
                                         fixture("pyproj_listing1"));
  EXPECT_EQ(rep.extra, (std::vector<std::string>{"anaconda-client", "blaze",
                                                 "clyent"}));
}

TEST(Acceptance, FlopsOracle) {
  // single 3x3 conv, 3->8 channels, 32x32, stride 1, pad 1:
  // MACs = 32*32*8*9*3 = 221,184; FLOPs = 442,368
  NodeNetwork conv_only;
  conv_only.layers.emplace_back(nn::Conv2d(3, 8, 3, 1, 1));
  EXPECT_EQ(count_flops(conv_only, {3, 32, 32}), 442368ull);

  // additivity over 50 random two-stage networks at matched shapes
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> ch(1, 8), k(1, 3), sz(6, 16);
  for (int trial = 0; trial < 50; ++trial) {
    size_t c_in = ch(rng), c_mid = ch(rng);
    size_t k1 = k(rng), k2 = k(rng), side = sz(rng);
    NodeNetwork a, b, ab;
    nn::Conv2d conv1(c_in, c_mid, k1, 1, k1 / 2);
    nn::Conv2d conv2(c_mid, c_in, k2, 1, k2 / 2);
    a.layers.emplace_back(conv1);
    a.layers.emplace_back(nn::ReLU{});
    b.layers.emplace_back(conv2);
    b.layers.emplace_back(nn::Norm("batch", c_in));
    ab.layers.emplace_back(conv1);
    ab.layers.emplace_back(nn::ReLU{});
    ab.layers.emplace_back(conv2);
    ab.layers.emplace_back(nn::Norm("batch", c_in));
    ImageShape in{c_in, side, side};
    size_t mid_side = (side + 2 * (k1 / 2) - k1) + 1;
    ImageShape mid{c_mid, mid_side, mid_side};
    EXPECT_EQ(count_flops(ab, in), count_flops(a, in) + count_flops(b, mid));
  }
}

TEST(Acceptance, HierarchicalEfficiency) {
  const DeskBuild& d = desk_build();
  TreeRuntime rt = TreeRuntime::load(d.report.tree);
  size_t internal = 0;
  for (const auto& [id, n] : d.report.tree.nodes)
    if (!n.is_leaf()) ++internal;
  ASSERT_GE(internal, 2u) << "desk tree must have at least one supergroup";
  EXPECT_LT(d.eval.mean_flops_per_image,
            static_cast<double>(rt.total_internal_flops()));
  EXPECT_GT(d.eval.mean_flops_per_image, 0.0);
}

TEST(Acceptance, GradientCheck) {
  BackboneSpec spec;
  spec.family = "mobilenet";
  spec.input_shape = {2, 8, 8};
  spec.blocks.push_back({"conv",
                         {{"out_channels", 4}, {"kernel", 3}, {"stride", 1},
                          {"padding", 1}}});
  spec.blocks.push_back({"norm", {}});
  spec.blocks.push_back({"activation", {}});
  spec.blocks.push_back({"global_avg_pool", {}});
  spec.blocks.push_back({"linear", {}});
  NodeNetwork net = make_node_network(spec, 3, 2024, "batch");

  Tensor x({4, 2, 8, 8});
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : x.data) v = u(rng);
  std::vector<int> targets = {0, 1, 2, 1};

  auto params = net.params();
  nn::zero_grads(params);
  Tensor logits = net.forward_logits(x, true);
  Tensor grad;
  nn::nll_loss(logits, targets, &grad);
  net.backward(grad);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);

  std::uniform_int_distribution<size_t> pick_block(0, params.size() - 1);
  const double eps = 1e-6;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    size_t bi = pick_block(rng);
    auto& w = *params[bi].value;
    std::uniform_int_distribution<size_t> pick_idx(0, w.size() - 1);
    size_t i = pick_idx(rng);
    double orig = w[i];
    w[i] = orig + eps;
    double lp = nn::nll_loss(net.forward_logits(x, true), targets);
    w[i] = orig - eps;
    double lm = nn::nll_loss(net.forward_logits(x, true), targets);
    w[i] = orig;
    double numeric = (lp - lm) / (2 * eps);
    double a = analytic[bi][i];
    worst = std::max(worst, std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)}));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Acceptance, SweepDurability) {
  auto dir = fresh_dir("sweep");
  SweepSpec spec;
  spec.base_config = load_config(fixture("test_synth_tiny.yaml"));
  spec.parameter = "training.grouping_volatility";
  spec.values = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};  // 6-point desk sweep

  // killed after 3 points
  auto partial = run_sweep(spec, dir, 3, "unused");
  ASSERT_EQ(partial.size(), 3u);
  std::string first_three = read_text_file(dir / "records.jsonl");

  // resumed to completion
  auto full = run_sweep(spec, dir, 0, "unused");
  EXPECT_EQ(full.size(), 6u);
  std::string all_six = read_text_file(dir / "records.jsonl");
  EXPECT_EQ(all_six.substr(0, first_three.size()), first_three);

  emit_csv(full, dir / "records.csv");
  auto lines = split(trim(read_text_file(dir / "records.csv")), '\n');
  EXPECT_EQ(lines.size(), 7u);  // header + 6 points
}

TEST(Acceptance, FullScaleHarnessProvided) {
  // out of desk scope to RUN; the harness and encoded claims must exist
  fs::path script = fs::path(CONFIGS_DIR).parent_path() / "scripts" /
                    "verify_pretrained.sh";
  ASSERT_TRUE(fs::exists(script));
  std::string body = read_text_file(script);
  EXPECT_NE(body.find("NOT part of desk-scale CI"), std::string::npos);

  std::map<std::string, double> want = {
      {"emnist", 85.77}, {"cifar10", 91.99}, {"svhn", 96.75}};
  for (const auto& [dataset, accuracy] : want) {
    fs::path claims = fs::path(CONFIGS_DIR).parent_path() / "scripts" /
                      "claims" / (dataset + ".json");
    ASSERT_TRUE(fs::exists(claims)) << dataset;
    nlohmann::json j = nlohmann::json::parse(read_text_file(claims));
    EXPECT_EQ(j.at("dataset").get<std::string>(), dataset);
    EXPECT_DOUBLE_EQ(j.at("accuracy").get<double>(), accuracy);
  }
}

namespace {

class AcceptancePrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    printf("[ACCEPT] %s: %s\n", info.name(),
           info.result()->Passed() ? "PASS" : "FAIL");
    fflush(stdout);
  }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(
      new AcceptancePrinter);
  return RUN_ALL_TESTS();
}
