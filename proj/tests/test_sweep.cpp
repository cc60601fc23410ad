#include <gtest/gtest.h>

#include "trunk/sweep.hpp"

using namespace trunk;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "trunk_test_sweep" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.seed = 42;
  c.dataset_name = "synthetic";
  c.model_backbone = "mobilenet";
  c.dataset_params = {{"num_categories", 2},
                      {"train_size", 100},
                      {"test_size", 40},
                      {"image_size", 8}};
  for (const char* s : {"train", "validation", "test"}) {
    SplitConfig& sc = c.splits.at(s);
    sc.batch_size = std::string(s) == "train" ? 16 : 32;
    sc.num_workers = 0;
    sc.shuffle = std::string(s) == "train";
    sc.transforms.push_back({"ToTensor", {}});
  }
  c.training.loss = "NLLLoss";
  c.training.grouping_volatility = 2.5;
  c.training.optimizer = {"Adam", 0.005, 0.0005};
  c.training.lr_scheduler = {"CosineAnnealingLR", 10, 0.0};
  c.training.epochs = 1;
  return c;
}

SweepRecord rec(double value, const std::string& fp) {
  SweepRecord r;
  r.value = value;
  r.accuracy = 0.9;
  r.tree_fingerprint = fp;
  r.depth = 1;
  r.mean_groups_per_node = 2.0;
  r.seed = 42;
  return r;
}

}  // namespace

TEST(SweepRange, GvRangeGives21Points) {
  auto values = sweep_range(0.60, 1.20, 0.03);
  ASSERT_EQ(values.size(), 21u);
  EXPECT_DOUBLE_EQ(values.front(), 0.60);
  EXPECT_NEAR(values.back(), 1.20, 1e-9);
}

TEST(SweepRange, InclusiveEndpointTolerance) {
  auto values = sweep_range(0.0, 1.0, 0.1);
  EXPECT_EQ(values.size(), 11u);
  EXPECT_THROW(sweep_range(0.0, 1.0, 0.0), ValidationError);
}

TEST(RunSweep, SingleValueMatchesDirectBuildAndEvaluate) {
  auto dir = fresh_dir("single");
  SweepSpec spec;
  spec.base_config = tiny_config();
  spec.parameter = "training.grouping_volatility";
  spec.values = {2.5};
  auto records = run_sweep(spec, dir, 0, "unused");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].status, "ok");

  // direct build with the same effective config
  auto direct_dir = fresh_dir("single_direct");
  ExperimentConfig cfg = apply_overrides(
      spec.base_config, {"training.grouping_volatility=2.5", "seed=42"});
  BuildReport build = build_and_train(cfg, direct_dir, 0, false, "unused");
  TreeRuntime rt = TreeRuntime::load(build.tree);
  Dataset test = load_raw_split("synthetic", "test", cfg, "unused");
  Dataset cooked = apply_pipeline_once(
      test, build_pipeline(cfg.splits.test.transforms, test.shape),
      named_stream("augment/test"));
  EvalResult ev = evaluate(rt, cooked);
  EXPECT_EQ(records[0].accuracy, ev.accuracy);
  EXPECT_EQ(records[0].tree_fingerprint, fingerprint(build.tree));
  // every sweep point carries its own run manifest
  EXPECT_TRUE(fs::exists(fs::path(records[0].build_dir) / "manifest.json"));
}

TEST(RunSweep, DurableInterruptAndResume) {
  auto dir = fresh_dir("durable");
  SweepSpec spec;
  spec.base_config = tiny_config();
  spec.parameter = "training.epochs";
  spec.values = {1, 1, 1, 1};

  auto partial = run_sweep(spec, dir, /*stop_after=*/2, "unused");
  EXPECT_EQ(partial.size(), 2u);
  std::string log_after_two = read_text_file(dir / "records.jsonl");

  auto full = run_sweep(spec, dir, 0, "unused");
  EXPECT_EQ(full.size(), 4u);
  std::string log_full = read_text_file(dir / "records.jsonl");
  // first two records byte-identical after resume
  EXPECT_EQ(log_full.substr(0, log_after_two.size()), log_after_two);

  emit_csv(full, dir / "records.csv");
  auto lines = split(trim(read_text_file(dir / "records.csv")), '\n');
  EXPECT_EQ(lines.size(), 5u);  // header + 4 points
}

TEST(RunSweep, ChangedSpecRefused) {
  auto dir = fresh_dir("changed");
  SweepSpec spec;
  spec.base_config = tiny_config();
  spec.parameter = "training.epochs";
  spec.values = {1};
  run_sweep(spec, dir, 0, "unused");
  spec.values = {1, 2};
  EXPECT_THROW(run_sweep(spec, dir, 0, "unused"), ValidationError);
}

TEST(RunSweep, FailedPointRecordedAndSweepContinues) {
  auto dir = fresh_dir("failing");
  SweepSpec spec;
  spec.base_config = tiny_config();
  spec.parameter = "training.epochs";
  spec.values = {-3, 1};  // first point cannot validate
  auto records = run_sweep(spec, dir, 0, "unused");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].status, "failed");
  EXPECT_FALSE(records[0].error.empty());
  EXPECT_EQ(records[1].status, "ok");
}

TEST(RunSweep, RepeatsProduceOneRecordEach) {
  auto dir = fresh_dir("repeats");
  SweepSpec spec;
  spec.base_config = tiny_config();
  spec.parameter = "training.epochs";
  spec.values = {1, 2};
  spec.repeats = 2;
  auto records = run_sweep(spec, dir, 0, "unused");
  ASSERT_EQ(records.size(), 4u);
  std::map<double, int> counts;
  for (const auto& r : records) ++counts[r.value];
  EXPECT_EQ(counts[1], 2);
  EXPECT_EQ(counts[2], 2);
  // repeats run under distinct seeds
  EXPECT_NE(records[0].seed, records[1].seed);
}

TEST(DistinctTrees, GroupsByFingerprintPreservingValueOrder) {
  std::vector<SweepRecord> records = {rec(0.6, "aaa"), rec(0.63, "aaa"),
                                      rec(0.66, "bbb"), rec(0.69, "aaa")};
  auto groups = distinct_trees(records);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups["aaa"], (std::vector<double>{0.6, 0.63, 0.69}));
  EXPECT_EQ(groups["bbb"], (std::vector<double>{0.66}));
  EXPECT_TRUE(distinct_trees({}).empty());
}

TEST(Csv, RoundTripModuloBuildDir) {
  auto dir = fresh_dir("csv");
  std::vector<SweepRecord> records = {rec(0.6, "aaa"), rec(0.9, "bbb")};
  records[0].build_dir = "somewhere/points/0";
  emit_csv(records, dir / "r.csv");
  auto back = parse_csv(dir / "r.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].value, records[0].value);
  EXPECT_EQ(back[0].accuracy, records[0].accuracy);
  EXPECT_EQ(back[0].tree_fingerprint, records[0].tree_fingerprint);
  EXPECT_EQ(back[0].depth, records[0].depth);
  EXPECT_EQ(back[0].seed, records[0].seed);
  EXPECT_EQ(back[0].status, records[0].status);
  EXPECT_TRUE(back[0].build_dir.empty());
}

TEST(Csv, EmptyRecordsHeaderOnly) {
  auto dir = fresh_dir("emptycsv");
  emit_csv({}, dir / "empty.csv");
  EXPECT_EQ(read_text_file(dir / "empty.csv"),
            "value,accuracy,fingerprint,depth,mean_groups_per_node,seed,"
            "status\n");
}

TEST(Plot, LegendListsOneEntryPerFingerprint) {
  auto dir = fresh_dir("plot");
  std::vector<SweepRecord> records = {rec(0.6, "aaa"), rec(0.7, "bbb"),
                                      rec(0.8, "ccc"), rec(0.9, "aaa")};
  emit_plot(records, dir / "p.svg");
  std::string svg = read_text_file(dir / "p.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  size_t legend_entries = 0;
  for (const auto& line : split(svg, '\n'))
    if (line.find("class=\"legend\"") != std::string::npos) ++legend_entries;
  EXPECT_EQ(legend_entries, 3u);
  // one scatter circle per record plus one per legend entry
  size_t circles = 0;
  for (const auto& line : split(svg, '\n'))
    if (line.find("<circle") != std::string::npos) ++circles;
  EXPECT_EQ(circles, records.size() + legend_entries);
}

TEST(Plot, EmptyRecordsError) {
  auto dir = fresh_dir("emptyplot");
  EXPECT_THROW(emit_plot({}, dir / "p.svg"), ValidationError);
}

TEST(FrozenMatrixSweep, MeanGroupsMonotoneViaGroupingProfile) {
  // the training-free form of the sweep trend: group counts on a frozen
  // similarity matrix are non-decreasing in gv
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    size_t k = 3 + trial % 4;
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
    auto prof = grouping_profile(s, sweep_range(0.60, 1.20, 0.03));
    for (size_t i = 1; i < prof.size(); ++i)
      EXPECT_GE(prof[i].second, prof[i - 1].second);
  }
}
