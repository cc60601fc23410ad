// trunk: build, train, evaluate, and analyze TRUNK hierarchical classifiers.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "trunk/config.hpp"
#include "trunk/dataset.hpp"
#include "trunk/envkit.hpp"
#include "trunk/evaluator.hpp"
#include "trunk/report.hpp"
#include "trunk/sweep.hpp"
#include "trunk/trainer.hpp"
#include "trunk/tree.hpp"

namespace {

trunk::fs::path config_dir() {
  const char* env = std::getenv("TRUNK_CONFIG_DIR");
  return env ? trunk::fs::path(env) : trunk::fs::path("configs");
}

struct Options {
  bool train = false, infer = false, sweep = false, envgen = false,
       envcheck = false, treecmp = false, report = false;
  bool debug = false, resume = false;
  std::string dataset, backbone, config_path, output_dir, build_dir;
  std::string gv;  // "": absent, "config": bare flag, else numeric
  std::vector<std::string> overrides;
  // sweep
  std::string parameter, values_csv, range_spec;
  int repeats = 1;
  std::string sweep_dir;
  // env tooling
  std::string source_root, find_links, pip_out = "requirements.txt",
                           conda_out = "environment.yml", env_name = "trunk",
                           manifest_path, pip_section, pkg_map_path;
  // treecmp / report
  std::string tree_a, tree_b, report_out;
  // verify
  std::string claims_path, weights_dir, tree_file;
  double tolerance = 0.1;
  bool verify = false;
};

trunk::ExperimentConfig resolve_config(const Options& opt) {
  trunk::fs::path path;
  if (!opt.config_path.empty()) {
    path = opt.config_path;
  } else {
    if (opt.dataset.empty())
      throw trunk::ValidationError(
          "no --config given and no --dataset to pick a reference config");
    path = config_dir() / (opt.dataset + ".yaml");
    if (!trunk::fs::exists(path))
      throw trunk::ValidationError("no reference config at " + path.string() +
                                   "; pass --config explicitly");
  }
  trunk::ExperimentConfig cfg = trunk::load_config(path);
  std::vector<std::string> ov;
  if (!opt.dataset.empty()) ov.push_back("dataset.name=" + opt.dataset);
  if (!opt.backbone.empty()) ov.push_back("model_backbone=" + opt.backbone);
  if (!opt.output_dir.empty()) ov.push_back("output_dir=" + opt.output_dir);
  if (!opt.gv.empty() && opt.gv != "config")
    ov.push_back("training.grouping_volatility=" + opt.gv);
  for (const auto& o : opt.overrides) ov.push_back(o);
  return trunk::apply_overrides(cfg, ov);
}

trunk::fs::path resolve_build_dir(const Options& opt,
                                  const trunk::ExperimentConfig& cfg) {
  if (!opt.build_dir.empty()) return opt.build_dir;
  return trunk::fs::path(cfg.output_dir) /
         (cfg.dataset_name + "_" + cfg.model_backbone);
}

int run_train(const Options& opt) {
  trunk::ExperimentConfig cfg = resolve_config(opt);
  trunk::fs::path build_dir = resolve_build_dir(opt, cfg);
  size_t cap = opt.debug ? 512 : 0;
  trunk::BuildReport report;
  if (opt.resume) {
    report = trunk::resume(build_dir, cfg,
                           opt.debug ? std::optional<size_t>(cap)
                                     : std::nullopt);
  } else {
    report = trunk::build_and_train(cfg, build_dir, cap);
  }
  std::cout << "[trunk] build complete: " << build_dir.string() << "\n";
  std::cout << "[trunk] nodes=" << report.tree.nodes.size()
            << " fingerprint=" << trunk::fingerprint(report.tree)
            << " wall_time=" << trunk::format_double(report.total_wall_time)
            << "s\n";
  for (const auto& r : report.node_reports)
    std::cout << "[trunk] node " << r.node_id << " epochs=" << r.epochs_run
              << " loss=" << trunk::format_double(r.final_train_loss)
              << " val_acc=" << trunk::format_double(r.val_accuracy) << "\n";
  trunk::write_text_file(build_dir / "tree.dot",
                         trunk::to_dot(report.tree));
  return 0;
}

int run_infer(const Options& opt) {
  trunk::ExperimentConfig cfg = resolve_config(opt);
  trunk::fs::path build_dir = resolve_build_dir(opt, cfg);
  trunk::fs::path tree_path = build_dir / "tree.json";
  if (!trunk::fs::exists(tree_path)) {
    std::cerr << "[trunk] no tree found at " << tree_path.string()
              << "; run --train first\n";
    return 2;
  }
  trunk::Trunk tree = trunk::load_tree(tree_path);
  trunk::TreeRuntime rt = trunk::TreeRuntime::load(tree);
  auto t0 = std::chrono::steady_clock::now();
  trunk::Dataset test =
      trunk::load_raw_split(cfg.dataset_name, "test", cfg, trunk::data_root());
  trunk::Dataset cooked = trunk::apply_pipeline_once(
      test, trunk::build_pipeline(cfg.splits.test.transforms, test.shape),
      trunk::named_stream("augment/test"));
  double prep_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  trunk::EvalResult res = trunk::evaluate(rt, cooked);
  trunk::write_text_file(build_dir / "eval.json",
                         trunk::eval_to_json(res).dump(2) + "\n");
  trunk::write_text_file(build_dir / "eval.csv",
                         "accuracy,total_time_seconds,mean_flops_per_image,"
                         "images\n" +
                             trunk::eval_csv_row(res));
  std::cout << "[trunk] accuracy=" << trunk::format_double(res.accuracy)
            << " (" << res.correct << "/" << res.total << ")\n";
  // routing and data-preparation timings reported separately so numbers
  // stay comparable across storage media
  std::cout << "[trunk] inference_time="
            << trunk::format_double(res.total_time)
            << "s data_prep_time=" << trunk::format_double(prep_seconds)
            << "s mean_flops/image="
            << trunk::format_double(res.mean_flops_per_image) << "\n";
  return 0;
}

int run_verify(const Options& opt) {
  trunk::ExperimentConfig cfg = resolve_config(opt);
  trunk::VerifyReport rep = trunk::verify_pretrained(
      opt.weights_dir, opt.tree_file, cfg, opt.claims_path, opt.tolerance);
  std::cout << trunk::verify_report_text(rep);
  if (!rep.has_claim) return 0;  // measurement-only, flagged unverifiable
  return rep.pass ? 0 : 2;
}

int run_sweep_mode(const Options& opt) {
  trunk::SweepSpec spec;
  spec.base_config = resolve_config(opt);
  spec.parameter = opt.parameter;
  spec.repeats = opt.repeats;
  if (spec.parameter.empty())
    throw trunk::ValidationError("--sweep requires --parameter");
  if (!opt.values_csv.empty()) {
    for (const auto& v : trunk::split(opt.values_csv, ','))
      spec.values.push_back(std::stod(trunk::trim(v)));
  } else if (!opt.range_spec.empty()) {
    auto parts = trunk::split(opt.range_spec, ':');
    if (parts.size() != 3)
      throw trunk::ValidationError("--range must be start:stop:step");
    spec.values = trunk::sweep_range(std::stod(parts[0]), std::stod(parts[1]),
                                     std::stod(parts[2]));
  } else {
    throw trunk::ValidationError("--sweep requires --values or --range");
  }
  trunk::fs::path dir = opt.sweep_dir.empty()
                            ? trunk::fs::path(spec.base_config.output_dir) /
                                  "sweep"
                            : trunk::fs::path(opt.sweep_dir);
  auto records = trunk::run_sweep(spec, dir);
  trunk::emit_csv(records, dir / "records.csv");
  trunk::emit_plot(records, dir / "plot.svg");
  auto groups = trunk::distinct_trees(records);
  std::cout << "[trunk] sweep complete: " << records.size() << " records, "
            << groups.size() << " distinct trees\n";
  std::cout << "[trunk] records: " << (dir / "records.csv").string() << "\n";
  return 0;
}

std::map<std::string, std::string> package_map_for(const Options& opt) {
  return opt.pkg_map_path.empty()
             ? trunk::default_package_map()
             : trunk::load_package_map(opt.pkg_map_path);
}

int run_envgen(const Options& opt) {
  if (opt.source_root.empty())
    throw trunk::ValidationError("--envgen requires --source");
  trunk::DependencySet deps =
      trunk::scan_imports(opt.source_root, package_map_for(opt));
  deps.find_links = opt.find_links;
  trunk::write_text_file(opt.pip_out, trunk::emit_pip_manifest(deps));
  std::set<std::string> pip_section;
  for (const auto& p : trunk::split(opt.pip_section, ','))
    if (!trunk::trim(p).empty()) pip_section.insert(trunk::trim(p));
  trunk::write_text_file(
      opt.conda_out,
      trunk::emit_conda_manifest(deps, opt.env_name,
                                 {"pytorch", "nvidia", "defaults"},
                                 pip_section));
  std::cout << "[trunk] scanned " << deps.names.size()
            << " direct dependencies -> " << opt.pip_out << ", "
            << opt.conda_out << "\n";
  for (const auto& w : deps.warnings) std::cout << "[trunk] warning: " << w << "\n";
  for (const auto& n : deps.notes) std::cout << "[trunk] note: " << n << "\n";
  return 0;
}

int run_envcheck(const Options& opt) {
  if (opt.manifest_path.empty() || opt.source_root.empty())
    throw trunk::ValidationError("--envcheck requires --manifest and --source");
  trunk::ManifestReport rep = trunk::validate_manifest(
      opt.manifest_path, opt.source_root, package_map_for(opt));
  std::cout << trunk::manifest_report_text(rep);
  if (!opt.report_out.empty())
    trunk::write_text_file(opt.report_out,
                           trunk::manifest_report_to_json(rep).dump(2) + "\n");
  return (rep.missing.empty() && rep.extra.empty()) ? 0 : 1;
}

int run_treecmp(const Options& opt) {
  if (opt.tree_a.empty() || opt.tree_b.empty())
    throw trunk::ValidationError("--treecmp requires --tree_a and --tree_b");
  trunk::Trunk a = trunk::load_tree(opt.tree_a);
  trunk::Trunk b = trunk::load_tree(opt.tree_b);
  trunk::TreeComparison cmp = trunk::compare(a, b);
  std::cout << "identical: " << (cmp.identical ? "yes" : "no") << "\n";
  std::cout << "similarity: " << trunk::format_double(cmp.similarity) << "\n";
  std::cout << "fingerprint_a: " << trunk::fingerprint(a) << "\n";
  std::cout << "fingerprint_b: " << trunk::fingerprint(b) << "\n";
  return 0;
}

int run_report(const Options& opt) {
  trunk::fs::path build_dir = opt.build_dir;
  if (build_dir.empty())
    throw trunk::ValidationError("--report requires --build_dir");
  trunk::fs::path out = opt.report_out.empty()
                            ? build_dir / "README.md"
                            : trunk::fs::path(opt.report_out);
  trunk::report_scaffold(build_dir, out);
  std::cout << "[trunk] report written: " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // --grouping_volatility takes an optional value; normalize it before CLI11
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--grouping_volatility") {
      bool has_value = i + 1 < argc && argv[i + 1][0] != '-';
      if (has_value) {
        args.push_back("--grouping_volatility=" + std::string(argv[++i]));
      } else {
        args.push_back("--grouping_volatility=config");
      }
    } else {
      args.push_back(a);
    }
  }

  Options opt;
  CLI::App app{"TRUNK hierarchical classifier toolkit"};
  app.add_flag("--train", opt.train, "build the tree and train every node");
  app.add_flag("--infer", opt.infer, "evaluate a built tree on the test split");
  app.add_flag("--sweep", opt.sweep, "run a one-parameter sensitivity sweep");
  app.add_flag("--envgen", opt.envgen, "emit pip/conda manifests from imports");
  app.add_flag("--envcheck", opt.envcheck, "validate a manifest against source");
  app.add_flag("--treecmp", opt.treecmp, "compare two saved trees");
  app.add_flag("--report", opt.report, "generate the README scaffold");
  app.add_flag("--verify", opt.verify,
               "verify pre-trained weights against a claims file");
  app.add_flag("--debug", opt.debug,
               "verbose per-node logs and a capped dataset for smoke runs");
  app.add_flag("--resume", opt.resume, "continue an interrupted build");

  app.add_option("--dataset", opt.dataset,
                 "dataset name (emnist | cifar10 | svhn | synthetic)");
  app.add_option("--model_backbone", opt.backbone,
                 "node backbone family (mobilenet | vgg)");
  app.add_option("--config", opt.config_path, "experiment config YAML");
  app.add_option("--override,-o", opt.overrides,
                 "config override key=value (repeatable)");
  app.add_option("--grouping_volatility", opt.gv,
                 "grouping volatility; bare flag keeps the config value");
  app.add_option("--output_dir", opt.output_dir, "run output root");
  app.add_option("--build_dir", opt.build_dir, "explicit build directory");

  app.add_option("--parameter", opt.parameter, "swept dotted config key");
  app.add_option("--values", opt.values_csv, "comma-separated sweep values");
  app.add_option("--range", opt.range_spec, "sweep range start:stop:step");
  app.add_option("--repeats", opt.repeats, "repeats per sweep value");
  app.add_option("--sweep_dir", opt.sweep_dir, "sweep output directory");

  app.add_option("--source", opt.source_root, "python source root to scan");
  app.add_option("--find-links", opt.find_links,
                 "wheel index URL for the pip manifest");
  app.add_option("--pip", opt.pip_out, "pip manifest output path");
  app.add_option("--conda", opt.conda_out, "conda manifest output path");
  app.add_option("--env-name", opt.env_name, "conda environment name");
  app.add_option("--pip-section", opt.pip_section,
                 "comma-separated deps for the conda pip: block");
  app.add_option("--manifest", opt.manifest_path, "manifest to validate");
  app.add_option("--pkg-map", opt.pkg_map_path,
                 "import->distribution name table (YAML), extends the "
                 "built-in one");

  app.add_option("--tree_a", opt.tree_a, "first tree JSON");
  app.add_option("--tree_b", opt.tree_b, "second tree JSON");
  app.add_option("--output", opt.report_out, "report output path");

  app.add_option("--weights_dir", opt.weights_dir, "pre-trained weights root");
  app.add_option("--tree_file", opt.tree_file, "tree JSON for verification");
  app.add_option("--claims", opt.claims_path, "claimed metrics JSON");
  app.add_option("--tolerance", opt.tolerance,
                 "accuracy tolerance in percentage points");

  try {
    std::reverse(args.begin(), args.end());  // CLI11 vector parse order
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  int modes = int(opt.train) + int(opt.infer) + int(opt.sweep) +
              int(opt.envgen) + int(opt.envcheck) + int(opt.treecmp) +
              int(opt.report) + int(opt.verify);
  if (modes != 1) {
    std::cerr << "exactly one mode required: --train | --infer | --sweep | "
                 "--envgen | --envcheck | --treecmp | --report | --verify\n";
    return 1;
  }

  if (opt.debug)
    trunk::log_sink() = [](const std::string& s) { std::cerr << s << "\n"; };

  try {
    if (opt.train) return run_train(opt);
    if (opt.infer) return run_infer(opt);
    if (opt.sweep) return run_sweep_mode(opt);
    if (opt.envgen) return run_envgen(opt);
    if (opt.envcheck) return run_envcheck(opt);
    if (opt.treecmp) return run_treecmp(opt);
    if (opt.report) return run_report(opt);
    if (opt.verify) return run_verify(opt);
  } catch (const trunk::ValidationError& e) {
    std::cerr << "[trunk] error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[trunk] failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
