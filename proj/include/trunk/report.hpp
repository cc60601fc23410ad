#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "trunk/common.hpp"
#include "trunk/evaluator.hpp"

namespace trunk {

// Generates the six-part README scaffold for a completed build: summary,
// environment setup, training command, inference command, pre-trained
// weight links, results table. Regeneration without new inputs is
// byte-identical.
inline std::string render_report_scaffold(const fs::path& build_dir) {
  if (!fs::exists(build_dir / "build.json"))
    throw std::runtime_error("no completed build in " + build_dir.string() +
                             " (build.json missing)");
  nlohmann::json build =
      nlohmann::json::parse(read_text_file(build_dir / "build.json"));

  std::string dataset = "DATASET";
  std::string backbone = "mobilenet";
  if (fs::exists(build_dir / "config.yaml")) {
    ExperimentConfig cfg = load_config(build_dir / "config.yaml");
    if (!cfg.dataset_name.empty()) dataset = cfg.dataset_name;
    if (!cfg.model_backbone.empty()) backbone = cfg.model_backbone;
  }

  bool has_eval = fs::exists(build_dir / "eval.json");
  nlohmann::json eval;
  if (has_eval)
    eval = nlohmann::json::parse(read_text_file(build_dir / "eval.json"));

  std::string md;
  md += "# TRUNK: Tree-based Unidirectional Neural Network\n\n";

  md += "## 1. Summary\n\n";
  md +=
      "<!-- Replace with a short summary of the method and the experiment "
      "this build reproduces. -->\n";
  md += "TRUNK classifies images with a tree of shallow networks: each "
        "internal node routes an image toward the leaf holding its "
        "category, so only one root-to-leaf path of networks runs per "
        "image.\n\n";

  md += "## 2. Environment setup\n\n";
  md += "```\n";
  md += "# To install software dependencies using Pip\n";
  md += "pip install -r requirements.txt\n";
  md += "\n";
  md += "# To install software dependencies using Conda\n";
  md += "conda env create -f environment.yml\n";
  md += "conda activate trunk\n";
  md += "```\n\n";

  md += "## 3. Training\n\n";
  md += "```\n";
  md += "# To train the model(s) on " + dataset + ", run this command:\n";
  md += "trunk --train --dataset " + dataset + " --model_backbone " +
        backbone + " --grouping_volatility --debug\n";
  md += "```\n\n";

  md += "## 4. Inference\n\n";
  md += "```\n";
  md += "# To evaluate the model on " + dataset + ", run:\n";
  md += "trunk --infer --dataset " + dataset + " --model_backbone " +
        backbone + " --grouping_volatility\n";
  md += "```\n\n";

  md += "## 5. Pre-trained weights\n\n";
  md += "| Dataset | Weights |\n|---|---|\n";
  md += "| " + dataset + " | `" + (build_dir / "nodes").string() + "` |\n\n";

  md += "## 6. Results\n\n";
  md += "| Dataset | Accuracy | Mean FLOPs/image | Inference time (s) |\n";
  md += "|---|---|---|---|\n";
  if (has_eval) {
    md += "| " + dataset + " | " +
          format_double(eval.at("accuracy").get<double>() * 100.0) + "% | " +
          format_double(eval.at("mean_flops_per_image").get<double>()) +
          " | " + format_double(eval.at("total_time_seconds").get<double>()) +
          " |\n";
  } else {
    md += "| " + dataset + " | pending | pending | pending |\n";
  }
  return md;
}

inline void report_scaffold(const fs::path& build_dir,
                            const fs::path& output_path) {
  write_text_file(output_path, render_report_scaffold(build_dir));
}

}  // namespace trunk
