#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trunk/common.hpp"
#include "trunk/hash.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

inline const std::set<std::string>& known_transform_kinds() {
  static const std::set<std::string> kinds = {
      "ToTensor",       "Normalize",      "RandomCrop",
      "RandomHorizontalFlip", "RandomRotation", "ColorJitter",
      "RandAugment",    "CutOut"};
  return kinds;
}

struct TransformParam {
  std::vector<double> values;
  bool is_list = false;  // preserved so serialization mirrors the input shape

  double scalar() const { return values.at(0); }
};

struct TransformSpec {
  std::string kind;
  std::map<std::string, TransformParam> params;

  bool has(const std::string& name) const { return params.count(name) > 0; }
  double get(const std::string& name, double fallback) const {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second.scalar();
  }
  std::vector<double> get_list(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
      throw ValidationError("transform " + kind + ": missing param " + name);
    return it->second.values;
  }
};

struct SplitConfig {
  int batch_size = 0;
  int num_workers = 0;
  bool shuffle = false;
  std::vector<TransformSpec> transforms;  // applied in listed order
};

struct OptimizerSpec {
  std::string kind;  // Adam | SGD
  double lr = 0.0;
  double weight_decay = 0.0;
};

struct SchedulerSpec {
  std::string kind;  // CosineAnnealingLR
  int t_max = 0;
  double eta_min = 0.0;
};

struct TrainSpec {
  std::string loss;  // NLLLoss
  double grouping_volatility = 0.0;
  OptimizerSpec optimizer;
  SchedulerSpec lr_scheduler;
  int epochs = 0;
  std::string batch_norm_mode = "batch";  // batch | layer

  bool operator==(const TrainSpec&) const = default;
};
inline bool operator==(const OptimizerSpec& a, const OptimizerSpec& b) {
  return a.kind == b.kind && a.lr == b.lr && a.weight_decay == b.weight_decay;
}
inline bool operator==(const SchedulerSpec& a, const SchedulerSpec& b) {
  return a.kind == b.kind && a.t_max == b.t_max && a.eta_min == b.eta_min;
}

struct Splits {
  SplitConfig train;
  SplitConfig validation;
  SplitConfig test;

  SplitConfig& at(const std::string& name) {
    if (name == "train") return train;
    if (name == "validation") return validation;
    if (name == "test") return test;
    throw ValidationError("unknown split: " + name);
  }
  const SplitConfig& at(const std::string& name) const {
    return const_cast<Splits*>(this)->at(name);
  }
};

// Full declarative description of one run. Immutable after load; safe to
// share across threads.
struct ExperimentConfig {
  uint64_t seed = 0;
  bool deterministic = true;
  std::string dataset_name;    // emnist | cifar10 | svhn | synthetic; may be
                               // empty at parse time (supplied via CLI)
  std::map<std::string, double> dataset_params;  // synthetic generator knobs
  Splits splits;
  std::string model_backbone;  // mobilenet | vgg; may be empty at parse time
  TrainSpec training;
  std::string output_dir = "runs";
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_transform(const TransformSpec& t) {
  if (!known_transform_kinds().count(t.kind))
    throw ValidationError("unknown transform kind: " + t.kind + " (valid: " +
                          join({known_transform_kinds().begin(),
                                known_transform_kinds().end()},
                               ", ") +
                          ")");
  if (t.kind == "Normalize") {
    if (!t.has("mean") || !t.has("std"))
      throw ValidationError("Normalize requires mean and std");
    auto mean = t.get_list("mean");
    auto std_ = t.get_list("std");
    if (mean.size() != std_.size())
      throw ValidationError("Normalize: mean and std must have equal length");
    for (double s : std_)
      if (s <= 0.0)
        throw ValidationError("Normalize: std entries must be > 0");
  }
  auto require_nonneg = [&](const char* p) {
    if (t.has(p) && t.get(p, 0) < 0)
      throw ValidationError(t.kind + ": " + p + " must be >= 0");
  };
  if (t.kind == "RandomCrop") {
    if (t.has("size") && t.get("size", 0) < 1)
      throw ValidationError("RandomCrop: size must be >= 1");
    require_nonneg("padding");
  }
  if (t.kind == "RandomHorizontalFlip" && t.has("p")) {
    double p = t.get("p", 0.5);
    if (p < 0 || p > 1)
      throw ValidationError("RandomHorizontalFlip: p must be in [0,1]");
  }
  if (t.kind == "RandomRotation") require_nonneg("degrees");
  if (t.kind == "ColorJitter") {
    require_nonneg("brightness");
    require_nonneg("contrast");
    require_nonneg("saturation");
  }
  if (t.kind == "RandAugment") {
    if (t.has("num_ops") && t.get("num_ops", 2) < 1)
      throw ValidationError("RandAugment: num_ops must be >= 1");
    require_nonneg("magnitude");
  }
  if (t.kind == "CutOut") {
    if (t.has("size") && t.get("size", 0) < 1)
      throw ValidationError("CutOut: size must be >= 1");
  }
}

inline void validate_split(const std::string& name, const SplitConfig& s) {
  if (s.batch_size < 1)
    throw ValidationError("split " + name + ": batch_size must be >= 1");
  if (s.num_workers < 0)
    throw ValidationError("split " + name + ": num_workers must be >= 0");
  for (const auto& t : s.transforms) validate_transform(t);
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  detail::validate_split("train", c.splits.train);
  detail::validate_split("validation", c.splits.validation);
  detail::validate_split("test", c.splits.test);
  if (!c.dataset_name.empty()) {
    static const std::set<std::string> names = {"emnist", "cifar10", "svhn",
                                                "synthetic"};
    if (!names.count(c.dataset_name))
      throw ValidationError("unknown dataset: " + c.dataset_name +
                            " (supported: cifar10, emnist, svhn, synthetic)");
  }
  if (!c.model_backbone.empty() && c.model_backbone != "mobilenet" &&
      c.model_backbone != "vgg")
    throw ValidationError("unknown model_backbone: " + c.model_backbone +
                          " (supported: mobilenet, vgg)");
  const TrainSpec& t = c.training;
  if (t.loss != "NLLLoss")
    throw ValidationError("unsupported loss: " + t.loss +
                          " (supported: NLLLoss)");
  if (!(t.grouping_volatility > 0.0))
    throw ValidationError("grouping_volatility must be > 0");
  if (t.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (t.optimizer.kind != "Adam" && t.optimizer.kind != "SGD")
    throw ValidationError("unsupported optimizer: " + t.optimizer.kind +
                          " (supported: Adam, SGD)");
  if (!(t.optimizer.lr > 0.0)) throw ValidationError("optimizer lr must be > 0");
  if (t.optimizer.weight_decay < 0.0)
    throw ValidationError("optimizer weight_decay must be >= 0");
  if (t.lr_scheduler.kind != "CosineAnnealingLR")
    throw ValidationError("unsupported lr_scheduler: " + t.lr_scheduler.kind +
                          " (supported: CosineAnnealingLR)");
  if (t.lr_scheduler.t_max < 1)
    throw ValidationError("lr_scheduler T_max must be >= 1");
  if (t.lr_scheduler.eta_min < 0.0)
    throw ValidationError("lr_scheduler eta_min must be >= 0");
  if (t.batch_norm_mode != "batch" && t.batch_norm_mode != "layer")
    throw ValidationError("batch_norm_mode must be batch or layer");
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline void require_keys(const YAML::Node& node,
                         const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& kv : node) {
    std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ValidationError("unknown key in " + where + ": " + key);
  }
}

inline TransformSpec parse_transform(const YAML::Node& node) {
  if (!node["type"]) throw ValidationError("transform entry missing type");
  TransformSpec t;
  t.kind = node["type"].as<std::string>();
  require_keys(node, {"type", "params"}, "transform " + t.kind);
  if (node["params"]) {
    for (const auto& kv : node["params"]) {
      std::string name = kv.first.as<std::string>();
      TransformParam p;
      if (kv.second.IsSequence()) {
        p.is_list = true;
        for (const auto& v : kv.second) p.values.push_back(v.as<double>());
      } else {
        p.values.push_back(kv.second.as<double>());
      }
      t.params[name] = std::move(p);
    }
  }
  validate_transform(t);
  return t;
}

inline SplitConfig parse_split(const YAML::Node& node,
                               const std::string& name) {
  require_keys(node, {"params", "transform"}, "split " + name);
  if (!node["params"])
    throw ValidationError("missing field: dataset." + name + ".params");
  const YAML::Node& p = node["params"];
  require_keys(p, {"batch_size", "num_workers", "shuffle"},
               "split " + name + " params");
  SplitConfig s;
  if (!p["batch_size"])
    throw ValidationError("missing field: dataset." + name +
                          ".params.batch_size");
  s.batch_size = p["batch_size"].as<int>();
  if (!p["num_workers"])
    throw ValidationError("missing field: dataset." + name +
                          ".params.num_workers");
  s.num_workers = p["num_workers"].as<int>();
  if (!p["shuffle"])
    throw ValidationError("missing field: dataset." + name +
                          ".params.shuffle");
  s.shuffle = p["shuffle"].as<bool>();
  if (node["transform"]) {
    for (const auto& t : node["transform"])
      s.transforms.push_back(parse_transform(t));
  }
  validate_split(name, s);
  return s;
}

// loss / optimizer / lr_scheduler accept either a one-element sequence of
// {type, params} maps (the disclosed YAML shape) or a bare map.
inline YAML::Node tagged_entry(const YAML::Node& node,
                               const std::string& field) {
  if (node.IsSequence()) {
    if (node.size() != 1)
      throw ValidationError(field + " must contain exactly one entry");
    return node[0];
  }
  return node;
}

}  // namespace detail

inline ExperimentConfig parse_config(const YAML::Node& root) {
  detail::require_keys(root,
                       {"seed", "deterministic", "dataset", "model_backbone",
                        "output_dir", "loss", "grouping_volatility",
                        "lr_scheduler", "optimizer", "epochs",
                        "batch_norm_mode"},
                       "config");
  ExperimentConfig c;
  if (!root["seed"]) throw ValidationError("missing field: seed");
  c.seed = root["seed"].as<uint64_t>();
  if (root["deterministic"]) c.deterministic = root["deterministic"].as<bool>();

  if (!root["dataset"]) throw ValidationError("missing field: dataset");
  const YAML::Node& ds = root["dataset"];
  detail::require_keys(ds, {"name", "params", "train", "validation", "test"},
                       "dataset");
  if (ds["name"]) c.dataset_name = ds["name"].as<std::string>();
  if (ds["params"]) {
    for (const auto& kv : ds["params"])
      c.dataset_params[kv.first.as<std::string>()] = kv.second.as<double>();
  }
  for (const char* split : {"train", "validation", "test"}) {
    if (!ds[split])
      throw ValidationError(std::string("missing field: dataset.") + split);
    c.splits.at(split) = detail::parse_split(ds[split], split);
  }

  if (root["model_backbone"])
    c.model_backbone = root["model_backbone"].as<std::string>();
  if (root["output_dir"]) c.output_dir = root["output_dir"].as<std::string>();

  if (!root["loss"]) throw ValidationError("missing field: loss");
  {
    const YAML::Node& l = root["loss"];
    if (l.IsScalar()) {
      c.training.loss = l.as<std::string>();
    } else {
      YAML::Node e = detail::tagged_entry(l, "loss");
      if (!e["type"]) throw ValidationError("loss entry missing type");
      c.training.loss = e["type"].as<std::string>();
    }
  }
  if (!root["grouping_volatility"])
    throw ValidationError("missing field: grouping_volatility");
  c.training.grouping_volatility = root["grouping_volatility"].as<double>();

  if (!root["lr_scheduler"]) throw ValidationError("missing field: lr_scheduler");
  {
    YAML::Node e = detail::tagged_entry(root["lr_scheduler"], "lr_scheduler");
    if (!e["type"]) throw ValidationError("lr_scheduler entry missing type");
    c.training.lr_scheduler.kind = e["type"].as<std::string>();
    if (!e["params"] || !e["params"]["T_max"])
      throw ValidationError("missing field: lr_scheduler.params.T_max");
    c.training.lr_scheduler.t_max = e["params"]["T_max"].as<int>();
    if (!e["params"]["eta_min"])
      throw ValidationError("missing field: lr_scheduler.params.eta_min");
    c.training.lr_scheduler.eta_min = e["params"]["eta_min"].as<double>();
  }

  if (!root["optimizer"]) throw ValidationError("missing field: optimizer");
  {
    YAML::Node e = detail::tagged_entry(root["optimizer"], "optimizer");
    if (!e["type"]) throw ValidationError("optimizer entry missing type");
    c.training.optimizer.kind = e["type"].as<std::string>();
    if (!e["params"] || !e["params"]["lr"])
      throw ValidationError("missing field: optimizer.params.lr");
    c.training.optimizer.lr = e["params"]["lr"].as<double>();
    if (e["params"]["weight_decay"])
      c.training.optimizer.weight_decay =
          e["params"]["weight_decay"].as<double>();
  }

  if (!root["epochs"]) throw ValidationError("missing field: epochs");
  c.training.epochs = root["epochs"].as<int>();
  if (root["batch_norm_mode"])
    c.training.batch_norm_mode = root["batch_norm_mode"].as<std::string>();

  validate(c);
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw std::runtime_error("cannot open config: " + path.string());
  } catch (const YAML::ParserException& e) {
    throw ValidationError("malformed config " + path.string() + " at line " +
                          std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  try {
    return parse_config(root);
  } catch (const YAML::Exception& e) {
    throw ValidationError("malformed config " + path.string() + ": " + e.msg);
  }
}

// ---------------------------------------------------------------------------
// Serialization (hand-rolled so output is canonical and byte-stable)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string yaml_bool(bool b) { return b ? "True" : "False"; }

inline void emit_transforms(std::string& out, const std::string& indent,
                            const std::vector<TransformSpec>& ts) {
  for (const auto& t : ts) {
    out += indent + "- type: " + t.kind + "\n";
    if (!t.params.empty()) {
      out += indent + "  params:\n";
      for (const auto& [name, p] : t.params) {
        if (p.is_list) {
          out += indent + "    " + name + ":\n";
          for (double v : p.values)
            out += indent + "    - " + format_double(v) + "\n";
        } else {
          out += indent + "    " + name + ": " + format_double(p.scalar()) +
                 "\n";
        }
      }
    }
  }
}

inline void emit_split(std::string& out, const std::string& name,
                       const SplitConfig& s) {
  out += "  " + name + ":\n";
  out += "    params:\n";
  out += "      batch_size: " + std::to_string(s.batch_size) + "\n";
  out += "      num_workers: " + std::to_string(s.num_workers) + "\n";
  out += "      shuffle: " + yaml_bool(s.shuffle) + "\n";
  if (!s.transforms.empty()) {
    out += "    transform:\n";
    emit_transforms(out, "    ", s.transforms);
  }
}

}  // namespace detail

inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  out += "seed: " + std::to_string(c.seed) + "\n";
  out += "deterministic: " + detail::yaml_bool(c.deterministic) + "\n";
  out += "dataset:\n";
  if (!c.dataset_name.empty()) out += "  name: " + c.dataset_name + "\n";
  if (!c.dataset_params.empty()) {
    out += "  params:\n";
    for (const auto& [k, v] : c.dataset_params)
      out += "    " + k + ": " + format_double(v) + "\n";
  }
  detail::emit_split(out, "train", c.splits.train);
  detail::emit_split(out, "validation", c.splits.validation);
  detail::emit_split(out, "test", c.splits.test);
  if (!c.model_backbone.empty())
    out += "model_backbone: " + c.model_backbone + "\n";
  out += "output_dir: " + c.output_dir + "\n";
  out += "loss:\n- type: " + c.training.loss + "\n";
  out += "grouping_volatility: " +
         format_double(c.training.grouping_volatility) + "\n";
  out += "lr_scheduler:\n- type: " + c.training.lr_scheduler.kind + "\n";
  out += "  params:\n";
  out += "    T_max: " + std::to_string(c.training.lr_scheduler.t_max) + "\n";
  out += "    eta_min: " + format_double(c.training.lr_scheduler.eta_min) +
         "\n";
  out += "optimizer:\n- type: " + c.training.optimizer.kind + "\n";
  out += "  params:\n";
  out += "    lr: " + format_double(c.training.optimizer.lr) + "\n";
  out += "    weight_decay: " +
         format_double(c.training.optimizer.weight_decay) + "\n";
  out += "epochs: " + std::to_string(c.training.epochs) + "\n";
  out += "batch_norm_mode: " + c.training.batch_norm_mode + "\n";
  return out;
}

inline void save_config(const ExperimentConfig& c, const fs::path& path) {
  validate(c);
  write_text_file(path, serialize_config(c));
}

// Digest of the canonical serialization; identifies a config independent of
// the file it was loaded from.
inline std::string config_digest(const ExperimentConfig& c) {
  return sha256_hex(serialize_config(c));
}

// ---------------------------------------------------------------------------
// Overrides
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_bool_str(const std::string& v, const std::string& key) {
  if (v == "true" || v == "True" || v == "1") return true;
  if (v == "false" || v == "False" || v == "0") return false;
  throw ValidationError("override " + key + ": expected boolean, got '" + v +
                        "'");
}

inline double parse_double_str(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": expected number, got '" + v +
                          "'");
  }
}

inline int parse_int_str(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": expected integer, got '" + v +
                          "'");
  }
}

}  // namespace detail

inline std::vector<std::string> override_keys() {
  std::vector<std::string> keys = {
      "seed",
      "deterministic",
      "dataset.name",
      "model_backbone",
      "output_dir",
      "training.loss",
      "training.grouping_volatility",
      "training.epochs",
      "training.batch_norm_mode",
      "training.optimizer.type",
      "training.optimizer.lr",
      "training.optimizer.weight_decay",
      "training.lr_scheduler.type",
      "training.lr_scheduler.T_max",
      "training.lr_scheduler.eta_min",
      "dataset.params.<name>",
  };
  for (const char* s : {"train", "validation", "test"}) {
    keys.push_back(std::string("splits.") + s + ".batch_size");
    keys.push_back(std::string("splits.") + s + ".num_workers");
    keys.push_back(std::string("splits.") + s + ".shuffle");
  }
  return keys;
}

// Pure: returns a new config, the input is unmodified. Overrides over
// disjoint key sets compose associatively.
inline ExperimentConfig apply_overrides(
    const ExperimentConfig& base, const std::vector<std::string>& overrides) {
  ExperimentConfig c = base;
  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ValidationError("override must be key=value, got '" + ov + "'");
    std::string key = trim(ov.substr(0, eq));
    std::string val = trim(ov.substr(eq + 1));
    using detail::parse_bool_str;
    using detail::parse_double_str;
    using detail::parse_int_str;

    if (key == "seed") {
      c.seed = static_cast<uint64_t>(parse_int_str(val, key));
    } else if (key == "deterministic") {
      c.deterministic = parse_bool_str(val, key);
    } else if (key == "dataset.name" || key == "dataset") {
      c.dataset_name = val;
    } else if (key == "model_backbone") {
      c.model_backbone = val;
    } else if (key == "output_dir") {
      c.output_dir = val;
    } else if (key == "training.loss") {
      c.training.loss = val;
    } else if (key == "training.grouping_volatility") {
      c.training.grouping_volatility = parse_double_str(val, key);
    } else if (key == "training.epochs") {
      c.training.epochs = parse_int_str(val, key);
    } else if (key == "training.batch_norm_mode") {
      c.training.batch_norm_mode = val;
    } else if (key == "training.optimizer.type") {
      c.training.optimizer.kind = val;
    } else if (key == "training.optimizer.lr") {
      c.training.optimizer.lr = parse_double_str(val, key);
    } else if (key == "training.optimizer.weight_decay") {
      c.training.optimizer.weight_decay = parse_double_str(val, key);
    } else if (key == "training.lr_scheduler.type") {
      c.training.lr_scheduler.kind = val;
    } else if (key == "training.lr_scheduler.T_max") {
      c.training.lr_scheduler.t_max = parse_int_str(val, key);
    } else if (key == "training.lr_scheduler.eta_min") {
      c.training.lr_scheduler.eta_min = parse_double_str(val, key);
    } else if (key.rfind("dataset.params.", 0) == 0) {
      std::string name = key.substr(std::string("dataset.params.").size());
      if (name.empty()) throw ValidationError("empty dataset param name");
      c.dataset_params[name] = parse_double_str(val, key);
    } else if (key.rfind("splits.", 0) == 0) {
      auto parts = split(key, '.');
      if (parts.size() != 3)
        throw ValidationError("override " + key +
                              ": expected splits.<split>.<field>");
      SplitConfig& s = c.splits.at(parts[1]);
      if (parts[2] == "batch_size")
        s.batch_size = parse_int_str(val, key);
      else if (parts[2] == "num_workers")
        s.num_workers = parse_int_str(val, key);
      else if (parts[2] == "shuffle")
        s.shuffle = parse_bool_str(val, key);
      else
        throw ValidationError("unknown split field: " + parts[2]);
    } else {
      throw ValidationError("unknown override key: " + key +
                            "\nvalid keys:\n  " + join(override_keys(), "\n  "));
    }
  }
  validate(c);
  return c;
}

}  // namespace trunk
