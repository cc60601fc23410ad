#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "trunk/common.hpp"
#include "trunk/hash.hpp"
#include "trunk/nn.hpp"
#include "trunk/version.hpp"

#include <nlohmann/json.hpp>

namespace trunk {

// ---------------------------------------------------------------------------
// Backbone description. Kept as plain data so node architectures ship as
// YAML files rather than code.
// ---------------------------------------------------------------------------

struct LayerDesc {
  std::string op;  // conv | depthwise_conv | norm | activation | max_pool |
                   // global_avg_pool | flatten | linear
  std::map<std::string, int> params;

  int get(const std::string& name, int fallback) const {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
  }
  bool has(const std::string& name) const { return params.count(name) > 0; }
};

struct ImageShape {
  size_t channels = 0, height = 0, width = 0;
  bool operator==(const ImageShape&) const = default;
};

struct BackboneSpec {
  std::string family;  // mobilenet | vgg
  std::vector<LayerDesc> blocks;
  ImageShape input_shape;
};

inline const char* kMobilenetSpecYaml = R"(family: mobilenet
blocks:
  - op: conv
    params: {out_channels: 32, kernel: 3, stride: 1, padding: 1}
  - op: norm
  - op: activation
  - op: depthwise_conv
    params: {kernel: 3, stride: 1, padding: 1}
  - op: norm
  - op: activation
  - op: conv
    params: {out_channels: 64, kernel: 1, stride: 1, padding: 0}
  - op: norm
  - op: activation
  - op: global_avg_pool
  - op: linear
)";

inline const char* kVggSpecYaml = R"(family: vgg
blocks:
  - op: conv
    params: {out_channels: 32, kernel: 3, stride: 1, padding: 1}
  - op: norm
  - op: activation
  - op: max_pool
    params: {kernel: 2, stride: 2}
  - op: conv
    params: {out_channels: 64, kernel: 3, stride: 1, padding: 1}
  - op: norm
  - op: activation
  - op: max_pool
    params: {kernel: 2, stride: 2}
  - op: flatten
  - op: linear
)";

inline BackboneSpec parse_backbone_spec(const YAML::Node& root,
                                        ImageShape input_shape) {
  BackboneSpec spec;
  if (!root["family"]) throw ValidationError("backbone spec missing family");
  spec.family = root["family"].as<std::string>();
  spec.input_shape = input_shape;
  if (!root["blocks"] || !root["blocks"].IsSequence())
    throw ValidationError("backbone spec missing blocks list");
  for (const auto& b : root["blocks"]) {
    LayerDesc d;
    if (!b["op"]) throw ValidationError("backbone block missing op");
    d.op = b["op"].as<std::string>();
    if (b["params"]) {
      for (const auto& kv : b["params"])
        d.params[kv.first.as<std::string>()] = kv.second.as<int>();
    }
    spec.blocks.push_back(std::move(d));
  }
  return spec;
}

inline BackboneSpec load_backbone_spec(const fs::path& path,
                                       ImageShape input_shape) {
  return parse_backbone_spec(YAML::LoadFile(path.string()), input_shape);
}

// The shipped defaults (configs/backbones/*.yaml carry the same content).
inline BackboneSpec default_backbone(const std::string& family,
                                     ImageShape input_shape) {
  if (family == "mobilenet")
    return parse_backbone_spec(YAML::Load(kMobilenetSpecYaml), input_shape);
  if (family == "vgg")
    return parse_backbone_spec(YAML::Load(kVggSpecYaml), input_shape);
  throw ValidationError("unknown model_backbone: " + family +
                        " (supported: mobilenet, vgg)");
}

// ---------------------------------------------------------------------------
// NodeNetwork: one shallow per-node classifier. Mutable while training,
// copyable for immutable inference snapshots.
// ---------------------------------------------------------------------------

class NodeNetwork {
 public:
  BackboneSpec spec;
  size_t out_groups = 0;
  std::string norm_mode = "batch";
  std::vector<nn::Layer> layers;

  NodeNetwork() = default;

  // Forward returning row-stochastic probabilities (N x out_groups).
  Tensor forward(const Tensor& x, bool train = false) {
    return nn::softmax(forward_logits(x, train));
  }

  Tensor forward_logits(const Tensor& x, bool train = false) {
    Tensor cur = x;
    for (auto& l : layers) cur = nn::layer_forward(l, cur, train);
    return cur;
  }

  // Backward from d(loss)/d(logits); accumulates parameter gradients.
  void backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = nn::layer_backward(*it, g);
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out;
    for (auto& l : layers) nn::collect_params(l, out);
    return out;
  }

  size_t param_count() {
    size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
  }
};

namespace detail {

struct ShapeState {
  bool spatial = true;
  size_t c = 0, h = 0, w = 0;  // when spatial
  size_t f = 0;                // when flat
};

[[noreturn]] inline void layer_error(size_t idx, const LayerDesc& d,
                                     const std::string& msg) {
  throw ValidationError("layer " + std::to_string(idx) + " (" + d.op +
                        "): " + msg);
}

}  // namespace detail

// Builds a seeded network from a backbone spec. The final linear's output
// width is the per-node free parameter; a spec may pin out_features for
// hidden linears but the last one takes out_groups when unspecified.
inline NodeNetwork make_node_network(const BackboneSpec& spec,
                                     size_t out_groups, uint64_t init_seed,
                                     const std::string& norm_mode = "batch") {
  if (out_groups < 1) throw ValidationError("out_groups must be >= 1");
  if (norm_mode != "batch" && norm_mode != "layer")
    throw ValidationError("norm mode must be batch or layer");
  NodeNetwork net;
  net.spec = spec;
  net.out_groups = out_groups;
  net.norm_mode = norm_mode;
  std::mt19937_64 rng(init_seed);

  detail::ShapeState st;
  st.c = spec.input_shape.channels;
  st.h = spec.input_shape.height;
  st.w = spec.input_shape.width;
  if (st.c == 0 || st.h == 0 || st.w == 0)
    throw ValidationError("backbone input_shape not set");

  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const LayerDesc& d = spec.blocks[i];
    if (d.op == "conv") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      size_t out_c = d.get("out_channels", 0);
      size_t k = d.get("kernel", 3), s = d.get("stride", 1),
             p = d.get("padding", 0);
      if (out_c < 1) detail::layer_error(i, d, "out_channels must be >= 1");
      if (st.h + 2 * p < k || st.w + 2 * p < k)
        detail::layer_error(i, d, "kernel larger than padded input " +
                                      std::to_string(st.h) + "x" +
                                      std::to_string(st.w));
      nn::Conv2d conv(st.c, out_c, k, s, p);
      conv.init(rng);
      st.c = out_c;
      st.h = conv.out_hw(st.h);
      st.w = conv.out_hw(st.w);
      net.layers.emplace_back(std::move(conv));
    } else if (d.op == "depthwise_conv") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      size_t k = d.get("kernel", 3), s = d.get("stride", 1),
             p = d.get("padding", 0);
      if (st.h + 2 * p < k || st.w + 2 * p < k)
        detail::layer_error(i, d, "kernel larger than padded input");
      nn::DepthwiseConv2d conv(st.c, k, s, p);
      conv.init(rng);
      st.h = conv.out_hw(st.h);
      st.w = conv.out_hw(st.w);
      net.layers.emplace_back(std::move(conv));
    } else if (d.op == "norm") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      net.layers.emplace_back(nn::Norm(norm_mode, st.c));
    } else if (d.op == "activation") {
      net.layers.emplace_back(nn::ReLU{});
    } else if (d.op == "max_pool") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      size_t k = d.get("kernel", 2), s = d.get("stride", 2);
      if (st.h < k || st.w < k)
        detail::layer_error(i, d, "input smaller than pooling window");
      nn::MaxPool2d pool(k, s);
      st.h = pool.out_hw(st.h);
      st.w = pool.out_hw(st.w);
      net.layers.emplace_back(std::move(pool));
    } else if (d.op == "global_avg_pool") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      net.layers.emplace_back(nn::GlobalAvgPool{});
      st.spatial = false;
      st.f = st.c;
    } else if (d.op == "flatten") {
      if (!st.spatial) detail::layer_error(i, d, "requires CHW input");
      net.layers.emplace_back(nn::Flatten{});
      st.spatial = false;
      st.f = st.c * st.h * st.w;
    } else if (d.op == "linear") {
      if (st.spatial)
        detail::layer_error(
            i, d, "requires flat input; add flatten or global_avg_pool first");
      size_t out_f = d.has("out_features")
                         ? static_cast<size_t>(d.get("out_features", 0))
                         : out_groups;
      if (out_f < 1) detail::layer_error(i, d, "out_features must be >= 1");
      nn::Linear lin(st.f, out_f);
      lin.init(rng);
      st.f = out_f;
      net.layers.emplace_back(std::move(lin));
    } else {
      detail::layer_error(i, d, "unknown op");
    }
  }
  if (st.spatial || st.f != out_groups)
    throw ValidationError(
        "backbone output width " +
        std::to_string(st.spatial ? 0 : st.f) +
        " does not match out_groups " + std::to_string(out_groups) +
        "; the final linear must be last and leave out_features unset");
  return net;
}

// Replaces every normalization layer with the requested flavor, freshly
// initialized (gamma=1, beta=0, reset running statistics). Layer count and
// all other parameters are preserved.
inline NodeNetwork set_norm_mode(const NodeNetwork& network,
                                 const std::string& mode) {
  if (mode != "batch" && mode != "layer")
    throw ValidationError("norm mode must be batch or layer");
  NodeNetwork out = network;
  out.norm_mode = mode;
  for (auto& l : out.layers) {
    if (auto* n = std::get_if<nn::Norm>(&l)) {
      l = nn::Norm(mode, n->channels);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// FLOPs accounting. Convention: 1 MAC = 2 FLOPs; bias adds are not counted;
// normalization and activations cost 2 ops per element; pooling costs 1 op
// per window element; the output softmax is not counted (routing only needs
// the argmax).
// ---------------------------------------------------------------------------

inline uint64_t count_flops(const NodeNetwork& network, ImageShape input) {
  if (input.channels == 0 || input.height == 0 || input.width == 0)
    throw ValidationError("count_flops: invalid input shape");
  uint64_t flops = 0;
  bool spatial = true;
  uint64_t c = input.channels, h = input.height, w = input.width, f = 0;
  for (const auto& l : network.layers) {
    if (const auto* conv = std::get_if<nn::Conv2d>(&l)) {
      if (!spatial || c != conv->in_ch)
        throw ValidationError("count_flops: shape mismatch at conv");
      uint64_t oh = conv->out_hw(h), ow = conv->out_hw(w);
      flops += 2ull * oh * ow * conv->out_ch * conv->kernel * conv->kernel * c;
      c = conv->out_ch;
      h = oh;
      w = ow;
    } else if (const auto* dw = std::get_if<nn::DepthwiseConv2d>(&l)) {
      if (!spatial) throw ValidationError("count_flops: shape mismatch");
      uint64_t oh = dw->out_hw(h), ow = dw->out_hw(w);
      flops += 2ull * oh * ow * c * dw->kernel * dw->kernel;
      h = oh;
      w = ow;
    } else if (std::get_if<nn::Norm>(&l)) {
      flops += 2ull * c * h * w;
    } else if (std::get_if<nn::ReLU>(&l)) {
      flops += 2ull * (spatial ? c * h * w : f);
    } else if (const auto* mp = std::get_if<nn::MaxPool2d>(&l)) {
      uint64_t oh = mp->out_hw(h), ow = mp->out_hw(w);
      flops += oh * ow * c * mp->kernel * mp->kernel;
      h = oh;
      w = ow;
    } else if (std::get_if<nn::GlobalAvgPool>(&l)) {
      flops += c * h * w;
      spatial = false;
      f = c;
    } else if (std::get_if<nn::Flatten>(&l)) {
      spatial = false;
      f = c * h * w;
    } else if (const auto* lin = std::get_if<nn::Linear>(&l)) {
      if (spatial || f != lin->in_features)
        throw ValidationError("count_flops: shape mismatch at linear");
      flops += 2ull * lin->in_features * lin->out_features;
      f = lin->out_features;
    }
  }
  return flops;
}

// ---------------------------------------------------------------------------
// Checkpoints: <prefix>.bin holds the parameter blocks as little-endian
// doubles in layer order; <prefix>.json describes them.
// ---------------------------------------------------------------------------

inline void save_weights(NodeNetwork& network, const fs::path& prefix) {
  std::vector<double> flat;
  for (auto& p : network.params())
    flat.insert(flat.end(), p.value->begin(), p.value->end());
  // running statistics ride along so batch-norm eval survives a reload
  for (auto& l : network.layers) {
    if (auto* n = std::get_if<nn::Norm>(&l)) {
      flat.insert(flat.end(), n->running_mean.begin(), n->running_mean.end());
      flat.insert(flat.end(), n->running_var.begin(), n->running_var.end());
    }
  }
  fs::path bin = prefix;
  bin += ".bin";
  if (bin.has_parent_path()) fs::create_directories(bin.parent_path());
  std::ofstream out(bin, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + bin.string());
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  out.close();

  nlohmann::json meta;
  meta["schema_version"] = kCheckpointSchemaVersion;
  meta["family"] = network.spec.family;
  meta["norm_mode"] = network.norm_mode;
  meta["out_groups"] = network.out_groups;
  meta["input_shape"] = {network.spec.input_shape.channels,
                         network.spec.input_shape.height,
                         network.spec.input_shape.width};
  meta["value_count"] = flat.size();
  meta["sha256"] = sha256_hex(flat.data(), flat.size() * sizeof(double));
  fs::path metap = prefix;
  metap += ".json";
  write_text_file(metap, meta.dump(2) + "\n");
}

inline void load_weights(NodeNetwork& network, const fs::path& prefix) {
  fs::path bin = prefix;
  bin += ".bin";
  fs::path metap = prefix;
  metap += ".json";
  nlohmann::json meta = nlohmann::json::parse(read_text_file(metap));
  if (meta.at("schema_version").get<int>() != kCheckpointSchemaVersion)
    throw std::runtime_error("checkpoint schema mismatch: " + metap.string());
  if (meta.at("out_groups").get<size_t>() != network.out_groups)
    throw std::runtime_error("checkpoint out_groups mismatch: " +
                             metap.string());
  auto bytes = read_binary_file(bin);
  size_t n = bytes.size() / sizeof(double);
  if (meta.at("value_count").get<size_t>() != n)
    throw std::runtime_error("checkpoint size mismatch: " + bin.string());
  std::vector<double> flat(n);
  std::memcpy(flat.data(), bytes.data(), bytes.size());
  size_t off = 0;
  for (auto& p : network.params()) {
    if (off + p.value->size() > n)
      throw std::runtime_error("checkpoint truncated: " + bin.string());
    std::copy(flat.begin() + off, flat.begin() + off + p.value->size(),
              p.value->begin());
    off += p.value->size();
  }
  for (auto& l : network.layers) {
    if (auto* nm = std::get_if<nn::Norm>(&l)) {
      if (off + 2 * nm->channels > n)
        throw std::runtime_error("checkpoint truncated: " + bin.string());
      std::copy(flat.begin() + off, flat.begin() + off + nm->channels,
                nm->running_mean.begin());
      off += nm->channels;
      std::copy(flat.begin() + off, flat.begin() + off + nm->channels,
                nm->running_var.begin());
      off += nm->channels;
    }
  }
  if (off != n)
    throw std::runtime_error("checkpoint has trailing data: " + bin.string());
}

}  // namespace trunk
