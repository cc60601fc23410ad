#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <variant>
#include <vector>

#include "trunk/tensor.hpp"

namespace trunk::nn {

// Parameter block: weights plus their gradient accumulator, exposed to the
// optimizer by pointer. Layers own the storage.
struct ParamRef {
  std::vector<double>* value;
  std::vector<double>* grad;
};

inline void init_uniform_fan_in(std::vector<double>& w, size_t fan_in,
                                std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Layers. Each caches what backward needs; single-owner during training.
// ---------------------------------------------------------------------------

struct Conv2d {
  size_t in_ch, out_ch, kernel, stride, padding;
  std::vector<double> w, b;      // w[out][in][kh][kw]
  std::vector<double> gw, gb;
  Tensor cached_x;

  Conv2d(size_t in_c, size_t out_c, size_t k, size_t s, size_t p)
      : in_ch(in_c), out_ch(out_c), kernel(k), stride(s), padding(p) {
    w.assign(out_ch * in_ch * kernel * kernel, 0.0);
    b.assign(out_ch, 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }

  void init(std::mt19937_64& rng) {
    size_t fan_in = in_ch * kernel * kernel;
    init_uniform_fan_in(w, fan_in, rng);
    init_uniform_fan_in(b, fan_in, rng);
  }

  size_t out_hw(size_t in) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }

  double& wat(size_t o, size_t i, size_t kh, size_t kw) {
    return w[((o * in_ch + i) * kernel + kh) * kernel + kw];
  }
  double wat(size_t o, size_t i, size_t kh, size_t kw) const {
    return w[((o * in_ch + i) * kernel + kh) * kernel + kw];
  }

  Tensor forward(const Tensor& x, bool train) {
    if (train) cached_x = x;
    size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    size_t oh = out_hw(h), ow = out_hw(wd);
    Tensor y({n, out_ch, oh, ow});
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t o = 0; o < out_ch; ++o)
        for (size_t yh = 0; yh < oh; ++yh)
          for (size_t yw = 0; yw < ow; ++yw) {
            double acc = b[o];
            for (size_t i = 0; i < in_ch; ++i)
              for (size_t kh = 0; kh < kernel; ++kh) {
                long ih = static_cast<long>(yh * stride + kh) -
                          static_cast<long>(padding);
                if (ih < 0 || ih >= static_cast<long>(h)) continue;
                for (size_t kw = 0; kw < kernel; ++kw) {
                  long iw = static_cast<long>(yw * stride + kw) -
                            static_cast<long>(padding);
                  if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                  acc += wat(o, i, kh, kw) * x.at4(ni, i, ih, iw);
                }
              }
            y.at4(ni, o, yh, yw) = acc;
          }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = cached_x;
    size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    size_t oh = gy.dim(2), ow = gy.dim(3);
    Tensor gx = Tensor::zeros_like(x);
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t o = 0; o < out_ch; ++o)
        for (size_t yh = 0; yh < oh; ++yh)
          for (size_t yw = 0; yw < ow; ++yw) {
            double g = gy.at4(ni, o, yh, yw);
            gb[o] += g;
            for (size_t i = 0; i < in_ch; ++i)
              for (size_t kh = 0; kh < kernel; ++kh) {
                long ih = static_cast<long>(yh * stride + kh) -
                          static_cast<long>(padding);
                if (ih < 0 || ih >= static_cast<long>(h)) continue;
                for (size_t kw = 0; kw < kernel; ++kw) {
                  long iw = static_cast<long>(yw * stride + kw) -
                            static_cast<long>(padding);
                  if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                  gw[((o * in_ch + i) * kernel + kh) * kernel + kw] +=
                      g * x.at4(ni, i, ih, iw);
                  gx.at4(ni, i, ih, iw) += g * wat(o, i, kh, kw);
                }
              }
          }
    return gx;
  }
};

struct DepthwiseConv2d {
  size_t channels, kernel, stride, padding;
  std::vector<double> w, b;  // w[c][kh][kw]
  std::vector<double> gw, gb;
  Tensor cached_x;

  DepthwiseConv2d(size_t c, size_t k, size_t s, size_t p)
      : channels(c), kernel(k), stride(s), padding(p) {
    w.assign(channels * kernel * kernel, 0.0);
    b.assign(channels, 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }

  void init(std::mt19937_64& rng) {
    size_t fan_in = kernel * kernel;
    init_uniform_fan_in(w, fan_in, rng);
    init_uniform_fan_in(b, fan_in, rng);
  }

  size_t out_hw(size_t in) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }

  Tensor forward(const Tensor& x, bool train) {
    if (train) cached_x = x;
    size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    size_t oh = out_hw(h), ow = out_hw(wd);
    Tensor y({n, channels, oh, ow});
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t c = 0; c < channels; ++c)
        for (size_t yh = 0; yh < oh; ++yh)
          for (size_t yw = 0; yw < ow; ++yw) {
            double acc = b[c];
            for (size_t kh = 0; kh < kernel; ++kh) {
              long ih = static_cast<long>(yh * stride + kh) -
                        static_cast<long>(padding);
              if (ih < 0 || ih >= static_cast<long>(h)) continue;
              for (size_t kw = 0; kw < kernel; ++kw) {
                long iw = static_cast<long>(yw * stride + kw) -
                          static_cast<long>(padding);
                if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                acc += w[(c * kernel + kh) * kernel + kw] *
                       x.at4(ni, c, ih, iw);
              }
            }
            y.at4(ni, c, yh, yw) = acc;
          }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = cached_x;
    size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    size_t oh = gy.dim(2), ow = gy.dim(3);
    Tensor gx = Tensor::zeros_like(x);
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t c = 0; c < channels; ++c)
        for (size_t yh = 0; yh < oh; ++yh)
          for (size_t yw = 0; yw < ow; ++yw) {
            double g = gy.at4(ni, c, yh, yw);
            gb[c] += g;
            for (size_t kh = 0; kh < kernel; ++kh) {
              long ih = static_cast<long>(yh * stride + kh) -
                        static_cast<long>(padding);
              if (ih < 0 || ih >= static_cast<long>(h)) continue;
              for (size_t kw = 0; kw < kernel; ++kw) {
                long iw = static_cast<long>(yw * stride + kw) -
                          static_cast<long>(padding);
                if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                gw[(c * kernel + kh) * kernel + kw] += g * x.at4(ni, c, ih, iw);
                gx.at4(ni, c, ih, iw) += g * w[(c * kernel + kh) * kernel + kw];
              }
            }
          }
    return gx;
  }
};

// Normalization with a switchable flavor. batch: per-channel statistics over
// (N,H,W) with running estimates for eval. layer: per-sample statistics over
// (C,H,W), batch-size independent. Affine (gamma, beta) is per-channel in
// both modes so a flavor swap preserves parameter shapes.
struct Norm {
  std::string mode;  // "batch" | "layer"
  size_t channels;
  double eps = 1e-5;
  double momentum = 0.1;
  std::vector<double> gamma, beta;
  std::vector<double> ggamma, gbeta;
  std::vector<double> running_mean, running_var;  // batch mode only
  // backward caches
  Tensor cached_xhat;
  std::vector<double> cached_inv_std;  // per channel (batch) or per sample (layer)

  Norm(std::string m, size_t c) : mode(std::move(m)), channels(c) {
    gamma.assign(channels, 1.0);
    beta.assign(channels, 0.0);
    ggamma.assign(channels, 0.0);
    gbeta.assign(channels, 0.0);
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
  }

  Tensor forward(const Tensor& x, bool train) {
    size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y(x.shape);
    if (mode == "batch") {
      size_t m = n * h * w;
      std::vector<double> mean(c, 0.0), var(c, 0.0);
      if (train) {
        for (size_t ci = 0; ci < c; ++ci) {
          double s = 0.0;
          for (size_t ni = 0; ni < n; ++ni)
            for (size_t hi = 0; hi < h; ++hi)
              for (size_t wi = 0; wi < w; ++wi) s += x.at4(ni, ci, hi, wi);
          mean[ci] = s / m;
          double v = 0.0;
          for (size_t ni = 0; ni < n; ++ni)
            for (size_t hi = 0; hi < h; ++hi)
              for (size_t wi = 0; wi < w; ++wi) {
                double d = x.at4(ni, ci, hi, wi) - mean[ci];
                v += d * d;
              }
          var[ci] = v / m;
          running_mean[ci] =
              (1.0 - momentum) * running_mean[ci] + momentum * mean[ci];
          running_var[ci] =
              (1.0 - momentum) * running_var[ci] + momentum * var[ci];
        }
      } else {
        mean = running_mean;
        var = running_var;
      }
      if (train) {
        cached_xhat = Tensor(x.shape);
        cached_inv_std.assign(c, 0.0);
      }
      for (size_t ci = 0; ci < c; ++ci) {
        double inv = 1.0 / std::sqrt(var[ci] + eps);
        if (train) cached_inv_std[ci] = inv;
        for (size_t ni = 0; ni < n; ++ni)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double xh = (x.at4(ni, ci, hi, wi) - mean[ci]) * inv;
              if (train) cached_xhat.at4(ni, ci, hi, wi) = xh;
              y.at4(ni, ci, hi, wi) = gamma[ci] * xh + beta[ci];
            }
      }
    } else {  // layer
      size_t m = c * h * w;
      if (train) {
        cached_xhat = Tensor(x.shape);
        cached_inv_std.assign(n, 0.0);
      }
      for (size_t ni = 0; ni < n; ++ni) {
        double s = 0.0;
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) s += x.at4(ni, ci, hi, wi);
        double mean = s / m;
        double v = 0.0;
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double d = x.at4(ni, ci, hi, wi) - mean;
              v += d * d;
            }
        double inv = 1.0 / std::sqrt(v / m + eps);
        if (train) cached_inv_std[ni] = inv;
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double xh = (x.at4(ni, ci, hi, wi) - mean) * inv;
              if (train) cached_xhat.at4(ni, ci, hi, wi) = xh;
              y.at4(ni, ci, hi, wi) = gamma[ci] * xh + beta[ci];
            }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& xh = cached_xhat;
    size_t n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
    Tensor gx(gy.shape);
    if (mode == "batch") {
      size_t m = n * h * w;
      for (size_t ci = 0; ci < c; ++ci) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (size_t ni = 0; ni < n; ++ni)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double g = gy.at4(ni, ci, hi, wi);
              sum_gy += g;
              sum_gy_xhat += g * xh.at4(ni, ci, hi, wi);
            }
        ggamma[ci] += sum_gy_xhat;
        gbeta[ci] += sum_gy;
        double k = gamma[ci] * cached_inv_std[ci] / m;
        for (size_t ni = 0; ni < n; ++ni)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              gx.at4(ni, ci, hi, wi) =
                  k * (m * gy.at4(ni, ci, hi, wi) - sum_gy -
                       xh.at4(ni, ci, hi, wi) * sum_gy_xhat);
            }
      }
    } else {  // layer
      size_t m = c * h * w;
      for (size_t ci = 0; ci < c; ++ci) {
        double sg = 0.0, sgx = 0.0;
        for (size_t ni = 0; ni < n; ++ni)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double g = gy.at4(ni, ci, hi, wi);
              sg += g;
              sgx += g * xh.at4(ni, ci, hi, wi);
            }
        gbeta[ci] += sg;
        ggamma[ci] += sgx;
      }
      for (size_t ni = 0; ni < n; ++ni) {
        double sum_g = 0.0, sum_g_xhat = 0.0;
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double g = gy.at4(ni, ci, hi, wi) * gamma[ci];
              sum_g += g;
              sum_g_xhat += g * xh.at4(ni, ci, hi, wi);
            }
        double inv = cached_inv_std[ni];
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t hi = 0; hi < h; ++hi)
            for (size_t wi = 0; wi < w; ++wi) {
              double g = gy.at4(ni, ci, hi, wi) * gamma[ci];
              gx.at4(ni, ci, hi, wi) =
                  inv / m *
                  (m * g - sum_g - xh.at4(ni, ci, hi, wi) * sum_g_xhat);
            }
      }
    }
    return gx;
  }
};

struct ReLU {
  Tensor cached_x;
  Tensor forward(const Tensor& x, bool train) {
    if (train) cached_x = x;
    Tensor y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
      y.data[i] = x.data[i] > 0 ? x.data[i] : 0.0;
    return y;
  }
  Tensor backward(const Tensor& gy) {
    Tensor gx(gy.shape);
    for (size_t i = 0; i < gy.data.size(); ++i)
      gx.data[i] = cached_x.data[i] > 0 ? gy.data[i] : 0.0;
    return gx;
  }
};

struct MaxPool2d {
  size_t kernel, stride;
  std::vector<size_t> argmax;
  std::vector<size_t> in_shape;

  MaxPool2d(size_t k, size_t s) : kernel(k), stride(s) {}

  size_t out_hw(size_t in) const { return (in - kernel) / stride + 1; }

  Tensor forward(const Tensor& x, bool train) {
    size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    size_t oh = out_hw(h), ow = out_hw(w);
    Tensor y({n, c, oh, ow});
    if (train) {
      argmax.assign(y.numel(), 0);
      in_shape = x.shape;
    }
    size_t oi = 0;
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t ci = 0; ci < c; ++ci)
        for (size_t yh = 0; yh < oh; ++yh)
          for (size_t yw = 0; yw < ow; ++yw, ++oi) {
            double best = -std::numeric_limits<double>::infinity();
            size_t best_idx = 0;
            for (size_t kh = 0; kh < kernel; ++kh)
              for (size_t kw = 0; kw < kernel; ++kw) {
                size_t ih = yh * stride + kh, iw = yw * stride + kw;
                size_t idx = ((ni * c + ci) * h + ih) * w + iw;
                if (x.data[idx] > best) {
                  best = x.data[idx];
                  best_idx = idx;
                }
              }
            y.data[((ni * c + ci) * oh + yh) * ow + yw] = best;
            if (train)
              argmax[((ni * c + ci) * oh + yh) * ow + yw] = best_idx;
          }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(in_shape);
    for (size_t i = 0; i < gy.data.size(); ++i) gx.data[argmax[i]] += gy.data[i];
    return gx;
  }
};

struct GlobalAvgPool {
  std::vector<size_t> in_shape;
  Tensor forward(const Tensor& x, bool train) {
    size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (train) in_shape = x.shape;
    Tensor y({n, c});
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (size_t hi = 0; hi < h; ++hi)
          for (size_t wi = 0; wi < w; ++wi) s += x.at4(ni, ci, hi, wi);
        y.at2(ni, ci) = s / (h * w);
      }
    return y;
  }
  Tensor backward(const Tensor& gy) {
    Tensor gx(in_shape);
    size_t h = in_shape[2], w = in_shape[3];
    for (size_t ni = 0; ni < in_shape[0]; ++ni)
      for (size_t ci = 0; ci < in_shape[1]; ++ci) {
        double g = gy.at2(ni, ci) / (h * w);
        for (size_t hi = 0; hi < h; ++hi)
          for (size_t wi = 0; wi < w; ++wi) gx.at4(ni, ci, hi, wi) = g;
      }
    return gx;
  }
};

struct Flatten {
  std::vector<size_t> in_shape;
  Tensor forward(const Tensor& x, bool train) {
    if (train) in_shape = x.shape;
    Tensor y({x.dim(0), x.numel() / x.dim(0)});
    y.data = x.data;
    return y;
  }
  Tensor backward(const Tensor& gy) {
    Tensor gx(in_shape);
    gx.data = gy.data;
    return gx;
  }
};

struct Linear {
  size_t in_features, out_features;
  std::vector<double> w, b;  // w[out][in]
  std::vector<double> gw, gb;
  Tensor cached_x;

  Linear(size_t in_f, size_t out_f) : in_features(in_f), out_features(out_f) {
    w.assign(in_features * out_features, 0.0);
    b.assign(out_features, 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }

  void init(std::mt19937_64& rng) {
    init_uniform_fan_in(w, in_features, rng);
    init_uniform_fan_in(b, in_features, rng);
  }

  Tensor forward(const Tensor& x, bool train) {
    if (train) cached_x = x;
    size_t n = x.dim(0);
    Tensor y({n, out_features});
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t o = 0; o < out_features; ++o) {
        double acc = b[o];
        const double* xr = &x.data[ni * in_features];
        const double* wr = &w[o * in_features];
        for (size_t i = 0; i < in_features; ++i) acc += wr[i] * xr[i];
        y.at2(ni, o) = acc;
      }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = cached_x;
    size_t n = x.dim(0);
    Tensor gx({n, in_features});
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t o = 0; o < out_features; ++o) {
        double g = gy.at2(ni, o);
        gb[o] += g;
        const double* xr = &x.data[ni * in_features];
        double* gwr = &gw[o * in_features];
        double* gxr = &gx.data[ni * in_features];
        const double* wr = &w[o * in_features];
        for (size_t i = 0; i < in_features; ++i) {
          gwr[i] += g * xr[i];
          gxr[i] += g * wr[i];
        }
      }
    return gx;
  }
};

using Layer = std::variant<Conv2d, DepthwiseConv2d, Norm, ReLU, MaxPool2d,
                           GlobalAvgPool, Flatten, Linear>;

inline Tensor layer_forward(Layer& l, const Tensor& x, bool train) {
  return std::visit([&](auto& v) { return v.forward(x, train); }, l);
}
inline Tensor layer_backward(Layer& l, const Tensor& gy) {
  return std::visit([&](auto& v) { return v.backward(gy); }, l);
}

inline void collect_params(Layer& l, std::vector<ParamRef>& out) {
  if (auto* c = std::get_if<Conv2d>(&l)) {
    out.push_back({&c->w, &c->gw});
    out.push_back({&c->b, &c->gb});
  } else if (auto* d = std::get_if<DepthwiseConv2d>(&l)) {
    out.push_back({&d->w, &d->gw});
    out.push_back({&d->b, &d->gb});
  } else if (auto* n = std::get_if<Norm>(&l)) {
    out.push_back({&n->gamma, &n->ggamma});
    out.push_back({&n->beta, &n->gbeta});
  } else if (auto* f = std::get_if<Linear>(&l)) {
    out.push_back({&f->w, &f->gw});
    out.push_back({&f->b, &f->gb});
  }
}

// ---------------------------------------------------------------------------
// Softmax / loss
// ---------------------------------------------------------------------------

// Row-wise log-softmax of logits (N x K).
inline Tensor log_softmax(const Tensor& logits) {
  size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape);
  for (size_t ni = 0; ni < n; ++ni) {
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at2(ni, j));
    double sum = 0.0;
    for (size_t j = 0; j < k; ++j) sum += std::exp(logits.at2(ni, j) - mx);
    double lse = mx + std::log(sum);
    for (size_t j = 0; j < k; ++j) out.at2(ni, j) = logits.at2(ni, j) - lse;
  }
  return out;
}

inline Tensor softmax(const Tensor& logits) {
  Tensor out = log_softmax(logits);
  for (double& v : out.data) v = std::exp(v);
  return out;
}

// Mean negative log-likelihood over the batch; grad_logits receives
// d(loss)/d(logits) = (softmax - onehot) / N.
inline double nll_loss(const Tensor& logits, const std::vector<int>& targets,
                       Tensor* grad_logits = nullptr) {
  size_t n = logits.dim(0), k = logits.dim(1);
  Tensor lsm = log_softmax(logits);
  double loss = 0.0;
  for (size_t ni = 0; ni < n; ++ni) loss -= lsm.at2(ni, targets[ni]);
  loss /= static_cast<double>(n);
  if (grad_logits) {
    *grad_logits = Tensor(logits.shape);
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t j = 0; j < k; ++j) {
        double p = std::exp(lsm.at2(ni, j));
        grad_logits->at2(ni, j) =
            (p - (static_cast<size_t>(targets[ni]) == j ? 1.0 : 0.0)) /
            static_cast<double>(n);
      }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

// Adam with L2 weight decay folded into the gradient (classic, not AdamW).
struct Adam {
  double lr, weight_decay;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  Adam(double lr_, double wd) : lr(lr_), weight_decay(wd) {}

  void step(std::vector<ParamRef>& params) {
    if (m.empty()) {
      for (auto& p : params) {
        m.emplace_back(p.value->size(), 0.0);
        v.emplace_back(p.value->size(), 0.0);
      }
    }
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& w = *params[pi].value;
      auto& g = *params[pi].grad;
      for (size_t i = 0; i < w.size(); ++i) {
        double grad = g[i] + weight_decay * w[i];
        m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * grad;
        v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * grad * grad;
        double mhat = m[pi][i] / bc1;
        double vhat = v[pi][i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

struct SGD {
  double lr, weight_decay;
  SGD(double lr_, double wd) : lr(lr_), weight_decay(wd) {}
  void step(std::vector<ParamRef>& params) {
    for (auto& p : params) {
      auto& w = *p.value;
      auto& g = *p.grad;
      for (size_t i = 0; i < w.size(); ++i)
        w[i] -= lr * (g[i] + weight_decay * w[i]);
    }
  }
};

inline void zero_grads(std::vector<ParamRef>& params) {
  for (auto& p : params)
    std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

// lr(t) = eta_min + (lr0 - eta_min) * (1 + cos(pi * t / T_max)) / 2
inline double cosine_annealing_lr(double lr0, double eta_min, int t,
                                  int t_max) {
  return eta_min + (lr0 - eta_min) *
                       (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                       static_cast<double>(t_max))) /
                       2.0;
}

}  // namespace trunk::nn
