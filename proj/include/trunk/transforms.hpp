#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trunk/config.hpp"
#include "trunk/model.hpp"
#include "trunk/tensor.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Augmentation pipeline compiled from TransformSpec lists. Images are CHW
// doubles in [0,1] (tensor conversion happens at load time, so a ToTensor
// step is a marker). Steps run in declared order; stochastic steps draw from
// the rng passed by the caller, one step at a time, so the draw sequence is
// reproducible. CutOut draws its hole at its declared position but the
// zero-fill lands after Normalize, so holes are zeros in normalized space.
// ---------------------------------------------------------------------------

namespace detail {

inline double bilinear_sample(const std::vector<double>& img, size_t c,
                              size_t ch, size_t h, size_t w, double y,
                              double x) {
  (void)ch;
  if (y < 0 || x < 0 || y > static_cast<double>(h - 1) ||
      x > static_cast<double>(w - 1))
    return 0.0;
  size_t y0 = static_cast<size_t>(std::floor(y));
  size_t x0 = static_cast<size_t>(std::floor(x));
  size_t y1 = std::min(y0 + 1, h - 1);
  size_t x1 = std::min(x0 + 1, w - 1);
  double fy = y - static_cast<double>(y0);
  double fx = x - static_cast<double>(x0);
  auto at = [&](size_t yy, size_t xx) { return img[(c * h + yy) * w + xx]; };
  return at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x1) * (1 - fy) * fx +
         at(y1, x0) * fy * (1 - fx) + at(y1, x1) * fy * fx;
}

inline void rotate_image(std::vector<double>& img, size_t ch, size_t h,
                         size_t w, double degrees) {
  double rad = degrees * M_PI / 180.0;
  double cy = (static_cast<double>(h) - 1) / 2.0;
  double cx = (static_cast<double>(w) - 1) / 2.0;
  std::vector<double> out(img.size(), 0.0);
  double cs = std::cos(rad), sn = std::sin(rad);
  for (size_t c = 0; c < ch; ++c)
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        double dy = static_cast<double>(y) - cy;
        double dx = static_cast<double>(x) - cx;
        double sy = cy + dy * cs - dx * sn;
        double sx = cx + dy * sn + dx * cs;
        out[(c * h + y) * w + x] = bilinear_sample(img, c, ch, h, w, sy, sx);
      }
  img = std::move(out);
}

inline void translate_image(std::vector<double>& img, size_t ch, size_t h,
                            size_t w, int dy, int dx) {
  std::vector<double> out(img.size(), 0.0);
  for (size_t c = 0; c < ch; ++c)
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        long sy = static_cast<long>(y) - dy;
        long sx = static_cast<long>(x) - dx;
        if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) ||
            sx >= static_cast<long>(w))
          continue;
        out[(c * h + y) * w + x] = img[(c * h + sy) * w + sx];
      }
  img = std::move(out);
}

inline void adjust_brightness(std::vector<double>& img, double factor) {
  for (double& v : img) v = std::clamp(v * factor, 0.0, 1.0);
}

inline void adjust_contrast(std::vector<double>& img, double factor) {
  double mean = 0.0;
  for (double v : img) mean += v;
  mean /= static_cast<double>(img.size());
  for (double& v : img) v = std::clamp(mean + (v - mean) * factor, 0.0, 1.0);
}

inline void adjust_saturation(std::vector<double>& img, size_t h, size_t w,
                              double factor) {
  // blend each pixel with its channel mean
  size_t hw = h * w;
  for (size_t i = 0; i < hw; ++i) {
    double gray = (img[i] + img[hw + i] + img[2 * hw + i]) / 3.0;
    for (size_t c = 0; c < 3; ++c) {
      double& v = img[c * hw + i];
      v = std::clamp(gray + (v - gray) * factor, 0.0, 1.0);
    }
  }
}

}  // namespace detail

class AugmentationPipeline {
 public:
  AugmentationPipeline() = default;
  AugmentationPipeline(std::vector<TransformSpec> steps, ImageShape shape)
      : steps_(std::move(steps)), shape_(shape) {}

  const std::vector<TransformSpec>& steps() const { return steps_; }
  ImageShape shape() const { return shape_; }

  // One line per step with all effective parameters resolved; used for
  // golden comparisons and run disclosure.
  std::string describe() const {
    std::string out;
    for (const auto& t : steps_) {
      out += t.kind;
      if (t.kind == "Normalize") {
        auto fmt = [](const std::vector<double>& v) {
          std::string s = "[";
          for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += format_double(v[i]);
          }
          return s + "]";
        };
        out += "(mean=" + fmt(t.get_list("mean")) +
               ",std=" + fmt(t.get_list("std")) + ")";
      } else if (t.kind == "RandomCrop") {
        out += "(size=" +
               format_double(t.get("size", static_cast<double>(shape_.height))) +
               ",padding=" + format_double(t.get("padding", 4)) + ")";
      } else if (t.kind == "RandomHorizontalFlip") {
        out += "(p=" + format_double(t.get("p", 0.5)) + ")";
      } else if (t.kind == "RandomRotation") {
        out += "(degrees=" + format_double(t.get("degrees", 15)) + ")";
      } else if (t.kind == "ColorJitter") {
        out += "(brightness=" + format_double(t.get("brightness", 0.4)) +
               ",contrast=" + format_double(t.get("contrast", 0.4)) +
               ",saturation=" + format_double(t.get("saturation", 0.4)) + ")";
      } else if (t.kind == "RandAugment") {
        out += "(num_ops=" + format_double(t.get("num_ops", 2)) +
               ",magnitude=" + format_double(t.get("magnitude", 9)) + ")";
      } else if (t.kind == "CutOut") {
        out += "(size=" + format_double(t.get("size", 8)) + ")";
      }
      out += "\n";
    }
    return out;
  }

  // img: CHW doubles in [0,1], length = C*H*W.
  std::vector<double> apply(const std::vector<double>& img,
                            std::mt19937_64& rng) const {
    size_t ch = shape_.channels, h = shape_.height, w = shape_.width;
    std::vector<double> cur = img;
    struct Hole {
      size_t y0, y1, x0, x1;
    };
    std::vector<Hole> holes;
    for (const auto& t : steps_) {
      if (t.kind == "ToTensor") {
        // images arrive tensorized; marker only
      } else if (t.kind == "Normalize") {
        auto mean = t.get_list("mean");
        auto stdd = t.get_list("std");
        size_t hw = h * w;
        for (size_t c = 0; c < ch; ++c)
          for (size_t i = 0; i < hw; ++i)
            cur[c * hw + i] = (cur[c * hw + i] - mean[c]) / stdd[c];
      } else if (t.kind == "RandomCrop") {
        size_t pad = static_cast<size_t>(t.get("padding", 4));
        std::uniform_int_distribution<size_t> dy(0, 2 * pad);
        std::uniform_int_distribution<size_t> dx(0, 2 * pad);
        size_t oy = dy(rng), ox = dx(rng);
        std::vector<double> out(cur.size(), 0.0);
        for (size_t c = 0; c < ch; ++c)
          for (size_t y = 0; y < h; ++y)
            for (size_t x = 0; x < w; ++x) {
              long sy = static_cast<long>(y + oy) - static_cast<long>(pad);
              long sx = static_cast<long>(x + ox) - static_cast<long>(pad);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) ||
                  sx >= static_cast<long>(w))
                continue;
              out[(c * h + y) * w + x] = cur[(c * h + sy) * w + sx];
            }
        cur = std::move(out);
      } else if (t.kind == "RandomHorizontalFlip") {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < t.get("p", 0.5)) {
          for (size_t c = 0; c < ch; ++c)
            for (size_t y = 0; y < h; ++y)
              for (size_t x = 0; x < w / 2; ++x)
                std::swap(cur[(c * h + y) * w + x],
                          cur[(c * h + y) * w + (w - 1 - x)]);
        }
      } else if (t.kind == "RandomRotation") {
        double d = t.get("degrees", 15);
        std::uniform_real_distribution<double> u(-d, d);
        detail::rotate_image(cur, ch, h, w, u(rng));
      } else if (t.kind == "ColorJitter") {
        auto draw = [&](double v) {
          std::uniform_real_distribution<double> u(std::max(0.0, 1.0 - v),
                                                   1.0 + v);
          return u(rng);
        };
        detail::adjust_brightness(cur, draw(t.get("brightness", 0.4)));
        detail::adjust_contrast(cur, draw(t.get("contrast", 0.4)));
        if (ch == 3)
          detail::adjust_saturation(cur, h, w, draw(t.get("saturation", 0.4)));
      } else if (t.kind == "RandAugment") {
        int num_ops = static_cast<int>(t.get("num_ops", 2));
        double mag = t.get("magnitude", 9) / 30.0;  // strength fraction
        // op pool: rotate, translate-x, translate-y, brightness, contrast
        std::uniform_int_distribution<int> pick(0, 4);
        std::uniform_real_distribution<double> sign(0.0, 1.0);
        for (int o = 0; o < num_ops; ++o) {
          int op = pick(rng);
          double s = sign(rng) < 0.5 ? -1.0 : 1.0;
          switch (op) {
            case 0:
              detail::rotate_image(cur, ch, h, w, s * mag * 30.0);
              break;
            case 1:
              detail::translate_image(
                  cur, ch, h, w, 0,
                  static_cast<int>(s * mag * 0.3 * static_cast<double>(w)));
              break;
            case 2:
              detail::translate_image(
                  cur, ch, h, w,
                  static_cast<int>(s * mag * 0.3 * static_cast<double>(h)), 0);
              break;
            case 3:
              detail::adjust_brightness(cur, 1.0 + s * mag * 0.9);
              break;
            case 4:
              detail::adjust_contrast(cur, 1.0 + s * mag * 0.9);
              break;
          }
        }
      } else if (t.kind == "CutOut") {
        size_t size = static_cast<size_t>(t.get("size", 8));
        std::uniform_int_distribution<size_t> uy(0, h - 1);
        std::uniform_int_distribution<size_t> ux(0, w - 1);
        size_t cy = uy(rng), cx = ux(rng);
        Hole hole;
        hole.y0 = cy >= size / 2 ? cy - size / 2 : 0;
        hole.x0 = cx >= size / 2 ? cx - size / 2 : 0;
        hole.y1 = std::min(h, hole.y0 + size);
        hole.x1 = std::min(w, hole.x0 + size);
        holes.push_back(hole);
      } else {
        throw ValidationError("unknown transform kind: " + t.kind);
      }
    }
    // deferred zero-fill: holes are zeros in the final (normalized) tensor
    for (const auto& hole : holes)
      for (size_t c = 0; c < ch; ++c)
        for (size_t y = hole.y0; y < hole.y1; ++y)
          for (size_t x = hole.x0; x < hole.x1; ++x)
            cur[(c * h + y) * w + x] = 0.0;
    return cur;
  }

 private:
  std::vector<TransformSpec> steps_;
  ImageShape shape_;
};

// Compiles validated TransformSpecs against a concrete image shape.
inline AugmentationPipeline build_pipeline(
    const std::vector<TransformSpec>& specs, ImageShape shape) {
  for (const auto& t : specs) {
    detail::validate_transform(t);
    if (t.kind == "Normalize") {
      if (t.get_list("mean").size() != shape.channels)
        throw ValidationError(
            "Normalize: mean length " +
            std::to_string(t.get_list("mean").size()) +
            " does not match channel count " + std::to_string(shape.channels));
    }
    if (t.kind == "RandomCrop" && t.has("size") &&
        static_cast<size_t>(t.get("size", 0)) != shape.height)
      throw ValidationError(
          "RandomCrop: size must equal the image side so the pipeline "
          "preserves the declared shape");
  }
  return AugmentationPipeline(specs, shape);
}

}  // namespace trunk
