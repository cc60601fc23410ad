#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "trunk/config.hpp"
#include "trunk/rng.hpp"
#include "trunk/tensor.hpp"
#include "trunk/transforms.hpp"

namespace trunk {

// ---------------------------------------------------------------------------
// Handles and in-memory storage
// ---------------------------------------------------------------------------

struct DatasetHandle {
  std::string name;
  ImageShape image_shape;
  size_t num_categories = 0;
  size_t train_size = 0;
  size_t test_size = 0;
  std::vector<std::string> category_names;
};

inline std::vector<std::string> emnist_balanced_names() {
  std::vector<std::string> names;
  for (char c = '0'; c <= '9'; ++c) names.emplace_back(1, c);
  for (char c = 'A'; c <= 'Z'; ++c) names.emplace_back(1, c);
  for (char c : {'a', 'b', 'd', 'e', 'f', 'g', 'h', 'n', 'q', 'r', 't'})
    names.emplace_back(1, c);
  return names;
}

inline DatasetHandle dataset_handle(const std::string& name) {
  DatasetHandle h;
  h.name = name;
  if (name == "emnist") {
    h.image_shape = {1, 28, 28};
    h.num_categories = 47;
    h.train_size = 112800;
    h.test_size = 18800;
    h.category_names = emnist_balanced_names();
  } else if (name == "cifar10") {
    h.image_shape = {3, 32, 32};
    h.num_categories = 10;
    h.train_size = 50000;
    h.test_size = 10000;
    h.category_names = {"airplane", "automobile", "bird",  "cat",  "deer",
                        "dog",      "frog",       "horse", "ship", "truck"};
  } else if (name == "svhn") {
    h.image_shape = {3, 32, 32};
    h.num_categories = 10;
    h.train_size = 73257;
    h.test_size = 26032;
    for (int i = 0; i < 10; ++i) h.category_names.push_back(std::to_string(i));
  } else {
    throw ValidationError("unknown dataset: " + name +
                          " (supported: cifar10, emnist, svhn, synthetic)");
  }
  return h;
}

// Materialized labeled images: CHW floats in [0,1].
struct Dataset {
  ImageShape shape;
  std::vector<std::vector<float>> images;
  std::vector<int> labels;
  std::vector<std::string> category_names;

  size_t size() const { return images.size(); }

  std::set<int> categories() const {
    return std::set<int>(labels.begin(), labels.end());
  }

  std::map<int, size_t> category_counts() const {
    std::map<int, size_t> counts;
    for (int l : labels) ++counts[l];
    return counts;
  }
};

// ---------------------------------------------------------------------------
// File format readers
// ---------------------------------------------------------------------------

namespace detail {

// Reads a whole file through zlib's gz layer, which passes non-gzip data
// through unchanged, so both foo-ubyte and foo-ubyte.gz work.
inline std::vector<unsigned char> read_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0)
    out.insert(out.end(), buf, buf + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw std::runtime_error("decompression failed: " + path.string());
  return out;
}

inline uint32_t be32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline fs::path find_existing(const std::vector<fs::path>& candidates,
                              const std::string& what) {
  for (const auto& p : candidates)
    if (fs::exists(p)) return p;
  std::string msg = "missing " + what + "; expected one of:";
  for (const auto& p : candidates) msg += "\n  " + p.string();
  msg += "\n(place the files there or set TRUNK_DATA_ROOT)";
  throw std::runtime_error(msg);
}

inline std::vector<unsigned char> zlib_inflate(const unsigned char* src,
                                               size_t len) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw std::runtime_error("inflateInit failed");
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  zs.next_in = const_cast<unsigned char*>(src);
  zs.avail_in = static_cast<uInt>(len);
  int ret = Z_OK;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("zlib inflate failed");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (ret != Z_STREAM_END && zs.avail_in > 0);
  inflateEnd(&zs);
  return out;
}

}  // namespace detail

// IDX image/label pair (the EMNIST/MNIST container format).
inline Dataset load_idx_pair(const fs::path& images_path,
                             const fs::path& labels_path,
                             ImageShape expected_shape) {
  auto img_bytes = detail::read_maybe_gz(images_path);
  auto lbl_bytes = detail::read_maybe_gz(labels_path);
  if (img_bytes.size() < 16 || detail::be32(img_bytes.data()) != 0x803)
    throw std::runtime_error("not an idx3 image file: " + images_path.string());
  if (lbl_bytes.size() < 8 || detail::be32(lbl_bytes.data()) != 0x801)
    throw std::runtime_error("not an idx1 label file: " + labels_path.string());
  size_t n = detail::be32(&img_bytes[4]);
  size_t rows = detail::be32(&img_bytes[8]);
  size_t cols = detail::be32(&img_bytes[12]);
  if (detail::be32(&lbl_bytes[4]) != n)
    throw std::runtime_error("image/label count mismatch: " +
                             images_path.string());
  if (rows != expected_shape.height || cols != expected_shape.width)
    throw std::runtime_error("unexpected image size in " +
                             images_path.string());
  if (img_bytes.size() < 16 + n * rows * cols)
    throw std::runtime_error("truncated idx file: " + images_path.string());
  Dataset ds;
  ds.shape = expected_shape;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<float> img(rows * cols);
    const unsigned char* src = &img_bytes[16 + i * rows * cols];
    // EMNIST idx images are stored transposed relative to display
    // orientation; transpose so pixels match the published renderings.
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c)
        img[r * cols + c] = static_cast<float>(src[c * rows + r]) / 255.0f;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(lbl_bytes[8 + i]);
  }
  return ds;
}

inline Dataset load_emnist(const fs::path& root, const std::string& split) {
  std::string stem = "emnist-balanced-" + split;  // train | test
  auto dir_candidates = [&](const std::string& suffix) {
    std::vector<fs::path> c;
    for (const char* sub : {"", "emnist/", "EMNIST/raw/", "gzip/"})
      for (const char* ext : {"", ".gz"})
        c.push_back(root / (std::string(sub) + stem + suffix + ext));
    return c;
  };
  fs::path images = detail::find_existing(dir_candidates("-images-idx3-ubyte"),
                                          "emnist " + split + " images");
  fs::path labels = detail::find_existing(dir_candidates("-labels-idx1-ubyte"),
                                          "emnist " + split + " labels");
  Dataset ds = load_idx_pair(images, labels, {1, 28, 28});
  ds.category_names = emnist_balanced_names();
  return ds;
}

inline Dataset load_cifar10(const fs::path& root, const std::string& split) {
  std::vector<std::string> files;
  if (split == "train")
    files = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
             "data_batch_4.bin", "data_batch_5.bin"};
  else
    files = {"test_batch.bin"};
  Dataset ds;
  ds.shape = {3, 32, 32};
  ds.category_names = dataset_handle("cifar10").category_names;
  for (const auto& f : files) {
    fs::path path = detail::find_existing(
        {root / f, root / "cifar-10-batches-bin" / f,
         root / "cifar10" / f},
        "cifar10 batch " + f);
    auto bytes = read_binary_file(path);
    constexpr size_t rec = 3073;
    if (bytes.size() % rec != 0)
      throw std::runtime_error("corrupt cifar batch: " + path.string());
    size_t n = bytes.size() / rec;
    for (size_t i = 0; i < n; ++i) {
      const unsigned char* p = &bytes[i * rec];
      ds.labels.push_back(p[0]);
      std::vector<float> img(3072);
      for (size_t j = 0; j < 3072; ++j)
        img[j] = static_cast<float>(p[1 + j]) / 255.0f;
      ds.images.push_back(std::move(img));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Minimal MATLAB v5 (.mat) reader covering what the SVHN archives use:
// optionally zlib-compressed miMATRIX elements holding uint8/double arrays.
// ---------------------------------------------------------------------------

namespace mat5 {

struct Array {
  std::string name;
  std::vector<size_t> dims;             // column-major
  std::vector<unsigned char> u8;        // when class uint8
  std::vector<double> f64;              // when class double
  bool is_u8 = false;
};

namespace detail2 {

inline uint32_t rd32(const unsigned char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline Array parse_matrix(const unsigned char* p, size_t len);

inline void parse_elements(const unsigned char* p, size_t len,
                           std::vector<Array>& out) {
  size_t off = 0;
  while (off + 8 <= len) {
    uint32_t type = rd32(p + off);
    uint32_t size = rd32(p + off + 4);
    size_t data_off = off + 8;
    if (type >> 16) {  // small element
      size = type >> 16;
      type &= 0xffff;
      data_off = off + 4;
      off += 8;
    } else {
      off = data_off + ((size + 7) & ~7ull);
    }
    if (type == 15) {  // miCOMPRESSED
      auto raw = trunk::detail::zlib_inflate(p + data_off, size);
      parse_elements(raw.data(), raw.size(), out);
    } else if (type == 14) {  // miMATRIX
      out.push_back(parse_matrix(p + data_off, size));
    }
  }
}

inline Array parse_matrix(const unsigned char* p, size_t len) {
  Array arr;
  size_t off = 0;
  int subelement = 0;
  uint32_t array_class = 0;
  while (off + 8 <= len) {
    uint32_t type = rd32(p + off);
    uint32_t size = rd32(p + off + 4);
    size_t data_off = off + 8;
    size_t advance;
    if (type >> 16) {
      size = type >> 16;
      type &= 0xffff;
      data_off = off + 4;
      advance = 8;
    } else {
      advance = 8 + ((size + 7) & ~7ull);
    }
    const unsigned char* d = p + data_off;
    switch (subelement) {
      case 0:  // array flags (miUINT32 x2)
        array_class = d[0];
        break;
      case 1:  // dimensions (miINT32)
        for (size_t i = 0; i + 4 <= size; i += 4)
          arr.dims.push_back(rd32(d + i));
        break;
      case 2:  // name (miINT8)
        arr.name.assign(reinterpret_cast<const char*>(d), size);
        break;
      case 3: {  // real part
        size_t n = 1;
        for (size_t dim : arr.dims) n *= dim;
        if (array_class == 9) {  // mxUINT8
          arr.is_u8 = true;
          if (type == 2 || type == 1) {  // miUINT8/miINT8
            arr.u8.assign(d, d + std::min<size_t>(size, n));
          } else {
            throw std::runtime_error("mat5: unsupported uint8 storage type");
          }
        } else if (array_class == 6) {  // mxDOUBLE
          arr.f64.resize(n);
          if (type == 9) {  // miDOUBLE
            std::memcpy(arr.f64.data(), d, n * 8);
          } else if (type == 2 || type == 1) {  // stored compactly as bytes
            for (size_t i = 0; i < n && i < size; ++i) arr.f64[i] = d[i];
          } else {
            throw std::runtime_error("mat5: unsupported double storage type");
          }
        } else {
          throw std::runtime_error("mat5: unsupported array class " +
                                   std::to_string(array_class));
        }
        break;
      }
      default:
        break;
    }
    ++subelement;
    off += advance;
  }
  return arr;
}

}  // namespace detail2

inline std::vector<Array> read_file(const fs::path& path) {
  auto bytes = read_binary_file(path);
  if (bytes.size() < 128)
    throw std::runtime_error("not a mat5 file: " + path.string());
  // bytes 126..127 are the endian indicator "IM" on little-endian writers
  if (!(bytes[126] == 'I' && bytes[127] == 'M'))
    throw std::runtime_error("unsupported mat file (expected little-endian v5): " +
                             path.string());
  std::vector<Array> arrays;
  detail2::parse_elements(bytes.data() + 128, bytes.size() - 128, arrays);
  return arrays;
}

}  // namespace mat5

inline Dataset load_svhn(const fs::path& root, const std::string& split) {
  std::string fname = split + "_32x32.mat";  // train | test
  fs::path path = detail::find_existing(
      {root / fname, root / "svhn" / fname}, "svhn " + split + " archive");
  auto arrays = mat5::read_file(path);
  const mat5::Array* X = nullptr;
  const mat5::Array* y = nullptr;
  for (const auto& a : arrays) {
    if (a.name == "X") X = &a;
    if (a.name == "y") y = &a;
  }
  if (!X || !y)
    throw std::runtime_error("svhn archive missing X or y: " + path.string());
  if (X->dims.size() != 4 || X->dims[0] != 32 || X->dims[1] != 32 ||
      X->dims[2] != 3)
    throw std::runtime_error("unexpected svhn X dims in " + path.string());
  size_t n = X->dims[3];
  Dataset ds;
  ds.shape = {3, 32, 32};
  ds.category_names = dataset_handle("svhn").category_names;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  // X is column-major [h][w][c][n]
  auto xat = [&](size_t h, size_t w, size_t c, size_t i) {
    return X->u8[h + 32 * (w + 32 * (c + 3 * i))];
  };
  for (size_t i = 0; i < n; ++i) {
    std::vector<float> img(3 * 32 * 32);
    for (size_t c = 0; c < 3; ++c)
      for (size_t h = 0; h < 32; ++h)
        for (size_t w = 0; w < 32; ++w)
          img[(c * 32 + h) * 32 + w] =
              static_cast<float>(xat(h, w, c, i)) / 255.0f;
    ds.images.push_back(std::move(img));
    int label = y->is_u8 ? y->u8[i] : static_cast<int>(y->f64[i]);
    ds.labels.push_back(label == 10 ? 0 : label);  // svhn stores '0' as 10
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic desk-scale dataset: oriented sinusoidal gratings. Categories come
// in pairs sharing an orientation; pair members differ in spatial frequency.
// Orientations separate easily, frequencies take a dedicated node, which
// gives builds a genuine two-level structure at suitable grouping volatility.
// ---------------------------------------------------------------------------

struct SyntheticParams {
  size_t num_categories = 4;
  size_t train_size = 1200;
  size_t test_size = 400;
  size_t image_size = 16;
  size_t channels = 1;
  double noise = 0.05;
  double freq_ratio = 1.15;  // within-pair frequency contrast

  static SyntheticParams from_config(const std::map<std::string, double>& p) {
    SyntheticParams s;
    auto get = [&](const char* k, double d) {
      auto it = p.find(k);
      return it == p.end() ? d : it->second;
    };
    s.num_categories = static_cast<size_t>(get("num_categories", 4));
    s.train_size = static_cast<size_t>(get("train_size", 1200));
    s.test_size = static_cast<size_t>(get("test_size", 400));
    s.image_size = static_cast<size_t>(get("image_size", 16));
    s.channels = static_cast<size_t>(get("channels", 1));
    s.noise = get("noise", 0.05);
    s.freq_ratio = get("freq_ratio", 1.15);
    return s;
  }
};

inline Dataset generate_synthetic(const SyntheticParams& p, uint64_t seed,
                                  const std::string& split) {
  if (p.num_categories < 1)
    throw ValidationError("synthetic: num_categories must be >= 1");
  size_t n = split == "train" ? p.train_size : p.test_size;
  std::mt19937_64 rng(seed ^ fnv1a64("synthetic/" + split));
  size_t s = p.image_size;
  Dataset ds;
  ds.shape = {p.channels, s, s};
  for (size_t c = 0; c < p.num_categories; ++c)
    ds.category_names.push_back("cat" + std::to_string(c));
  size_t pairs = (p.num_categories + 1) / 2;
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> uamp(0.30, 0.40);
  std::normal_distribution<double> unoise(0.0, p.noise);
  for (size_t i = 0; i < n; ++i) {
    int label = static_cast<int>(i % p.num_categories);
    size_t pair = static_cast<size_t>(label) / 2;
    bool high_freq = (label % 2) == 1;
    double theta = M_PI * static_cast<double>(pair) / static_cast<double>(pairs);
    // each pair owns a frequency band; band members differ by freq_ratio
    double base = 2.0 * std::pow(1.6, static_cast<double>(pair));
    double freq = high_freq ? base * p.freq_ratio : base;
    double phase = uphase(rng);
    double amp = uamp(rng);
    std::vector<float> img(p.channels * s * s);
    double cs = std::cos(theta), sn = std::sin(theta);
    for (size_t y = 0; y < s; ++y)
      for (size_t x = 0; x < s; ++x) {
        double u = (cs * static_cast<double>(x) + sn * static_cast<double>(y)) /
                   static_cast<double>(s);
        double v = 0.5 + amp * std::sin(2.0 * M_PI * freq * u + phase) +
                   unoise(rng);
        float pix = static_cast<float>(std::clamp(v, 0.0, 1.0));
        for (size_t c = 0; c < p.channels; ++c)
          img[(c * s + y) * s + x] = pix;
      }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Split assembly and batch iteration
// ---------------------------------------------------------------------------

inline fs::path data_root() {
  const char* env = std::getenv("TRUNK_DATA_ROOT");
  return env ? fs::path(env) : fs::path("data");
}

// Seed-deterministic 10% carve of the train split for validation; the carve
// indices depend only on (seed, size).
inline std::pair<Dataset, Dataset> carve_validation(const Dataset& train,
                                                    uint64_t seed,
                                                    double fraction = 0.1) {
  std::vector<size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ fnv1a64("validation-carve"));
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t val_n = std::max<size_t>(1, static_cast<size_t>(
                                         std::floor(fraction * train.size())));
  std::vector<bool> is_val(train.size(), false);
  for (size_t i = 0; i < val_n; ++i) is_val[idx[i]] = true;
  Dataset tr, va;
  tr.shape = va.shape = train.shape;
  tr.category_names = va.category_names = train.category_names;
  for (size_t i = 0; i < train.size(); ++i) {
    (is_val[i] ? va : tr).images.push_back(train.images[i]);
    (is_val[i] ? va : tr).labels.push_back(train.labels[i]);
  }
  return {std::move(tr), std::move(va)};
}

// Loads the raw (pre-pipeline) materialized split. "validation" is carved
// from train for every dataset since the upstream archives ship none.
inline Dataset load_raw_split(const std::string& name,
                              const std::string& split,
                              const ExperimentConfig& config,
                              const fs::path& root) {
  auto load_base = [&](const std::string& base_split) -> Dataset {
    if (name == "synthetic")
      return generate_synthetic(
          SyntheticParams::from_config(config.dataset_params), config.seed,
          base_split);
    if (name == "emnist") return load_emnist(root, base_split);
    if (name == "cifar10") return load_cifar10(root, base_split);
    if (name == "svhn") return load_svhn(root, base_split);
    throw ValidationError("unknown dataset: " + name +
                          " (supported: cifar10, emnist, svhn, synthetic)");
  };
  if (split == "test") return load_base("test");
  if (split != "train" && split != "validation")
    throw ValidationError("unknown split: " + split);
  Dataset train = load_base("train");
  auto [tr, va] = carve_validation(train, config.seed);
  return split == "train" ? std::move(tr) : std::move(va);
}

// Iterates (image batch, category batch) over a dataset with a split's batch
// size, shuffling, and transforms. Single-consumer.
class DataStream {
 public:
  DataStream(const Dataset& ds, SplitConfig split, std::mt19937_64 shuffle_rng,
             std::mt19937_64 aug_rng)
      : ds_(&ds),
        split_(std::move(split)),
        pipeline_(build_pipeline(split_.transforms, ds.shape)),
        shuffle_rng_(shuffle_rng),
        aug_rng_(aug_rng) {
    reset();
  }

  // Owning variant: keeps the dataset alive for the stream's lifetime.
  DataStream(std::shared_ptr<const Dataset> ds, SplitConfig split,
             std::mt19937_64 shuffle_rng, std::mt19937_64 aug_rng)
      : owned_(std::move(ds)),
        ds_(owned_.get()),
        split_(std::move(split)),
        pipeline_(build_pipeline(split_.transforms, ds_->shape)),
        shuffle_rng_(shuffle_rng),
        aug_rng_(aug_rng) {
    reset();
  }

  const Dataset& dataset() const { return *ds_; }

  void reset() {
    order_.resize(ds_->size());
    std::iota(order_.begin(), order_.end(), 0);
    if (split_.shuffle)
      std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    pos_ = 0;
  }

  // Returns false at end of epoch. The last batch may be smaller.
  bool next(Tensor& images, std::vector<int>& labels) {
    if (pos_ >= order_.size()) return false;
    size_t take = std::min<size_t>(split_.batch_size, order_.size() - pos_);
    ImageShape sh = pipeline_.shape();
    images = Tensor({take, sh.channels, sh.height, sh.width});
    labels.resize(take);
    for (size_t b = 0; b < take; ++b) {
      size_t idx = order_[pos_ + b];
      const auto& raw = ds_->images[idx];
      std::vector<double> img(raw.begin(), raw.end());
      auto cooked = pipeline_.apply(img, aug_rng_);
      std::copy(cooked.begin(), cooked.end(),
                images.data.begin() + b * cooked.size());
      labels[b] = ds_->labels[idx];
    }
    pos_ += take;
    return true;
  }

  size_t batches_per_epoch() const {
    return (ds_->size() + split_.batch_size - 1) / split_.batch_size;
  }

 private:
  std::shared_ptr<const Dataset> owned_;
  const Dataset* ds_;
  SplitConfig split_;
  AugmentationPipeline pipeline_;
  std::mt19937_64 shuffle_rng_, aug_rng_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

// Materializes the split and wraps it in a
// stream honoring the split's batch size, shuffling, and transforms.
inline DataStream load_dataset(const std::string& name,
                               const std::string& split,
                               const ExperimentConfig& config,
                               const fs::path& root = data_root()) {
  auto ds = std::make_shared<const Dataset>(
      load_raw_split(name, split, config, root));
  return DataStream(std::move(ds), config.splits.at(split),
                    named_stream("shuffle/" + name + "/" + split),
                    named_stream("augment/" + name + "/" + split));
}

// Materializes a pipeline over a whole dataset (used for validation/test
// splits, whose transforms are applied once rather than per epoch).
inline Dataset apply_pipeline_once(const Dataset& ds,
                                   const AugmentationPipeline& pipe,
                                   std::mt19937_64 rng) {
  Dataset out;
  out.shape = ds.shape;
  out.category_names = ds.category_names;
  out.labels = ds.labels;
  out.images.reserve(ds.size());
  for (const auto& raw : ds.images) {
    std::vector<double> img(raw.begin(), raw.end());
    auto cooked = pipe.apply(img, rng);
    out.images.emplace_back(cooked.begin(), cooked.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics and relabeling
// ---------------------------------------------------------------------------

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  bool degenerate = false;  // some channel had zero variance
};

inline NormalizationStats compute_normalization_stats(const Dataset& ds) {
  if (ds.size() == 0)
    throw ValidationError("cannot compute statistics of an empty dataset");
  size_t ch = ds.shape.channels;
  size_t hw = ds.shape.height * ds.shape.width;
  std::vector<double> sum(ch, 0.0), sumsq(ch, 0.0);
  for (const auto& img : ds.images)
    for (size_t c = 0; c < ch; ++c)
      for (size_t i = 0; i < hw; ++i) {
        double v = img[c * hw + i];
        sum[c] += v;
        sumsq[c] += v * v;
      }
  double count = static_cast<double>(ds.size() * hw);
  NormalizationStats st;
  for (size_t c = 0; c < ch; ++c) {
    double mean = sum[c] / count;
    double var = std::max(0.0, sumsq[c] / count - mean * mean);
    st.mean.push_back(mean);
    st.std.push_back(std::sqrt(var));
    if (st.std.back() == 0.0) st.degenerate = true;
  }
  return st;
}

// Keeps only category_subset and replaces labels with group indices.
// group_map must cover the subset with contiguous indices from 0.
inline Dataset restrict_and_relabel(const Dataset& ds,
                                    const std::set<int>& category_subset,
                                    const std::map<int, int>& group_map) {
  if (category_subset.empty())
    throw ValidationError("restrict_and_relabel: empty category subset");
  std::set<int> groups;
  for (int c : category_subset) {
    auto it = group_map.find(c);
    if (it == group_map.end())
      throw ValidationError("restrict_and_relabel: group_map missing category " +
                            std::to_string(c));
    groups.insert(it->second);
  }
  int g = 0;
  for (int gi : groups) {
    if (gi != g)
      throw ValidationError(
          "restrict_and_relabel: group indices must be contiguous from 0");
    ++g;
  }
  Dataset out;
  out.shape = ds.shape;
  out.category_names.resize(groups.size());
  for (int c : category_subset) {
    int gi = group_map.at(c);
    if (!out.category_names[gi].empty()) out.category_names[gi] += "+";
    out.category_names[gi] +=
        static_cast<size_t>(c) < ds.category_names.size()
            ? ds.category_names[c]
            : std::to_string(c);
  }
  for (size_t i = 0; i < ds.size(); ++i) {
    if (!category_subset.count(ds.labels[i])) continue;
    out.images.push_back(ds.images[i]);
    out.labels.push_back(group_map.at(ds.labels[i]));
  }
  return out;
}

}  // namespace trunk
