#include "lmc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "lmc/binio.hpp"
#include "lmc/rng.hpp"

namespace lmc {

namespace {
constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;
}  // namespace

void Dataset::validate() const {
  if (num_classes < 1) throw std::runtime_error("dataset: no classes");
  auto check_split = [&](const DataSplit& s, const char* name) {
    if (s.x.size() != static_cast<size_t>(s.n) * dim() ||
        s.y.size() != static_cast<size_t>(s.n))
      throw std::runtime_error(std::string("dataset: inconsistent ") + name + " split");
    for (float v : s.x)
      if (!std::isfinite(v)) throw std::runtime_error("dataset: non-finite value");
    for (int label : s.y)
      if (label < 0 || label >= num_classes)
        throw std::runtime_error("dataset: label out of range");
  };
  check_split(train, "train");
  check_split(test, "test");
}

IdxImages load_idx_images(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 16) throw std::runtime_error("idx images: truncated header: " + path);
  if (be32(bytes.data()) != kImageMagic)
    throw std::runtime_error("idx images: bad magic: " + path);
  IdxImages im;
  im.count = static_cast<int>(be32(bytes.data() + 4));
  im.rows = static_cast<int>(be32(bytes.data() + 8));
  im.cols = static_cast<int>(be32(bytes.data() + 12));
  const size_t expect = 16 + static_cast<size_t>(im.count) * im.rows * im.cols;
  if (bytes.size() != expect)
    throw std::runtime_error("idx images: size mismatch (truncated or trailing data): " + path);
  im.pixels.resize(static_cast<size_t>(im.count) * im.rows * im.cols);
  for (size_t i = 0; i < im.pixels.size(); ++i)
    im.pixels[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return im;
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw std::runtime_error("idx labels: truncated header: " + path);
  if (be32(bytes.data()) != kLabelMagic)
    throw std::runtime_error("idx labels: bad magic: " + path);
  const int count = static_cast<int>(be32(bytes.data() + 4));
  if (bytes.size() != 8 + static_cast<size_t>(count))
    throw std::runtime_error("idx labels: size mismatch: " + path);
  std::vector<int> labels(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<size_t>(i)] = bytes[8 + i];
  return labels;
}

void save_idx_images(const std::string& path, const IdxImages& im) {
  std::vector<uint8_t> bytes;
  put_be32(bytes, kImageMagic);
  put_be32(bytes, static_cast<uint32_t>(im.count));
  put_be32(bytes, static_cast<uint32_t>(im.rows));
  put_be32(bytes, static_cast<uint32_t>(im.cols));
  bytes.reserve(bytes.size() + im.pixels.size());
  for (float p : im.pixels) {
    long v = std::lrint(static_cast<double>(p) * 255.0);
    bytes.push_back(static_cast<uint8_t>(std::clamp(v, 0L, 255L)));
  }
  write_file_bytes(path, bytes);
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::vector<uint8_t> bytes;
  put_be32(bytes, kLabelMagic);
  put_be32(bytes, static_cast<uint32_t>(labels.size()));
  for (int v : labels) bytes.push_back(static_cast<uint8_t>(v));
  write_file_bytes(path, bytes);
}

DataSplit load_idx(const std::string& images_path, const std::string& labels_path,
                   Shape3* shape_out) {
  IdxImages im = load_idx_images(images_path);
  std::vector<int> labels = load_idx_labels(labels_path);
  if (static_cast<size_t>(im.count) != labels.size())
    throw std::runtime_error("idx: image/label count mismatch");
  DataSplit s;
  s.n = im.count;
  s.x = std::move(im.pixels);
  s.y = std::move(labels);
  if (shape_out) *shape_out = Shape3{1, im.rows, im.cols};
  return s;
}

Dataset load_mnist_dir(const std::string& dir) {
  Dataset ds;
  Shape3 shape;
  ds.train = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                      &shape);
  ds.shape = shape;
  ds.test = load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte",
                     &shape);
  if (!(shape == ds.shape)) throw std::runtime_error("mnist: train/test shape mismatch");
  ds.num_classes = 10;
  ds.provenance = "mnist:" + dir;
  ds.validate();
  return ds;
}

namespace {
DataSplit load_cifar_batch_files(const std::vector<std::string>& paths) {
  constexpr int kRecord = 1 + 3072;
  DataSplit s;
  for (const std::string& path : paths) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    if (bytes.empty() || bytes.size() % kRecord != 0)
      throw std::runtime_error("cifar10: malformed batch: " + path);
    const int count = static_cast<int>(bytes.size() / kRecord);
    s.x.reserve(s.x.size() + static_cast<size_t>(count) * 3072);
    for (int i = 0; i < count; ++i) {
      const uint8_t* rec = bytes.data() + static_cast<size_t>(i) * kRecord;
      s.y.push_back(rec[0]);
      for (int k = 0; k < 3072; ++k) s.x.push_back(static_cast<float>(rec[1 + k]) / 255.0f);
    }
    s.n += count;
  }
  return s;
}
}  // namespace

Dataset load_cifar10(const std::vector<std::string>& train_batches,
                     const std::string& test_batch) {
  Dataset ds;
  ds.train = load_cifar_batch_files(train_batches);
  ds.test = load_cifar_batch_files({test_batch});
  ds.shape = Shape3{3, 32, 32};
  ds.num_classes = 10;
  ds.provenance = "cifar10";
  ds.validate();
  return ds;
}

Dataset synth_blobs(int n, int d, int classes, double separation, uint64_t seed) {
  if (n < classes || d < 1 || classes < 2)
    throw std::invalid_argument("synth_blobs: need n >= classes, d >= 1, classes >= 2");
  if (classes > d)
    throw std::invalid_argument("synth_blobs: simplex means need classes <= d");
  Rng rng(seed);

  // balanced class counts, largest remainder on the low indices
  std::vector<int> count(static_cast<size_t>(classes), n / classes);
  for (int k = 0; k < n % classes; ++k) ++count[static_cast<size_t>(k)];

  std::vector<float> xs;
  std::vector<int> ys;
  xs.reserve(static_cast<size_t>(n) * d);
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < count[static_cast<size_t>(k)]; ++i) {
      for (int j = 0; j < d; ++j) {
        double mean = (j == k) ? separation : 0.0;
        xs.push_back(static_cast<float>(mean + rng.gaussian()));
      }
      ys.push_back(k);
    }
  }

  // stratified 80/20 split, then shuffle example order within each split
  Dataset ds;
  ds.shape = Shape3{d, 1, 1};
  ds.num_classes = classes;
  ds.provenance = "blobs";
  std::vector<int> train_idx, test_idx;
  int offset = 0;
  for (int k = 0; k < classes; ++k) {
    const int ck = count[static_cast<size_t>(k)];
    const int ntr = (ck * 8 + 5) / 10;  // round(0.8 * ck)
    for (int i = 0; i < ck; ++i)
      (i < ntr ? train_idx : test_idx).push_back(offset + i);
    offset += ck;
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);
  auto fill = [&](const std::vector<int>& idx, DataSplit& s) {
    s.n = static_cast<int>(idx.size());
    s.x.resize(static_cast<size_t>(s.n) * d);
    s.y.resize(static_cast<size_t>(s.n));
    for (size_t i = 0; i < idx.size(); ++i) {
      std::memcpy(s.x.data() + i * d, xs.data() + static_cast<size_t>(idx[i]) * d,
                  sizeof(float) * static_cast<size_t>(d));
      s.y[i] = ys[static_cast<size_t>(idx[i])];
    }
  };
  fill(train_idx, ds.train);
  fill(test_idx, ds.test);
  ds.validate();
  return ds;
}

namespace {

// 5x7 digit glyphs
const char* const kGlyphs[10][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
    {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "},
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
    {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "},
    {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
    {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "},
};

void render_digit(int digit, Rng& rng, float* out /*28x28*/) {
  constexpr int kSide = 28, kScale = 3;
  std::fill(out, out + kSide * kSide, 0.0f);
  const int gw = 5 * kScale, gh = 7 * kScale;
  const int x0 = 2 + rng.index(kSide - gw - 3);  // [2, 12]
  const int y0 = 1 + rng.index(kSide - gh - 1);  // [1, 6]
  const double contrast = 0.6 + 0.4 * rng.next_double();
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 5; ++c) {
      if (kGlyphs[digit][r][c] != '#') continue;
      if (rng.next_double() < 0.03) continue;  // dropped stroke pixel
      const double v = contrast * (0.75 + 0.5 * (rng.next_double() - 0.5));
      for (int dy = 0; dy < kScale; ++dy)
        for (int dx = 0; dx < kScale; ++dx) {
          const int y = y0 + r * kScale + dy, x = x0 + c * kScale + dx;
          out[y * kSide + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
  }
  for (int i = 0; i < kSide * kSide; ++i) {
    if (out[i] == 0.0f && rng.next_double() < 0.06)
      out[i] = static_cast<float>(0.3 * rng.next_double());
  }
}

void fill_digit_split(DataSplit& s, int n, Rng& rng) {
  constexpr int kDim = 28 * 28;
  s.n = n;
  s.x.resize(static_cast<size_t>(n) * kDim);
  s.y.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int digit = i % 10;
    render_digit(digit, rng, s.x.data() + static_cast<size_t>(i) * kDim);
    s.y[static_cast<size_t>(i)] = digit;
  }
  // break up the round-robin label order
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  DataSplit shuffled;
  shuffled.n = n;
  shuffled.x.resize(s.x.size());
  shuffled.y.resize(s.y.size());
  for (int i = 0; i < n; ++i) {
    std::memcpy(shuffled.x.data() + static_cast<size_t>(i) * kDim,
                s.x.data() + static_cast<size_t>(order[static_cast<size_t>(i)]) * kDim,
                sizeof(float) * kDim);
    shuffled.y[static_cast<size_t>(i)] = s.y[static_cast<size_t>(order[static_cast<size_t>(i)])];
  }
  s = std::move(shuffled);
}

}  // namespace

Dataset synth_digits(int n_train, int n_test, uint64_t seed) {
  if (n_train < 10 || n_test < 10)
    throw std::invalid_argument("synth_digits: need at least 10 examples per split");
  Dataset ds;
  ds.shape = Shape3{1, 28, 28};
  ds.num_classes = 10;
  ds.provenance = "synth-digits";
  Rng rng_train(derive_seed(seed, 1));
  Rng rng_test(derive_seed(seed, 2));
  fill_digit_split(ds.train, n_train, rng_train);
  fill_digit_split(ds.test, n_test, rng_test);
  ds.validate();
  return ds;
}

Dataset corrupt_labels(const Dataset& ds, double fraction, uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("corrupt_labels: fraction must be in [0,1]");
  Dataset out = ds;
  const int n = ds.train.n;
  const int k = static_cast<int>(std::lround(fraction * n));
  if (k == 0) return out;
  Rng rng(seed);
  // partial Fisher-Yates: first k entries are a uniform distinct sample
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.index(n - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  for (int i = 0; i < k; ++i) {
    int& label = out.train.y[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    const int r = rng.index(ds.num_classes - 1);
    label = (r >= label) ? r + 1 : r;  // guaranteed different
  }
  return out;
}

Dataset subsample(const Dataset& ds, int n_train, int n_test, uint64_t seed) {
  if (n_train > ds.train.n || n_test > ds.test.n)
    throw std::invalid_argument("subsample: requested size exceeds available");
  if (n_train < 1 || n_test < 1)
    throw std::invalid_argument("subsample: sizes must be positive");
  Rng rng(seed);
  const int dim = ds.dim();

  auto take = [&](const DataSplit& src, int want) {
    // per-class quotas proportional to class counts (largest remainder)
    std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.num_classes));
    for (int i = 0; i < src.n; ++i)
      by_class[static_cast<size_t>(src.y[static_cast<size_t>(i)])].push_back(i);
    std::vector<int> quota(static_cast<size_t>(ds.num_classes), 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int c = 0; c < ds.num_classes; ++c) {
      const double exact = static_cast<double>(want) *
                           static_cast<double>(by_class[static_cast<size_t>(c)].size()) /
                           static_cast<double>(src.n);
      quota[static_cast<size_t>(c)] = static_cast<int>(exact);
      assigned += quota[static_cast<size_t>(c)];
      rema.emplace_back(exact - std::floor(exact), c);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int i = 0; assigned < want; ++i, ++assigned)
      ++quota[static_cast<size_t>(rema[static_cast<size_t>(i)].second)];

    std::vector<int> chosen;
    chosen.reserve(static_cast<size_t>(want));
    for (int c = 0; c < ds.num_classes; ++c) {
      std::vector<int>& pool = by_class[static_cast<size_t>(c)];
      const int q = quota[static_cast<size_t>(c)];
      if (q > static_cast<int>(pool.size()))
        throw std::invalid_argument("subsample: class too small for stratified quota");
      for (int i = 0; i < q; ++i) {
        const int j = i + rng.index(static_cast<int>(pool.size()) - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      }
      chosen.insert(chosen.end(), pool.begin(), pool.begin() + q);
    }
    rng.shuffle(chosen);
    DataSplit out;
    out.n = want;
    out.x.resize(static_cast<size_t>(want) * dim);
    out.y.resize(static_cast<size_t>(want));
    for (int i = 0; i < want; ++i) {
      const int s = chosen[static_cast<size_t>(i)];
      std::memcpy(out.x.data() + static_cast<size_t>(i) * dim,
                  src.x.data() + static_cast<size_t>(s) * dim,
                  sizeof(float) * static_cast<size_t>(dim));
      out.y[static_cast<size_t>(i)] = src.y[static_cast<size_t>(s)];
    }
    return out;
  };

  Dataset out = ds;
  out.train = take(ds.train, n_train);
  out.test = take(ds.test, n_test);
  return out;
}

Dataset normalize(const Dataset& ds) {
  Dataset out = ds;
  const int ch = ds.shape.c;
  const int hw = ds.shape.h * ds.shape.w;
  out.mean.assign(static_cast<size_t>(ch), 0.0);
  out.stdev.assign(static_cast<size_t>(ch), 0.0);
  const size_t per_example = static_cast<size_t>(ch) * hw;
  for (int c = 0; c < ch; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < ds.train.n; ++i) {
      const float* px = ds.train.x.data() + static_cast<size_t>(i) * per_example +
                        static_cast<size_t>(c) * hw;
      for (int s = 0; s < hw; ++s) {
        sum += px[s];
        sumsq += static_cast<double>(px[s]) * px[s];
      }
    }
    const double count = static_cast<double>(ds.train.n) * hw;
    const double mean = sum / count;
    const double var = std::max(sumsq / count - mean * mean, 0.0);
    out.mean[static_cast<size_t>(c)] = mean;
    out.stdev[static_cast<size_t>(c)] = std::max(std::sqrt(var), 1e-8);
  }
  auto apply = [&](DataSplit& s) {
    for (int i = 0; i < s.n; ++i) {
      for (int c = 0; c < ch; ++c) {
        float* px = s.x.data() + static_cast<size_t>(i) * per_example +
                    static_cast<size_t>(c) * hw;
        for (int k = 0; k < hw; ++k)
          px[k] = static_cast<float>((px[k] - out.mean[static_cast<size_t>(c)]) /
                                     out.stdev[static_cast<size_t>(c)]);
      }
    }
  };
  apply(out.train);
  apply(out.test);
  out.normalized = true;
  return out;
}

}  // namespace lmc
