#ifndef LMC_DATASET_HPP
#define LMC_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lmc/net.hpp"

namespace lmc {

struct DataSplit {
  std::vector<float> x;  // n * shape.dim(), row-major
  std::vector<int> y;
  int n = 0;
};

struct Dataset {
  DataSplit train, test;
  Shape3 shape;
  int num_classes = 0;
  std::vector<double> mean, stdev;  // per channel, filled in by normalize
  bool normalized = false;
  std::string provenance;

  const DataSplit& split(SplitKind s) const { return s == SplitKind::Train ? train : test; }
  int dim() const { return shape.dim(); }
  void validate() const;  // labels in range, values finite
};

// IDX (big-endian) images and labels; magics 0x00000803 / 0x00000801.
struct IdxImages {
  int count = 0, rows = 0, cols = 0;
  std::vector<float> pixels;  // scaled to [0,1]
};
IdxImages load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);
void save_idx_images(const std::string& path, const IdxImages& im);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// Parses an image/label pair into one split; errors on magic/truncation or
// an image/label count mismatch (no partial output).
DataSplit load_idx(const std::string& images_path, const std::string& labels_path,
                   Shape3* shape_out = nullptr);

// Standard four-file MNIST layout inside a directory.
Dataset load_mnist_dir(const std::string& dir);

// CIFAR-10 binary batches: 1 label byte + 3072 pixel bytes per record.
Dataset load_cifar10(const std::vector<std::string>& train_batches,
                     const std::string& test_batch);

// Class-conditional Gaussian blobs, means separation * e_k (a scaled simplex;
// requires classes <= d), balanced classes, 80/20 train/test split.
Dataset synth_blobs(int n, int d, int classes, double separation, uint64_t seed);

// Deterministic 28x28 10-class digit-glyph images (rendered with random
// shift, intensity jitter and pixel noise). Desk-scale stand-in for an
// image-classification task when no IDX files are available.
Dataset synth_digits(int n_train, int n_test, uint64_t seed);

// Replaces the labels of exactly round(fraction * n_train) distinct train
// examples with a uniform draw over the *other* classes. Test split untouched.
Dataset corrupt_labels(const Dataset& ds, double fraction, uint64_t seed);

// Uniform class-stratified subsample of both splits.
Dataset subsample(const Dataset& ds, int n_train, int n_test, uint64_t seed);

// Per-channel standardization; statistics computed on the train split and
// applied to both splits.
Dataset normalize(const Dataset& ds);

}  // namespace lmc

#endif
