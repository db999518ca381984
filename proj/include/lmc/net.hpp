#ifndef LMC_NET_HPP
#define LMC_NET_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace lmc {

enum class ArchKind { Mlp, ShallowCnn };
enum class LayerKind { Dense, Conv2d };
enum class Activation { Relu, None };
enum class Metric { CeLoss, TopOneError };
enum class SplitKind { Train, Test };

std::string to_string(ArchKind k);
std::string to_string(Metric m);
std::string to_string(SplitKind s);
Metric metric_from_string(const std::string& s);
SplitKind split_from_string(const std::string& s);

struct Shape3 {
  int c = 0, h = 0, w = 0;
  int dim() const { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

struct Layer {
  LayerKind kind = LayerKind::Dense;
  Activation act = Activation::None;
  std::vector<float> weight;
  std::vector<float> bias;  // empty when the layer carries no bias

  // dense geometry
  int out_units = 0, in_units = 0;
  // block size of the input columns: 1 for plain dense, H*W for the
  // dense head sitting on top of a conv stack (columns move blockwise
  // under channel permutations)
  int in_block = 1;

  // conv geometry: weight is out_ch x in_ch x kh x kw, stride 1,
  // same padding, spatial input shape recorded
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  int stride = 1, pad = 1;
  Shape3 in_spatial;

  int fan_in() const {
    return kind == LayerKind::Dense ? in_units : in_ch * kh * kw;
  }
  int width() const { return kind == LayerKind::Dense ? out_units : out_ch; }
  size_t param_count() const { return weight.size() + bias.size(); }
};

struct Network {
  ArchKind arch = ArchKind::Mlp;
  Shape3 in_shape;
  int num_classes = 0;
  uint64_t init_seed = 0;
  std::vector<Layer> layers;

  // every layer except the final dense head is a hidden (permutable) layer
  int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
  int hidden_width(int l) const { return layers[l].width(); }
  size_t param_count() const;
};

struct EvalResult {
  double loss = 0.0;   // mean cross-entropy, nats
  double error = 0.0;  // top-1 error in [0,1]
};

enum class LrSchedule { Fixed, Cosine };

struct TrainConfig {
  double lr = 0.01;
  LrSchedule lr_schedule = LrSchedule::Fixed;
  int batch_size = 64;
  int max_epochs = 3000;
  double momentum = 0.9;
  double stop_loss = 0.01;
  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument

  static TrainConfig mlp_defaults(bool mnist_like = true);
  static TrainConfig cnn_defaults();
};

struct TrainStats {
  int epochs_run = 0;
  double final_train_loss = 0.0;
  double final_train_error = 0.0;
  bool hit_stop_loss = false;
};

struct Dataset;  // datahub

// Builders. Weights are i.i.d. uniform in +-1/sqrt(fan_in); biases, when
// enabled, start at zero. Deterministic given the seed.
Network build_mlp(int depth, int width, int in_dim, int classes, uint64_t seed,
                  bool with_bias = true);
Network build_shallow_cnn(int depth, int channels, Shape3 in_shape, int classes,
                          uint64_t seed, bool with_bias = true);

// Forward pass returning logits (n x classes, row-major). Reductions over
// permutable axes run in a content-canonical order, so networks that are
// hidden-unit reindexings of each other produce bit-identical outputs.
std::vector<float> forward(const Network& net, const float* x, int n, Shape3 shape);
std::vector<float> forward(const Network& net, const std::vector<float>& x, int n);

EvalResult evaluate(const Network& net, const Dataset& ds, SplitKind split);
EvalResult evaluate_logits(const std::vector<float>& logits, const std::vector<int>& labels,
                           int n, int classes);

// Mean squared post-activation per unit (per channel for conv, averaged
// over spatial positions) of hidden layer `layer` over the train split.
std::vector<double> hidden_sq_activation_means(const Network& net, const Dataset& ds,
                                               int layer);

// learning rate at a given epoch (Fixed, or cosine annealed to 0 at max_epochs)
double lr_at(const TrainConfig& cfg, int epoch);

// SGD with momentum; stops once the epoch-mean train cross-entropy drops to
// cfg.stop_loss or max_epochs is reached. Single-threaded and
// bit-reproducible given cfg.seed. Throws on divergence.
Network train(const Network& net, const Dataset& ds, const TrainConfig& cfg,
              TrainStats* stats = nullptr);

// alpha * a + (1 - alpha) * b per parameter; alpha=1 returns a bit-exactly
Network interpolate(const Network& a, const Network& b, double alpha);
// internal form with explicit weights, used to keep symmetric grids exact
Network interpolate_weighted(const Network& a, const Network& b, double wa, double wb);
Network average(const std::vector<Network>& nets);

void check_same_arch(const Network& a, const Network& b);  // throws on mismatch
void check_finite(const Network& net);                     // throws on NaN/Inf

// Analytic cross-entropy loss and parameter gradients over a batch
// (training path; gradients accumulated in double). Exposed for the
// finite-difference oracle in the test suite.
struct Gradients {
  std::vector<std::vector<double>> weight;  // per layer
  std::vector<std::vector<double>> bias;
};
double ce_loss_and_grad(const Network& net, const float* x, const int* y, int n,
                        Gradients* grads);

}  // namespace lmc

#endif
