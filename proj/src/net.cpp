#include "lmc/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lmc/dataset.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::string to_string(ArchKind k) { return k == ArchKind::Mlp ? "mlp" : "cnn"; }
std::string to_string(Metric m) { return m == Metric::CeLoss ? "loss" : "error"; }
std::string to_string(SplitKind s) { return s == SplitKind::Train ? "train" : "test"; }

Metric metric_from_string(const std::string& s) {
  if (s == "loss" || s == "ce") return Metric::CeLoss;
  if (s == "error" || s == "top1") return Metric::TopOneError;
  throw std::invalid_argument("unknown metric: " + s);
}

SplitKind split_from_string(const std::string& s) {
  if (s == "train") return SplitKind::Train;
  if (s == "test") return SplitKind::Test;
  throw std::invalid_argument("unknown split: " + s);
}

size_t Network::param_count() const {
  size_t n = 0;
  for (const Layer& l : layers) n += l.param_count();
  return n;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must be in [0,1)");
  if (!(stop_loss > 0.0)) throw std::invalid_argument("stop_loss must be positive");
}

TrainConfig TrainConfig::mlp_defaults(bool mnist_like) {
  TrainConfig cfg;
  cfg.lr = mnist_like ? 0.01 : 0.001;
  cfg.lr_schedule = LrSchedule::Fixed;
  cfg.batch_size = 64;
  cfg.max_epochs = 3000;
  cfg.momentum = 0.9;
  cfg.stop_loss = 0.01;
  return cfg;
}

TrainConfig TrainConfig::cnn_defaults() {
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.lr_schedule = LrSchedule::Cosine;
  cfg.batch_size = 256;
  cfg.max_epochs = 1000;
  cfg.momentum = 0.9;
  cfg.stop_loss = 0.01;
  return cfg;
}

namespace {

void init_layer(Layer& l, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(l.fan_in()));
  for (float& w : l.weight) w = static_cast<float>(rng.uniform(-bound, bound));
  for (float& b : l.bias) b = 0.0f;
}

}  // namespace

Network build_mlp(int depth, int width, int in_dim, int classes, uint64_t seed,
                  bool with_bias) {
  if (depth < 1 || width < 1 || in_dim < 1 || classes < 1)
    throw std::invalid_argument("build_mlp: dimensions must be positive");
  Network net;
  net.arch = ArchKind::Mlp;
  net.in_shape = Shape3{1, 1, in_dim};
  net.num_classes = classes;
  net.init_seed = seed;
  Rng rng(seed);
  for (int l = 0; l < depth; ++l) {
    Layer layer;
    layer.kind = LayerKind::Dense;
    layer.act = Activation::Relu;
    layer.in_units = (l == 0) ? in_dim : width;
    layer.out_units = width;
    layer.weight.resize(static_cast<size_t>(layer.out_units) * layer.in_units);
    if (with_bias) layer.bias.resize(static_cast<size_t>(layer.out_units));
    init_layer(layer, rng);
    net.layers.push_back(std::move(layer));
  }
  Layer head;
  head.kind = LayerKind::Dense;
  head.act = Activation::None;
  head.in_units = width;
  head.out_units = classes;
  head.weight.resize(static_cast<size_t>(classes) * width);
  if (with_bias) head.bias.resize(static_cast<size_t>(classes));
  init_layer(head, rng);
  net.layers.push_back(std::move(head));
  return net;
}

Network build_shallow_cnn(int depth, int channels, Shape3 in_shape, int classes,
                          uint64_t seed, bool with_bias) {
  if (depth < 1 || channels < 1 || classes < 1)
    throw std::invalid_argument("build_shallow_cnn: dimensions must be positive");
  if (in_shape.c < 1 || in_shape.h < 1 || in_shape.w < 1)
    throw std::invalid_argument("build_shallow_cnn: spatial size must be positive");
  Network net;
  net.arch = ArchKind::ShallowCnn;
  net.in_shape = in_shape;
  net.num_classes = classes;
  net.init_seed = seed;
  Rng rng(seed);
  for (int l = 0; l < depth; ++l) {
    Layer layer;
    layer.kind = LayerKind::Conv2d;
    layer.act = Activation::Relu;
    layer.in_ch = (l == 0) ? in_shape.c : channels;
    layer.out_ch = channels;
    layer.kh = layer.kw = 3;
    layer.stride = 1;
    layer.pad = 1;
    layer.in_spatial = Shape3{layer.in_ch, in_shape.h, in_shape.w};
    layer.weight.resize(static_cast<size_t>(layer.out_ch) * layer.in_ch * 9);
    if (with_bias) layer.bias.resize(static_cast<size_t>(layer.out_ch));
    init_layer(layer, rng);
    net.layers.push_back(std::move(layer));
  }
  Layer head;
  head.kind = LayerKind::Dense;
  head.act = Activation::None;
  head.in_units = channels * in_shape.h * in_shape.w;
  head.out_units = classes;
  head.in_block = in_shape.h * in_shape.w;
  head.weight.resize(static_cast<size_t>(head.out_units) * head.in_units);
  if (with_bias) head.bias.resize(static_cast<size_t>(classes));
  init_layer(head, rng);
  net.layers.push_back(std::move(head));
  return net;
}

void check_same_arch(const Network& a, const Network& b) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("architecture mismatch: " + what);
  };
  if (a.arch != b.arch) fail("kind");
  if (!(a.in_shape == b.in_shape)) fail("input shape");
  if (a.num_classes != b.num_classes) fail("classes");
  if (a.layers.size() != b.layers.size()) fail("layer count");
  for (size_t i = 0; i < a.layers.size(); ++i) {
    const Layer& la = a.layers[i];
    const Layer& lb = b.layers[i];
    if (la.kind != lb.kind || la.act != lb.act) fail("layer structure");
    if (la.weight.size() != lb.weight.size() || la.bias.size() != lb.bias.size())
      fail("parameter shapes");
    if (la.kind == LayerKind::Dense) {
      if (la.out_units != lb.out_units || la.in_units != lb.in_units ||
          la.in_block != lb.in_block)
        fail("dense dims");
    } else {
      if (la.out_ch != lb.out_ch || la.in_ch != lb.in_ch || la.kh != lb.kh ||
          la.kw != lb.kw)
        fail("conv dims");
    }
  }
}

void check_finite(const Network& net) {
  for (const Layer& l : net.layers) {
    for (float w : l.weight)
      if (!std::isfinite(w)) throw std::runtime_error("non-finite weight");
    for (float b : l.bias)
      if (!std::isfinite(b)) throw std::runtime_error("non-finite bias");
  }
}

namespace {

// --- reduction helpers ------------------------------------------------

inline double dot_f(const float* a, const float* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline float relu(float v) { return v > 0.0f ? v : 0.0f; }

// total order on float bit patterns (distinguishes -0 from +0)
inline uint32_t fkey(float v) {
  uint32_t b;
  std::memcpy(&b, &v, 4);
  return (b & 0x80000000u) ? ~b : (b | 0x80000000u);
}

// Content-canonical ordering of the input blocks of a dense layer /
// input channels of a conv layer: sort by activation bits, break ties by
// the weight column the unit feeds. Depends only on content, never on
// index labels, so reindexed networks reduce in the same order.
void canonical_dense_order(const Layer& l, const float* a, std::vector<int>& order) {
  const int bs = l.in_block;
  const int nblocks = l.in_units / bs;
  order.resize(static_cast<size_t>(nblocks));
  std::iota(order.begin(), order.end(), 0);
  const float* w = l.weight.data();
  const int in = l.in_units;
  const int out = l.out_units;
  std::sort(order.begin(), order.end(), [&](int bi, int bj) {
    const float* ai = a + static_cast<size_t>(bi) * bs;
    const float* aj = a + static_cast<size_t>(bj) * bs;
    for (int s = 0; s < bs; ++s) {
      uint32_t ki = fkey(ai[s]), kj = fkey(aj[s]);
      if (ki != kj) return ki < kj;
    }
    for (int o = 0; o < out; ++o) {
      const float* wi = w + static_cast<size_t>(o) * in + static_cast<size_t>(bi) * bs;
      const float* wj = w + static_cast<size_t>(o) * in + static_cast<size_t>(bj) * bs;
      for (int s = 0; s < bs; ++s) {
        uint32_t ki = fkey(wi[s]), kj = fkey(wj[s]);
        if (ki != kj) return ki < kj;
      }
    }
    return false;
  });
}

void canonical_conv_order(const Layer& l, const float* a, int hw, std::vector<int>& order) {
  order.resize(static_cast<size_t>(l.in_ch));
  std::iota(order.begin(), order.end(), 0);
  const float* w = l.weight.data();
  const int kk = l.kh * l.kw;
  std::sort(order.begin(), order.end(), [&](int ci, int cj) {
    const float* ai = a + static_cast<size_t>(ci) * hw;
    const float* aj = a + static_cast<size_t>(cj) * hw;
    for (int s = 0; s < hw; ++s) {
      uint32_t ki = fkey(ai[s]), kj = fkey(aj[s]);
      if (ki != kj) return ki < kj;
    }
    for (int o = 0; o < l.out_ch; ++o) {
      const float* wi = w + (static_cast<size_t>(o) * l.in_ch + ci) * kk;
      const float* wj = w + (static_cast<size_t>(o) * l.in_ch + cj) * kk;
      for (int s = 0; s < kk; ++s) {
        uint32_t ki = fkey(wi[s]), kj = fkey(wj[s]);
        if (ki != kj) return ki < kj;
      }
    }
    return false;
  });
}

// --- layer forward ----------------------------------------------------

void dense_forward_fast(const Layer& l, const float* in, int n, float* out) {
  const int ni = l.in_units, no = l.out_units;
  const bool has_bias = !l.bias.empty();
  for (int b = 0; b < n; ++b) {
    const float* x = in + static_cast<size_t>(b) * ni;
    float* z = out + static_cast<size_t>(b) * no;
    for (int o = 0; o < no; ++o) {
      double acc = has_bias ? static_cast<double>(l.bias[o]) : 0.0;
      acc += dot_f(l.weight.data() + static_cast<size_t>(o) * ni, x, ni);
      float v = static_cast<float>(acc);
      z[o] = (l.act == Activation::Relu) ? relu(v) : v;
    }
  }
}

void dense_forward_canonical(const Layer& l, const float* in, int n, float* out) {
  const int ni = l.in_units, no = l.out_units, bs = l.in_block;
  const bool has_bias = !l.bias.empty();
  std::vector<int> order;
  for (int b = 0; b < n; ++b) {
    const float* x = in + static_cast<size_t>(b) * ni;
    float* z = out + static_cast<size_t>(b) * no;
    canonical_dense_order(l, x, order);
    for (int o = 0; o < no; ++o) {
      const float* wr = l.weight.data() + static_cast<size_t>(o) * ni;
      double acc = has_bias ? static_cast<double>(l.bias[o]) : 0.0;
      for (int blk : order) {
        const int base = blk * bs;
        for (int s = 0; s < bs; ++s)
          acc += static_cast<double>(wr[base + s]) * x[base + s];
      }
      float v = static_cast<float>(acc);
      z[o] = (l.act == Activation::Relu) ? relu(v) : v;
    }
  }
}

void conv_forward(const Layer& l, const float* in, int n, float* out, bool canonical) {
  const int H = l.in_spatial.h, W = l.in_spatial.w;
  const int hw = H * W;
  const int inc = l.in_ch, outc = l.out_ch;
  const int kh = l.kh, kw = l.kw, pad = l.pad;
  const bool has_bias = !l.bias.empty();
  std::vector<int> order(static_cast<size_t>(inc));
  std::iota(order.begin(), order.end(), 0);
  for (int b = 0; b < n; ++b) {
    const float* x = in + static_cast<size_t>(b) * inc * hw;
    float* z = out + static_cast<size_t>(b) * outc * hw;
    if (canonical) canonical_conv_order(l, x, hw, order);
    for (int o = 0; o < outc; ++o) {
      for (int y = 0; y < H; ++y) {
        for (int xx = 0; xx < W; ++xx) {
          double acc = has_bias ? static_cast<double>(l.bias[o]) : 0.0;
          for (int c : order) {
            const float* wk = l.weight.data() +
                              (static_cast<size_t>(o) * inc + c) * kh * kw;
            const float* xc = x + static_cast<size_t>(c) * hw;
            for (int i = 0; i < kh; ++i) {
              const int yy = y + i - pad;
              if (yy < 0 || yy >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int xj = xx + j - pad;
                if (xj < 0 || xj >= W) continue;
                acc += static_cast<double>(wk[i * kw + j]) * xc[yy * W + xj];
              }
            }
          }
          float v = static_cast<float>(acc);
          z[o * hw + y * W + xx] = (l.act == Activation::Relu) ? relu(v) : v;
        }
      }
    }
  }
}

struct Acts {
  // acts[l] holds layer l's post-activation outputs, n x width
  std::vector<std::vector<float>> acts;
};

std::vector<float> forward_impl(const Network& net, const float* x, int n, bool canonical,
                                Acts* keep) {
  std::vector<float> cur(x, x + static_cast<size_t>(n) * net.in_shape.dim());
  if (keep) keep->acts.clear();
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    const int width = l.kind == LayerKind::Dense
                          ? l.out_units
                          : l.out_ch * l.in_spatial.h * l.in_spatial.w;
    std::vector<float> next(static_cast<size_t>(n) * width);
    if (l.kind == LayerKind::Dense) {
      // the first layer reduces over raw inputs, which are never permuted
      if (canonical && li > 0)
        dense_forward_canonical(l, cur.data(), n, next.data());
      else
        dense_forward_fast(l, cur.data(), n, next.data());
    } else {
      conv_forward(l, cur.data(), n, next.data(), canonical && li > 0);
    }
    cur = std::move(next);
    if (keep) keep->acts.push_back(cur);
  }
  return cur;
}

void check_batch_shape(const Network& net, Shape3 shape) {
  if (net.arch == ArchKind::Mlp) {
    if (shape.dim() != net.in_shape.dim())
      throw std::invalid_argument("forward: batch dimension does not match network input");
  } else {
    if (!(shape == net.in_shape))
      throw std::invalid_argument("forward: batch shape does not match network input");
  }
}

// total order on double bit patterns
inline uint64_t dkey(double v) {
  uint64_t b;
  std::memcpy(&b, &v, 8);
  return (b & 0x8000000000000000ULL) ? ~b : (b | 0x8000000000000000ULL);
}

// Mean that depends only on the multiset of addends: sum in bit-canonical
// order. Keeps evaluate() invariant under example reordering.
double orderfree_mean(std::vector<double>& v) {
  std::sort(v.begin(), v.end(), [](double a, double b) { return dkey(a) < dkey(b); });
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double ce_loss_example(const float* logits, int classes, int label) {
  double m = logits[0];
  for (int c = 1; c < classes; ++c) m = std::max(m, static_cast<double>(logits[c]));
  double sum = 0.0;
  for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(logits[c]) - m);
  return m + std::log(sum) - static_cast<double>(logits[label]);
}

int top1(const float* logits, int classes) {
  int best = 0;
  for (int c = 1; c < classes; ++c)
    if (logits[c] > logits[best]) best = c;  // ties keep the lowest index
  return best;
}

}  // namespace

std::vector<float> forward(const Network& net, const float* x, int n, Shape3 shape) {
  check_batch_shape(net, shape);
  return forward_impl(net, x, n, /*canonical=*/true, nullptr);
}

std::vector<float> forward(const Network& net, const std::vector<float>& x, int n) {
  if (static_cast<size_t>(n) * net.in_shape.dim() != x.size())
    throw std::invalid_argument("forward: batch size does not match data length");
  return forward_impl(net, x.data(), n, /*canonical=*/true, nullptr);
}

EvalResult evaluate_logits(const std::vector<float>& logits, const std::vector<int>& labels,
                           int n, int classes) {
  if (n < 1) throw std::invalid_argument("evaluate: empty split");
  std::vector<double> losses(static_cast<size_t>(n));
  long long wrong = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<size_t>(i) * classes;
    losses[static_cast<size_t>(i)] = ce_loss_example(row, classes, labels[i]);
    if (top1(row, classes) != labels[i]) ++wrong;
  }
  EvalResult r;
  r.loss = orderfree_mean(losses);
  r.error = static_cast<double>(wrong) / static_cast<double>(n);
  return r;
}

EvalResult evaluate(const Network& net, const Dataset& ds, SplitKind split) {
  const DataSplit& s = ds.split(split);
  if (s.n < 1) throw std::invalid_argument("evaluate: empty split");
  check_batch_shape(net, ds.shape);
  const int dim = ds.dim();
  const int classes = net.num_classes;
  const int chunk = 512;
  std::vector<double> losses(static_cast<size_t>(s.n));
  long long wrong = 0;
  for (int start = 0; start < s.n; start += chunk) {
    const int nb = std::min(chunk, s.n - start);
    std::vector<float> logits = forward_impl(
        net, s.x.data() + static_cast<size_t>(start) * dim, nb, /*canonical=*/true, nullptr);
    for (int i = 0; i < nb; ++i) {
      const float* row = logits.data() + static_cast<size_t>(i) * classes;
      losses[static_cast<size_t>(start + i)] = ce_loss_example(row, classes, s.y[start + i]);
      if (top1(row, classes) != s.y[start + i]) ++wrong;
    }
  }
  EvalResult r;
  r.loss = orderfree_mean(losses);
  r.error = static_cast<double>(wrong) / static_cast<double>(s.n);
  return r;
}

std::vector<double> hidden_sq_activation_means(const Network& net, const Dataset& ds,
                                               int layer) {
  if (layer < 0 || layer >= net.hidden_layers())
    throw std::invalid_argument("hidden_sq_activation_means: not a hidden layer");
  const DataSplit& s = ds.train;
  if (s.n < 1) throw std::invalid_argument("hidden_sq_activation_means: empty train split");
  check_batch_shape(net, ds.shape);
  const Layer& l = net.layers[static_cast<size_t>(layer)];
  const int units = l.width();
  const int per_unit = l.kind == LayerKind::Dense ? 1 : l.in_spatial.h * l.in_spatial.w;
  std::vector<double> sums(static_cast<size_t>(units), 0.0);
  const int dim = ds.dim();
  const int chunk = 256;
  for (int start = 0; start < s.n; start += chunk) {
    const int nb = std::min(chunk, s.n - start);
    Acts cache;
    forward_impl(net, s.x.data() + static_cast<size_t>(start) * dim, nb,
                 /*canonical=*/true, &cache);
    const std::vector<float>& act = cache.acts[static_cast<size_t>(layer)];
    for (int b = 0; b < nb; ++b) {
      for (int u = 0; u < units; ++u) {
        const float* base =
            act.data() + (static_cast<size_t>(b) * units + u) * per_unit;
        for (int k = 0; k < per_unit; ++k)
          sums[static_cast<size_t>(u)] += static_cast<double>(base[k]) * base[k];
      }
    }
  }
  const double denom = static_cast<double>(s.n) * per_unit;
  for (double& v : sums) v /= denom;
  return sums;
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_schedule == LrSchedule::Fixed) return cfg.lr;
  double t = static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs);
  return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

double ce_loss_and_grad(const Network& net, const float* x, const int* y, int n,
                        Gradients* grads) {
  const int classes = net.num_classes;
  Acts cache;
  std::vector<float> logits = forward_impl(net, x, n, /*canonical=*/false, &cache);

  if (grads) {
    grads->weight.assign(net.layers.size(), {});
    grads->bias.assign(net.layers.size(), {});
    for (size_t li = 0; li < net.layers.size(); ++li) {
      grads->weight[li].assign(net.layers[li].weight.size(), 0.0);
      grads->bias[li].assign(net.layers[li].bias.size(), 0.0);
    }
  }

  double loss_sum = 0.0;
  std::vector<double> delta(static_cast<size_t>(n) * classes);
  for (int b = 0; b < n; ++b) {
    const float* row = logits.data() + static_cast<size_t>(b) * classes;
    loss_sum += ce_loss_example(row, classes, y[b]);
    double m = row[0];
    for (int c = 1; c < classes; ++c) m = std::max(m, static_cast<double>(row[c]));
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - m);
    for (int c = 0; c < classes; ++c) {
      double p = std::exp(static_cast<double>(row[c]) - m) / sum;
      delta[static_cast<size_t>(b) * classes + c] =
          (p - (c == y[b] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  double mean_loss = loss_sum / static_cast<double>(n);
  if (!grads) return mean_loss;

  // backprop; delta holds d(loss)/d(layer output)
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = net.layers[li];
    const float* in_act = (li == 0) ? x : cache.acts[static_cast<size_t>(li) - 1].data();
    std::vector<double>& dw = grads->weight[static_cast<size_t>(li)];
    std::vector<double>& db = grads->bias[static_cast<size_t>(li)];

    if (l.kind == LayerKind::Dense) {
      const int ni = l.in_units, no = l.out_units;
      std::vector<double> din(static_cast<size_t>(n) * ni, 0.0);
      for (int b = 0; b < n; ++b) {
        const double* dz = delta.data() + static_cast<size_t>(b) * no;
        const float* a = in_act + static_cast<size_t>(b) * ni;
        double* di = din.data() + static_cast<size_t>(b) * ni;
        for (int o = 0; o < no; ++o) {
          const double g = dz[o];
          if (!l.bias.empty()) db[o] += g;
          double* dwr = dw.data() + static_cast<size_t>(o) * ni;
          const float* wr = l.weight.data() + static_cast<size_t>(o) * ni;
          for (int i = 0; i < ni; ++i) {
            dwr[i] += g * a[i];
            di[i] += static_cast<double>(wr[i]) * g;
          }
        }
      }
      delta = std::move(din);
    } else {
      const int H = l.in_spatial.h, W = l.in_spatial.w, hw = H * W;
      const int inc = l.in_ch, outc = l.out_ch, kh = l.kh, kw = l.kw, pad = l.pad;
      std::vector<double> din(static_cast<size_t>(n) * inc * hw, 0.0);
      for (int b = 0; b < n; ++b) {
        const double* dz = delta.data() + static_cast<size_t>(b) * outc * hw;
        const float* a = in_act + static_cast<size_t>(b) * inc * hw;
        double* di = din.data() + static_cast<size_t>(b) * inc * hw;
        for (int o = 0; o < outc; ++o) {
          for (int y0 = 0; y0 < H; ++y0) {
            for (int x0 = 0; x0 < W; ++x0) {
              const double g = dz[o * hw + y0 * W + x0];
              if (g == 0.0) continue;
              if (!l.bias.empty()) db[o] += g;
              for (int c = 0; c < inc; ++c) {
                double* dwk = dw.data() + (static_cast<size_t>(o) * inc + c) * kh * kw;
                const float* wk =
                    l.weight.data() + (static_cast<size_t>(o) * inc + c) * kh * kw;
                const float* ac = a + static_cast<size_t>(c) * hw;
                double* dic = di + static_cast<size_t>(c) * hw;
                for (int i = 0; i < kh; ++i) {
                  const int yy = y0 + i - pad;
                  if (yy < 0 || yy >= H) continue;
                  for (int j = 0; j < kw; ++j) {
                    const int xj = x0 + j - pad;
                    if (xj < 0 || xj >= W) continue;
                    dwk[i * kw + j] += g * ac[yy * W + xj];
                    dic[yy * W + xj] += static_cast<double>(wk[i * kw + j]) * g;
                  }
                }
              }
            }
          }
        }
      }
      delta = std::move(din);
    }

    // gate the incoming gradient through the previous layer's ReLU
    if (li > 0) {
      const std::vector<float>& prev = cache.acts[static_cast<size_t>(li) - 1];
      if (net.layers[static_cast<size_t>(li) - 1].act == Activation::Relu) {
        for (size_t i = 0; i < delta.size(); ++i)
          if (prev[i] <= 0.0f) delta[i] = 0.0;
      }
    }
  }
  return mean_loss;
}

Network train(const Network& net, const Dataset& ds, const TrainConfig& cfg,
              TrainStats* stats) {
  cfg.validate();
  if (ds.train.n < 1) throw std::invalid_argument("train: dataset has no train split");
  check_batch_shape(net, ds.shape);
  check_finite(net);

  Network cur = net;
  const int n = ds.train.n;
  const int dim = ds.dim();

  std::vector<std::vector<double>> vel_w(cur.layers.size()), vel_b(cur.layers.size());
  for (size_t li = 0; li < cur.layers.size(); ++li) {
    vel_w[li].assign(cur.layers[li].weight.size(), 0.0);
    vel_b[li].assign(cur.layers[li].bias.size(), 0.0);
  }

  Rng rng(cfg.seed);
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  std::vector<float> bx;
  std::vector<int> by;
  Gradients grads;
  TrainStats local;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    rng.shuffle(idx);
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bn = std::min(cfg.batch_size, n - start);
      bx.resize(static_cast<size_t>(bn) * dim);
      by.resize(static_cast<size_t>(bn));
      for (int i = 0; i < bn; ++i) {
        const int src = idx[static_cast<size_t>(start + i)];
        std::memcpy(bx.data() + static_cast<size_t>(i) * dim,
                    ds.train.x.data() + static_cast<size_t>(src) * dim,
                    sizeof(float) * static_cast<size_t>(dim));
        by[static_cast<size_t>(i)] = ds.train.y[static_cast<size_t>(src)];
      }
      double batch_loss = ce_loss_and_grad(cur, bx.data(), by.data(), bn, &grads);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", batch offset "
            << start << " (lr=" << lr << ")";
        throw std::runtime_error(msg.str());
      }
      loss_sum += batch_loss * bn;
      for (size_t li = 0; li < cur.layers.size(); ++li) {
        Layer& l = cur.layers[li];
        std::vector<double>& vw = vel_w[li];
        const std::vector<double>& gw = grads.weight[li];
        for (size_t k = 0; k < l.weight.size(); ++k) {
          vw[k] = cfg.momentum * vw[k] + gw[k];
          l.weight[k] = static_cast<float>(static_cast<double>(l.weight[k]) - lr * vw[k]);
        }
        std::vector<double>& vb = vel_b[li];
        const std::vector<double>& gb = grads.bias[li];
        for (size_t k = 0; k < l.bias.size(); ++k) {
          vb[k] = cfg.momentum * vb[k] + gb[k];
          l.bias[k] = static_cast<float>(static_cast<double>(l.bias[k]) - lr * vb[k]);
        }
      }
    }
    const double epoch_mean = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_mean))
      throw std::runtime_error("training diverged: non-finite epoch loss");
    local.epochs_run = epoch + 1;
    if (std::isfinite(cfg.stop_loss) && epoch_mean <= cfg.stop_loss) {
      local.hit_stop_loss = true;
      break;
    }
  }

  check_finite(cur);
  EvalResult final_eval = evaluate(cur, ds, SplitKind::Train);
  local.final_train_loss = final_eval.loss;
  local.final_train_error = final_eval.error;
  if (stats) *stats = local;
  return cur;
}

Network interpolate_weighted(const Network& a, const Network& b, double wa, double wb) {
  check_same_arch(a, b);
  Network out = a;
  for (size_t li = 0; li < out.layers.size(); ++li) {
    const Layer& la = a.layers[li];
    const Layer& lb = b.layers[li];
    Layer& lo = out.layers[li];
    for (size_t k = 0; k < lo.weight.size(); ++k)
      lo.weight[k] = static_cast<float>(wa * static_cast<double>(la.weight[k]) +
                                        wb * static_cast<double>(lb.weight[k]));
    for (size_t k = 0; k < lo.bias.size(); ++k)
      lo.bias[k] = static_cast<float>(wa * static_cast<double>(la.bias[k]) +
                                      wb * static_cast<double>(lb.bias[k]));
  }
  return out;
}

Network interpolate(const Network& a, const Network& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("interpolate: alpha must be in [0,1]");
  check_same_arch(a, b);
  if (alpha == 1.0) return a;
  if (alpha == 0.0) return b;
  return interpolate_weighted(a, b, alpha, 1.0 - alpha);
}

Network average(const std::vector<Network>& nets) {
  if (nets.empty()) throw std::invalid_argument("average: empty network list");
  for (size_t i = 1; i < nets.size(); ++i) check_same_arch(nets[0], nets[i]);
  if (nets.size() == 1) return nets[0];
  Network out = nets[0];
  const double k = static_cast<double>(nets.size());
  for (size_t li = 0; li < out.layers.size(); ++li) {
    Layer& lo = out.layers[li];
    for (size_t p = 0; p < lo.weight.size(); ++p) {
      double s = 0.0;
      for (const Network& nt : nets) s += static_cast<double>(nt.layers[li].weight[p]);
      lo.weight[p] = static_cast<float>(s / k);
    }
    for (size_t p = 0; p < lo.bias.size(); ++p) {
      double s = 0.0;
      for (const Network& nt : nets) s += static_cast<double>(nt.layers[li].bias[p]);
      lo.bias[p] = static_cast<float>(s / k);
    }
  }
  return out;
}

}  // namespace lmc
