#include "lmc/perm.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace lmc {

Permutation identity_perm(const Network& net) {
  Permutation p;
  p.per_layer.resize(static_cast<size_t>(net.hidden_layers()));
  for (int l = 0; l < net.hidden_layers(); ++l) {
    p.per_layer[static_cast<size_t>(l)].resize(static_cast<size_t>(net.hidden_width(l)));
    std::iota(p.per_layer[static_cast<size_t>(l)].begin(),
              p.per_layer[static_cast<size_t>(l)].end(), 0);
  }
  return p;
}

Permutation random_perm(const Network& net, uint64_t seed) {
  Permutation p = identity_perm(net);
  Rng rng(seed);
  for (auto& v : p.per_layer) rng.shuffle(v);
  return p;
}

bool is_bijection(const std::vector<int>& v) {
  std::vector<char> seen(v.size(), 0);
  for (int x : v) {
    if (x < 0 || static_cast<size_t>(x) >= v.size() || seen[static_cast<size_t>(x)])
      return false;
    seen[static_cast<size_t>(x)] = 1;
  }
  return true;
}

bool is_valid_perm(const Permutation& p, const Network& net) {
  if (p.layer_count() != net.hidden_layers()) return false;
  for (int l = 0; l < p.layer_count(); ++l) {
    const std::vector<int>& v = p.per_layer[static_cast<size_t>(l)];
    if (static_cast<int>(v.size()) != net.hidden_width(l)) return false;
    if (!is_bijection(v)) return false;
  }
  return true;
}

void check_valid_perm(const Permutation& p, const Network& net) {
  if (!is_valid_perm(p, net))
    throw std::invalid_argument("permutation does not fit the network");
}

Network apply(const Network& net, const Permutation& p) {
  check_valid_perm(p, net);
  Network out = net;
  const int hidden = net.hidden_layers();
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& src = net.layers[li];
    Layer& dst = out.layers[li];
    const std::vector<int>* rows =
        (static_cast<int>(li) < hidden) ? &p.per_layer[li] : nullptr;
    const std::vector<int>* cols = (li > 0) ? &p.per_layer[li - 1] : nullptr;

    if (src.kind == LayerKind::Dense) {
      const int ni = src.in_units, no = src.out_units, bs = src.in_block;
      const int nblocks = ni / bs;
      for (int o = 0; o < no; ++o) {
        const int so = rows ? (*rows)[static_cast<size_t>(o)] : o;
        const float* srow = src.weight.data() + static_cast<size_t>(so) * ni;
        float* drow = dst.weight.data() + static_cast<size_t>(o) * ni;
        if (cols) {
          for (int b = 0; b < nblocks; ++b) {
            const int sb = (*cols)[static_cast<size_t>(b)];
            for (int s = 0; s < bs; ++s) drow[b * bs + s] = srow[sb * bs + s];
          }
        } else {
          std::copy(srow, srow + ni, drow);
        }
      }
      if (!src.bias.empty() && rows)
        for (int o = 0; o < no; ++o)
          dst.bias[static_cast<size_t>(o)] = src.bias[static_cast<size_t>((*rows)[static_cast<size_t>(o)])];
    } else {
      const int inc = src.in_ch, outc = src.out_ch, kk = src.kh * src.kw;
      for (int o = 0; o < outc; ++o) {
        const int so = rows ? (*rows)[static_cast<size_t>(o)] : o;
        for (int c = 0; c < inc; ++c) {
          const int sc = cols ? (*cols)[static_cast<size_t>(c)] : c;
          const float* sk = src.weight.data() + (static_cast<size_t>(so) * inc + sc) * kk;
          float* dk = dst.weight.data() + (static_cast<size_t>(o) * inc + c) * kk;
          std::copy(sk, sk + kk, dk);
        }
      }
      if (!src.bias.empty() && rows)
        for (int o = 0; o < outc; ++o)
          dst.bias[static_cast<size_t>(o)] = src.bias[static_cast<size_t>((*rows)[static_cast<size_t>(o)])];
    }
  }
  return out;
}

Permutation compose(const Permutation& p1, const Permutation& p2) {
  if (p1.layer_count() != p2.layer_count())
    throw std::invalid_argument("compose: layer count mismatch");
  Permutation out = p1;
  for (int l = 0; l < p1.layer_count(); ++l) {
    const std::vector<int>& a = p1.per_layer[static_cast<size_t>(l)];
    const std::vector<int>& b = p2.per_layer[static_cast<size_t>(l)];
    if (a.size() != b.size()) throw std::invalid_argument("compose: width mismatch");
    std::vector<int>& o = out.per_layer[static_cast<size_t>(l)];
    for (size_t j = 0; j < a.size(); ++j) o[j] = b[static_cast<size_t>(a[j])];
  }
  return out;
}

Permutation invert(const Permutation& p) {
  Permutation out = p;
  for (int l = 0; l < p.layer_count(); ++l) {
    const std::vector<int>& v = p.per_layer[static_cast<size_t>(l)];
    std::vector<int>& o = out.per_layer[static_cast<size_t>(l)];
    for (size_t j = 0; j < v.size(); ++j) o[static_cast<size_t>(v[j])] = static_cast<int>(j);
  }
  return out;
}

Permutation transposition_move(const Permutation& p, int swaps_per_layer, Rng& rng) {
  if (swaps_per_layer < 1)
    throw std::invalid_argument("transposition_move: swaps_per_layer must be >= 1");
  Permutation out = p;
  for (auto& v : out.per_layer) {
    const int w = static_cast<int>(v.size());
    for (int s = 0; s < swaps_per_layer; ++s) {
      const int a = rng.index(w);
      const int b = rng.index(w);  // a == b allowed: a possible no-op
      std::swap(v[static_cast<size_t>(a)], v[static_cast<size_t>(b)]);
    }
  }
  return out;
}

Permutation transposition_move(const Permutation& p, int swaps_per_layer, uint64_t seed) {
  Rng rng(seed);
  return transposition_move(p, swaps_per_layer, rng);
}

}  // namespace lmc
