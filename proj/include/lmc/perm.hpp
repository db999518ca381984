#ifndef LMC_PERM_HPP
#define LMC_PERM_HPP

#include <cstdint>
#include <vector>

#include "lmc/net.hpp"
#include "lmc/rng.hpp"

namespace lmc {

// One index vector per hidden layer; entry p[j] names the old unit that
// lands in slot j (gather semantics). The output layer is never permuted.
struct Permutation {
  std::vector<std::vector<int>> per_layer;
  int layer_count() const { return static_cast<int>(per_layer.size()); }
  bool operator==(const Permutation&) const = default;
};

Permutation identity_perm(const Network& net);
Permutation random_perm(const Network& net, uint64_t seed);

bool is_valid_perm(const Permutation& p, const Network& net);
void check_valid_perm(const Permutation& p, const Network& net);  // throws
bool is_bijection(const std::vector<int>& v);

// Pure reindexing of parameters: rows of layer i by p_i, columns by
// p_{i-1}; conv layers permute channel axes; the dense head after a conv
// stack moves whole per-channel column blocks. No arithmetic on values.
Network apply(const Network& net, const Permutation& p);

// apply(net, compose(p1, p2)) == apply(apply(net, p2), p1)
Permutation compose(const Permutation& p1, const Permutation& p2);
// compose(p, invert(p)) == identity
Permutation invert(const Permutation& p);

// New permutation differing by swaps_per_layer uniformly chosen index
// transpositions per layer (a == b allowed, so no-ops can occur).
Permutation transposition_move(const Permutation& p, int swaps_per_layer, Rng& rng);
Permutation transposition_move(const Permutation& p, int swaps_per_layer, uint64_t seed);

}  // namespace lmc

#endif
