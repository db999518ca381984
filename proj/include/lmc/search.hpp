#ifndef LMC_SEARCH_HPP
#define LMC_SEARCH_HPP

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "lmc/barrier.hpp"
#include "lmc/dataset.hpp"
#include "lmc/net.hpp"
#include "lmc/perm.hpp"

namespace lmc {

enum class SaObjective {
  PairwiseBarrier,  // SA1: mean pairwise midpoint barrier
  AverageError,     // SA2: train error of the averaged permuted models
};

struct SaConfig {
  int steps = 50000;
  double t_max = 25000.0;
  double t_min = 2.5;
  int swaps_per_layer = 1;
  SaObjective objective = SaObjective::PairwiseBarrier;
  int n_models = 2;
  uint64_t seed = 0;
  bool pin_first = false;   // keep model 0 at identity (sufficient by joint invariance)
  Metric metric = Metric::CeLoss;  // SA1 energy metric
  // Cooling horizon; 0 means `steps`. Chains sharing seed and horizon are
  // prefix-identical across step budgets, which makes best-ever energies
  // monotone in the budget.
  int cooling_horizon = 0;

  void validate() const;
};

struct SearchResult {
  std::vector<Permutation> perms;  // one per searched model
  std::vector<std::pair<int, double>> energy_trace;  // (step, best energy)
  double initial_energy = 0.0;
  double final_energy = 0.0;
  long long evaluations = 0;
  uint64_t seed = 0;
};

// Neuron-pair cost matrix for one hidden layer (functional difference).
struct MatchCostMatrix {
  int size = 0;
  std::vector<double> costs;  // size x size, row = unit of A, col = unit of B
  std::vector<double> curvature_a, curvature_b;  // per-unit mean squared post-activation
  bool curvature_clamped = false;  // some unit hit the 1e-8 floor

  double at(int i, int j) const { return costs[static_cast<size_t>(i) * size + j]; }
};

// exponential cooling from t_max at step 0 to t_min at the end of the horizon
double temperature(int step, const SaConfig& cfg);

// Metropolis rule: improvements always accepted, otherwise with
// probability exp(-delta/T). Consumes exactly one draw per call.
bool accept_move(double delta_energy, double t, Rng& rng);

// Simulated annealing over per-model permutations (Metropolis chain with
// best-ever bookkeeping). Energy per SaObjective.
SearchResult sa_search(const std::vector<Network>& nets, const Dataset& ds,
                       const SaConfig& cfg);

// n = 2 reduction: only net1's permutation is searched; the energy is the
// midpoint barrier between the permuted net1 and net2.
SearchResult sa_search_reduced(const Network& net1, const Network& net2, const Dataset& ds,
                               const SaConfig& cfg);

// delta_ij = 1/2 * ||w_i^A - w_j^B||^2 * (1/h_i^A + 1/h_j^B)^-1 with h the
// per-unit mean squared post-activation over the train split (floored at 1e-8).
MatchCostMatrix fd_costs(const Network& net_a, const Network& net_b, const Dataset& ds,
                         int layer);

// Repeatedly takes the global minimum entry (ties: smallest row, then
// smallest column), pairing row i with column j; returns p with p[j] = i.
std::vector<int> greedy_match(const MatchCostMatrix& costs);

// Layerwise functional-difference alignment of net_a onto net_b.
Permutation fd_align(const Network& net_a, const Network& net_b, const Dataset& ds);

struct GridMatchResult {
  std::vector<int> perm;  // apply to the (U', v') network
  int leftovers = 0;      // |I|
  double xi_used = 0.0;
  bool xi_snapped = false;
};

// Constructive matching: bucket rows into the xi-grid over [-1/sqrt(d),
// 1/sqrt(d)]^d (cells stored sparsely), match randomly within each cell,
// spill size mismatches into leftover sets matched against each other.
GridMatchResult grid_bucket_match(const std::vector<float>& u, const std::vector<float>& u_prime,
                                  int h, int d, double xi, uint64_t seed);

// Exhaustive single-hidden-layer search in lexicographic order; global
// minimum midpoint barrier with ties to the lexicographically smallest
// permutation. Errors above width_limit.
SearchResult brute_force_match(const Network& net1, const Network& net2, const Dataset& ds,
                               int width_limit = 8, Metric metric = Metric::CeLoss,
                               SplitKind split = SplitKind::Train);

void write_search_json(std::ostream& os, const SearchResult& res, const SaConfig* cfg);
void write_trace_csv(std::ostream& os, const SearchResult& res);

}  // namespace lmc

#endif
