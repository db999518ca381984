#include "lmc/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "lmc/threading.hpp"

namespace lmc {

namespace {

// exact symmetric grid: weights (i/(g-1), (g-1-i)/(g-1)) so that reversing
// the endpoints mirrors the profile bit-for-bit
struct GridPoint {
  double alpha, beta;  // beta = 1 - alpha, computed exactly from indices
};

std::vector<GridPoint> make_grid(int grid_size) {
  if (grid_size < 3 || grid_size % 2 == 0)
    throw std::invalid_argument("loss_profile: grid_size must be odd and >= 3");
  std::vector<GridPoint> g(static_cast<size_t>(grid_size));
  const double denom = static_cast<double>(grid_size - 1);
  for (int i = 0; i < grid_size; ++i) {
    g[static_cast<size_t>(i)].alpha = static_cast<double>(i) / denom;
    g[static_cast<size_t>(i)].beta = static_cast<double>(grid_size - 1 - i) / denom;
  }
  return g;
}

double baseline_at(double alpha, double l1, double l0) {
  return l0 + alpha * (l1 - l0);
}

}  // namespace

BarrierProfile loss_profile(const Network& net1, const Network& net2, const Dataset& ds,
                            int grid_size, Metric metric, SplitKind split) {
  check_same_arch(net1, net2);
  const std::vector<GridPoint> grid = make_grid(grid_size);
  BarrierProfile prof;
  prof.metric = metric;
  prof.split = split;
  prof.alphas.resize(grid.size());
  prof.loss.resize(grid.size());
  prof.error.resize(grid.size());
  parallel_for(static_cast<int>(grid.size()), [&](int i) {
    const GridPoint& gp = grid[static_cast<size_t>(i)];
    EvalResult r;
    if (gp.alpha == 1.0)
      r = evaluate(net1, ds, split);
    else if (gp.alpha == 0.0)
      r = evaluate(net2, ds, split);
    else
      r = evaluate(interpolate_weighted(net1, net2, gp.alpha, gp.beta), ds, split);
    prof.alphas[static_cast<size_t>(i)] = gp.alpha;
    prof.loss[static_cast<size_t>(i)] = r.loss;
    prof.error[static_cast<size_t>(i)] = r.error;
  });
  const std::vector<double>& v = prof.values();
  prof.endpoint_l1 = v.back();
  prof.endpoint_l0 = v.front();
  return prof;
}

double barrier_value(const BarrierProfile& profile) {
  const std::vector<double>& v = profile.values();
  if (v.empty()) throw std::invalid_argument("barrier_value: empty profile");
  double best = 0.0;  // endpoints contribute exactly zero
  for (size_t i = 0; i < v.size(); ++i) {
    const double excess =
        v[i] - baseline_at(profile.alphas[i], profile.endpoint_l1, profile.endpoint_l0);
    best = std::max(best, excess);
  }
  return best;
}

double midpoint_barrier(const Network& net1, const Network& net2, const Dataset& ds,
                        Metric metric, SplitKind split) {
  check_same_arch(net1, net2);
  const EvalResult e1 = evaluate(net1, ds, split);
  const EvalResult e0 = evaluate(net2, ds, split);
  const EvalResult em = evaluate(interpolate_weighted(net1, net2, 0.5, 0.5), ds, split);
  const double l1 = metric == Metric::CeLoss ? e1.loss : e1.error;
  const double l0 = metric == Metric::CeLoss ? e0.loss : e0.error;
  const double m = metric == Metric::CeLoss ? em.loss : em.error;
  return m - baseline_at(0.5, l1, l0);
}

MidpointCheck midpoint_vs_grid(const Network& net1, const Network& net2, const Dataset& ds,
                               int grid_size, Metric metric, SplitKind split) {
  MidpointCheck check;
  check.midpoint = midpoint_barrier(net1, net2, ds, metric, split);
  check.full_grid = barrier_value(loss_profile(net1, net2, ds, grid_size, metric, split));
  check.flagged = std::abs(check.full_grid - check.midpoint) > 1e-3;
  return check;
}

std::vector<std::vector<double>> pairwise_barriers(const std::vector<Network>& nets,
                                                   const Dataset& ds, Metric metric,
                                                   SplitKind split, bool full_grid,
                                                   int grid_size) {
  const int n = static_cast<int>(nets.size());
  if (n < 2) throw std::invalid_argument("pairwise_barriers: need at least 2 networks");
  for (int i = 1; i < n; ++i) check_same_arch(nets[0], nets[static_cast<size_t>(i)]);

  std::vector<std::vector<double>> m(static_cast<size_t>(n),
                                     std::vector<double>(static_cast<size_t>(n), 0.0));
  if (full_grid) {
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    parallel_for(static_cast<int>(pairs.size()), [&](int k) {
      auto [i, j] = pairs[static_cast<size_t>(k)];
      const double b = barrier_value(loss_profile(nets[static_cast<size_t>(i)],
                                                  nets[static_cast<size_t>(j)], ds,
                                                  grid_size, metric, split));
      m[static_cast<size_t>(i)][static_cast<size_t>(j)] = b;
      m[static_cast<size_t>(j)][static_cast<size_t>(i)] = b;
    });
    return m;
  }

  // midpoint barriers; endpoint losses evaluated once per network
  std::vector<double> endpoints(static_cast<size_t>(n));
  parallel_for(n, [&](int i) {
    const EvalResult e = evaluate(nets[static_cast<size_t>(i)], ds, split);
    endpoints[static_cast<size_t>(i)] = metric == Metric::CeLoss ? e.loss : e.error;
  });
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  parallel_for(static_cast<int>(pairs.size()), [&](int k) {
    auto [i, j] = pairs[static_cast<size_t>(k)];
    const EvalResult em = evaluate(
        interpolate_weighted(nets[static_cast<size_t>(i)], nets[static_cast<size_t>(j)], 0.5, 0.5),
        ds, split);
    const double mid = metric == Metric::CeLoss ? em.loss : em.error;
    // barrier over the 3-point grid: never below the endpoints' zero
    const double b = std::max(
        mid - baseline_at(0.5, endpoints[static_cast<size_t>(i)],
                          endpoints[static_cast<size_t>(j)]),
        0.0);
    m[static_cast<size_t>(i)][static_cast<size_t>(j)] = b;
    m[static_cast<size_t>(j)][static_cast<size_t>(i)] = b;
  });
  return m;
}

double indirect_barrier(const std::vector<std::vector<double>>& matrix, int i, int j) {
  const int n = static_cast<int>(matrix.size());
  if (n < 3) throw std::invalid_argument("indirect_barrier: matrix smaller than 3");
  if (i == j || i < 0 || j < 0 || i >= n || j >= n)
    throw std::invalid_argument("indirect_barrier: bad indices");
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    if (k == i || k == j) continue;
    best = std::min(best, std::max(matrix[static_cast<size_t>(i)][static_cast<size_t>(k)],
                                   matrix[static_cast<size_t>(k)][static_cast<size_t>(j)]));
  }
  return best;
}

void write_profile_csv(std::ostream& os, const BarrierProfile& profile) {
  os << "alpha,loss,error,baseline,excess\n";
  os.precision(17);
  for (size_t i = 0; i < profile.alphas.size(); ++i) {
    const double base =
        baseline_at(profile.alphas[i], profile.endpoint_l1, profile.endpoint_l0);
    const double value = profile.values()[i];
    os << profile.alphas[i] << ',' << profile.loss[i] << ',' << profile.error[i] << ','
       << base << ',' << (value - base) << '\n';
  }
}

}  // namespace lmc
