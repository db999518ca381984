#ifndef LMC_BARRIER_HPP
#define LMC_BARRIER_HPP

#include <iosfwd>
#include <vector>

#include "lmc/dataset.hpp"
#include "lmc/net.hpp"

namespace lmc {

// Loss/error along the linear path alpha*net1 + (1-alpha)*net2 on an
// ascending alpha grid that always contains 0, 0.5 and 1.
struct BarrierProfile {
  std::vector<double> alphas;
  std::vector<double> loss;   // cross-entropy at each grid point
  std::vector<double> error;  // top-1 error at each grid point
  Metric metric = Metric::CeLoss;
  SplitKind split = SplitKind::Train;
  double endpoint_l1 = 0.0;  // metric value at alpha=1 (net1)
  double endpoint_l0 = 0.0;  // metric value at alpha=0 (net2)

  const std::vector<double>& values() const {
    return metric == Metric::CeLoss ? loss : error;
  }
};

// grid_size must be odd and >= 3 so that alpha = 0.5 lies on the grid
BarrierProfile loss_profile(const Network& net1, const Network& net2, const Dataset& ds,
                            int grid_size, Metric metric, SplitKind split);

// max over the grid of values[alpha] - (alpha*L1 + (1-alpha)*L0); the
// endpoints contribute exactly zero, so the result is never negative.
double barrier_value(const BarrierProfile& profile);

// value at alpha = 0.5 minus the linear interpolation of the endpoint
// losses (signed; the supremum surrogate)
double midpoint_barrier(const Network& net1, const Network& net2, const Dataset& ds,
                        Metric metric, SplitKind split);

struct MidpointCheck {
  double midpoint = 0.0;
  double full_grid = 0.0;
  bool flagged = false;  // set when the two differ by more than 1e-3
};
MidpointCheck midpoint_vs_grid(const Network& net1, const Network& net2, const Dataset& ds,
                               int grid_size, Metric metric, SplitKind split);

// Symmetric matrix of pairwise barriers (midpoint by default, full grid on
// request); diagonal zero. Endpoint losses are evaluated once per network.
std::vector<std::vector<double>> pairwise_barriers(const std::vector<Network>& nets,
                                                   const Dataset& ds, Metric metric,
                                                   SplitKind split, bool full_grid = false,
                                                   int grid_size = 11);

// min over intermediates k of max(matrix[i][k], matrix[k][j])
double indirect_barrier(const std::vector<std::vector<double>>& matrix, int i, int j);

// CSV with columns: alpha, loss, error, baseline, excess
void write_profile_csv(std::ostream& os, const BarrierProfile& profile);

}  // namespace lmc

#endif
