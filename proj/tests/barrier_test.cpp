#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lmc/barrier.hpp"
#include "lmc/dataset.hpp"
#include "lmc/net.hpp"
#include "lmc/perm.hpp"
#include "lmc/rng.hpp"

using namespace lmc;

namespace {

Dataset small_blobs(uint64_t seed = 5) { return normalize(synth_blobs(160, 3, 3, 3.0, seed)); }

Network quick_train(const Dataset& ds, int width, uint64_t seed, int epochs = 30) {
  TrainConfig cfg = TrainConfig::mlp_defaults();
  cfg.max_epochs = epochs;
  cfg.stop_loss = 0.05;
  cfg.seed = seed;
  return train(build_mlp(1, width, ds.dim(), ds.num_classes, seed + 1000), ds, cfg);
}

BarrierProfile hand_profile(const std::vector<double>& alphas, const std::vector<double>& values) {
  BarrierProfile p;
  p.alphas = alphas;
  p.loss = values;
  p.error = values;
  p.metric = Metric::CeLoss;
  p.endpoint_l1 = values.back();
  p.endpoint_l0 = values.front();
  return p;
}

}  // namespace

TEST_CASE("profile of a net against itself is constant") {
  const Dataset ds = small_blobs();
  const Network net = build_mlp(1, 6, 3, 3, 1);
  const BarrierProfile p = loss_profile(net, net, ds, 5, Metric::CeLoss, SplitKind::Train);
  for (double v : p.loss) CHECK(v == p.loss[0]);
  CHECK(barrier_value(p) == 0.0);
}

TEST_CASE("profile grid of size 3 is {0, 0.5, 1}") {
  const Dataset ds = small_blobs();
  const Network net = build_mlp(1, 6, 3, 3, 1);
  const BarrierProfile p = loss_profile(net, net, ds, 3, Metric::CeLoss, SplitKind::Train);
  CHECK(p.alphas == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_THROWS_AS(loss_profile(net, net, ds, 4, Metric::CeLoss, SplitKind::Train),
                  std::invalid_argument);
  CHECK_THROWS_AS(loss_profile(net, net, ds, 1, Metric::CeLoss, SplitKind::Train),
                  std::invalid_argument);
}

TEST_CASE("profile reversal symmetry is bit-exact") {
  const Dataset ds = small_blobs();
  const Network a = build_mlp(1, 6, 3, 3, 1);
  const Network b = build_mlp(1, 6, 3, 3, 2);
  const BarrierProfile pab = loss_profile(a, b, ds, 11, Metric::CeLoss, SplitKind::Train);
  const BarrierProfile pba = loss_profile(b, a, ds, 11, Metric::CeLoss, SplitKind::Train);
  for (size_t i = 0; i < pab.loss.size(); ++i) {
    CHECK(pab.loss[i] == pba.loss[pab.loss.size() - 1 - i]);
    CHECK(pab.error[i] == pba.error[pab.error.size() - 1 - i]);
  }
  CHECK(std::abs(barrier_value(pab) - barrier_value(pba)) < 1e-9);
}

TEST_CASE("profile endpoints equal the endpoint evaluations") {
  const Dataset ds = small_blobs();
  const Network a = build_mlp(1, 6, 3, 3, 1);
  const Network b = build_mlp(1, 6, 3, 3, 2);
  const BarrierProfile p = loss_profile(a, b, ds, 7, Metric::CeLoss, SplitKind::Train);
  const EvalResult ea = evaluate(a, ds, SplitKind::Train);
  const EvalResult eb = evaluate(b, ds, SplitKind::Train);
  CHECK(std::abs(p.loss.back() - ea.loss) < 1e-9);
  CHECK(std::abs(p.loss.front() - eb.loss) < 1e-9);
  CHECK(p.endpoint_l1 == p.loss.back());
  CHECK(p.endpoint_l0 == p.loss.front());
}

TEST_CASE("barrier_value on hand profiles") {
  // values {0.3, 0.4, 0.1}: baseline at 0.5 is 0.2, so the barrier is 0.2
  const BarrierProfile p = hand_profile({0.0, 0.5, 1.0}, {0.3, 0.4, 0.1});
  CHECK(barrier_value(p) == doctest::Approx(0.2));

  // linear profile built through the same baseline formula: barrier 0
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> values;
  const double l0 = 0.7, l1 = 0.2;
  for (double a : alphas) values.push_back(l0 + a * (l1 - l0));
  CHECK(barrier_value(hand_profile(alphas, values)) == 0.0);

  // constant profile with equal endpoints
  CHECK(barrier_value(hand_profile({0.0, 0.5, 1.0}, {0.4, 0.4, 0.4})) == 0.0);
}

TEST_CASE("midpoint barrier of identical nets is exactly zero") {
  const Dataset ds = small_blobs();
  const Network net = quick_train(ds, 6, 3);
  CHECK(midpoint_barrier(net, net, ds, Metric::CeLoss, SplitKind::Train) == 0.0);
}

TEST_CASE("aligned permuted pair has zero barrier; unaligned matches the grid oracle") {
  const Dataset ds = small_blobs();
  const Network net = quick_train(ds, 2, 7);
  const Permutation swap = [&] {
    Permutation p = identity_perm(net);
    std::swap(p.per_layer[0][0], p.per_layer[0][1]);
    return p;
  }();
  const Network permuted = apply(net, swap);
  // after aligning back, the barrier vanishes
  CHECK(midpoint_barrier(net, apply(permuted, invert(swap)), ds, Metric::CeLoss,
                         SplitKind::Train) == 0.0);
  // before aligning: the midpoint surrogate against the dense grid oracle
  const MidpointCheck check =
      midpoint_vs_grid(net, permuted, ds, 101, Metric::CeLoss, SplitKind::Train);
  CHECK(std::abs(check.midpoint - check.full_grid) < 1e-3);
  CHECK_FALSE(check.flagged);
}

TEST_CASE("pairwise matrix: identical nets give the zero matrix") {
  const Dataset ds = small_blobs();
  const Network net = build_mlp(1, 6, 3, 3, 1);
  const std::vector<Network> nets{net, net, net};
  const auto m = pairwise_barriers(nets, ds, Metric::CeLoss, SplitKind::Train);
  for (const auto& row : m)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("pairwise matrix symmetry and diagonal") {
  const Dataset ds = small_blobs();
  std::vector<Network> nets;
  for (uint64_t s = 0; s < 3; ++s) nets.push_back(build_mlp(1, 6, 3, 3, s));
  const auto m = pairwise_barriers(nets, ds, Metric::CeLoss, SplitKind::Train);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(m[i][i] == 0.0);
    for (size_t j = 0; j < 3; ++j) CHECK(m[i][j] == m[j][i]);
  }
  // three distinct off-diagonal values
  CHECK(m[0][1] != m[0][2]);
  CHECK(m[0][1] != m[1][2]);
}

TEST_CASE("indirect barrier hand case and brute-force oracle") {
  // B(A,B)=0.1, B(B,C)=0.2, B(A,C)=0.5 -> indirect(A,C) = 0.2
  std::vector<std::vector<double>> m{{0.0, 0.1, 0.5}, {0.1, 0.0, 0.2}, {0.5, 0.2, 0.0}};
  CHECK(indirect_barrier(m, 0, 2) == doctest::Approx(0.2));

  // all equal
  std::vector<std::vector<double>> eq(4, std::vector<double>(4, 0.3));
  for (int i = 0; i < 4; ++i) eq[static_cast<size_t>(i)][static_cast<size_t>(i)] = 0.0;
  CHECK(indirect_barrier(eq, 1, 3) == doctest::Approx(0.3));

  // random matrices vs the exhaustive-k oracle
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 6;
    std::vector<std::vector<double>> r(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) r[i][j] = r[j][i] = rng.next_double();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double oracle = 1e300;
        for (int k = 0; k < n; ++k)
          if (k != i && k != j) oracle = std::min(oracle, std::max(r[i][k], r[k][j]));
        CHECK(indirect_barrier(r, i, j) == oracle);
      }
  }

  std::vector<std::vector<double>> tiny(2, std::vector<double>(2, 0.0));
  CHECK_THROWS_AS(indirect_barrier(tiny, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(indirect_barrier(m, 1, 1), std::invalid_argument);
}

TEST_CASE("midpoint path loss equals the evaluated average") {
  const Dataset ds = small_blobs();
  const Network a = quick_train(ds, 6, 1);
  const Network b = quick_train(ds, 6, 2);
  const EvalResult mid =
      evaluate(interpolate(a, b, 0.5), ds, SplitKind::Train);
  const EvalResult avg = evaluate(average({a, b}), ds, SplitKind::Train);
  CHECK(std::abs(mid.loss - avg.loss) < 1e-9);
}

TEST_CASE("joint-permutation invariance of the barrier is exact") {
  const Dataset ds = small_blobs();
  const Network a = quick_train(ds, 5, 11);
  const Network b = quick_train(ds, 5, 12);
  const Permutation p = random_perm(a, 33);
  const BarrierProfile base = loss_profile(a, b, ds, 7, Metric::CeLoss, SplitKind::Train);
  const BarrierProfile perm =
      loss_profile(apply(a, p), apply(b, p), ds, 7, Metric::CeLoss, SplitKind::Train);
  for (size_t i = 0; i < base.loss.size(); ++i) {
    CHECK(base.loss[i] == perm.loss[i]);
    CHECK(base.error[i] == perm.error[i]);
  }
  CHECK(barrier_value(base) == barrier_value(perm));
}

TEST_CASE("profile CSV has the pinned header and one row per grid point") {
  const Dataset ds = small_blobs();
  const Network net = build_mlp(1, 6, 3, 3, 1);
  const BarrierProfile p = loss_profile(net, net, ds, 5, Metric::CeLoss, SplitKind::Train);
  std::ostringstream os;
  write_profile_csv(os, p);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "alpha,loss,error,baseline,excess");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);
}
