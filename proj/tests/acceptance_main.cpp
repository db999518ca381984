// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code 0 only if all pass.
//
// Usage: acceptance [--only 1,4,9] [--list]
//
// Criteria that call for an "MNIST subset" run on real MNIST IDX files when
// LMCLAB_MNIST_DIR points at them, and otherwise on the deterministic
// synthetic digit-image task loaded through the same IDX pipeline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "lmc/barrier.hpp"
#include "lmc/binio.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/cli_app.hpp"
#include "lmc/dataset.hpp"
#include "lmc/lab.hpp"
#include "lmc/net.hpp"
#include "lmc/perm.hpp"
#include "lmc/rng.hpp"
#include "lmc/search.hpp"

using namespace lmc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string image_source;

// MNIST subset when available, otherwise the synthetic digit task; both go
// through an IDX round trip so the acceptance path exercises the loader.
Dataset image_subset(int n_train, int n_test, uint64_t seed) {
  if (const char* dir = std::getenv("LMCLAB_MNIST_DIR")) {
    if (std::filesystem::exists(std::string(dir) + "/train-images-idx3-ubyte")) {
      image_source = "mnist";
      return normalize(subsample(load_mnist_dir(dir), n_train, n_test, seed));
    }
  }
  image_source = "synth-digits";
  const Dataset raw = synth_digits(n_train, n_test, seed);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "lmclab_acceptance_idx").string();
  std::filesystem::create_directories(dir);
  IdxImages im;
  im.count = raw.train.n;
  im.rows = raw.shape.h;
  im.cols = raw.shape.w;
  im.pixels = raw.train.x;
  save_idx_images(dir + "/train-images-idx3-ubyte", im);
  save_idx_labels(dir + "/train-labels-idx1-ubyte", raw.train.y);
  im.count = raw.test.n;
  im.pixels = raw.test.x;
  save_idx_images(dir + "/t10k-images-idx3-ubyte", im);
  save_idx_labels(dir + "/t10k-labels-idx1-ubyte", raw.test.y);
  return normalize(load_mnist_dir(dir));
}

Network trained_mlp(const Dataset& ds, int width, int depth, uint64_t seed,
                    int max_epochs = 150, double stop_loss = 0.01) {
  TrainConfig cfg = TrainConfig::mlp_defaults();
  cfg.max_epochs = max_epochs;
  cfg.stop_loss = stop_loss;
  cfg.seed = derive_seed(seed, 2);
  return train(build_mlp(depth, width, ds.dim(), ds.num_classes, derive_seed(seed, 1)), ds,
               cfg);
}

Dataset acceptance_blobs(uint64_t seed) {
  return normalize(synth_blobs(200, 2, 2, 4.0, seed));
}

bool params_equal(const Network& a, const Network& b) {
  for (size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight != b.layers[i].weight) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

// ---- criterion 1: permutation invariance --------------------------------

Outcome criterion_permutation_invariance() {
  Rng rng(20260809);
  int pairs = 0;
  float max_diff = 0.0f;
  auto run_config = [&](const Network& net, int count) {
    for (int k = 0; k < count; ++k) {
      const Permutation p = random_perm(net, rng.next_u64());
      const Network permuted = apply(net, p);
      std::vector<float> x(static_cast<size_t>(100) * net.in_shape.dim());
      for (float& v : x) v = static_cast<float>(rng.gaussian());
      const std::vector<float> a = forward(net, x, 100);
      const std::vector<float> b = forward(permuted, x, 100);
      for (size_t i = 0; i < a.size(); ++i)
        max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
      if (!params_equal(apply(permuted, invert(p)), net)) return false;
      ++pairs;
    }
    return true;
  };
  for (int depth : {1, 2, 4})
    if (!run_config(build_mlp(depth, 12, 18, 5, 100 + static_cast<uint64_t>(depth)), 10))
      return {false, "apply/invert round-trip broke"};
  for (int depth : {1, 2})
    if (!run_config(build_shallow_cnn(depth, 6, Shape3{1, 9, 9}, 5,
                                      200 + static_cast<uint64_t>(depth)),
                    10))
      return {false, "apply/invert round-trip broke"};
  std::ostringstream os;
  os << pairs << " (net, perm) pairs, max |forward diff| = " << max_diff;
  return {pairs == 50 && max_diff == 0.0f, os.str()};
}

// ---- criterion 2: barrier definition contract ------------------------------

Outcome criterion_eq1_contract() {
  const Dataset blobs = acceptance_blobs(31);
  std::vector<Network> nets;
  for (uint64_t s = 0; s < 15; ++s)
    nets.push_back(trained_mlp(blobs, 6, 1, 300 + s, 40, 0.05));

  // barrier(theta, theta) = 0 exactly
  const BarrierProfile self =
      loss_profile(nets[0], nets[0], blobs, 11, Metric::CeLoss, SplitKind::Train);
  if (barrier_value(self) != 0.0) return {false, "self barrier nonzero"};

  // barrier >= 0 and swap symmetry within 1e-9 on 100 random trained pairs
  int checked = 0;
  for (size_t i = 0; i < nets.size() && checked < 100; ++i) {
    for (size_t j = i + 1; j < nets.size() && checked < 100; ++j) {
      const BarrierProfile pij =
          loss_profile(nets[i], nets[j], blobs, 11, Metric::CeLoss, SplitKind::Train);
      const BarrierProfile pji =
          loss_profile(nets[j], nets[i], blobs, 11, Metric::CeLoss, SplitKind::Train);
      const double bij = barrier_value(pij), bji = barrier_value(pji);
      if (bij < 0.0) return {false, "negative barrier"};
      if (std::abs(bij - bji) > 1e-9) return {false, "swap symmetry broke"};
      ++checked;
    }
  }

  // midpoint vs 101-point grid on 20 trained image-subset pairs
  const Dataset digits = image_subset(1024, 256, 32);
  std::vector<Network> dnets;
  for (uint64_t s = 0; s < 7; ++s)
    dnets.push_back(trained_mlp(digits, 16, 1, 400 + s, 120, 0.02));
  int dpairs = 0;
  double worst_gap = 0.0;
  for (size_t i = 0; i < dnets.size() && dpairs < 20; ++i)
    for (size_t j = i + 1; j < dnets.size() && dpairs < 20; ++j) {
      const MidpointCheck check = midpoint_vs_grid(dnets[i], dnets[j], digits, 101,
                                                   Metric::CeLoss, SplitKind::Train);
      worst_gap = std::max(worst_gap, std::abs(check.full_grid - check.midpoint));
      ++dpairs;
    }
  std::ostringstream os;
  os << checked << " blob pairs ok; midpoint vs 101-grid on " << dpairs << " "
     << image_source << " pairs, worst gap = " << worst_gap;
  return {checked == 100 && dpairs == 20 && worst_gap < 1e-3, os.str()};
}

// ---- criterion 3: gradient check ------------------------------------------

Outcome criterion_gradient_check() {
  double worst = 0.0;
  for (int t = 0; t < 14; ++t)
    worst = std::max(worst, oracle::checked_gradient_trial(5000 + static_cast<uint64_t>(t),
                                                           /*conv=*/false));
  for (int t = 0; t < 6; ++t)
    worst = std::max(worst, oracle::checked_gradient_trial(6000 + static_cast<uint64_t>(t),
                                                           /*conv=*/true));
  std::ostringstream os;
  os << "20 tiny nets, worst relative error = " << worst;
  return {worst <= 1e-4, os.str()};
}

// ---- criterion 4: brute-force dominance -------------------------------------

Outcome criterion_brute_dominance() {
  const Dataset ds = acceptance_blobs(41);
  int sa_close = 0;
  for (uint64_t p = 0; p < 10; ++p) {
    const Network a = trained_mlp(ds, 4, 1, 500 + 2 * p, 40, 0.05);
    const Network b = trained_mlp(ds, 4, 1, 501 + 2 * p, 40, 0.05);
    const double identity_b =
        std::max(midpoint_barrier(a, b, ds, Metric::CeLoss, SplitKind::Train), 0.0);
    const double fd_b = std::max(
        midpoint_barrier(apply(a, fd_align(a, b, ds)), b, ds, Metric::CeLoss, SplitKind::Train),
        0.0);
    const SearchResult brute = brute_force_match(a, b, ds);
    if (!(brute.final_energy <= fd_b + 1e-12 && fd_b <= identity_b + 1e-12)) {
      std::ostringstream os;
      os << "ordering broke on pair " << p << ": brute " << brute.final_energy << " fd "
         << fd_b << " identity " << identity_b;
      return {false, os.str()};
    }
    SaConfig cfg;
    cfg.steps = 5000;
    cfg.seed = derive_seed(777, p);
    const SearchResult sa = sa_search_reduced(a, b, ds, cfg);
    if (std::abs(sa.final_energy - brute.final_energy) <= 0.05) ++sa_close;
  }
  std::ostringstream os;
  os << "10 pairs ordered (brute <= fd <= identity); SA within 0.05 of brute on "
     << sa_close << "/10";
  return {sa_close >= 8, os.str()};
}

// ---- criterion 5: plant and recover -----------------------------------------

Outcome criterion_plant_recover() {
  const Dataset ds = acceptance_blobs(51);
  const Network a = trained_mlp(ds, 6, 1, 600, 40, 0.05);
  const Permutation planted = random_perm(a, 61);
  const Network b = apply(a, planted);
  const SearchResult brute = brute_force_match(a, b, ds);
  if (brute.final_energy != 0.0) {
    std::ostringstream os;
    os << "brute minimum " << brute.final_energy << " != 0";
    return {false, os.str()};
  }
  const Permutation found = fd_align(a, b, ds);
  if (!params_equal(apply(a, found), b))
    return {false, "fd_align did not recover the planted permutation"};
  return {true, "brute minimum exactly 0; fd_align recovered the planted permutation"};
}

// ---- criterion 6: S vs S' similarity ----------------------------------------

Outcome criterion_s_sprime() {
  ExperimentSpec spec;
  spec.experiment = "s_sprime";
  spec.arch = ArchKind::Mlp;
  spec.depths = {1};
  spec.n_seeds = 10;
  spec.master_seed = 606;
  spec.max_epochs = 150;
  spec.stop_loss = 0.01;
  std::ostringstream os;
  bool ok = true;
  const Dataset ds = image_subset(4096, 1024, 62);
  for (int width : {16, 256}) {
    ExperimentSpec s2 = spec;
    s2.widths = {width};
    const std::vector<TrainedNet> trained = real_world_set(s2, ds, width, 1);
    std::vector<Network> s_set;
    for (const TrainedNet& tn : trained) s_set.push_back(tn.net);
    const std::vector<Network> sprime = model_set(s_set[0], 10, derive_seed(606, 77));
    auto mean_off_diag = [&](const std::vector<Network>& nets) {
      const auto m = pairwise_barriers(nets, ds, Metric::CeLoss, SplitKind::Train);
      double sum = 0.0;
      int count = 0;
      for (size_t i = 0; i < nets.size(); ++i)
        for (size_t j = i + 1; j < nets.size(); ++j) {
          sum += m[i][j];
          ++count;
        }
      return sum / count;
    };
    const double mean_s = mean_off_diag(s_set);
    const double mean_sprime = mean_off_diag(sprime);
    const double rel = std::abs(mean_s - mean_sprime) / std::max(mean_s, mean_sprime);
    os << "w" << width << ": S " << mean_s << " vs S' " << mean_sprime << " (rel " << rel
       << "); ";
    if (!(rel <= 0.30)) ok = false;
  }
  os << "[" << image_source << " 4096-subset, 10 seeds]";
  return {ok, os.str()};
}

// ---- criterion 7: SA step scaling -------------------------------------------

Outcome criterion_sa_scaling() {
  const Dataset ds = image_subset(4096, 1024, 72);
  const Network a = trained_mlp(ds, 16, 1, 700, 150, 0.01);
  const Network b = trained_mlp(ds, 16, 1, 701, 150, 0.01);
  SaConfig cfg;
  cfg.seed = 71;
  cfg.cooling_horizon = 10000;  // shared horizon: budgets run prefix-identical chains
  std::vector<double> barriers;
  for (int budget : {10, 100, 1000, 10000}) {
    cfg.steps = budget;
    barriers.push_back(sa_search_reduced(a, b, ds, cfg).final_energy);
  }
  bool monotone = true;
  for (size_t i = 1; i < barriers.size(); ++i)
    if (barriers[i] > barriers[i - 1] + 1e-15) monotone = false;
  const bool ratio_ok = barriers.front() >= 1.3 * barriers.back();
  std::ostringstream os;
  os << "barriers at {10, 100, 1k, 10k}:";
  for (double v : barriers) os << " " << v;
  os << (monotone ? "; non-increasing" : "; NOT monotone");
  return {monotone && ratio_ok, os.str()};
}

// ---- criterion 8: width and depth trends -------------------------------------

Outcome criterion_trends() {
  const Dataset ds = image_subset(4096, 1024, 82);
  auto mean_pair_barrier = [&](int width, int depth, int pairs, uint64_t seed) {
    double sum = 0.0;
    for (int p = 0; p < pairs; ++p) {
      const Network a =
          trained_mlp(ds, width, depth, seed + 2 * static_cast<uint64_t>(p), 120, 0.01);
      const Network b =
          trained_mlp(ds, width, depth, seed + 2 * static_cast<uint64_t>(p) + 1, 120, 0.01);
      sum += std::max(midpoint_barrier(a, b, ds, Metric::CeLoss, SplitKind::Train), 0.0);
    }
    return sum / pairs;
  };
  const double b8 = mean_pair_barrier(8, 1, 2, 800);
  const double b64 = mean_pair_barrier(64, 1, 2, 820);
  const double b1024 = mean_pair_barrier(1024, 1, 2, 840);
  const double peak = std::max({b8, b64, b1024});
  const double depth4 = mean_pair_barrier(1024, 4, 1, 860);
  std::ostringstream os;
  os << "width {8, 64, 1024} -> {" << b8 << ", " << b64 << ", " << b1024
     << "}; depth {1, 4} @1024 -> {" << b1024 << ", " << depth4 << "}";
  const bool width_ok = b1024 < peak;
  const bool depth_ok = depth4 > b1024;
  return {width_ok && depth_ok, os.str()};
}

// ---- criterion 9: single-hidden-layer matching rate --------------------------

Outcome criterion_theorem1() {
  const ExperimentReport report =
      theorem1_check(2, {64, 256, 1024, 4096, 16384}, 10, 64, default_xi_rule, 90);
  std::vector<double> medians;
  for (int h : {64, 256, 1024, 4096, 16384})
    medians.push_back(report.summary.at("median_h" + std::to_string(h)));
  bool decreasing = true;
  for (size_t i = 1; i < medians.size(); ++i)
    if (!(medians[i] < medians[i - 1])) decreasing = false;
  const double slope = report.summary.at("loglog_slope");
  std::ostringstream os;
  os << "medians:";
  for (double m : medians) os << " " << m;
  os << "; log-log slope " << slope << " (reference rate -0.125)";
  return {decreasing && slope < -0.03, os.str()};
}

// ---- criterion 10: noisy labels ----------------------------------------------

Outcome criterion_noisy_labels() {
  const Dataset base = image_subset(2048, 512, 102);
  std::ostringstream os;
  double barrier0 = 0.0, barrier05 = 0.0;
  for (double fraction : {0.0, 0.5}) {
    const Dataset ds = fraction == 0.0 ? base : corrupt_labels(base, fraction, 1009);
    const Network a =
        trained_mlp(ds, 256, 1, 1000 + static_cast<uint64_t>(fraction * 10), 800, 0.01);
    const Network b =
        trained_mlp(ds, 256, 1, 1100 + static_cast<uint64_t>(fraction * 10), 800, 0.01);
    const double ea = evaluate(a, ds, SplitKind::Train).error;
    const double eb = evaluate(b, ds, SplitKind::Train).error;
    if (ea >= 0.02 || eb >= 0.02) {
      os << "fraction " << fraction << ": train errors " << ea << ", " << eb << " not < 2%";
      return {false, os.str()};
    }
    const double barrier =
        std::max(midpoint_barrier(a, b, ds, Metric::CeLoss, SplitKind::Train), 0.0);
    (fraction == 0.0 ? barrier0 : barrier05) = barrier;
    os << "f=" << fraction << ": errors " << ea << "/" << eb << ", barrier " << barrier
       << "; ";
  }
  const bool ok = barrier05 >= barrier0 - 0.02;
  return {ok, os.str()};
}

// ---- criterion 11: indirect barrier oracle -----------------------------------

Outcome criterion_indirect_oracle() {
  Rng rng(111);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) m[i][j] = m[j][i] = rng.next_double();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double oracle = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k)
          if (k != i && k != j) oracle = std::min(oracle, std::max(m[i][k], m[k][j]));
        if (indirect_barrier(m, i, j) != oracle)
          return {false, "mismatch against the exhaustive-intermediate oracle"};
      }
  }
  return {true, "20 random 6x6 matrices match the exhaustive oracle exactly"};
}

// ---- criterion 12: determinism -----------------------------------------------

Outcome criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lmclab_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string blobs = "blobs:dim=2,classes=2,sep=4";
  auto run_pipeline = [&](const std::string& tag) -> std::string {
    const std::string a = (dir / ("a_" + tag + ".ckpt")).string();
    const std::string b = (dir / ("b_" + tag + ".ckpt")).string();
    const std::string profile = (dir / ("profile_" + tag + ".csv")).string();
    const std::string trace = (dir / ("trace_" + tag + ".csv")).string();
    if (run_cli({"train", "--dataset", blobs, "--n-train", "200", "--n-test", "50",
                 "--width", "4", "--epochs", "30", "--stop-loss", "0.05", "--out", a,
                 "--seed", "21", "--threads", "1"}) != 0)
      return {};
    if (run_cli({"train", "--dataset", blobs, "--n-train", "200", "--n-test", "50",
                 "--width", "4", "--epochs", "30", "--stop-loss", "0.05", "--out", b,
                 "--seed", "22", "--threads", "1"}) != 0)
      return {};
    if (run_cli({"barrier", a, b, "--dataset", blobs, "--n-train", "200", "--n-test", "50",
                 "--out", profile, "--threads", "1"}) != 0)
      return {};
    if (run_cli({"search", "sa-reduced", a, b, "--dataset", blobs, "--n-train", "200",
                 "--n-test", "50", "--steps", "500", "--seed", "5", "--trace", trace,
                 "--threads", "1"}) != 0)
      return {};
    std::string bytes;
    for (const std::string& f : {a, b, profile, trace}) {
      const std::vector<uint8_t> data = read_file_bytes(f);
      bytes.append(data.begin(), data.end());
      bytes.push_back('|');
    }
    return bytes;
  };
  const std::string first = run_pipeline("one");
  const std::string second = run_pipeline("two");
  fs::remove_all(dir);
  if (first.empty() || second.empty()) return {false, "pipeline failed"};
  if (first != second) return {false, "outputs differ between identical runs"};
  return {true, "checkpoints + barrier CSV + SA trace byte-identical across reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "permutation invariance (exact zero)", criterion_permutation_invariance},
      {2, "barrier definition contract", criterion_eq1_contract},
      {3, "gradient vs central finite differences", criterion_gradient_check},
      {4, "brute-force dominance and SA proximity", criterion_brute_dominance},
      {5, "plant-and-recover", criterion_plant_recover},
      {6, "S vs S' mean barrier similarity", criterion_s_sprime},
      {7, "SA step scaling", criterion_sa_scaling},
      {8, "width and depth barrier trends", criterion_trends},
      {9, "single-hidden-layer matching rate", criterion_theorem1},
      {10, "noisy-label barriers", criterion_noisy_labels},
      {11, "indirect barrier vs exhaustive oracle", criterion_indirect_oracle},
      {12, "bit-reproducible outputs", criterion_determinism},
  };

  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const Criterion& c : criteria) std::printf("%2d  %s\n", c.id, c.name);
      return 0;
    }
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }
  }

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %s: %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", c.id, c.name,
                outcome.detail.c_str(), secs);
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
