#ifndef LMC_LAB_HPP
#define LMC_LAB_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lmc/barrier.hpp"
#include "lmc/dataset.hpp"
#include "lmc/net.hpp"
#include "lmc/search.hpp"

namespace lmc {

enum class SearchMethod { None, Sa, SaReduced, Fd, Grid, Brute };
std::string to_string(SearchMethod m);
SearchMethod search_method_from_string(const std::string& s);

enum class DatasetKind { Mnist, Cifar10, Blobs, SynthDigits };

struct DatasetDesc {
  DatasetKind kind = DatasetKind::SynthDigits;
  std::string dir;           // mnist / cifar10 file location
  int n_train = 4096, n_test = 1024;
  // blobs parameters
  int blob_dim = 2, blob_classes = 2;
  double blob_separation = 4.0;
  uint64_t seed = 1;
  bool apply_normalize = true;

  Dataset realize() const;  // load/generate, subsample, normalize
  std::string name() const;
};

struct ExperimentSpec {
  std::string experiment;  // width_sweep, depth_sweep, s_sprime, noisy_labels,
                           // sa_scaling, theorem1, histograms, ensemble
  ArchKind arch = ArchKind::Mlp;
  std::vector<int> widths{16};
  std::vector<int> depths{1};
  DatasetDesc dataset;
  int n_seeds = 10;
  int pairs = 5;
  SearchMethod search = SearchMethod::None;
  Metric metric = Metric::CeLoss;
  SplitKind split = SplitKind::Train;
  uint64_t master_seed = 42;

  // training overrides (0 / negative = use Table-1 style defaults)
  int max_epochs = 0;
  double lr = 0.0;
  double stop_loss = 0.0;
  int batch_size = 0;

  // search parameters
  int sa_steps = 50000;
  double sa_tmax = 25000.0, sa_tmin = 2.5;
  int sa_swaps = 1;

  // per-experiment extras
  std::vector<double> fractions{0.0, 0.5};       // noisy_labels
  std::vector<int> step_list{10, 100, 1000, 10000};  // sa_scaling
  std::vector<int> h_list{64, 256, 1024, 4096, 16384};  // theorem1
  int t1_dim = 2, t1_trials = 10, t1_probes = 64;
  int n_nets = 10;        // histograms
  bool iid_pairs = false;  // histograms sampling strategy

  void validate() const;
};

ExperimentSpec parse_spec_file(const std::string& path);

struct ReportRow {
  std::string arch, dataset, phase, metric, split;
  int width = 0, depth = 0;
  uint64_t seed_a = 0, seed_b = 0;
  double barrier = 0.0;
  // endpoint / context stats carried into the JSON report
  double train_loss_a = 0, train_err_a = 0, test_loss_a = 0, test_err_a = 0;
  double train_loss_b = 0, train_err_b = 0, test_loss_b = 0, test_err_b = 0;
  double extra = 0.0;       // experiment-specific scalar (fraction, steps, h, ...)
  std::string extra_name;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::map<std::string, double> summary;  // named aggregates
  std::map<std::string, std::vector<double>> series;  // histograms, traces
  std::vector<std::string> notes;

  // pinned schema: arch, width, depth, dataset, seed_a, seed_b, phase,
  // metric, split, barrier
  void write_csv(std::ostream& os) const;
  void write_json(std::ostream& os) const;
  double mean_barrier(const std::string& phase, Metric m, SplitKind s) const;
};

struct TrainedNet {
  Network net;
  uint64_t init_seed = 0, train_seed = 0;
  TrainStats stats;
};

TrainConfig train_config_for(const ExperimentSpec& spec, const Dataset& ds);

// n_seeds independently initialized and trained networks; seeds derived
// from the master seed by fixed splitting.
std::vector<TrainedNet> real_world_set(const ExperimentSpec& spec, const Dataset& ds,
                                       int width, int depth);

// theta plus n-1 random-permutation copies (all functionally identical)
std::vector<Network> model_set(const Network& theta, int n, uint64_t seed);

ExperimentReport compare_s_sprime(const ExperimentSpec& spec);
ExperimentReport width_sweep(const ExperimentSpec& spec);
ExperimentReport depth_sweep(const ExperimentSpec& spec);
ExperimentReport noisy_label_experiment(const ExperimentSpec& spec,
                                        const std::vector<double>& fractions);

using XiRule = std::function<double(int h, int d)>;
double default_xi_rule(int h, int d);  // occupied-cell population ~ sqrt(h)
ExperimentReport theorem1_check(int d, const std::vector<int>& h_list, int trials,
                                int probe_count, const XiRule& xi_rule, uint64_t seed);

enum class EnsembleMethod { NaiveAvg, FdAvg, LogitEnsemble };
EvalResult ensemble_eval(const Network& net_a, const Network& net_b, const Dataset& ds,
                         EnsembleMethod method, SplitKind split = SplitKind::Test);

ExperimentReport sa_scaling_study(const ExperimentSpec& spec, const std::vector<int>& step_list);
ExperimentReport barrier_histograms(const ExperimentSpec& spec, int n_nets);

// dispatch on spec.experiment
ExperimentReport run_experiment(const ExperimentSpec& spec);

}  // namespace lmc

#endif
