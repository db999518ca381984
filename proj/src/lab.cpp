#include "lmc/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lmc/rng.hpp"
#include "lmc/threading.hpp"

namespace lmc {

std::string to_string(SearchMethod m) {
  switch (m) {
    case SearchMethod::None: return "none";
    case SearchMethod::Sa: return "sa";
    case SearchMethod::SaReduced: return "sa-reduced";
    case SearchMethod::Fd: return "fd";
    case SearchMethod::Grid: return "grid";
    case SearchMethod::Brute: return "brute";
  }
  return "none";
}

SearchMethod search_method_from_string(const std::string& s) {
  if (s == "none") return SearchMethod::None;
  if (s == "sa") return SearchMethod::Sa;
  if (s == "sa-reduced" || s == "sa_reduced") return SearchMethod::SaReduced;
  if (s == "fd") return SearchMethod::Fd;
  if (s == "grid") return SearchMethod::Grid;
  if (s == "brute") return SearchMethod::Brute;
  throw std::invalid_argument("unknown search method: " + s);
}

std::string DatasetDesc::name() const {
  switch (kind) {
    case DatasetKind::Mnist: return "mnist";
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::SynthDigits: return "synth-digits";
  }
  return "?";
}

Dataset DatasetDesc::realize() const {
  Dataset ds;
  switch (kind) {
    case DatasetKind::Mnist: {
      std::string path = dir;
      if (path.empty()) {
        if (const char* env = std::getenv("LMCLAB_MNIST_DIR")) path = env;
      }
      if (path.empty())
        throw std::runtime_error("mnist: no directory given (set data_dir or LMCLAB_MNIST_DIR)");
      ds = subsample(load_mnist_dir(path), n_train, n_test, derive_seed(seed, 11));
      break;
    }
    case DatasetKind::Cifar10: {
      std::vector<std::string> train_files;
      for (int i = 1; i <= 5; ++i)
        train_files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
      ds = subsample(load_cifar10(train_files, dir + "/test_batch.bin"), n_train, n_test,
                     derive_seed(seed, 11));
      break;
    }
    case DatasetKind::Blobs: {
      // generate with margin, then cut to the exact requested sizes
      const int margin = blob_classes * 4;
      const int n = std::max((n_train * 10 + 7) / 8, n_test * 5) + margin;
      ds = subsample(synth_blobs(n, blob_dim, blob_classes, blob_separation, seed), n_train,
                     n_test, derive_seed(seed, 11));
      break;
    }
    case DatasetKind::SynthDigits:
      ds = synth_digits(n_train, n_test, seed);
      break;
  }
  if (apply_normalize) ds = normalize(ds);
  return ds;
}

void ExperimentSpec::validate() const {
  if (widths.empty() || depths.empty())
    throw std::invalid_argument("spec: widths/depths must be non-empty");
  if (n_seeds < 2) throw std::invalid_argument("spec: n_seeds must be >= 2");
  if (pairs < 1) throw std::invalid_argument("spec: pairs must be >= 1");
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const std::string& tok : split_list(s)) out.push_back(std::stoi(tok));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const std::string& tok : split_list(s)) out.push_back(std::stod(tok));
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected a boolean, got: " + s);
}

}  // namespace

ExperimentSpec parse_spec_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open spec file: " + path);
  ExperimentSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
      if (blank) continue;
      throw std::runtime_error("spec file line " + std::to_string(lineno) +
                               ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "experiment") spec.experiment = val;
      else if (key == "arch") spec.arch = (val == "cnn") ? ArchKind::ShallowCnn : ArchKind::Mlp;
      else if (key == "widths") spec.widths = parse_int_list(val);
      else if (key == "depths") spec.depths = parse_int_list(val);
      else if (key == "dataset") {
        if (val == "mnist") spec.dataset.kind = DatasetKind::Mnist;
        else if (val == "cifar10") spec.dataset.kind = DatasetKind::Cifar10;
        else if (val == "blobs") spec.dataset.kind = DatasetKind::Blobs;
        else if (val == "digits" || val == "synth-digits")
          spec.dataset.kind = DatasetKind::SynthDigits;
        else throw std::invalid_argument("unknown dataset: " + val);
      }
      else if (key == "data_dir") spec.dataset.dir = val;
      else if (key == "n_train") spec.dataset.n_train = std::stoi(val);
      else if (key == "n_test") spec.dataset.n_test = std::stoi(val);
      else if (key == "blob_dim") spec.dataset.blob_dim = std::stoi(val);
      else if (key == "blob_classes") spec.dataset.blob_classes = std::stoi(val);
      else if (key == "blob_separation") spec.dataset.blob_separation = std::stod(val);
      else if (key == "data_seed") spec.dataset.seed = std::stoull(val);
      else if (key == "normalize") spec.dataset.apply_normalize = parse_bool(val);
      else if (key == "n_seeds") spec.n_seeds = std::stoi(val);
      else if (key == "pairs") spec.pairs = std::stoi(val);
      else if (key == "search") spec.search = search_method_from_string(val);
      else if (key == "metric") spec.metric = metric_from_string(val);
      else if (key == "split") spec.split = split_from_string(val);
      else if (key == "master_seed") spec.master_seed = std::stoull(val);
      else if (key == "max_epochs") spec.max_epochs = std::stoi(val);
      else if (key == "lr") spec.lr = std::stod(val);
      else if (key == "stop_loss") spec.stop_loss = std::stod(val);
      else if (key == "batch_size") spec.batch_size = std::stoi(val);
      else if (key == "sa_steps") spec.sa_steps = std::stoi(val);
      else if (key == "sa_tmax") spec.sa_tmax = std::stod(val);
      else if (key == "sa_tmin") spec.sa_tmin = std::stod(val);
      else if (key == "sa_swaps") spec.sa_swaps = std::stoi(val);
      else if (key == "fractions") spec.fractions = parse_double_list(val);
      else if (key == "step_list") spec.step_list = parse_int_list(val);
      else if (key == "h_list") spec.h_list = parse_int_list(val);
      else if (key == "t1_dim") spec.t1_dim = std::stoi(val);
      else if (key == "t1_trials") spec.t1_trials = std::stoi(val);
      else if (key == "t1_probes") spec.t1_probes = std::stoi(val);
      else if (key == "n_nets") spec.n_nets = std::stoi(val);
      else if (key == "iid_pairs") spec.iid_pairs = parse_bool(val);
      else throw std::invalid_argument("unknown key: " + key);
    } catch (const std::exception& e) {
      throw std::runtime_error("spec file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return spec;
}

void ExperimentReport::write_csv(std::ostream& os) const {
  os << "arch,width,depth,dataset,seed_a,seed_b,phase,metric,split,barrier\n";
  os.precision(17);
  for (const ReportRow& r : rows) {
    os << r.arch << ',' << r.width << ',' << r.depth << ',' << r.dataset << ',' << r.seed_a
       << ',' << r.seed_b << ',' << r.phase << ',' << r.metric << ',' << r.split << ','
       << r.barrier << '\n';
  }
}

void ExperimentReport::write_json(std::ostream& os) const {
  nlohmann::json j;
  nlohmann::json jrows = nlohmann::json::array();
  for (const ReportRow& r : rows) {
    nlohmann::json row = {{"arch", r.arch},
                          {"width", r.width},
                          {"depth", r.depth},
                          {"dataset", r.dataset},
                          {"seed_a", r.seed_a},
                          {"seed_b", r.seed_b},
                          {"phase", r.phase},
                          {"metric", r.metric},
                          {"split", r.split},
                          {"barrier", r.barrier},
                          {"train_loss_a", r.train_loss_a},
                          {"train_err_a", r.train_err_a},
                          {"test_loss_a", r.test_loss_a},
                          {"test_err_a", r.test_err_a},
                          {"train_loss_b", r.train_loss_b},
                          {"train_err_b", r.train_err_b},
                          {"test_loss_b", r.test_loss_b},
                          {"test_err_b", r.test_err_b}};
    if (!r.extra_name.empty()) row[r.extra_name] = r.extra;
    jrows.push_back(row);
  }
  j["rows"] = jrows;
  j["summary"] = summary;
  j["notes"] = notes;
  for (const auto& [name, values] : series) j["series"][name] = values;
  os << j.dump(2) << '\n';
}

double ExperimentReport::mean_barrier(const std::string& phase, Metric m, SplitKind s) const {
  double sum = 0.0;
  int count = 0;
  for (const ReportRow& r : rows) {
    if (r.phase == phase && r.metric == to_string(m) && r.split == to_string(s)) {
      sum += r.barrier;
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("mean_barrier: no rows for phase " + phase);
  return sum / count;
}

TrainConfig train_config_for(const ExperimentSpec& spec, const Dataset& ds) {
  TrainConfig cfg;
  if (spec.arch == ArchKind::Mlp) {
    const bool mnist_like = spec.dataset.kind != DatasetKind::Cifar10;
    cfg = TrainConfig::mlp_defaults(mnist_like);
  } else {
    cfg = TrainConfig::cnn_defaults();
  }
  (void)ds;
  if (spec.max_epochs > 0) cfg.max_epochs = spec.max_epochs;
  if (spec.lr > 0.0) cfg.lr = spec.lr;
  if (spec.stop_loss > 0.0) cfg.stop_loss = spec.stop_loss;
  if (spec.batch_size > 0) cfg.batch_size = spec.batch_size;
  return cfg;
}

namespace {

uint64_t config_stream(uint64_t master, int width, int depth) {
  return derive_seed(master, (static_cast<uint64_t>(width) << 20) ^
                                 static_cast<uint64_t>(depth));
}

Network build_for(const ExperimentSpec& spec, const Dataset& ds, int width, int depth,
                  uint64_t init_seed) {
  if (spec.arch == ArchKind::Mlp)
    return build_mlp(depth, width, ds.dim(), ds.num_classes, init_seed);
  return build_shallow_cnn(depth, width, ds.shape, ds.num_classes, init_seed);
}

struct EndpointStats {
  EvalResult train, test;
};

EndpointStats endpoint_stats(const Network& net, const Dataset& ds) {
  return {evaluate(net, ds, SplitKind::Train), evaluate(net, ds, SplitKind::Test)};
}

void fill_endpoints(ReportRow& row, const EndpointStats& a, const EndpointStats& b) {
  row.train_loss_a = a.train.loss;
  row.train_err_a = a.train.error;
  row.test_loss_a = a.test.loss;
  row.test_err_a = a.test.error;
  row.train_loss_b = b.train.loss;
  row.train_err_b = b.train.error;
  row.test_loss_b = b.test.loss;
  row.test_err_b = b.test.error;
}

double metric_of(const EvalResult& e, Metric m) {
  return m == Metric::CeLoss ? e.loss : e.error;
}

// midpoint barrier from cached endpoint evaluations
double midpoint_from(const EvalResult& mid, const EvalResult& ea, const EvalResult& eb,
                     Metric m) {
  const double l1 = metric_of(ea, m), l0 = metric_of(eb, m);
  return std::max(metric_of(mid, m) - (l0 + 0.5 * (l1 - l0)), 0.0);
}

}  // namespace

std::vector<TrainedNet> real_world_set(const ExperimentSpec& spec, const Dataset& ds,
                                       int width, int depth) {
  const uint64_t stream = config_stream(spec.master_seed, width, depth);
  TrainConfig base_cfg = train_config_for(spec, ds);
  std::vector<TrainedNet> out(static_cast<size_t>(spec.n_seeds));
  std::vector<std::string> failures(static_cast<size_t>(spec.n_seeds));
  parallel_for(spec.n_seeds, [&](int i) {
    TrainedNet& tn = out[static_cast<size_t>(i)];
    tn.init_seed = derive_seed(stream, 1000 + static_cast<uint64_t>(i));
    tn.train_seed = derive_seed(stream, 2000 + static_cast<uint64_t>(i));
    TrainConfig cfg = base_cfg;
    cfg.seed = tn.train_seed;
    try {
      Network init = build_for(spec, ds, width, depth, tn.init_seed);
      tn.net = train(init, ds, cfg, &tn.stats);
    } catch (const std::exception& e) {
      failures[static_cast<size_t>(i)] = e.what();
    }
  });
  for (int i = 0; i < spec.n_seeds; ++i) {
    if (!failures[static_cast<size_t>(i)].empty())
      throw std::runtime_error("training failed for seed index " + std::to_string(i) + ": " +
                               failures[static_cast<size_t>(i)]);
  }
  return out;
}

std::vector<Network> model_set(const Network& theta, int n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("model_set: n must be >= 2");
  std::vector<Network> out;
  out.reserve(static_cast<size_t>(n));
  out.push_back(theta);
  for (int i = 1; i < n; ++i)
    out.push_back(apply(theta, random_perm(theta, derive_seed(seed, static_cast<uint64_t>(i)))));
  return out;
}

namespace {

// pairwise midpoint barrier rows for one set of networks
void emit_pair_rows(ExperimentReport& report, const ExperimentSpec& spec,
                    const std::vector<Network>& nets, const std::vector<uint64_t>& seeds,
                    const Dataset& ds, int width, int depth, const std::string& phase,
                    Metric metric, SplitKind split) {
  const int n = static_cast<int>(nets.size());
  std::vector<EndpointStats> stats(static_cast<size_t>(n));
  parallel_for(n, [&](int i) { stats[static_cast<size_t>(i)] = endpoint_stats(nets[static_cast<size_t>(i)], ds); });

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> values(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int k) {
    auto [i, j] = pairs[static_cast<size_t>(k)];
    const EvalResult mid = evaluate(
        interpolate_weighted(nets[static_cast<size_t>(i)], nets[static_cast<size_t>(j)], 0.5, 0.5),
        ds, split);
    const EvalResult& ea = split == SplitKind::Train ? stats[static_cast<size_t>(i)].train
                                                     : stats[static_cast<size_t>(i)].test;
    const EvalResult& eb = split == SplitKind::Train ? stats[static_cast<size_t>(j)].train
                                                     : stats[static_cast<size_t>(j)].test;
    values[static_cast<size_t>(k)] = midpoint_from(mid, ea, eb, metric);
  });
  for (size_t k = 0; k < pairs.size(); ++k) {
    auto [i, j] = pairs[k];
    ReportRow row;
    row.arch = to_string(spec.arch);
    row.dataset = spec.dataset.name();
    row.width = width;
    row.depth = depth;
    row.seed_a = seeds[static_cast<size_t>(i)];
    row.seed_b = seeds[static_cast<size_t>(j)];
    row.phase = phase;
    row.metric = to_string(metric);
    row.split = to_string(split);
    row.barrier = values[k];
    fill_endpoints(row, stats[static_cast<size_t>(i)], stats[static_cast<size_t>(j)]);
    report.rows.push_back(row);
  }
}

SaConfig sa_config_from(const ExperimentSpec& spec, int n_models, uint64_t seed) {
  SaConfig cfg;
  cfg.steps = spec.sa_steps;
  cfg.t_max = spec.sa_tmax;
  cfg.t_min = spec.sa_tmin;
  cfg.swaps_per_layer = spec.sa_swaps;
  cfg.n_models = n_models;
  cfg.seed = seed;
  cfg.metric = spec.metric;
  cfg.objective = SaObjective::AverageError;  // the paper's reported variant
  cfg.pin_first = true;
  return cfg;
}

// search applied to a whole set; returns the permuted networks
std::vector<Network> search_set(const ExperimentSpec& spec, const std::vector<Network>& nets,
                                const Dataset& ds, uint64_t seed) {
  switch (spec.search) {
    case SearchMethod::Sa: {
      const SearchResult res = sa_search(nets, ds, sa_config_from(spec, static_cast<int>(nets.size()), seed));
      std::vector<Network> out;
      out.reserve(nets.size());
      for (size_t i = 0; i < nets.size(); ++i) out.push_back(apply(nets[i], res.perms[i]));
      return out;
    }
    case SearchMethod::SaReduced: {
      // disjoint pairs (0,1), (2,3), ...: permute the first of each pair
      std::vector<Network> out = nets;
      for (size_t i = 0; i + 1 < nets.size(); i += 2) {
        SaConfig cfg = sa_config_from(spec, 2, derive_seed(seed, i));
        const SearchResult res = sa_search_reduced(nets[i], nets[i + 1], ds, cfg);
        out[i] = apply(nets[i], res.perms[0]);
      }
      return out;
    }
    case SearchMethod::Fd: {
      std::vector<Network> out = nets;
      for (size_t i = 0; i + 1 < nets.size(); i += 2)
        out[i] = apply(nets[i], fd_align(nets[i], nets[i + 1], ds));
      return out;
    }
    case SearchMethod::Brute: {
      std::vector<Network> out = nets;
      for (size_t i = 0; i + 1 < nets.size(); i += 2) {
        const SearchResult res = brute_force_match(nets[i], nets[i + 1], ds, 8, spec.metric,
                                                   spec.split);
        out[i] = apply(nets[i], res.perms[0]);
      }
      return out;
    }
    default:
      return nets;
  }
}

}  // namespace

ExperimentReport compare_s_sprime(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset ds = spec.dataset.realize();
  ExperimentReport report;
  for (int width : spec.widths) {
    for (int depth : spec.depths) {
      const std::vector<TrainedNet> trained = real_world_set(spec, ds, width, depth);
      std::vector<Network> s_set;
      std::vector<uint64_t> s_seeds;
      for (const TrainedNet& tn : trained) {
        s_set.push_back(tn.net);
        s_seeds.push_back(tn.init_seed);
      }
      const uint64_t sprime_seed = derive_seed(config_stream(spec.master_seed, width, depth), 77);
      const std::vector<Network> sprime = model_set(s_set[0], spec.n_seeds, sprime_seed);
      std::vector<uint64_t> sprime_seeds;
      sprime_seeds.push_back(s_seeds[0]);  // the seeding network's id is recorded
      for (int i = 1; i < spec.n_seeds; ++i)
        sprime_seeds.push_back(derive_seed(sprime_seed, static_cast<uint64_t>(i)));

      emit_pair_rows(report, spec, s_set, s_seeds, ds, width, depth, "S_before", spec.metric,
                     spec.split);
      emit_pair_rows(report, spec, sprime, sprime_seeds, ds, width, depth, "Sprime_before",
                     spec.metric, spec.split);

      if (spec.search != SearchMethod::None) {
        const uint64_t search_seed = derive_seed(config_stream(spec.master_seed, width, depth), 88);
        const std::vector<Network> s_after = search_set(spec, s_set, ds, search_seed);
        const std::vector<Network> sprime_after =
            search_set(spec, sprime, ds, derive_seed(search_seed, 1));
        emit_pair_rows(report, spec, s_after, s_seeds, ds, width, depth, "S_after", spec.metric,
                       spec.split);
        emit_pair_rows(report, spec, sprime_after, sprime_seeds, ds, width, depth,
                       "Sprime_after", spec.metric, spec.split);
      }

      const std::string key = "w" + std::to_string(width) + "_d" + std::to_string(depth);
      report.summary["mean_S_before_" + key] =
          report.mean_barrier("S_before", spec.metric, spec.split);
      report.summary["mean_Sprime_before_" + key] =
          report.mean_barrier("Sprime_before", spec.metric, spec.split);
    }
  }
  report.notes.push_back("master_seed=" + std::to_string(spec.master_seed));
  return report;
}

namespace {

ExperimentReport sweep(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset ds = spec.dataset.realize();
  ExperimentReport report;
  ExperimentSpec pair_spec = spec;
  pair_spec.n_seeds = 2 * spec.pairs;  // disjoint pairs
  for (int width : spec.widths) {
    for (int depth : spec.depths) {
      const std::vector<TrainedNet> trained = real_world_set(pair_spec, ds, width, depth);
      for (int p = 0; p < spec.pairs; ++p) {
        const TrainedNet& a = trained[static_cast<size_t>(2 * p)];
        const TrainedNet& b = trained[static_cast<size_t>(2 * p + 1)];
        const EndpointStats sa = endpoint_stats(a.net, ds);
        const EndpointStats sb = endpoint_stats(b.net, ds);
        for (SplitKind split : {SplitKind::Train, SplitKind::Test}) {
          const EvalResult mid =
              evaluate(interpolate_weighted(a.net, b.net, 0.5, 0.5), ds, split);
          for (Metric metric : {Metric::CeLoss, Metric::TopOneError}) {
            ReportRow row;
            row.arch = to_string(spec.arch);
            row.dataset = spec.dataset.name();
            row.width = width;
            row.depth = depth;
            row.seed_a = a.init_seed;
            row.seed_b = b.init_seed;
            row.phase = "before";
            row.metric = to_string(metric);
            row.split = to_string(split);
            const EvalResult& ea = split == SplitKind::Train ? sa.train : sa.test;
            const EvalResult& eb = split == SplitKind::Train ? sb.train : sb.test;
            row.barrier = midpoint_from(mid, ea, eb, metric);
            fill_endpoints(row, sa, sb);
            report.rows.push_back(row);
          }
        }
        if (spec.search != SearchMethod::None) {
          const uint64_t sseed =
              derive_seed(config_stream(spec.master_seed, width, depth), 300 + static_cast<uint64_t>(p));
          const std::vector<Network> after = search_set(spec, {a.net, b.net}, ds, sseed);
          const EndpointStats sa2 = endpoint_stats(after[0], ds);
          for (SplitKind split : {SplitKind::Train, SplitKind::Test}) {
            const EvalResult mid =
                evaluate(interpolate_weighted(after[0], after[1], 0.5, 0.5), ds, split);
            for (Metric metric : {Metric::CeLoss, Metric::TopOneError}) {
              ReportRow row;
              row.arch = to_string(spec.arch);
              row.dataset = spec.dataset.name();
              row.width = width;
              row.depth = depth;
              row.seed_a = a.init_seed;
              row.seed_b = b.init_seed;
              row.phase = "after";
              row.metric = to_string(metric);
              row.split = to_string(split);
              const EvalResult& ea = split == SplitKind::Train ? sa2.train : sa2.test;
              const EvalResult& eb = split == SplitKind::Train ? sb.train : sb.test;
              row.barrier = midpoint_from(mid, ea, eb, metric);
              fill_endpoints(row, sa2, sb);
              report.rows.push_back(row);
            }
          }
        }
      }
      const std::string key = "w" + std::to_string(width) + "_d" + std::to_string(depth);
      double sum = 0.0;
      int count = 0;
      for (const ReportRow& r : report.rows) {
        if (r.width == width && r.depth == depth && r.phase == "before" &&
            r.metric == to_string(spec.metric) && r.split == to_string(spec.split)) {
          sum += r.barrier;
          ++count;
        }
      }
      report.summary["mean_before_" + key] = sum / std::max(count, 1);
    }
  }
  report.notes.push_back("master_seed=" + std::to_string(spec.master_seed));
  return report;
}

}  // namespace

ExperimentReport width_sweep(const ExperimentSpec& spec) { return sweep(spec); }
ExperimentReport depth_sweep(const ExperimentSpec& spec) { return sweep(spec); }

ExperimentReport noisy_label_experiment(const ExperimentSpec& spec,
                                        const std::vector<double>& fractions) {
  spec.validate();
  std::vector<double> sorted = fractions;
  std::sort(sorted.begin(), sorted.end());
  const Dataset base = spec.dataset.realize();
  ExperimentReport report;
  const int width = spec.widths.front();
  const int depth = spec.depths.front();
  for (double fraction : sorted) {
    const Dataset ds =
        corrupt_labels(base, fraction, derive_seed(spec.master_seed, 0x4e0 + static_cast<uint64_t>(fraction * 1e6)));
    ExperimentSpec pair_spec = spec;
    pair_spec.n_seeds = 2 * spec.pairs;
    const std::vector<TrainedNet> trained = real_world_set(pair_spec, ds, width, depth);
    for (int p = 0; p < spec.pairs; ++p) {
      const TrainedNet& a = trained[static_cast<size_t>(2 * p)];
      const TrainedNet& b = trained[static_cast<size_t>(2 * p + 1)];
      const EndpointStats sa = endpoint_stats(a.net, ds);
      const EndpointStats sb = endpoint_stats(b.net, ds);
      for (SplitKind split : {SplitKind::Train, SplitKind::Test}) {
        const EvalResult mid =
            evaluate(interpolate_weighted(a.net, b.net, 0.5, 0.5), ds, split);
        ReportRow row;
        row.arch = to_string(spec.arch);
        row.dataset = spec.dataset.name();
        row.width = width;
        row.depth = depth;
        row.seed_a = a.init_seed;
        row.seed_b = b.init_seed;
        row.phase = "noisy";
        row.metric = to_string(spec.metric);
        row.split = to_string(split);
        const EvalResult& ea = split == SplitKind::Train ? sa.train : sa.test;
        const EvalResult& eb = split == SplitKind::Train ? sb.train : sb.test;
        row.barrier = midpoint_from(mid, ea, eb, spec.metric);
        row.extra = fraction;
        row.extra_name = "fraction";
        fill_endpoints(row, sa, sb);
        report.rows.push_back(row);
      }
    }
  }
  report.notes.push_back("master_seed=" + std::to_string(spec.master_seed));
  return report;
}

double default_xi_rule(int h, int d) {
  // choose xi so the expected occupied-cell population is about sqrt(h):
  // cells_per_dim = h^(1/(2d)), xi = (1/sqrt(d)) / cells_per_dim
  const double cells = std::max(1.0, std::pow(static_cast<double>(h), 1.0 / (2.0 * d)));
  return (1.0 / std::sqrt(static_cast<double>(d))) / cells;
}

ExperimentReport theorem1_check(int d, const std::vector<int>& h_list, int trials,
                                int probe_count, const XiRule& xi_rule, uint64_t seed) {
  if (trials < 5) throw std::invalid_argument("theorem1_check: trials must be >= 5");
  if (!std::is_sorted(h_list.begin(), h_list.end()))
    throw std::invalid_argument("theorem1_check: h_list must be ascending");
  ExperimentReport report;
  std::vector<double> log_h, log_median;
  for (int h : h_list) {
    const double xi = xi_rule(h, d);
    if (!(xi > 0.0)) throw std::invalid_argument("theorem1_check: invalid xi");
    std::vector<double> devs;
    double leftover_frac = 0.0;
    for (int t = 0; t < trials; ++t) {
      const uint64_t s = derive_seed(seed, (static_cast<uint64_t>(h) << 20) ^ static_cast<uint64_t>(t));
      const Network net1 = build_mlp(1, h, d, 1, derive_seed(s, 1), /*with_bias=*/false);
      const Network net2 = build_mlp(1, h, d, 1, derive_seed(s, 2), /*with_bias=*/false);
      const GridMatchResult gm = grid_bucket_match(net1.layers[0].weight,
                                                   net2.layers[0].weight, h, d, xi,
                                                   derive_seed(s, 3));
      Permutation perm;
      perm.per_layer.push_back(gm.perm);
      const Network net2p = apply(net2, perm);
      const Network mid = interpolate_weighted(net1, net2p, 0.5, 0.5);
      leftover_frac += static_cast<double>(gm.leftovers) / h;

      Rng probe_rng(derive_seed(s, 4));
      std::vector<float> x(static_cast<size_t>(d));
      for (int p = 0; p < probe_count; ++p) {
        double norm = 0.0;
        for (int k = 0; k < d; ++k) {
          const double g = probe_rng.gaussian();
          x[static_cast<size_t>(k)] = static_cast<float>(g);
          norm += g * g;
        }
        const double scale = std::sqrt(static_cast<double>(d) / std::max(norm, 1e-300));
        for (int k = 0; k < d; ++k)
          x[static_cast<size_t>(k)] = static_cast<float>(x[static_cast<size_t>(k)] * scale);
        const float f1 = forward(net1, x, 1)[0];
        const float f2 = forward(net2, x, 1)[0];
        const float fm = forward(mid, x, 1)[0];
        devs.push_back(std::abs(static_cast<double>(fm) - 0.5 * f1 - 0.5 * f2));
      }
    }
    std::sort(devs.begin(), devs.end());
    const double median = devs[devs.size() / 2];
    const double max_dev = devs.back();
    ReportRow row;
    row.arch = "mlp";
    row.dataset = "theorem1";
    row.width = h;
    row.depth = 1;
    row.phase = "median_deviation";
    row.metric = "deviation";
    row.split = "none";
    row.barrier = median;
    row.extra = xi;
    row.extra_name = "xi";
    report.rows.push_back(row);
    report.summary["median_h" + std::to_string(h)] = median;
    report.summary["max_h" + std::to_string(h)] = max_dev;
    report.summary["leftover_frac_h" + std::to_string(h)] = leftover_frac / trials;
    log_h.push_back(std::log(static_cast<double>(h)));
    log_median.push_back(std::log(std::max(median, 1e-300)));
  }
  // least-squares slope of log(median) on log(h)
  const size_t n = log_h.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += log_h[i];
    my += log_median[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (log_h[i] - mx) * (log_median[i] - my);
    sxx += (log_h[i] - mx) * (log_h[i] - mx);
  }
  report.summary["loglog_slope"] = sxy / sxx;
  report.summary["theorem_rate"] = -1.0 / (2.0 * d + 4.0);
  report.notes.push_back("deviation evaluated at alpha=0.5 on random probes with ||x||_2 = sqrt(d)");
  return report;
}

EvalResult ensemble_eval(const Network& net_a, const Network& net_b, const Dataset& ds,
                         EnsembleMethod method, SplitKind split) {
  check_same_arch(net_a, net_b);
  switch (method) {
    case EnsembleMethod::NaiveAvg:
      return evaluate(average({net_a, net_b}), ds, split);
    case EnsembleMethod::FdAvg: {
      const Permutation p = fd_align(net_a, net_b, ds);
      return evaluate(average({apply(net_a, p), net_b}), ds, split);
    }
    case EnsembleMethod::LogitEnsemble: {
      const DataSplit& s = ds.split(split);
      const std::vector<float> la = forward(net_a, s.x.data(), s.n, ds.shape);
      const std::vector<float> lb = forward(net_b, s.x.data(), s.n, ds.shape);
      std::vector<float> mean(la.size());
      for (size_t i = 0; i < la.size(); ++i)
        mean[i] = static_cast<float>((static_cast<double>(la[i]) + lb[i]) / 2.0);
      return evaluate_logits(mean, s.y, s.n, net_a.num_classes);
    }
  }
  throw std::logic_error("ensemble_eval: unknown method");
}

ExperimentReport sa_scaling_study(const ExperimentSpec& spec, const std::vector<int>& step_list) {
  spec.validate();
  if (!std::is_sorted(step_list.begin(), step_list.end()) || step_list.empty())
    throw std::invalid_argument("sa_scaling_study: step_list must be ascending");
  const Dataset ds = spec.dataset.realize();
  const int width = spec.widths.front();
  const int depth = spec.depths.front();
  ExperimentSpec pair_spec = spec;
  pair_spec.n_seeds = 2;
  const std::vector<TrainedNet> trained = real_world_set(pair_spec, ds, width, depth);

  ExperimentReport report;
  const uint64_t chain_seed = derive_seed(config_stream(spec.master_seed, width, depth), 55);
  double before = 0.0;
  std::vector<double> barriers;
  for (size_t bi = 0; bi < step_list.size(); ++bi) {
    SaConfig cfg = sa_config_from(spec, 2, chain_seed);
    cfg.steps = step_list[bi];
    // fixed horizon: every budget runs a prefix of the same chain
    cfg.cooling_horizon = step_list.back();
    const SearchResult res = sa_search_reduced(trained[0].net, trained[1].net, ds, cfg);
    before = res.initial_energy;
    barriers.push_back(res.final_energy);
    ReportRow row;
    row.arch = to_string(spec.arch);
    row.dataset = spec.dataset.name();
    row.width = width;
    row.depth = depth;
    row.seed_a = trained[0].init_seed;
    row.seed_b = trained[1].init_seed;
    row.phase = "after_search";
    row.metric = to_string(spec.metric);
    row.split = to_string(spec.split);
    row.barrier = res.final_energy;
    row.extra = static_cast<double>(step_list[bi]);
    row.extra_name = "steps";
    report.rows.push_back(row);
  }
  ReportRow row0;
  row0.arch = to_string(spec.arch);
  row0.dataset = spec.dataset.name();
  row0.width = width;
  row0.depth = depth;
  row0.seed_a = trained[0].init_seed;
  row0.seed_b = trained[1].init_seed;
  row0.phase = "before";
  row0.metric = to_string(spec.metric);
  row0.split = to_string(spec.split);
  row0.barrier = before;
  report.rows.insert(report.rows.begin(), row0);

  for (size_t i = 1; i < barriers.size(); ++i) {
    const std::string key = "delta_" + std::to_string(step_list[i - 1]) + "_to_" +
                            std::to_string(step_list[i]);
    report.summary[key] = barriers[i] > 0 ? barriers[i - 1] / barriers[i] : 0.0;
  }
  report.series["steps"] = std::vector<double>(step_list.begin(), step_list.end());
  report.series["barrier"] = barriers;
  return report;
}

ExperimentReport barrier_histograms(const ExperimentSpec& spec, int n_nets) {
  spec.validate();
  if (n_nets < 3) throw std::invalid_argument("barrier_histograms: n_nets must be >= 3");
  const Dataset ds = spec.dataset.realize();
  const int width = spec.widths.front();
  const int depth = spec.depths.front();
  ExperimentSpec set_spec = spec;
  set_spec.n_seeds = n_nets;
  const std::vector<TrainedNet> trained = real_world_set(set_spec, ds, width, depth);
  std::vector<Network> nets;
  std::vector<uint64_t> seeds;
  for (const TrainedNet& tn : trained) {
    nets.push_back(tn.net);
    seeds.push_back(tn.init_seed);
  }

  const auto matrix = pairwise_barriers(nets, ds, spec.metric, spec.split);

  std::vector<std::pair<int, int>> selected;
  if (spec.iid_pairs) {
    // one network from each half: an i.i.d. pair sample
    const int half = n_nets / 2;
    for (int i = 0; i < half; ++i)
      for (int j = half; j < n_nets; ++j) selected.emplace_back(i, j);
  } else {
    for (int i = 0; i < n_nets; ++i)
      for (int j = i + 1; j < n_nets; ++j) selected.emplace_back(i, j);
  }

  ExperimentReport report;
  std::vector<double> direct, indirect;
  for (auto [i, j] : selected) {
    ReportRow row;
    row.arch = to_string(spec.arch);
    row.dataset = spec.dataset.name();
    row.width = width;
    row.depth = depth;
    row.seed_a = seeds[static_cast<size_t>(i)];
    row.seed_b = seeds[static_cast<size_t>(j)];
    row.metric = to_string(spec.metric);
    row.split = to_string(spec.split);
    row.phase = "direct";
    row.barrier = matrix[static_cast<size_t>(i)][static_cast<size_t>(j)];
    report.rows.push_back(row);
    direct.push_back(row.barrier);

    row.phase = "indirect";
    row.barrier = indirect_barrier(matrix, i, j);
    report.rows.push_back(row);
    indirect.push_back(row.barrier);
  }

  const bool can_brute = nets[0].hidden_layers() == 1 && nets[0].hidden_width(0) <= 8;
  if (can_brute || spec.search != SearchMethod::None) {
    for (auto [i, j] : selected) {
      double after;
      if (can_brute) {
        after = brute_force_match(nets[static_cast<size_t>(i)], nets[static_cast<size_t>(j)], ds, 8,
                                  spec.metric, spec.split)
                    .final_energy;
      } else {
        SaConfig cfg = sa_config_from(spec, 2,
                                      derive_seed(spec.master_seed, 900 + static_cast<uint64_t>(i) * 131 + static_cast<uint64_t>(j)));
        after = sa_search_reduced(nets[static_cast<size_t>(i)], nets[static_cast<size_t>(j)], ds, cfg)
                    .final_energy;
      }
      ReportRow row;
      row.arch = to_string(spec.arch);
      row.dataset = spec.dataset.name();
      row.width = width;
      row.depth = depth;
      row.seed_a = seeds[static_cast<size_t>(i)];
      row.seed_b = seeds[static_cast<size_t>(j)];
      row.metric = to_string(spec.metric);
      row.split = to_string(spec.split);
      row.phase = "after_search";
      row.barrier = after;
      report.rows.push_back(row);
    }
  }

  // 20-bin histograms over [0, max]
  auto histogram = [](const std::vector<double>& values) {
    std::vector<double> bins(20, 0.0);
    if (values.empty()) return bins;
    const double hi = std::max(*std::max_element(values.begin(), values.end()), 1e-12);
    for (double v : values) {
      int b = static_cast<int>(std::floor(std::max(v, 0.0) / hi * 20.0));
      bins[static_cast<size_t>(std::clamp(b, 0, 19))] += 1.0;
    }
    return bins;
  };
  report.series["hist_direct"] = histogram(direct);
  report.series["hist_indirect"] = histogram(indirect);
  report.summary["n_nets"] = n_nets;
  return report;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  if (spec.experiment == "width_sweep") return width_sweep(spec);
  if (spec.experiment == "depth_sweep") return depth_sweep(spec);
  if (spec.experiment == "s_sprime") return compare_s_sprime(spec);
  if (spec.experiment == "noisy_labels") return noisy_label_experiment(spec, spec.fractions);
  if (spec.experiment == "sa_scaling") return sa_scaling_study(spec, spec.step_list);
  if (spec.experiment == "theorem1")
    return theorem1_check(spec.t1_dim, spec.h_list, spec.t1_trials, spec.t1_probes,
                          default_xi_rule, spec.master_seed);
  if (spec.experiment == "histograms") return barrier_histograms(spec, spec.n_nets);
  if (spec.experiment == "ensemble") {
    const Dataset ds = spec.dataset.realize();
    ExperimentSpec pair_spec = spec;
    pair_spec.n_seeds = 2;
    const std::vector<TrainedNet> trained =
        real_world_set(pair_spec, ds, spec.widths.front(), spec.depths.front());
    ExperimentReport report;
    for (auto [method, name] :
         {std::pair{EnsembleMethod::NaiveAvg, "naive-avg"},
          std::pair{EnsembleMethod::FdAvg, "fd-avg"},
          std::pair{EnsembleMethod::LogitEnsemble, "logit-ensemble"}}) {
      const EvalResult r = ensemble_eval(trained[0].net, trained[1].net, ds, method,
                                         SplitKind::Test);
      ReportRow row;
      row.arch = to_string(spec.arch);
      row.dataset = spec.dataset.name();
      row.width = spec.widths.front();
      row.depth = spec.depths.front();
      row.seed_a = trained[0].init_seed;
      row.seed_b = trained[1].init_seed;
      row.phase = name;
      row.metric = "error";
      row.split = "test";
      row.barrier = r.error;
      row.extra = r.loss;
      row.extra_name = "loss";
      report.rows.push_back(row);
    }
    return report;
  }
  throw std::invalid_argument("unknown experiment: " + spec.experiment);
}

}  // namespace lmc
