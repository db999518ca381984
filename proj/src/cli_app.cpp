#include "lmc/cli_app.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <utility>

#include "CLI11.hpp"
#include "lmc/barrier.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/dataset.hpp"
#include "lmc/lab.hpp"
#include "lmc/net.hpp"
#include "lmc/perm.hpp"
#include "lmc/rng.hpp"
#include "lmc/search.hpp"
#include "lmc/threading.hpp"

namespace lmc {

namespace {

// dataset argument: kind[:args], e.g. "digits", "mnist:/data/mnist",
// "blobs:dim=2,classes=2,sep=4", "cifar10:/data/cifar"
DatasetDesc parse_dataset_arg(const std::string& arg) {
  DatasetDesc desc;
  std::string kind = arg, rest;
  const size_t colon = arg.find(':');
  if (colon != std::string::npos) {
    kind = arg.substr(0, colon);
    rest = arg.substr(colon + 1);
  }
  if (kind == "mnist") {
    desc.kind = DatasetKind::Mnist;
    desc.dir = rest;
  } else if (kind == "cifar10") {
    desc.kind = DatasetKind::Cifar10;
    desc.dir = rest;
  } else if (kind == "digits" || kind == "synth-digits") {
    desc.kind = DatasetKind::SynthDigits;
  } else if (kind == "blobs") {
    desc.kind = DatasetKind::Blobs;
    std::stringstream ss(rest);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError("--dataset", "expected key=value in blobs args");
      const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
      if (k == "dim") desc.blob_dim = std::stoi(v);
      else if (k == "classes") desc.blob_classes = std::stoi(v);
      else if (k == "sep") desc.blob_separation = std::stod(v);
      else if (k == "seed") desc.seed = std::stoull(v);
      else throw CLI::ValidationError("--dataset", "unknown blobs key: " + k);
    }
  } else {
    throw CLI::ValidationError("--dataset", "unknown dataset kind: " + kind);
  }
  return desc;
}

struct GlobalOpts {
  uint64_t seed = 42;
  int threads = 1;
  std::string out_dir = ".";
  std::string metric = "loss";
  std::string split = "train";
  int n_train = 4096, n_test = 1024;
  bool no_normalize = false;
  uint64_t data_seed = 1;

  DatasetDesc dataset(const std::string& arg) const {
    DatasetDesc d = parse_dataset_arg(arg);
    d.n_train = n_train;
    d.n_test = n_test;
    d.apply_normalize = !no_normalize;
    d.seed = data_seed;
    return d;
  }
  std::string out_path(const std::string& name) const {
    return (std::filesystem::path(out_dir) / name).string();
  }
};

void write_text_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  fn(f);
  if (!f) throw std::runtime_error("failed writing: " + path);
}

void write_report(const GlobalOpts& g, const ExperimentReport& report,
                  const std::string& stem) {
  std::filesystem::create_directories(g.out_dir);
  write_text_file(g.out_path(stem + ".csv"), [&](std::ostream& os) { report.write_csv(os); });
  write_text_file(g.out_path(stem + ".json"), [&](std::ostream& os) { report.write_json(os); });
  std::cout << "wrote " << g.out_path(stem + ".csv") << " and " << g.out_path(stem + ".json")
            << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"lmclab - loss barriers and hidden-unit permutation search"};
  app.require_subcommand(1);
  app.fallthrough();

  auto g = std::make_shared<GlobalOpts>();
  app.add_option("--seed", g->seed, "master seed");
  app.add_option("--threads", g->threads, "worker threads (1 = bit-reproducible)")
      ->envname("LMCLAB_THREADS");
  app.add_option("--out-dir", g->out_dir, "output directory")->envname("LMCLAB_OUT_DIR");
  app.add_option("--metric", g->metric, "barrier metric: loss|error");
  app.add_option("--split", g->split, "evaluation split: train|test");
  app.add_option("--n-train", g->n_train, "train subsample size");
  app.add_option("--n-test", g->n_test, "test subsample size");
  app.add_flag("--no-normalize", g->no_normalize, "skip per-channel standardization");
  app.add_option("--data-seed", g->data_seed, "dataset generation/subsample seed");

  std::vector<std::pair<CLI::App*, std::function<void()>>> actions;
  auto on = [&actions](CLI::App* cmd, std::function<void()> fn) {
    actions.emplace_back(cmd, std::move(fn));
  };

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a network and save a checkpoint");
  train_cmd->fallthrough();
  struct TrainOpts {
    std::string arch = "mlp", dataset, out;
    int width = 16, depth = 1;
    double lr = 0, momentum = -1, stop_loss = 0;
    int epochs = 0, batch = 0;
    std::string schedule;
    bool no_bias = false;
  };
  auto topt = std::make_shared<TrainOpts>();
  train_cmd->add_option("--arch", topt->arch, "mlp|cnn");
  train_cmd->add_option("--width", topt->width, "hidden width / channels");
  train_cmd->add_option("--depth", topt->depth, "hidden layers");
  train_cmd->add_option("--dataset", topt->dataset)->required();
  train_cmd->add_option("--out", topt->out, "checkpoint path")->required();
  train_cmd->add_option("--lr", topt->lr);
  train_cmd->add_option("--epochs", topt->epochs);
  train_cmd->add_option("--batch", topt->batch);
  train_cmd->add_option("--momentum", topt->momentum);
  train_cmd->add_option("--stop-loss", topt->stop_loss);
  train_cmd->add_option("--schedule", topt->schedule, "fixed|cosine");
  train_cmd->add_flag("--no-bias", topt->no_bias);
  on(train_cmd, [g, topt] {
    const Dataset ds = g->dataset(topt->dataset).realize();
    const bool is_mlp = topt->arch != "cnn";
    TrainConfig cfg = is_mlp ? TrainConfig::mlp_defaults() : TrainConfig::cnn_defaults();
    if (topt->lr > 0) cfg.lr = topt->lr;
    if (topt->epochs > 0) cfg.max_epochs = topt->epochs;
    if (topt->batch > 0) cfg.batch_size = topt->batch;
    if (topt->momentum >= 0) cfg.momentum = topt->momentum;
    if (topt->stop_loss > 0) cfg.stop_loss = topt->stop_loss;
    if (!topt->schedule.empty())
      cfg.lr_schedule = topt->schedule == "cosine" ? LrSchedule::Cosine : LrSchedule::Fixed;
    cfg.seed = derive_seed(g->seed, 2);
    const uint64_t init_seed = derive_seed(g->seed, 1);
    Network net = is_mlp ? build_mlp(topt->depth, topt->width, ds.dim(), ds.num_classes,
                                     init_seed, !topt->no_bias)
                         : build_shallow_cnn(topt->depth, topt->width, ds.shape,
                                             ds.num_classes, init_seed, !topt->no_bias);
    CheckpointMeta meta;
    meta.has_train = true;
    meta.train_cfg = cfg;
    Network trained = train(net, ds, cfg, &meta.train_stats);
    save_checkpoint(topt->out, trained, meta);
    std::cout << "trained " << topt->arch << " width=" << topt->width
              << " depth=" << topt->depth << ": epochs=" << meta.train_stats.epochs_run
              << " train_loss=" << meta.train_stats.final_train_loss
              << " train_error=" << meta.train_stats.final_train_error << "\n"
              << "saved " << topt->out << "\n";
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->fallthrough();
  struct EvalOpts {
    std::string ckpt, dataset;
  };
  auto eopt = std::make_shared<EvalOpts>();
  eval_cmd->add_option("ckpt", eopt->ckpt)->required();
  eval_cmd->add_option("--dataset", eopt->dataset)->required();
  on(eval_cmd, [g, eopt] {
    const Network net = load_checkpoint(eopt->ckpt);
    const Dataset ds = g->dataset(eopt->dataset).realize();
    const EvalResult r = evaluate(net, ds, split_from_string(g->split));
    std::cout.precision(17);
    std::cout << "split=" << g->split << " loss=" << r.loss << " error=" << r.error << "\n";
  });

  // ---- barrier ----
  auto* barrier_cmd = app.add_subcommand("barrier", "loss profile and barrier for two checkpoints");
  barrier_cmd->fallthrough();
  struct BarrierOpts {
    std::string a, b, dataset, out;
    int grid = 11;
  };
  auto bopt = std::make_shared<BarrierOpts>();
  barrier_cmd->add_option("a", bopt->a)->required();
  barrier_cmd->add_option("b", bopt->b)->required();
  barrier_cmd->add_option("--dataset", bopt->dataset)->required();
  barrier_cmd->add_option("--grid", bopt->grid, "odd grid size >= 3");
  barrier_cmd->add_option("--out", bopt->out, "profile CSV path");
  on(barrier_cmd, [g, bopt] {
    const Network a = load_checkpoint(bopt->a);
    const Network b = load_checkpoint(bopt->b);
    const Dataset ds = g->dataset(bopt->dataset).realize();
    const Metric metric = metric_from_string(g->metric);
    const SplitKind split = split_from_string(g->split);
    const BarrierProfile prof = loss_profile(a, b, ds, bopt->grid, metric, split);
    const double full = barrier_value(prof);
    const double mid = midpoint_barrier(a, b, ds, metric, split);
    std::cout.precision(17);
    std::cout << "barrier " << full << "\n" << "midpoint " << mid << "\n";
    if (!bopt->out.empty())
      write_text_file(bopt->out, [&](std::ostream& os) { write_profile_csv(os, prof); });
  });

  // ---- permute ----
  auto* permute_cmd = app.add_subcommand("permute", "apply a permutation file to a checkpoint");
  permute_cmd->fallthrough();
  struct PermuteOpts {
    std::string ckpt, perm, out;
  };
  auto popt = std::make_shared<PermuteOpts>();
  permute_cmd->add_option("ckpt", popt->ckpt)->required();
  permute_cmd->add_option("perm", popt->perm)->required();
  permute_cmd->add_option("--out", popt->out)->required();
  on(permute_cmd, [popt] {
    CheckpointMeta meta;
    const Network net = load_checkpoint(popt->ckpt, &meta);
    const Permutation p = load_perm_json(popt->perm);
    meta.perm = p;
    save_checkpoint(popt->out, apply(net, p), meta);
    std::cout << "saved " << popt->out << "\n";
  });

  // ---- search ----
  auto* search_cmd = app.add_subcommand("search", "find a barrier-reducing permutation");
  search_cmd->fallthrough();
  struct SearchOpts {
    std::string method, dataset, out, trace, save_perm, save_permuted;
    std::vector<std::string> ckpts;
    int steps = 50000, swaps = 1, width_limit = 8;
    double tmax = 25000.0, tmin = 2.5, xi = 0.0;
    std::string objective = "sa1";
    int horizon = 0;
  };
  auto sopt = std::make_shared<SearchOpts>();
  search_cmd->add_option("method", sopt->method, "sa|sa-reduced|fd|grid|brute")->required();
  search_cmd->add_option("ckpts", sopt->ckpts, "checkpoints")->required()->expected(-2);
  search_cmd->add_option("--dataset", sopt->dataset);
  search_cmd->add_option("--steps", sopt->steps);
  search_cmd->add_option("--tmax", sopt->tmax);
  search_cmd->add_option("--tmin", sopt->tmin);
  search_cmd->add_option("--swaps", sopt->swaps);
  search_cmd->add_option("--horizon", sopt->horizon, "cooling horizon (0 = steps)");
  search_cmd->add_option("--objective", sopt->objective, "sa1|sa2");
  search_cmd->add_option("--width-limit", sopt->width_limit);
  search_cmd->add_option("--xi", sopt->xi, "grid cell half-width (0 = automatic)");
  search_cmd->add_option("--out", sopt->out, "result JSON path");
  search_cmd->add_option("--trace", sopt->trace, "energy trace CSV path");
  search_cmd->add_option("--save-perm", sopt->save_perm, "write found permutation JSON");
  search_cmd->add_option("--save-permuted", sopt->save_permuted,
                         "write permuted first checkpoint");
  on(search_cmd, [g, sopt] {
    std::vector<Network> nets;
    for (const std::string& path : sopt->ckpts) nets.push_back(load_checkpoint(path));
    const SearchMethod method = search_method_from_string(sopt->method);
    const Metric metric = metric_from_string(g->metric);

    SearchResult res;
    SaConfig cfg;
    cfg.steps = sopt->steps;
    cfg.t_max = sopt->tmax;
    cfg.t_min = sopt->tmin;
    cfg.swaps_per_layer = sopt->swaps;
    cfg.cooling_horizon = sopt->horizon;
    cfg.metric = metric;
    cfg.seed = g->seed;
    cfg.objective = sopt->objective == "sa2" ? SaObjective::AverageError
                                             : SaObjective::PairwiseBarrier;
    bool have_cfg = false;

    if (method == SearchMethod::Grid) {
      if (nets.size() != 2) throw std::runtime_error("search grid: needs exactly 2 checkpoints");
      const Network& a = nets[0];
      const Network& b = nets[1];
      check_same_arch(a, b);
      if (a.hidden_layers() != 1 || a.arch != ArchKind::Mlp)
        throw std::runtime_error("search grid: requires a 1-hidden-layer MLP");
      const int h = a.hidden_width(0);
      const int d = a.in_shape.dim();
      const double xi = sopt->xi > 0 ? sopt->xi : default_xi_rule(h, d);
      // match b's rows onto a's
      const GridMatchResult gm =
          grid_bucket_match(a.layers[0].weight, b.layers[0].weight, h, d, xi, g->seed);
      Permutation p;
      p.per_layer.push_back(gm.perm);
      res.perms.push_back(p);
      res.seed = g->seed;
      std::cout << "grid match: xi=" << gm.xi_used << (gm.xi_snapped ? " (snapped)" : "")
                << " leftovers=" << gm.leftovers << "\n";
    } else {
      if (sopt->dataset.empty())
        throw std::runtime_error("search " + sopt->method + ": --dataset is required");
      const Dataset ds = g->dataset(sopt->dataset).realize();
      const SplitKind split = split_from_string(g->split);
      switch (method) {
        case SearchMethod::Sa:
          cfg.n_models = static_cast<int>(nets.size());
          cfg.pin_first = true;
          res = sa_search(nets, ds, cfg);
          have_cfg = true;
          break;
        case SearchMethod::SaReduced:
          if (nets.size() != 2)
            throw std::runtime_error("search sa-reduced: needs exactly 2 checkpoints");
          res = sa_search_reduced(nets[0], nets[1], ds, cfg);
          have_cfg = true;
          break;
        case SearchMethod::Fd: {
          if (nets.size() != 2) throw std::runtime_error("search fd: needs exactly 2 checkpoints");
          const Permutation p = fd_align(nets[0], nets[1], ds);
          res.perms.push_back(p);
          res.initial_energy = midpoint_barrier(nets[0], nets[1], ds, metric, split);
          res.final_energy = midpoint_barrier(apply(nets[0], p), nets[1], ds, metric, split);
          break;
        }
        case SearchMethod::Brute:
          if (nets.size() != 2)
            throw std::runtime_error("search brute: needs exactly 2 checkpoints");
          res = brute_force_match(nets[0], nets[1], ds, sopt->width_limit, metric, split);
          break;
        default:
          throw std::runtime_error("search: unsupported method");
      }
      std::cout.precision(17);
      std::cout << "initial " << res.initial_energy << "\nfinal " << res.final_energy << "\n";
    }

    if (!sopt->out.empty())
      write_text_file(sopt->out, [&](std::ostream& os) {
        write_search_json(os, res, have_cfg ? &cfg : nullptr);
      });
    if (!sopt->trace.empty())
      write_text_file(sopt->trace, [&](std::ostream& os) { write_trace_csv(os, res); });
    if (!sopt->save_perm.empty()) save_perm_json(sopt->save_perm, res.perms.at(0));
    if (!sopt->save_permuted.empty()) {
      CheckpointMeta meta;
      meta.perm = res.perms.at(0);
      save_checkpoint(sopt->save_permuted, apply(nets[0], res.perms.at(0)), meta);
    }
  });

  // ---- experiment ----
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment spec file");
  exp_cmd->fallthrough();
  struct ExpOpts {
    std::string spec_file, stem = "report";
  };
  auto xopt = std::make_shared<ExpOpts>();
  exp_cmd->add_option("spec", xopt->spec_file)->required();
  exp_cmd->add_option("--name", xopt->stem, "output file stem");
  on(exp_cmd, [g, xopt] {
    ExperimentSpec spec = parse_spec_file(xopt->spec_file);
    const ExperimentReport report = run_experiment(spec);
    write_report(*g, report, xopt->stem);
    for (const auto& [k, v] : report.summary) std::cout << k << " = " << v << "\n";
  });

  // ---- theorem1 ----
  auto* t1_cmd = app.add_subcommand("theorem1", "grid-bucket matching rate check");
  t1_cmd->fallthrough();
  struct T1Opts {
    int d = 2, trials = 10, probes = 64;
    std::vector<int> h_list{64, 256, 1024, 4096, 16384};
    std::string stem = "theorem1";
  };
  auto t1opt = std::make_shared<T1Opts>();
  t1_cmd->add_option("--d", t1opt->d);
  t1_cmd->add_option("--h-list", t1opt->h_list);
  t1_cmd->add_option("--trials", t1opt->trials);
  t1_cmd->add_option("--probes", t1opt->probes);
  t1_cmd->add_option("--name", t1opt->stem, "output file stem");
  on(t1_cmd, [g, t1opt] {
    const ExperimentReport report = theorem1_check(t1opt->d, t1opt->h_list, t1opt->trials,
                                                   t1opt->probes, default_xi_rule, g->seed);
    write_report(*g, report, t1opt->stem);
    std::cout << "loglog_slope = " << report.summary.at("loglog_slope")
              << " (theorem rate " << report.summary.at("theorem_rate") << ")\n";
  });

  // CLI11 wants a mutable argv
  std::vector<std::string> argv_storage = args;
  std::vector<char*> argv;
  std::string prog = "lmclab";
  argv.push_back(prog.data());
  for (std::string& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1; --help exits 0
  }
  set_global_threads(g->threads);
  try {
    for (auto& [cmd, fn] : actions)
      if (cmd->parsed()) fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace lmc
