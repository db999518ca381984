#include "lmc/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace lmc {

void SaConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("sa: steps must be >= 0");
  if (!(t_max > 0.0) || !(t_min > 0.0) || !(t_max > t_min))
    throw std::invalid_argument("sa: need t_max > t_min > 0");
  if (swaps_per_layer < 1) throw std::invalid_argument("sa: swaps_per_layer must be >= 1");
  if (n_models < 2) throw std::invalid_argument("sa: n_models must be >= 2");
  if (cooling_horizon < 0) throw std::invalid_argument("sa: bad cooling horizon");
}

double temperature(int step, const SaConfig& cfg) {
  const int horizon = cfg.cooling_horizon > 0 ? cfg.cooling_horizon : cfg.steps;
  if (step < 0 || step >= std::max(horizon, 1))
    throw std::invalid_argument("temperature: step out of range");
  if (horizon <= 1) return cfg.t_max;
  const double t = static_cast<double>(step) / static_cast<double>(horizon - 1);
  return cfg.t_max * std::pow(cfg.t_min / cfg.t_max, t);
}

bool accept_move(double delta_energy, double t, Rng& rng) {
  if (!(t > 0.0)) throw std::invalid_argument("accept: temperature must be positive");
  const double u = rng.next_double();  // always consumed: keeps chains prefix-identical
  if (delta_energy < 0.0) return true;
  return u < std::exp(-delta_energy / t);
}

namespace {

double metric_of(const EvalResult& e, Metric m) {
  return m == Metric::CeLoss ? e.loss : e.error;
}

// shared annealing loop; `energy` must be a pure function of the state
template <class State, class EnergyFn, class MoveFn>
SearchResult anneal(State state, const EnergyFn& energy, const MoveFn& move,
                    const SaConfig& cfg) {
  SearchResult res;
  res.seed = cfg.seed;
  Rng rng(cfg.seed);
  double cur_e = energy(state);
  res.initial_energy = cur_e;
  res.evaluations = 1;
  State best = state;
  double best_e = cur_e;
  res.energy_trace.emplace_back(0, best_e);
  for (int step = 0; step < cfg.steps; ++step) {
    const double t = temperature(step, cfg);
    State cand = move(state, rng);
    const double e = energy(cand);
    ++res.evaluations;
    if (accept_move(e - cur_e, t, rng)) {
      state = std::move(cand);
      cur_e = e;
      if (cur_e < best_e) {
        best_e = cur_e;
        best = state;
        res.energy_trace.emplace_back(step + 1, best_e);
      }
    }
  }
  res.final_energy = best_e;
  res.perms = std::move(best);
  return res;
}

}  // namespace

SearchResult sa_search(const std::vector<Network>& nets, const Dataset& ds,
                       const SaConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(nets.size()) != cfg.n_models)
    throw std::invalid_argument("sa_search: nets must match cfg.n_models");
  for (size_t i = 1; i < nets.size(); ++i) check_same_arch(nets[0], nets[i]);
  if (ds.train.n < 1) throw std::invalid_argument("sa_search: empty dataset");

  const int n = cfg.n_models;
  std::vector<Permutation> init(static_cast<size_t>(n), identity_perm(nets[0]));

  // endpoint losses are invariant under permutation, so compute them once
  std::vector<double> endpoints(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    endpoints[static_cast<size_t>(i)] =
        metric_of(evaluate(nets[static_cast<size_t>(i)], ds, SplitKind::Train), cfg.metric);

  auto energy = [&](const std::vector<Permutation>& perms) {
    std::vector<Network> permuted;
    permuted.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      permuted.push_back(apply(nets[static_cast<size_t>(i)], perms[static_cast<size_t>(i)]));
    if (cfg.objective == SaObjective::AverageError) {
      return evaluate(average(permuted), ds, SplitKind::Train).error;
    }
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const EvalResult em =
            evaluate(interpolate_weighted(permuted[static_cast<size_t>(i)],
                                          permuted[static_cast<size_t>(j)], 0.5, 0.5),
                     ds, SplitKind::Train);
        const double base = endpoints[static_cast<size_t>(j)] +
                            0.5 * (endpoints[static_cast<size_t>(i)] -
                                   endpoints[static_cast<size_t>(j)]);
        // barrier per the 3-point grid: endpoints contribute exactly zero
        sum += std::max(metric_of(em, cfg.metric) - base, 0.0);
        ++count;
      }
    }
    return sum / static_cast<double>(count);
  };

  auto move = [&](const std::vector<Permutation>& perms, Rng& rng) {
    std::vector<Permutation> out;
    out.reserve(perms.size());
    for (size_t i = 0; i < perms.size(); ++i) {
      if (cfg.pin_first && i == 0)
        out.push_back(perms[i]);
      else
        out.push_back(transposition_move(perms[i], cfg.swaps_per_layer, rng));
    }
    return out;
  };

  return anneal(std::move(init), energy, move, cfg);
}

SearchResult sa_search_reduced(const Network& net1, const Network& net2, const Dataset& ds,
                               const SaConfig& cfg) {
  cfg.validate();
  check_same_arch(net1, net2);
  if (ds.train.n < 1) throw std::invalid_argument("sa_search_reduced: empty dataset");

  const double l1 = metric_of(evaluate(net1, ds, SplitKind::Train), cfg.metric);
  const double l0 = metric_of(evaluate(net2, ds, SplitKind::Train), cfg.metric);
  const double base = l0 + 0.5 * (l1 - l0);

  auto energy = [&](const std::vector<Permutation>& perms) {
    const Network permuted = apply(net1, perms[0]);
    const EvalResult em =
        evaluate(interpolate_weighted(permuted, net2, 0.5, 0.5), ds, SplitKind::Train);
    return std::max(metric_of(em, cfg.metric) - base, 0.0);
  };
  auto move = [&](const std::vector<Permutation>& perms, Rng& rng) {
    return std::vector<Permutation>{
        transposition_move(perms[0], cfg.swaps_per_layer, rng)};
  };

  std::vector<Permutation> init{identity_perm(net1)};
  return anneal(std::move(init), energy, move, cfg);
}

MatchCostMatrix fd_costs(const Network& net_a, const Network& net_b, const Dataset& ds,
                         int layer) {
  check_same_arch(net_a, net_b);
  if (layer < 0 || layer >= net_a.hidden_layers())
    throw std::invalid_argument("fd_costs: layer is not a hidden layer");

  const Layer& la = net_a.layers[static_cast<size_t>(layer)];
  const Layer& lb = net_b.layers[static_cast<size_t>(layer)];
  const int h = la.width();

  MatchCostMatrix m;
  m.size = h;
  m.curvature_a = hidden_sq_activation_means(net_a, ds, layer);
  m.curvature_b = hidden_sq_activation_means(net_b, ds, layer);
  constexpr double kFloor = 1e-8;
  for (double& v : m.curvature_a)
    if (v < kFloor) {
      v = kFloor;
      m.curvature_clamped = true;
    }
  for (double& v : m.curvature_b)
    if (v < kFloor) {
      v = kFloor;
      m.curvature_clamped = true;
    }

  // incoming weight vector (plus bias when present) per unit
  const int wlen = la.kind == LayerKind::Dense ? la.in_units : la.in_ch * la.kh * la.kw;
  auto unit_vec = [&](const Layer& l, int u, std::vector<double>& out) {
    out.assign(static_cast<size_t>(wlen) + (l.bias.empty() ? 0 : 1), 0.0);
    const float* w = l.weight.data() + static_cast<size_t>(u) * wlen;
    for (int k = 0; k < wlen; ++k) out[static_cast<size_t>(k)] = w[k];
    if (!l.bias.empty()) out.back() = l.bias[static_cast<size_t>(u)];
  };

  std::vector<std::vector<double>> wa(static_cast<size_t>(h)), wb(static_cast<size_t>(h));
  for (int u = 0; u < h; ++u) {
    unit_vec(la, u, wa[static_cast<size_t>(u)]);
    unit_vec(lb, u, wb[static_cast<size_t>(u)]);
  }

  m.costs.resize(static_cast<size_t>(h) * h);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < h; ++j) {
      double sq = 0.0;
      const std::vector<double>& vi = wa[static_cast<size_t>(i)];
      const std::vector<double>& vj = wb[static_cast<size_t>(j)];
      for (size_t k = 0; k < vi.size(); ++k) {
        const double dta = vi[k] - vj[k];
        sq += dta * dta;
      }
      const double ha = m.curvature_a[static_cast<size_t>(i)];
      const double hb = m.curvature_b[static_cast<size_t>(j)];
      const double combined = (ha * hb) / (ha + hb);  // ((1/ha)+(1/hb))^-1
      m.costs[static_cast<size_t>(i) * h + j] = 0.5 * sq * combined;
    }
  }
  return m;
}

std::vector<int> greedy_match(const MatchCostMatrix& costs) {
  const int h = costs.size;
  if (h < 1) throw std::invalid_argument("greedy_match: empty matrix");
  std::vector<char> row_used(static_cast<size_t>(h), 0), col_used(static_cast<size_t>(h), 0);
  std::vector<int> p(static_cast<size_t>(h), -1);  // p[col] = row
  for (int step = 0; step < h; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < h; ++i) {
      if (row_used[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < h; ++j) {
        if (col_used[static_cast<size_t>(j)]) continue;
        const double c = costs.at(i, j);
        if (c < best) {  // ties keep the smallest row, then smallest column
          best = c;
          bi = i;
          bj = j;
        }
      }
    }
    row_used[static_cast<size_t>(bi)] = 1;
    col_used[static_cast<size_t>(bj)] = 1;
    p[static_cast<size_t>(bj)] = bi;
  }
  return p;
}

Permutation fd_align(const Network& net_a, const Network& net_b, const Dataset& ds) {
  check_same_arch(net_a, net_b);
  Network work = net_a;
  Permutation result = identity_perm(net_a);
  for (int layer = 0; layer < net_a.hidden_layers(); ++layer) {
    const MatchCostMatrix costs = fd_costs(work, net_b, ds, layer);
    const std::vector<int> p = greedy_match(costs);
    Permutation partial = identity_perm(work);
    partial.per_layer[static_cast<size_t>(layer)] = p;
    work = apply(work, partial);
    result.per_layer[static_cast<size_t>(layer)] = p;
  }
  return result;
}

GridMatchResult grid_bucket_match(const std::vector<float>& u, const std::vector<float>& u_prime,
                                  int h, int d, double xi, uint64_t seed) {
  if (h < 1 || d < 1) throw std::invalid_argument("grid_bucket_match: bad dimensions");
  if (u.size() != static_cast<size_t>(h) * d || u_prime.size() != static_cast<size_t>(h) * d)
    throw std::invalid_argument("grid_bucket_match: matrix size mismatch");
  if (!(xi > 0.0)) throw std::invalid_argument("grid_bucket_match: xi must be positive");

  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (float v : u)
    if (std::abs(static_cast<double>(v)) > bound * (1.0 + 1e-9))
      throw std::invalid_argument("grid_bucket_match: U entry outside [-1/sqrt(d), 1/sqrt(d)]");
  for (float v : u_prime)
    if (std::abs(static_cast<double>(v)) > bound * (1.0 + 1e-9))
      throw std::invalid_argument("grid_bucket_match: U' entry outside [-1/sqrt(d), 1/sqrt(d)]");

  GridMatchResult res;
  // snap xi down so that 1/sqrt(d) is an integer multiple of it
  const double cells_exact = bound / xi;
  long m = std::lround(cells_exact);
  if (std::abs(cells_exact - static_cast<double>(m)) > 1e-9) {
    m = static_cast<long>(std::ceil(cells_exact - 1e-12));
    res.xi_snapped = true;
  }
  m = std::max(m, 1L);
  res.xi_used = bound / static_cast<double>(m);
  const double cell_w = 2.0 * res.xi_used;

  auto cell_of = [&](double v) {
    const double t = v + bound;  // in [0, 2*bound]
    long k = static_cast<long>(std::floor(t / cell_w));
    // boundary tie goes to the lexicographically smaller cell
    if (k > 0 && static_cast<double>(k) * cell_w == t) --k;
    return std::clamp(k, 0L, m - 1);
  };

  // occupied cells only; std::map keys iterate in deterministic order
  std::map<std::vector<long>, std::pair<std::vector<int>, std::vector<int>>> cells;
  std::vector<long> key(static_cast<size_t>(d));
  for (int r = 0; r < h; ++r) {
    for (int k = 0; k < d; ++k)
      key[static_cast<size_t>(k)] = cell_of(u[static_cast<size_t>(r) * d + k]);
    cells[key].first.push_back(r);
  }
  for (int r = 0; r < h; ++r) {
    for (int k = 0; k < d; ++k)
      key[static_cast<size_t>(k)] = cell_of(u_prime[static_cast<size_t>(r) * d + k]);
    cells[key].second.push_back(r);
  }

  Rng rng(seed);
  res.perm.assign(static_cast<size_t>(h), -1);
  std::vector<int> left_a, left_b;
  for (auto& [cell, rows] : cells) {
    std::vector<int>& ra = rows.first;
    std::vector<int>& rb = rows.second;
    rng.shuffle(ra);
    rng.shuffle(rb);
    const size_t k = std::min(ra.size(), rb.size());
    for (size_t i = 0; i < k; ++i) res.perm[static_cast<size_t>(ra[i])] = rb[i];
    for (size_t i = k; i < ra.size(); ++i) left_a.push_back(ra[i]);
    for (size_t i = k; i < rb.size(); ++i) left_b.push_back(rb[i]);
  }
  rng.shuffle(left_a);
  rng.shuffle(left_b);
  for (size_t i = 0; i < left_a.size(); ++i)
    res.perm[static_cast<size_t>(left_a[i])] = left_b[i];
  res.leftovers = static_cast<int>(left_a.size());
  return res;
}

SearchResult brute_force_match(const Network& net1, const Network& net2, const Dataset& ds,
                               int width_limit, Metric metric, SplitKind split) {
  check_same_arch(net1, net2);
  if (net1.hidden_layers() != 1)
    throw std::invalid_argument("brute_force_match: requires exactly one hidden layer");
  const int h = net1.hidden_width(0);
  if (h > width_limit)
    throw std::invalid_argument("brute_force_match: width above brute-force limit");

  const EvalResult e1 = evaluate(net1, ds, split);
  const EvalResult e0 = evaluate(net2, ds, split);
  const double l1 = metric == Metric::CeLoss ? e1.loss : e1.error;
  const double l0 = metric == Metric::CeLoss ? e0.loss : e0.error;
  const double base = l0 + 0.5 * (l1 - l0);

  SearchResult res;
  std::vector<int> p(static_cast<size_t>(h));
  std::iota(p.begin(), p.end(), 0);
  Permutation perm;
  perm.per_layer.push_back(p);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_p = p;
  long long count = 0;
  bool first = true;
  do {
    perm.per_layer[0] = p;
    const Network permuted = apply(net1, perm);
    const EvalResult em =
        evaluate(interpolate_weighted(permuted, net2, 0.5, 0.5), ds, split);
    const double b =
        std::max((metric == Metric::CeLoss ? em.loss : em.error) - base, 0.0);
    ++count;
    if (first) {
      res.initial_energy = b;  // identity comes first in lexicographic order
      first = false;
    }
    if (b < best) {  // strict: ties keep the lexicographically smallest
      best = b;
      best_p = p;
      res.energy_trace.emplace_back(static_cast<int>(count - 1), b);
    }
  } while (std::next_permutation(p.begin(), p.end()));

  res.final_energy = best;
  res.evaluations = count;
  perm.per_layer[0] = best_p;
  res.perms.push_back(perm);
  return res;
}

void write_search_json(std::ostream& os, const SearchResult& res, const SaConfig* cfg) {
  nlohmann::json j;
  if (cfg) {
    j["config"] = {{"steps", cfg->steps},
                   {"t_max", cfg->t_max},
                   {"t_min", cfg->t_min},
                   {"swaps_per_layer", cfg->swaps_per_layer},
                   {"objective", cfg->objective == SaObjective::PairwiseBarrier
                                     ? "pairwise-barrier"
                                     : "average-error"},
                   {"n_models", cfg->n_models},
                   {"metric", to_string(cfg->metric)},
                   {"cooling_horizon", cfg->cooling_horizon},
                   {"seed", cfg->seed}};
  }
  j["seed"] = res.seed;
  j["initial_energy"] = res.initial_energy;
  j["final_energy"] = res.final_energy;
  j["evaluations"] = res.evaluations;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [step, e] : res.energy_trace) trace.push_back({{"step", step}, {"best", e}});
  j["energy_trace"] = trace;
  nlohmann::json perms = nlohmann::json::array();
  for (const Permutation& p : res.perms) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& v : p.per_layer) layers.push_back(v);
    perms.push_back(layers);
  }
  j["permutations"] = perms;
  os << j.dump(2) << '\n';
}

void write_trace_csv(std::ostream& os, const SearchResult& res) {
  os << "step,best_energy\n";
  os.precision(17);
  for (const auto& [step, e] : res.energy_trace) os << step << ',' << e << '\n';
}

}  // namespace lmc
