#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "memse/crossbar.hpp"
#include "memse/parallel.hpp"
#include "memse/predict.hpp"
#include "memse/rng.hpp"

namespace memse {

enum class Granularity { global, per_layer };
enum class BatchAggregate { mean, max };

struct GaParams {
  std::size_t population = 50;
  std::size_t generations = 100;
  std::uint64_t seed = 0;
  double crossover_rate = 0.9;
  double mutation_scale = 0.25;  // std of the log(G_max) step
  std::size_t tournament = 3;
};

// Search bounds when none are given: three decades either side of the
// G_max at which sigma_v / G_max = 1e-2.
inline std::pair<double, double> default_bounds(double sigma_v) {
  const double ref = sigma_v > 0.0 ? sigma_v / 1e-2 : 1.0;
  return {1e-3 * ref, 1e3 * ref};
}

struct OptProblem {
  const LoweredNetwork* network = nullptr;
  Granularity granularity = Granularity::global;
  double power_budget = 0.0;
  std::vector<Vector> input_sample;
  CrossbarConfig base;  // everything but g_max
  std::vector<double> lower;  // one bound per variable, or one for all
  std::vector<double> upper;
  GaParams ga;
  BatchAggregate batch_agg = BatchAggregate::mean;
  std::vector<std::vector<double>> initial_guesses;  // G_max vectors seeded into generation 0
  unsigned threads = 1;

  std::size_t dimension() const { return granularity == Granularity::global ? 1 : network->linear_count(); }
  double lo(std::size_t i) const { return lower.size() == 1 ? lower[0] : lower.at(i); }
  double hi(std::size_t i) const { return upper.size() == 1 ? upper[0] : upper.at(i); }

  void validate() const {
    if (!network) throw ConfigError("optimizer needs a network");
    if (!(power_budget > 0.0)) throw ConfigError("power budget must be positive");
    if (input_sample.empty()) throw ConfigError("optimizer input sample is empty");
    if (ga.population < 2) throw ConfigError("population must be >= 2");
    if (ga.tournament < 1) throw ConfigError("tournament size must be >= 1");
    const std::size_t d = dimension();
    for (const auto* b : {&lower, &upper})
      if (b->size() != 1 && b->size() != d) throw ConfigError("bounds need 1 or " + std::to_string(d) + " entries");
    for (std::size_t i = 0; i < d; ++i)
      if (!(lo(i) > 0.0 && lo(i) < hi(i))) throw ConfigError("bounds must satisfy 0 < G_lo < G_hi");
  }
};

struct ObjectiveValue {
  double max_mse = 0.0;
  double power = 0.0;
};

inline std::vector<CrossbarConfig> configs_for(const OptProblem& p, std::span<const double> g) {
  std::vector<CrossbarConfig> cfgs;
  for (double v : g) {
    CrossbarConfig c = p.base;
    c.g_max = v;
    cfgs.push_back(c);
  }
  return cfgs;
}

// Sample-averaged (or worst-case) max-over-outputs MSE and mean expected power.
inline ObjectiveValue objective(const OptProblem& p, std::span<const double> g) {
  if (g.size() != p.dimension()) throw ConfigError("G_max vector has wrong dimension");
  const auto cfgs = configs_for(p, g);
  const ProgrammedNetwork prog(*p.network, cfgs);
  const std::size_t n = p.input_sample.size();
  std::vector<ObjectiveValue> per(n);
  parallel_for(n, p.threads, [&](std::size_t i) {
    const auto pred = predict_network(prog, p.input_sample[i]);
    per[i] = {pred.mse.max, pred.power.total()};
  });
  ObjectiveValue v;
  for (const auto& e : per) {
    v.max_mse = p.batch_agg == BatchAggregate::mean ? v.max_mse + e.max_mse : std::max(v.max_mse, e.max_mse);
    v.power += e.power;
  }
  if (p.batch_agg == BatchAggregate::mean) v.max_mse /= static_cast<double>(n);
  v.power /= static_cast<double>(n);
  if (!std::isfinite(v.max_mse) || !std::isfinite(v.power)) throw NumericError("objective is not finite");
  return v;
}

struct GenerationStats {
  std::size_t generation = 0;
  bool has_feasible = false;
  double best_objective = 0.0;  // meaningful only with has_feasible
  double feasible_fraction = 0.0;
};

struct OptResult {
  std::vector<double> g_max;
  double max_mse = 0.0;
  double power = 0.0;
  std::vector<GenerationStats> history;
  std::size_t evaluations = 0;
};

namespace detail {

struct Individual {
  std::vector<double> log_g;
  ObjectiveValue value;
  bool feasible = false;
};

// Feasible before infeasible; feasible by objective, infeasible by violation.
inline bool better(const Individual& a, const Individual& b, double budget) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) {
    if (a.value.max_mse != b.value.max_mse) return a.value.max_mse < b.value.max_mse;
    return a.value.power < b.value.power;
  }
  return a.value.power - budget < b.value.power - budget;
}

}  // namespace detail

// Genetic search over log(G_max): tournament selection, uniform crossover,
// log-normal mutation, elitism of one. Infeasible individuals rank below
// every feasible one.
inline OptResult optimize(const OptProblem& p) {
  p.validate();
  const std::size_t d = p.dimension();
  using detail::Individual;

  std::vector<double> lo_log(d), hi_log(d);
  for (std::size_t i = 0; i < d; ++i) {
    lo_log[i] = std::log(p.lo(i));
    hi_log[i] = std::log(p.hi(i));
  }
  OptResult res;
  Engine eng(derive_seed(p.ga.seed, {0x6761}));
  boost::random::uniform_real_distribution<double> unit(0.0, 1.0);
  boost::random::normal_distribution<double> step(0.0, p.ga.mutation_scale);
  boost::random::uniform_int_distribution<std::size_t> pick(0, p.ga.population - 1);

  auto evaluate_all = [&](std::vector<Individual>& pop, std::size_t from) {
    // Objective already parallelizes over inputs; individuals run in order.
    for (std::size_t i = from; i < pop.size(); ++i) {
      std::vector<double> g(d);
      for (std::size_t k = 0; k < d; ++k) g[k] = std::exp(pop[i].log_g[k]);
      pop[i].value = objective(p, g);
      pop[i].feasible = pop[i].value.power <= p.power_budget;
      ++res.evaluations;
    }
  };
  auto clamp_genes = [&](std::vector<double>& genes) {
    for (std::size_t k = 0; k < d; ++k) genes[k] = std::clamp(genes[k], lo_log[k], hi_log[k]);
  };

  // Generation 0: caller guesses, then a log grid across the box (every
  // layer at the same value), then log-uniform random individuals. Network
  // power is not monotone in G_max since small G_max amplifies the noise fed
  // to later layers, so the grid is what finds the feasible region.
  std::vector<Individual> pop;
  for (const auto& guess : p.initial_guesses) {
    if (pop.size() >= p.ga.population) break;
    if (guess.size() != 1 && guess.size() != d) throw ConfigError("initial guess has wrong dimension");
    Individual ind;
    for (std::size_t k = 0; k < d; ++k) ind.log_g.push_back(std::log(guess.size() == 1 ? guess[0] : guess[k]));
    clamp_genes(ind.log_g);
    pop.push_back(std::move(ind));
  }
  const std::size_t grid = std::min<std::size_t>(p.ga.population - pop.size(), std::max<std::size_t>(2, p.ga.population / 2));
  for (std::size_t i = 0; i < grid; ++i) {
    const double t = grid == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(grid - 1);
    Individual ind;
    for (std::size_t k = 0; k < d; ++k) ind.log_g.push_back(lo_log[k] + t * (hi_log[k] - lo_log[k]));
    pop.push_back(std::move(ind));
  }
  while (pop.size() < p.ga.population) {
    Individual ind;
    for (std::size_t k = 0; k < d; ++k) ind.log_g.push_back(lo_log[k] + unit(eng) * (hi_log[k] - lo_log[k]));
    pop.push_back(std::move(ind));
  }
  evaluate_all(pop, 0);

  auto cmp = [&](const Individual& a, const Individual& b) { return detail::better(a, b, p.power_budget); };
  auto record = [&](std::size_t gen) {
    const auto best = std::min_element(pop.begin(), pop.end(), cmp);
    GenerationStats s;
    s.generation = gen;
    s.has_feasible = best->feasible;
    s.best_objective = best->feasible ? best->value.max_mse : 0.0;
    s.feasible_fraction = static_cast<double>(std::count_if(pop.begin(), pop.end(), [](const auto& i) {
                            return i.feasible;
                          })) /
                          static_cast<double>(pop.size());
    res.history.push_back(s);
  };
  auto tournament = [&]() -> const Individual& {
    std::size_t best = pick(eng);
    for (std::size_t t = 1; t < p.ga.tournament; ++t) {
      const std::size_t c = pick(eng);
      if (cmp(pop[c], pop[best])) best = c;
    }
    return pop[best];
  };

  record(0);
  const double mutate_prob = 1.0 / static_cast<double>(d);
  for (std::size_t gen = 1; gen <= p.ga.generations; ++gen) {
    std::vector<Individual> next;
    next.reserve(p.ga.population);
    next.push_back(*std::min_element(pop.begin(), pop.end(), cmp));
    while (next.size() < p.ga.population) {
      const Individual& a = tournament();
      const Individual& b = tournament();
      Individual child;
      child.log_g = a.log_g;
      if (unit(eng) < p.ga.crossover_rate)
        for (std::size_t k = 0; k < d; ++k)
          if (unit(eng) < 0.5) child.log_g[k] = b.log_g[k];
      bool mutated = false;
      for (std::size_t k = 0; k < d; ++k)
        if (unit(eng) < mutate_prob) {
          child.log_g[k] += step(eng);
          mutated = true;
        }
      if (!mutated) child.log_g[pick(eng) % d] += step(eng);
      clamp_genes(child.log_g);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    evaluate_all(pop, 1);
    record(gen);
  }

  const auto best = std::min_element(pop.begin(), pop.end(), cmp);
  if (!best->feasible)
    throw InfeasibleError("no G_max in the search box meets power budget " + std::to_string(p.power_budget) +
                          " (lowest power found " + std::to_string(best->value.power) + ")");
  for (double lg : best->log_g) res.g_max.push_back(std::exp(lg));
  // Re-evaluate from scratch so the reported numbers are not cached ones.
  const auto check = objective(p, res.g_max);
  if (check.power > p.power_budget) throw NumericError("returned solution violates the power budget");
  res.max_mse = check.max_mse;
  res.power = check.power;
  return res;
}

}  // namespace memse
