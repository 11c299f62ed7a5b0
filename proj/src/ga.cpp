#include "upms/ga.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "upms/atcsr.hpp"

namespace upms {

std::string check_params(const GaParams& params) {
  if (params.population < 2) return "population must be >= 2";
  if (params.tournament < 1) return "tournament size must be >= 1";
  if (params.p_crossover < 0.0 || params.p_crossover > 1.0) return "crossover probability must lie in [0, 1]";
  if (params.p_mutation < 0.0 || params.p_mutation > 1.0) return "mutation probability must lie in [0, 1]";
  if (params.elites < 0 || params.elites >= params.population) return "elite count must lie in [0, population)";
  if (params.alpha_fitness < 0.0 || params.alpha_fitness > 1.0) return "alpha_fitness must lie in [0, 1]";
  return {};
}

FitnessRefs fitness_refs(const ObjectiveValues& atcsr) {
  return {static_cast<double>(atcsr.twt), static_cast<double>(atcsr.tst)};
}

std::string check_chromosome(const Chromosome& c, const ProblemInstance& inst) {
  if (c.size() != static_cast<std::size_t>(inst.m)) return "chromosome needs one sequence per machine";
  std::vector<int> seen(static_cast<std::size_t>(inst.n), 0);
  for (int k = 0; k < inst.m; ++k) {
    for (int j : c[static_cast<std::size_t>(k)]) {
      if (j < 0 || j >= inst.n) return "job index " + std::to_string(j) + " out of range";
      if (seen[static_cast<std::size_t>(j)]++) return "job " + std::to_string(j) + " appears more than once";
      if (!inst.is_eligible(j, k)) return "job " + std::to_string(j) + " placed on ineligible machine " + std::to_string(k);
    }
  }
  for (int j = 0; j < inst.n; ++j) {
    if (!seen[static_cast<std::size_t>(j)]) return "job " + std::to_string(j) + " is missing";
  }
  return {};
}

Schedule decode(const Chromosome& c, const ProblemInstance& inst) {
  if (auto err = check_chromosome(c, inst); !err.empty()) throw std::invalid_argument("decode: " + err);
  return build_schedule(inst, c);
}

ObjectiveValues chromosome_objectives(const Chromosome& c, const ProblemInstance& inst) {
  ObjectiveValues total;
  for (int k = 0; k < inst.m; ++k) {
    const ObjectiveValues part = sequence_objectives(inst, k, c[static_cast<std::size_t>(k)]);
    total.twt += part.twt;
    total.tst += part.tst;
  }
  return total;
}

double fitness(const ObjectiveValues& obj, const FitnessRefs& refs, double alpha) {
  return alpha * static_cast<double>(obj.twt) / std::max(refs.twt, 1.0) +
         (1.0 - alpha) * static_cast<double>(obj.tst) / std::max(refs.tst, 1.0);
}

double fitness(const Chromosome& c, const ProblemInstance& inst, const FitnessRefs& refs, double alpha) {
  return fitness(chromosome_objectives(c, inst), refs, alpha);
}

double ga_alpha_for_weights(const FitnessRefs& refs, double alpha, double beta) {
  const double a = alpha * std::max(refs.twt, 1.0);
  const double b = beta * std::max(refs.tst, 1.0);
  if (a + b <= 0.0) throw std::invalid_argument("ga_alpha_for_weights: both weights are zero");
  return a / (a + b);
}

Chromosome random_chromosome(const ProblemInstance& inst, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(inst.n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));
  Chromosome c(static_cast<std::size_t>(inst.m));
  for (int j : order) {
    const auto& e = inst.eligible[static_cast<std::size_t>(j)];
    c[static_cast<std::size_t>(e[rng.index(e.size())])].push_back(j);
  }
  return c;
}

Chromosome repair(Chromosome c, const ProblemInstance& inst, const FitnessRefs& refs, double alpha) {
  c.resize(static_cast<std::size_t>(inst.m));
  std::vector<bool> present(static_cast<std::size_t>(inst.n), false);
  for (int k = 0; k < inst.m; ++k) {
    auto& seq = c[static_cast<std::size_t>(k)];
    std::erase_if(seq, [&](int j) {
      if (j < 0 || j >= inst.n || present[static_cast<std::size_t>(j)] || !inst.is_eligible(j, k)) return true;
      present[static_cast<std::size_t>(j)] = true;
      return false;
    });
  }
  for (int j = 0; j < inst.n; ++j) {
    if (present[static_cast<std::size_t>(j)]) continue;
    double best = std::numeric_limits<double>::infinity();
    int best_k = -1;
    std::size_t best_pos = 0;
    for (int k : inst.eligible[static_cast<std::size_t>(j)]) {
      auto& seq = c[static_cast<std::size_t>(k)];
      for (std::size_t pos = 0; pos <= seq.size(); ++pos) {
        seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(pos), j);
        const double f = fitness(c, inst, refs, alpha);
        seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(pos));
        if (f < best) {
          best = f;
          best_k = k;
          best_pos = pos;
        }
      }
    }
    auto& seq = c[static_cast<std::size_t>(best_k)];
    seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(best_pos), j);
    present[static_cast<std::size_t>(j)] = true;
  }
  return c;
}

namespace {

struct Gene {
  int job;
  int machine;
};

std::vector<Gene> flatten(const Chromosome& c) {
  std::vector<Gene> out;
  for (std::size_t k = 0; k < c.size(); ++k) {
    for (int j : c[k]) out.push_back({j, static_cast<int>(k)});
  }
  return out;
}

}  // namespace

Chromosome crossover(const Chromosome& a, const Chromosome& b, const ProblemInstance& inst, Rng& rng,
                     const FitnessRefs& refs, double alpha) {
  const std::vector<Gene> ga = flatten(a);
  const std::vector<Gene> gb = flatten(b);
  const auto len = static_cast<std::int64_t>(ga.size());
  std::int64_t lo = rng.uniform_int(0, len);
  std::int64_t hi = rng.uniform_int(0, len);
  if (lo > hi) std::swap(lo, hi);

  std::vector<bool> taken(static_cast<std::size_t>(inst.n), false);
  for (std::int64_t i = lo; i < hi; ++i) taken[static_cast<std::size_t>(ga[static_cast<std::size_t>(i)].job)] = true;
  std::vector<Gene> child;
  child.reserve(ga.size());
  auto fill = gb.begin();
  auto next_from_b = [&]() -> const Gene* {
    while (fill != gb.end() && taken[static_cast<std::size_t>(fill->job)]) ++fill;
    return fill == gb.end() ? nullptr : &*fill++;
  };
  for (std::int64_t i = 0; i < len; ++i) {
    if (i >= lo && i < hi) {
      child.push_back(ga[static_cast<std::size_t>(i)]);
    } else if (const Gene* g = next_from_b()) {
      child.push_back(*g);
    }
  }
  Chromosome out(static_cast<std::size_t>(inst.m));
  for (const Gene& g : child) out[static_cast<std::size_t>(g.machine)].push_back(g.job);
  return repair(std::move(out), inst, refs, alpha);
}

Chromosome mutate(Chromosome c, const ProblemInstance& inst, Rng& rng, double p_mut) {
  if (inst.n == 0 || !rng.bernoulli(p_mut)) return c;
  const int job = static_cast<int>(rng.index(static_cast<std::size_t>(inst.n)));
  for (auto& seq : c) std::erase(seq, job);
  const auto& e = inst.eligible[static_cast<std::size_t>(job)];
  auto& seq = c[static_cast<std::size_t>(e[rng.index(e.size())])];
  const std::size_t pos = rng.index(seq.size() + 1);
  seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(pos), job);
  return c;
}

std::vector<double> evaluate_population(const std::vector<Chromosome>& population, const ProblemInstance& inst,
                                        const FitnessRefs& refs, double alpha, Exec exec) {
  std::vector<double> out(population.size());
  const auto count = static_cast<std::ptrdiff_t>(population.size());
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      out[static_cast<std::size_t>(i)] = fitness(population[static_cast<std::size_t>(i)], inst, refs, alpha);
    }
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      out[static_cast<std::size_t>(i)] = fitness(population[static_cast<std::size_t>(i)], inst, refs, alpha);
    }
  }
  return out;
}

namespace {

std::size_t tournament(const std::vector<double>& fit, int size, Rng& rng) {
  std::size_t best = rng.index(fit.size());
  for (int t = 1; t < size; ++t) {
    const std::size_t cand = rng.index(fit.size());
    if (fit[cand] < fit[best] || (fit[cand] == fit[best] && cand < best)) best = cand;
  }
  return best;
}

}  // namespace

GaResult run_ga(const ProblemInstance& inst, const GaParams& params) {
  if (auto err = check_params(params); !err.empty()) throw std::invalid_argument("run_ga: " + err);
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };

  GaResult result;
  const SolveResult seed_solution = solve_atcsr(inst);
  result.refs = fitness_refs(seed_solution.objectives);
  const double alpha = params.alpha_fitness;
  Rng rng(params.seed);

  const auto pop_size = static_cast<std::size_t>(params.population);
  std::vector<Chromosome> population;
  population.reserve(pop_size);
  population.push_back(seed_solution.schedule.sequences);
  while (population.size() < pop_size) population.push_back(random_chromosome(inst, rng));
  std::vector<double> fit = evaluate_population(population, inst, result.refs, alpha, params.exec);

  auto argmin = [](const std::vector<double>& f) {
    return static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
  };
  std::size_t best_idx = argmin(fit);
  result.best = population[best_idx];
  result.fitness = fit[best_idx];
  result.history.push_back(result.fitness);

  std::vector<std::size_t> order(pop_size);
  while (result.generations < params.max_generations && elapsed_ms() < params.budget_ms) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return fit[x] < fit[y]; });
    std::vector<Chromosome> next;
    next.reserve(pop_size);
    for (int e = 0; e < params.elites; ++e) next.push_back(population[order[static_cast<std::size_t>(e)]]);
    while (next.size() < pop_size) {
      const Chromosome& pa = population[tournament(fit, params.tournament, rng)];
      const Chromosome& pb = population[tournament(fit, params.tournament, rng)];
      Chromosome child = rng.bernoulli(params.p_crossover) ? crossover(pa, pb, inst, rng, result.refs, alpha) : pa;
      next.push_back(mutate(std::move(child), inst, rng, params.p_mutation));
    }
    population = std::move(next);
    fit = evaluate_population(population, inst, result.refs, alpha, params.exec);
    best_idx = argmin(fit);
    if (fit[best_idx] < result.fitness) {
      result.fitness = fit[best_idx];
      result.best = population[best_idx];
    }
    ++result.generations;
    result.history.push_back(fit[best_idx]);
  }

  result.schedule = decode(result.best, inst);
  result.objectives = compute_objectives(inst, result.schedule);
  result.wall_ms = elapsed_ms();
  return result;
}

}  // namespace upms
