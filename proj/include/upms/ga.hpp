#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upms/exec.hpp"
#include "upms/problem.hpp"
#include "upms/rng.hpp"

namespace upms {

/// One ordered job list per machine.
using Chromosome = std::vector<std::vector<int>>;

struct GaParams {
  int population = 60;
  int tournament = 2;
  double p_crossover = 0.9;
  double p_mutation = 0.2;
  int elites = 2;
  double alpha_fitness = 0.5;
  double budget_ms = 1000.0;
  long max_generations = 1'000'000'000;
  std::uint64_t seed = 1;
  Exec exec = Exec::Serial;
};

std::string check_params(const GaParams& params);

/// Normalizers for the fitness, taken from an ATCSR run on the same instance.
struct FitnessRefs {
  double twt = 1.0;
  double tst = 1.0;
};

FitnessRefs fitness_refs(const ObjectiveValues& atcsr);

/// Empty when the chromosome partitions the jobs over eligible machines.
std::string check_chromosome(const Chromosome& c, const ProblemInstance& inst);

/// Canonical timeline of the chromosome. Throws std::invalid_argument on a malformed chromosome.
Schedule decode(const Chromosome& c, const ProblemInstance& inst);

/// TWT and TST of a well-formed chromosome without building a Schedule.
ObjectiveValues chromosome_objectives(const Chromosome& c, const ProblemInstance& inst);

/// alpha * twt / max(ref_twt, 1) + (1 - alpha) * tst / max(ref_tst, 1); lower is better.
double fitness(const ObjectiveValues& obj, const FitnessRefs& refs, double alpha);
double fitness(const Chromosome& c, const ProblemInstance& inst, const FitnessRefs& refs, double alpha);

/// Fitness weight that ranks chromosomes exactly like alpha * twt + beta * tst.
double ga_alpha_for_weights(const FitnessRefs& refs, double alpha, double beta);

Chromosome random_chromosome(const ProblemInstance& inst, Rng& rng);

/// Drops duplicate jobs (first occurrence kept) and ineligible placements,
/// then inserts every missing job at its cheapest position by fitness.
Chromosome repair(Chromosome c, const ProblemInstance& inst, const FitnessRefs& refs, double alpha);

/// Order crossover on the machine-concatenated job order: a random slice of
/// `a` keeps its machines, the remaining jobs follow `b`'s order and machines.
Chromosome crossover(const Chromosome& a, const Chromosome& b, const ProblemInstance& inst, Rng& rng,
                     const FitnessRefs& refs, double alpha);

/// With probability p_mut, moves one random job to a random position on a
/// random eligible machine.
Chromosome mutate(Chromosome c, const ProblemInstance& inst, Rng& rng, double p_mut);

std::vector<double> evaluate_population(const std::vector<Chromosome>& population, const ProblemInstance& inst,
                                        const FitnessRefs& refs, double alpha, Exec exec);

struct GaResult {
  Chromosome best;
  Schedule schedule;
  ObjectiveValues objectives;
  double fitness = 0.0;
  long generations = 0;
  std::vector<double> history;  // best fitness in the population after initialization and each generation
  FitnessRefs refs;
  double wall_ms = 0.0;
};

/// Generational GA with tournament selection and elitism, seeded with the
/// ATCSR schedule. Stops at the time budget or the generation cap.
GaResult run_ga(const ProblemInstance& inst, const GaParams& params);

}  // namespace upms
