#pragma once

#include <cstdint>
#include <vector>

#include "upms/exec.hpp"
#include "upms/problem.hpp"

namespace upms {

inline constexpr int kExactMaxJobs = 8;
inline constexpr int kExactMaxMachines = 3;

/// Throws std::invalid_argument unless n <= 8 and m <= 3.
void check_exact_size(const ProblemInstance& inst);

struct ExactResult {
  Schedule schedule;
  ObjectiveValues objectives;
  double value = 0.0;
  std::uint64_t enumerated = 0;  // complete schedules visited
};

/// Exhaustive minimum of alpha * twt + beta * tst over every eligible
/// assignment and every per-machine order, each decoded with the canonical
/// timeline. Ties go to lower twt, then lower tst, then enumeration order.
ExactResult solve_exact_scalarized(const ProblemInstance& inst, double alpha, double beta, Exec exec = Exec::Parallel);

struct ParetoPoint {
  ObjectiveValues objectives;
  std::vector<std::vector<int>> witness;  // machine sequences of the first schedule reaching the point
};

/// Nondominated (twt, tst) points over all feasible schedules, sorted by twt.
std::vector<ParetoPoint> pareto_enumerate(const ProblemInstance& inst, Exec exec = Exec::Parallel);

/// True when a is no worse on both objectives and strictly better on one.
bool dominates(const ObjectiveValues& a, const ObjectiveValues& b);

}  // namespace upms
