#pragma once

#include "upms/sim_env.hpp"

namespace upms {

/// Look-ahead scalings of the ATCSR index.
struct AtcsrParams {
  double k1 = 2.0;  // slack
  double k2 = 0.5;  // setup
  double k3 = 1.0;  // ready time
};

/// Mean processing and setup times over the candidate pairs of one epoch.
struct AtcsrContext {
  double p_bar = 1.0;
  double s_bar = 0.0;
};

/// Apparent tardiness cost with setups and ready times for job on machine
/// at time t, given the machine's current setup configuration.
///
///   I = w/p * exp(-max(d - p - max(t, r), 0) / (k1 p_ctx))
///           * exp(-s / (k2 s_ctx)) * exp(-max(r - t, 0) / (k3 p_ctx))
///
/// The setup factor is 1 when s_ctx is 0. Throws std::invalid_argument for
/// an ineligible pair.
double atcsr_index(const ProblemInstance& inst, int job, int machine, Time t, int machine_setup,
                   const AtcsrContext& ctx, const AtcsrParams& params);

/// Global argmax of the index over idle machines and queued or soon-released
/// jobs. Returns Wait when the best job is not released yet. Ties go to the
/// lowest job index, then the lowest machine index.
Action atcsr_dispatch(const Simulator& sim, const EnvState& state, const AtcsrParams& params);

struct SolveResult {
  Schedule schedule;
  ObjectiveValues objectives;
  double wall_ms = 0.0;
};

SolveResult solve_atcsr(const ProblemInstance& inst, const AtcsrParams& params = {});

}  // namespace upms
