#include "upms/atcsr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "upms/graph_state.hpp"

namespace upms {

double atcsr_index(const ProblemInstance& inst, int job, int machine, Time t, int machine_setup,
                   const AtcsrContext& ctx, const AtcsrParams& params) {
  if (!inst.is_eligible(job, machine)) {
    throw std::invalid_argument("atcsr_index: machine " + std::to_string(machine) + " is not eligible for job " +
                                std::to_string(job));
  }
  const auto j = static_cast<std::size_t>(job);
  const double p = static_cast<double>(inst.p(job, machine));
  const double w = static_cast<double>(inst.weight[j]);
  const double r = static_cast<double>(inst.release[j]);
  const double d = static_cast<double>(inst.due[j]);
  const double now = static_cast<double>(t);
  const double s = static_cast<double>(inst.s(machine_setup, job, machine));

  const double slack = std::max(d - p - std::max(now, r), 0.0);
  double index = (w / p) * std::exp(-slack / (params.k1 * ctx.p_bar));
  if (ctx.s_bar > 0.0) index *= std::exp(-s / (params.k2 * ctx.s_bar));
  index *= std::exp(-std::max(r - now, 0.0) / (params.k3 * ctx.p_bar));
  return index;
}

Action atcsr_dispatch(const Simulator& sim, const EnvState& state, const AtcsrParams& params) {
  if (state.done) throw std::invalid_argument("atcsr_dispatch: episode is done");
  const ProblemInstance& inst = sim.instance();

  struct Candidate {
    int job;
    int machine;
  };
  std::vector<Candidate> candidates;
  double p_sum = 0.0, s_sum = 0.0;
  for (int j = 0; j < inst.n; ++j) {
    if (!is_visible(sim, state, j)) continue;
    for (int k = 0; k < inst.m; ++k) {
      if (state.machine_status(k) != MachineStatus::Idle || !inst.is_eligible(j, k)) continue;
      candidates.push_back({j, k});
      p_sum += static_cast<double>(inst.p(j, k));
      s_sum += static_cast<double>(inst.s(state.machines[static_cast<std::size_t>(k)].last_setup, j, k));
    }
  }
  if (candidates.empty()) {
    if (!state.events.empty()) return Action::wait();
    throw std::invalid_argument("atcsr_dispatch: no feasible action");
  }
  const double count = static_cast<double>(candidates.size());
  const AtcsrContext ctx{std::max(p_sum / count, 1e-12), s_sum / count};

  const Candidate* best = nullptr;
  double best_index = -1.0;
  for (const Candidate& c : candidates) {
    const int setup = state.machines[static_cast<std::size_t>(c.machine)].last_setup;
    const double index = atcsr_index(inst, c.job, c.machine, state.now, setup, ctx, params);
    // Candidates are generated in (job, machine) order, so strict > keeps the lowest indices on ties.
    if (index > best_index) {
      best_index = index;
      best = &c;
    }
  }
  if (state.jobs[static_cast<std::size_t>(best->job)] != JobStatus::Queued) return Action::wait();
  return Action::assign(best->job, best->machine);
}

SolveResult solve_atcsr(const ProblemInstance& inst, const AtcsrParams& params) {
  const auto t0 = std::chrono::steady_clock::now();
  const Simulator sim(inst);
  EnvState state = sim.reset();
  while (!state.done) sim.step(state, atcsr_dispatch(sim, state, params));
  SolveResult result;
  result.schedule = sim.realized_schedule(state);
  result.objectives = compute_objectives(inst, result.schedule);
  result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace upms
