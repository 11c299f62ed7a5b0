#include "upms/sim_env.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace upms {

MachineStatus EnvState::machine_status(int k) const {
  const MachineState& ms = machines[static_cast<std::size_t>(k)];
  if (ms.current_job < 0) return MachineStatus::Idle;
  return now < timing[static_cast<std::size_t>(ms.current_job)].start ? MachineStatus::SettingUp : MachineStatus::Busy;
}

Time EnvState::status_since(int k) const {
  const MachineState& ms = machines[static_cast<std::size_t>(k)];
  if (ms.current_job < 0) return ms.last_setup == kIdleSetup ? 0 : ms.free_at;
  const ScheduledJob& sj = timing[static_cast<std::size_t>(ms.current_job)];
  return now < sj.start ? sj.setup_start : sj.start;
}

Time EnvState::setup_since(int k) const {
  const MachineState& ms = machines[static_cast<std::size_t>(k)];
  if (ms.last_setup == kIdleSetup) return 0;
  const ScheduledJob& sj = timing[static_cast<std::size_t>(ms.last_setup - 1)];
  // While the changeover is running the new configuration is not in place yet.
  return std::min(now, sj.start);
}

std::ostream& operator<<(std::ostream& os, const Action& a) {
  if (a.is_wait()) return os << "Wait";
  return os << "Assign(J" << a.job + 1 << ",M" << a.machine + 1 << ")";
}

double reward(double delta_twt, double setup, double alpha, double beta) { return -alpha * delta_twt - beta * setup; }

Simulator::Simulator(const ProblemInstance& inst, RewardWeights weights, double reward_scale)
    : inst_(&inst), weights_(weights), reward_scale_(reward_scale), p_bar_(inst.mean_processing()), horizon_(0.0) {
  Time max_release = 0;
  double work = 0.0;
  for (int j = 0; j < inst.n; ++j) {
    max_release = std::max(max_release, inst.release[static_cast<std::size_t>(j)]);
    Time worst = 0;
    for (int k = 0; k < inst.m; ++k) {
      Time setup = 0;
      for (int i = 0; i <= inst.n; ++i) setup = std::max(setup, inst.s(i, j, k));
      worst = std::max(worst, inst.p(j, k) + setup);
    }
    work += static_cast<double>(worst);
  }
  horizon_ = std::max(1.0, static_cast<double>(max_release) + work);
  if (p_bar_ <= 0.0) p_bar_ = 1.0;
}

EnvState Simulator::reset() const {
  const ProblemInstance& inst = *inst_;
  if (const auto violations = validate_instance(inst); !violations.empty()) {
    throw std::invalid_argument("reset: invalid instance: " + violations.front().message);
  }
  EnvState state;
  state.machines.assign(static_cast<std::size_t>(inst.m), MachineState{});
  state.jobs.assign(static_cast<std::size_t>(inst.n), JobStatus::Unreleased);
  state.timing.assign(static_cast<std::size_t>(inst.n), ScheduledJob{});
  state.sequences.assign(static_cast<std::size_t>(inst.m), {});
  state.unassigned = inst.n;
  if (inst.n == 0) {
    state.done = true;
    return state;
  }
  state.now = *std::min_element(inst.release.begin(), inst.release.end());
  for (int j = 0; j < inst.n; ++j) {
    const Time r = inst.release[static_cast<std::size_t>(j)];
    if (r <= state.now) {
      state.jobs[static_cast<std::size_t>(j)] = JobStatus::Queued;
    } else {
      state.events.push_back({r, Event::Kind::Release, j});
    }
  }
  std::sort(state.events.begin(), state.events.end());
  advance_to_epoch(state);
  return state;
}

void Simulator::process_due_events(EnvState& state) const {
  auto it = state.events.begin();
  for (; it != state.events.end() && it->time <= state.now; ++it) {
    const auto j = static_cast<std::size_t>(it->index);
    if (it->kind == Event::Kind::Release) {
      state.jobs[j] = JobStatus::Queued;
    } else {
      state.jobs[j] = JobStatus::Done;
      state.machines[static_cast<std::size_t>(state.timing[j].machine)].current_job = -1;
    }
  }
  state.events.erase(state.events.begin(), it);
}

bool Simulator::has_assign(const EnvState& state) const {
  const ProblemInstance& inst = *inst_;
  for (int j = 0; j < inst.n; ++j) {
    if (state.jobs[static_cast<std::size_t>(j)] != JobStatus::Queued) continue;
    for (int k : inst.eligible[static_cast<std::size_t>(j)]) {
      if (state.machines[static_cast<std::size_t>(k)].current_job < 0) return true;
    }
  }
  return false;
}

void Simulator::advance_to_epoch(EnvState& state) const {
  for (;;) {
    process_due_events(state);
    if (state.unassigned == 0) {
      if (!state.events.empty()) {
        state.now = state.events.back().time;
        process_due_events(state);
      }
      state.done = true;
      return;
    }
    if (has_assign(state)) return;
    if (state.events.empty()) throw std::logic_error("simulation deadlock: unassigned jobs but no pending events");
    state.now = state.events.front().time;
  }
}

FeasibleSet Simulator::feasible_actions(const EnvState& state) const {
  if (state.done) throw std::logic_error("feasible_actions: episode is done");
  const ProblemInstance& inst = *inst_;
  FeasibleSet fs;
  fs.mask.assign(static_cast<std::size_t>(inst.n) * inst.m + 1, 0);
  for (int j = 0; j < inst.n; ++j) {
    if (state.jobs[static_cast<std::size_t>(j)] != JobStatus::Queued) continue;
    for (int k = 0; k < inst.m; ++k) {
      if (state.machines[static_cast<std::size_t>(k)].current_job >= 0 || !inst.is_eligible(j, k)) continue;
      fs.actions.push_back(Action::assign(j, k));
      fs.mask[static_cast<std::size_t>(j) * inst.m + k] = 1;
    }
  }
  if (!state.events.empty()) {
    fs.actions.push_back(Action::wait());
    fs.mask.back() = 1;
  }
  return fs;
}

bool Simulator::is_feasible(const EnvState& state, const Action& a) const {
  if (state.done) return false;
  if (a.is_wait()) return !state.events.empty();
  const ProblemInstance& inst = *inst_;
  if (a.job < 0 || a.job >= inst.n || a.machine < 0 || a.machine >= inst.m) return false;
  return state.jobs[static_cast<std::size_t>(a.job)] == JobStatus::Queued &&
         state.machines[static_cast<std::size_t>(a.machine)].current_job < 0 && inst.is_eligible(a.job, a.machine);
}

StepResult Simulator::step(EnvState& state, const Action& a) const {
  if (state.done) throw std::logic_error("step: episode is done");
  if (!is_feasible(state, a)) {
    std::string what = "step: infeasible action ";
    what += a.is_wait() ? std::string("Wait") : "Assign(J" + std::to_string(a.job + 1) + ",M" + std::to_string(a.machine + 1) + ")";
    throw std::invalid_argument(what + " at t=" + std::to_string(state.now));
  }
  const ProblemInstance& inst = *inst_;
  StepResult result;
  if (a.is_wait()) {
    state.now = state.events.front().time;
    advance_to_epoch(state);
    result.done = state.done;
    return result;
  }

  const auto j = static_cast<std::size_t>(a.job);
  const auto k = static_cast<std::size_t>(a.machine);
  MachineState& ms = state.machines[k];
  const Time setup = inst.s(ms.last_setup, a.job, a.machine);
  ScheduledJob& sj = state.timing[j];
  sj.machine = a.machine;
  sj.setup_start = state.now;  // machine idle and job released, so max(free_at, r_j) = now
  sj.start = sj.setup_start + setup;
  sj.completion = sj.start + inst.p(a.job, a.machine);
  ms.free_at = sj.completion;
  ms.current_job = a.job;
  ms.last_setup = a.job + 1;
  state.jobs[j] = JobStatus::Assigned;
  state.sequences[k].push_back(a.job);
  --state.unassigned;

  const Time delta_twt = inst.weight[j] * std::max<Time>(0, sj.completion - inst.due[j]);
  state.twt += delta_twt;
  state.tst += setup;
  const Event completion{sj.completion, Event::Kind::Completion, a.job};
  state.events.insert(std::upper_bound(state.events.begin(), state.events.end(), completion), completion);

  result.info = {delta_twt, setup};
  result.reward = reward_scale_ * reward(static_cast<double>(delta_twt), static_cast<double>(setup), weights_.alpha, weights_.beta);
  advance_to_epoch(state);
  result.done = state.done;
  return result;
}

Schedule Simulator::realized_schedule(const EnvState& state) const {
  Schedule sched;
  sched.sequences = state.sequences;
  sched.jobs = state.timing;
  return sched;
}

EpisodeTrace rollout(const Simulator& sim, const Policy& policy, int max_steps, bool keep_states) {
  EpisodeTrace trace;
  EnvState state = sim.reset();
  int t = 0;
  while (!state.done) {
    if (t >= max_steps) throw std::runtime_error("rollout: step budget of " + std::to_string(max_steps) + " exceeded");
    const FeasibleSet fs = sim.feasible_actions(state);
    const Action a = policy(state, fs);
    if (keep_states) trace.states.push_back(state);
    const Time now = state.now;
    const StepResult r = sim.step(state, a);
    trace.steps.push_back({t, a, r.reward, now});
    trace.total_reward += r.reward;
    ++t;
  }
  trace.schedule = sim.realized_schedule(state);
  trace.objectives = compute_objectives(sim.instance(), trace.schedule);
  return trace;
}

void write_trace_jsonl(std::ostream& os, const EpisodeTrace& trace) {
  for (const TraceStep& s : trace.steps) {
    nlohmann::ordered_json j;
    j["t"] = s.t;
    if (s.action.is_wait()) {
      j["action"] = {{"type", "wait"}};
    } else {
      j["action"] = {{"type", "assign"}, {"job", s.action.job}, {"machine", s.action.machine}};
    }
    j["reward"] = s.reward;
    j["now"] = s.now;
    os << j.dump() << '\n';
  }
}

}  // namespace upms
