#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "upms/problem.hpp"

namespace upms {

enum class MachineStatus { Idle, SettingUp, Busy };
enum class JobStatus { Unreleased, Queued, Assigned, Done };

struct MachineState {
  Time free_at = 0;
  int last_setup = kIdleSetup;  // setup configuration: 0 = J0, j + 1 = job j
  int current_job = -1;         // job being set up or processed, -1 when idle
};

struct Event {
  enum class Kind { Completion = 0, Release = 1 };
  Time time = 0;
  Kind kind = Kind::Release;
  int index = 0;  // job index

  auto operator<=>(const Event&) const = default;
};

/// Live simulation state at a decision epoch. Plain value; copy freely.
struct EnvState {
  Time now = 0;
  std::vector<MachineState> machines;
  std::vector<JobStatus> jobs;
  std::vector<ScheduledJob> timing;  // valid once a job is assigned
  std::vector<std::vector<int>> sequences;
  Time twt = 0;
  Time tst = 0;
  int unassigned = 0;
  bool done = false;
  std::vector<Event> events;  // ascending; every time >= now

  MachineStatus machine_status(int k) const;
  /// When machine k entered its current status.
  Time status_since(int k) const;
  /// When machine k's current setup configuration was established.
  Time setup_since(int k) const;
};

struct Action {
  enum class Kind { Assign, Wait };
  Kind kind = Kind::Wait;
  int job = -1;
  int machine = -1;

  static Action assign(int job, int machine) { return {Kind::Assign, job, machine}; }
  static Action wait() { return {}; }
  bool is_wait() const { return kind == Kind::Wait; }
  bool operator==(const Action&) const = default;

  /// Flat index: job * m + machine, or n * m for Wait.
  int flat_index(int n, int m) const { return is_wait() ? n * m : job * m + machine; }
};

std::ostream& operator<<(std::ostream& os, const Action& a);

struct FeasibleSet {
  std::vector<Action> actions;     // assigns in (job, machine) order, then Wait if legal
  std::vector<std::uint8_t> mask;  // n * m + 1 entries, last one is Wait
  bool has_assign() const { return !actions.empty() && !actions.front().is_wait(); }
};

struct StepInfo {
  Time delta_twt = 0;
  Time setup = 0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct RewardWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

/// -alpha * delta_twt - beta * setup.
double reward(double delta_twt, double setup, double alpha, double beta);

/// Discrete-event simulator of one instance.
///
/// The agent is consulted only at decision epochs: instants with an idle
/// machine that can take a released, unassigned job. Releases and
/// completions between epochs are processed automatically. Tardiness is
/// charged in full when a job is assigned, since its completion time is
/// fixed at that point.
class Simulator {
 public:
  explicit Simulator(const ProblemInstance& inst, RewardWeights weights = {}, double reward_scale = 1.0);

  const ProblemInstance& instance() const { return *inst_; }
  RewardWeights weights() const { return weights_; }
  double p_bar() const { return p_bar_; }
  /// Upper bound on the makespan of any episode, used to normalize time.
  double horizon() const { return horizon_; }

  EnvState reset() const;
  FeasibleSet feasible_actions(const EnvState& state) const;
  bool is_feasible(const EnvState& state, const Action& a) const;

  /// Applies `a` in place. Throws std::invalid_argument on infeasible actions
  /// and std::logic_error on a finished episode.
  StepResult step(EnvState& state, const Action& a) const;

  /// Schedule realized so far (complete once the episode is done).
  Schedule realized_schedule(const EnvState& state) const;

 private:
  void process_due_events(EnvState& state) const;
  void advance_to_epoch(EnvState& state) const;
  bool has_assign(const EnvState& state) const;

  const ProblemInstance* inst_;
  RewardWeights weights_;
  double reward_scale_;
  double p_bar_;
  double horizon_;
};

using Policy = std::function<Action(const EnvState&, const FeasibleSet&)>;

struct TraceStep {
  int t = 0;
  Action action;
  double reward = 0.0;
  Time now = 0;  // simulation time when the action was taken
};

struct EpisodeTrace {
  std::vector<TraceStep> steps;
  std::vector<EnvState> states;  // filled only when requested
  Schedule schedule;
  ObjectiveValues objectives;
  double total_reward = 0.0;
};

/// Runs `policy` from reset until done. Throws std::runtime_error when the
/// step budget is exhausted.
EpisodeTrace rollout(const Simulator& sim, const Policy& policy, int max_steps, bool keep_states = false);

/// One JSON object per line: {t, action, reward, now}.
void write_trace_jsonl(std::ostream& os, const EpisodeTrace& trace);

}  // namespace upms
