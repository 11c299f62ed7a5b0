#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace upms {

using Time = std::int64_t;

/// Setup-row index of the idle pseudo-job J0. Job j uses setup row j + 1.
inline constexpr int kIdleSetup = 0;

/// Unrelated parallel machine instance with release dates, machine- and
/// sequence-dependent setups and machine eligibility.
///
/// Jobs are 0-based in code. The setup tensor has n + 1 rows: row 0 is the
/// initial setup from J0, row i + 1 holds the changeover from job i.
struct ProblemInstance {
  int n = 0;
  int m = 0;
  std::vector<Time> processing;  // n * m, row-major by job
  std::vector<Time> release;
  std::vector<Time> due;
  std::vector<Time> weight;
  std::vector<Time> setup;  // (n + 1) * n * m
  std::vector<std::vector<int>> eligible;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  /// Allocates zero-filled tensors; eligible sets start empty.
  static ProblemInstance zeros(int n, int m);

  Time p(int job, int machine) const { return processing[static_cast<std::size_t>(job) * m + machine]; }
  Time& p(int job, int machine) { return processing[static_cast<std::size_t>(job) * m + machine]; }

  /// Changeover on `machine` from setup row `from` (0 = J0, i + 1 = job i) to `job`.
  Time s(int from, int job, int machine) const { return setup[setup_index(from, job, machine)]; }
  Time& s(int from, int job, int machine) { return setup[setup_index(from, job, machine)]; }

  bool is_eligible(int job, int machine) const;

  /// Mean processing time over all n * m pairs.
  double mean_processing() const;
  /// Mean processing time of `job` over its eligible machines.
  double mean_processing_eligible(int job) const;

 private:
  std::size_t setup_index(int from, int job, int machine) const {
    return (static_cast<std::size_t>(from) * n + job) * m + machine;
  }
};

struct ScheduledJob {
  int machine = -1;
  Time setup_start = 0;
  Time start = 0;
  Time completion = 0;
};

/// Per-machine job sequences plus the timing of every job.
struct Schedule {
  std::vector<std::vector<int>> sequences;
  std::vector<ScheduledJob> jobs;
};

struct ObjectiveValues {
  Time twt = 0;
  Time tst = 0;

  double scalarized(double alpha, double beta) const;
  bool operator==(const ObjectiveValues&) const = default;
};

/// alpha * twt + beta * tst. Throws std::invalid_argument on negative weights
/// or when both weights are zero.
double scalarize(const ObjectiveValues& obj, double alpha, double beta);

enum class ViolationKind {
  Dimension,
  ProcessingBound,
  ReleaseBound,
  WeightBound,
  SetupBound,
  EligibilityEmpty,
  EligibilityRange,
  Partition,
  Eligibility,
  ReleaseDate,
  Capacity,
  Duration,
  MachineMismatch,
};

struct Violation {
  ViolationKind kind;
  int job = -1;
  int machine = -1;
  std::string message;
};

std::string to_string(ViolationKind kind);

/// Every violated instance invariant; empty iff the instance is valid.
std::vector<Violation> validate_instance(const ProblemInstance& inst);

/// Every violated schedule constraint; empty iff the schedule is feasible.
std::vector<Violation> validate_schedule(const ProblemInstance& inst, const Schedule& sched);

/// TWT and TST of a feasible schedule. Throws std::invalid_argument naming the
/// first violated constraint otherwise.
ObjectiveValues compute_objectives(const ProblemInstance& inst, const Schedule& sched);

/// Builds the timed schedule for the given machine sequences.
///
/// Setup on a machine starts once the machine is free and the job is
/// released; processing follows the setup immediately. Throws
/// std::invalid_argument if a job index is out of range.
Schedule build_schedule(const ProblemInstance& inst, std::vector<std::vector<int>> sequences);

/// Objective values of the canonical timeline for `sequence` on `machine`
/// without materializing a Schedule.
ObjectiveValues sequence_objectives(const ProblemInstance& inst, int machine, std::span<const int> sequence);

nlohmann::ordered_json to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::ordered_json& j);

ProblemInstance load_instance(const std::string& path);
void save_instance(const ProblemInstance& inst, const std::string& path);

nlohmann::ordered_json to_json(const Schedule& sched);

}  // namespace upms
