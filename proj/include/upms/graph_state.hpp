#pragma once

#include <array>
#include <vector>

#include "upms/sim_env.hpp"

namespace upms {

inline constexpr int kJobFeatures = 5;      // w, mean p (eligible), due - now, release - now, min setup
inline constexpr int kMachineFeatures = 6;  // idle, setting-up, busy, free_at - now, setup id, time in status
inline constexpr int kSetupFeatures = 3;    // is J0, setup id, machines in this configuration
inline constexpr int kJmFeatures = 3;       // p_jk, current setup estimate, eligibility flag
inline constexpr int kGlobalFeatures = 9;

struct JobNode {
  int job = 0;
  std::array<double, kJobFeatures> x{};
  bool operator==(const JobNode&) const = default;
};

struct MachineNode {
  int machine = 0;
  std::array<double, kMachineFeatures> x{};
  bool operator==(const MachineNode&) const = default;
};

struct SetupNode {
  int id = 0;  // 0 = J0, j + 1 = configuration left by job j
  std::array<double, kSetupFeatures> x{};
  bool operator==(const SetupNode&) const = default;
};

struct JmEdge {
  int job = 0;      // index into HeteroGraph::jobs
  int machine = 0;  // index into HeteroGraph::machines
  std::array<double, kJmFeatures> x{};
  bool operator==(const JmEdge&) const = default;
};

/// Edge with one scalar feature; endpoints are node-array indices.
struct ScalarEdge {
  int src = 0;
  int dst = 0;
  double x = 0.0;
  bool operator==(const ScalarEdge&) const = default;
};

struct GraphMeta {
  Time now = 0;
  double p_bar = 1.0;
  double horizon = 1.0;
  int n = 0;
  int m = 0;
  bool operator==(const GraphMeta&) const = default;
};

/// Typed snapshot of an EnvState. Time features are offsets from `now`
/// divided by the instance's mean processing time.
struct HeteroGraph {
  std::vector<JobNode> jobs;
  std::vector<MachineNode> machines;
  std::vector<SetupNode> setups;
  std::vector<JmEdge> jm;
  std::vector<ScalarEdge> ms;  // machine -> its current setup node; time in setup
  std::vector<ScalarEdge> js;  // job -> setup node it requires; w_j
  std::vector<ScalarEdge> sm;  // setup node -> machine; changeover cost estimate
  std::array<double, kGlobalFeatures> globals{};
  GraphMeta meta;

  bool operator==(const HeteroGraph&) const = default;

  /// Index of job `j` in `jobs`, or -1 when the job is not visible.
  int job_node(int j) const;
};

/// A job is visible when queued or released within one mean processing time.
bool is_visible(const Simulator& sim, const EnvState& state, int job);

std::array<double, kGlobalFeatures> global_features(const Simulator& sim, const EnvState& state);

HeteroGraph build_graph(const Simulator& sim, const EnvState& state);

nlohmann::ordered_json to_json(const HeteroGraph& g);
HeteroGraph graph_from_json(const nlohmann::ordered_json& j);

}  // namespace upms
