#include "upms/graph_state.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace upms {

int HeteroGraph::job_node(int j) const {
  auto it = std::lower_bound(jobs.begin(), jobs.end(), j, [](const JobNode& node, int v) { return node.job < v; });
  return (it != jobs.end() && it->job == j) ? static_cast<int>(it - jobs.begin()) : -1;
}

bool is_visible(const Simulator& sim, const EnvState& state, int job) {
  const JobStatus st = state.jobs[static_cast<std::size_t>(job)];
  if (st == JobStatus::Queued) return true;
  if (st != JobStatus::Unreleased) return false;
  return static_cast<double>(sim.instance().release[static_cast<std::size_t>(job)]) <=
         static_cast<double>(state.now) + sim.p_bar();
}

std::array<double, kGlobalFeatures> global_features(const Simulator& sim, const EnvState& state) {
  const ProblemInstance& inst = sim.instance();
  const double p_bar = sim.p_bar();
  double wip = 0, arrivals = 0, tardy = 0, flow = 0, completed = 0;
  for (int j = 0; j < inst.n; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    switch (state.jobs[jj]) {
      case JobStatus::Queued:
        wip += 1;
        break;
      case JobStatus::Unreleased:
        if (is_visible(sim, state, j)) arrivals += 1;
        break;
      case JobStatus::Done:
        completed += 1;
        flow += static_cast<double>(state.timing[jj].completion - inst.release[jj]);
        [[fallthrough]];
      case JobStatus::Assigned:
        if (state.timing[jj].completion > inst.due[jj]) tardy += 1;
        break;
    }
  }
  double idle = 0, setting_up = 0;
  for (int k = 0; k < inst.m; ++k) {
    const MachineStatus st = state.machine_status(k);
    if (st == MachineStatus::Idle) idle += 1;
    if (st == MachineStatus::SettingUp) setting_up += 1;
  }
  const double now = static_cast<double>(state.now);
  return {wip,
          arrivals,
          tardy,
          completed > 0 ? flow / completed / p_bar : 0.0,
          static_cast<double>(state.tst) / p_bar,
          idle,
          setting_up,
          now / p_bar,
          std::clamp(now / sim.horizon(), 0.0, 1.0)};
}

HeteroGraph build_graph(const Simulator& sim, const EnvState& state) {
  const ProblemInstance& inst = sim.instance();
  const double p_bar = sim.p_bar();
  const Time now = state.now;
  HeteroGraph g;
  g.meta = {now, p_bar, sim.horizon(), inst.n, inst.m};
  const double id_scale = 1.0 / std::max(1, inst.n);

  for (int k = 0; k < inst.m; ++k) {
    const MachineState& ms = state.machines[static_cast<std::size_t>(k)];
    const MachineStatus st = state.machine_status(k);
    MachineNode node;
    node.machine = k;
    node.x = {st == MachineStatus::Idle ? 1.0 : 0.0,
              st == MachineStatus::SettingUp ? 1.0 : 0.0,
              st == MachineStatus::Busy ? 1.0 : 0.0,
              static_cast<double>(std::max<Time>(ms.free_at - now, 0)) / p_bar,
              ms.last_setup * id_scale,
              static_cast<double>(std::max<Time>(now - state.status_since(k), 0)) / p_bar};
    g.machines.push_back(node);
  }

  std::vector<int> setup_ids;
  for (const MachineState& ms : state.machines) setup_ids.push_back(ms.last_setup);
  for (int j = 0; j < inst.n; ++j) {
    if (!is_visible(sim, state, j)) continue;
    const auto jj = static_cast<std::size_t>(j);
    double min_idle = std::numeric_limits<double>::infinity();
    double min_any = std::numeric_limits<double>::infinity();
    for (int k : inst.eligible[jj]) {
      const double s = static_cast<double>(inst.s(state.machines[static_cast<std::size_t>(k)].last_setup, j, k));
      min_any = std::min(min_any, s);
      if (state.machine_status(k) == MachineStatus::Idle) min_idle = std::min(min_idle, s);
    }
    const double min_setup = std::isfinite(min_idle) ? min_idle : (std::isfinite(min_any) ? min_any : 0.0);
    JobNode node;
    node.job = j;
    node.x = {static_cast<double>(inst.weight[jj]),
              inst.mean_processing_eligible(j) / p_bar,
              static_cast<double>(inst.due[jj] - now) / p_bar,
              static_cast<double>(std::max<Time>(inst.release[jj] - now, 0)) / p_bar,
              min_setup / p_bar};
    g.jobs.push_back(node);
    setup_ids.push_back(j + 1);
  }
  std::sort(setup_ids.begin(), setup_ids.end());
  setup_ids.erase(std::unique(setup_ids.begin(), setup_ids.end()), setup_ids.end());
  std::map<int, int> setup_index;
  for (int id : setup_ids) {
    const int idx = static_cast<int>(g.setups.size());
    setup_index[id] = idx;
    double machines_in = 0;
    for (const MachineState& ms : state.machines) machines_in += (ms.last_setup == id) ? 1.0 : 0.0;
    g.setups.push_back({id, {id == kIdleSetup ? 1.0 : 0.0, id * id_scale, machines_in}});
  }

  for (int jn = 0; jn < static_cast<int>(g.jobs.size()); ++jn) {
    const int j = g.jobs[static_cast<std::size_t>(jn)].job;
    std::vector<int> elig = inst.eligible[static_cast<std::size_t>(j)];
    std::sort(elig.begin(), elig.end());
    for (int k : elig) {
      const int last = state.machines[static_cast<std::size_t>(k)].last_setup;
      g.jm.push_back({jn, k, {static_cast<double>(inst.p(j, k)) / p_bar, static_cast<double>(inst.s(last, j, k)) / p_bar, 1.0}});
    }
  }
  for (int k = 0; k < inst.m; ++k) {
    const int id = state.machines[static_cast<std::size_t>(k)].last_setup;
    g.ms.push_back({k, setup_index.at(id), static_cast<double>(now - state.setup_since(k)) / p_bar});
  }
  for (int jn = 0; jn < static_cast<int>(g.jobs.size()); ++jn) {
    const int j = g.jobs[static_cast<std::size_t>(jn)].job;
    g.js.push_back({jn, setup_index.at(j + 1), static_cast<double>(inst.weight[static_cast<std::size_t>(j)])});
  }
  for (int sn = 0; sn < static_cast<int>(g.setups.size()); ++sn) {
    const int id = g.setups[static_cast<std::size_t>(sn)].id;
    if (id == kIdleSetup) continue;
    const int j = id - 1;
    if (g.job_node(j) < 0) continue;  // only configurations some visible job requires
    std::vector<int> elig = inst.eligible[static_cast<std::size_t>(j)];
    std::sort(elig.begin(), elig.end());
    for (int k : elig) {
      const int last = state.machines[static_cast<std::size_t>(k)].last_setup;
      g.sm.push_back({sn, k, static_cast<double>(inst.s(last, j, k)) / p_bar});
    }
  }
  g.globals = global_features(sim, state);
  return g;
}

namespace {

template <std::size_t N>
std::array<double, N> read_array(const nlohmann::ordered_json& j) {
  if (j.size() != N) throw std::invalid_argument("graph json: feature vector has wrong length");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j.at(i).get<double>();
  return out;
}

nlohmann::ordered_json scalar_edges(const std::vector<ScalarEdge>& edges) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : edges) arr.push_back({{"src", e.src}, {"dst", e.dst}, {"x", e.x}});
  return arr;
}

std::vector<ScalarEdge> read_scalar_edges(const nlohmann::ordered_json& arr) {
  std::vector<ScalarEdge> out;
  for (const auto& e : arr) out.push_back({e.at("src").get<int>(), e.at("dst").get<int>(), e.at("x").get<double>()});
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const HeteroGraph& g) {
  nlohmann::ordered_json j;
  j["v"] = 1;
  auto jobs = nlohmann::ordered_json::array();
  for (const auto& node : g.jobs) jobs.push_back({{"id", node.job}, {"x", node.x}});
  auto machines = nlohmann::ordered_json::array();
  for (const auto& node : g.machines) machines.push_back({{"id", node.machine}, {"x", node.x}});
  auto setups = nlohmann::ordered_json::array();
  for (const auto& node : g.setups) setups.push_back({{"id", node.id}, {"x", node.x}});
  j["nodes"] = {{"jobs", std::move(jobs)}, {"machines", std::move(machines)}, {"setups", std::move(setups)}};
  auto jm = nlohmann::ordered_json::array();
  for (const auto& e : g.jm) jm.push_back({{"src", e.job}, {"dst", e.machine}, {"x", e.x}});
  j["edges"] = {{"jm", std::move(jm)}, {"ms", scalar_edges(g.ms)}, {"js", scalar_edges(g.js)}, {"sm", scalar_edges(g.sm)}};
  j["globals"] = g.globals;
  j["meta"] = {{"now", g.meta.now}, {"p_bar", g.meta.p_bar}, {"horizon", g.meta.horizon}, {"n", g.meta.n}, {"m", g.meta.m}};
  return j;
}

HeteroGraph graph_from_json(const nlohmann::ordered_json& j) {
  if (j.at("v").get<int>() != 1) throw std::invalid_argument("graph json: unsupported version");
  HeteroGraph g;
  const auto& nodes = j.at("nodes");
  for (const auto& n : nodes.at("jobs")) g.jobs.push_back({n.at("id").get<int>(), read_array<kJobFeatures>(n.at("x"))});
  for (const auto& n : nodes.at("machines")) g.machines.push_back({n.at("id").get<int>(), read_array<kMachineFeatures>(n.at("x"))});
  for (const auto& n : nodes.at("setups")) g.setups.push_back({n.at("id").get<int>(), read_array<kSetupFeatures>(n.at("x"))});
  const auto& edges = j.at("edges");
  for (const auto& e : edges.at("jm")) g.jm.push_back({e.at("src").get<int>(), e.at("dst").get<int>(), read_array<kJmFeatures>(e.at("x"))});
  g.ms = read_scalar_edges(edges.at("ms"));
  g.js = read_scalar_edges(edges.at("js"));
  g.sm = read_scalar_edges(edges.at("sm"));
  g.globals = read_array<kGlobalFeatures>(j.at("globals"));
  const auto& meta = j.at("meta");
  g.meta = {meta.at("now").get<Time>(), meta.at("p_bar").get<double>(), meta.at("horizon").get<double>(),
            meta.at("n").get<int>(), meta.at("m").get<int>()};
  return g;
}

}  // namespace upms
