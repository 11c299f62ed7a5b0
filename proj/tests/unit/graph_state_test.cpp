#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "upms/graph_state.hpp"
#include "upms/rng.hpp"

using namespace upms;

TEST_CASE("one queued job eligible on two of three machines has two jm edges") {
  auto inst = ProblemInstance::zeros(1, 3);
  for (int k = 0; k < 3; ++k) inst.p(0, k) = 4 + k;
  inst.weight = {2};
  inst.release = {0};
  inst.due = {9};
  inst.eligible = {{0, 2}};
  const Simulator sim(inst);
  const auto g = build_graph(sim, sim.reset());
  REQUIRE(g.jm.size() == 2);
  CHECK(g.jm[0].machine == 0);
  CHECK(g.jm[1].machine == 2);
}

TEST_CASE("fresh reset shares the J0 setup node") {
  const auto inst = fx::random_instance(5, 3, 2);
  const Simulator sim(inst);
  const auto g = build_graph(sim, sim.reset());
  CHECK(g.ms.size() == 3);
  REQUIRE_FALSE(g.setups.empty());
  CHECK(g.setups[0].id == 0);
  for (const auto& e : g.ms) CHECK(e.dst == 0);
  CHECK(g.setups[0].x[2] == 3.0);
}

TEST_CASE("instance A snapshot after Assign(J1,M1)") {
  const auto inst = fx::instance_a();
  const Simulator sim(inst);
  auto s = sim.reset();
  sim.step(s, Action::assign(0, 0));
  const auto g = build_graph(sim, s);

  // p_bar = 4, horizon = (5 + 2) + (3 + 2) = 12, now = 6.
  HeteroGraph want;
  want.jobs = {{1, {1.0, 0.75, 1.0, 0.0, 0.25}}};
  want.machines = {{0, {1, 0, 0, 0.0, 0.5, 0.0}}};
  want.setups = {{1, {0, 0.5, 1}}, {2, {0, 1.0, 0}}};
  want.jm = {{0, 0, {0.75, 0.25, 1.0}}};
  want.ms = {{0, 0, 1.25}};
  want.js = {{0, 1, 1.0}};
  want.sm = {{1, 0, 0.25}};
  want.globals = {1, 0, 1, 1.5, 0.25, 1, 0, 1.5, 0.5};
  want.meta = {6, 4.0, 12.0, 2, 1};
  CHECK(g == want);
  // The changeover into J2's configuration on M1 is s12 = 1 in raw units.
  CHECK(g.sm[0].x * g.meta.p_bar == 1.0);
}

TEST_CASE("global features at reset and with a busy machine") {
  auto inst = fx::random_instance(4, 2, 3);
  std::fill(inst.release.begin(), inst.release.end(), 0);
  const Simulator sim(inst);
  auto s = sim.reset();
  auto gf = global_features(sim, s);
  CHECK(gf[0] == 4.0);
  CHECK(gf[2] == 0.0);
  CHECK(gf[3] == 0.0);
  CHECK(gf[4] == 0.0);
  CHECK(gf[5] == 2.0);

  // Jobs 0 and 1 only on M1 and M2 respectively: after the first assign M1 is
  // occupied while M2 still has work.
  auto b = ProblemInstance::zeros(2, 2);
  b.p(0, 0) = b.p(0, 1) = 5;
  b.p(1, 0) = b.p(1, 1) = 3;
  b.release = {0, 0};
  b.due = {10, 10};
  b.weight = {1, 1};
  b.s(0, 0, 0) = 2;
  b.eligible = {{0}, {1}};
  const Simulator simb(b);
  auto sb = simb.reset();
  simb.step(sb, Action::assign(0, 0));
  REQUIRE(sb.now == 0);
  gf = global_features(simb, sb);
  CHECK(gf[5] == 1.0);  // idle
  CHECK(gf[6] == 1.0);  // setting up
  CHECK(sb.machine_status(0) == MachineStatus::SettingUp);
}

TEST_CASE("no future events means no arrivals soon") {
  auto inst = fx::instance_a();
  const Simulator sim(inst);
  const auto s = sim.reset();
  CHECK(s.events.empty());
  CHECK(global_features(sim, s)[1] == 0.0);
}

TEST_CASE("graph with no visible jobs keeps the machines") {
  auto inst = fx::instance_a();
  inst.release = {0, 500};
  const Simulator sim(inst);
  auto s = sim.reset();
  sim.step(s, Action::assign(0, 0));
  CHECK(s.now == 500);
  // Same state rewound to t=10, when J2 is still far off.
  auto early = s;
  early.now = 10;
  early.jobs[1] = JobStatus::Unreleased;
  early.events = {{500, Event::Kind::Release, 1}};
  const auto g = build_graph(sim, early);
  CHECK(g.jobs.empty());
  CHECK(g.machines.size() == 1);
  const auto j = to_json(g);
  CHECK(j["nodes"]["jobs"].empty());
  CHECK(j["nodes"]["machines"].size() == 1);
}

TEST_CASE("serialization round trip over random states") {
  Rng rng(21);
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 100; ++seed) {
    const auto inst = fx::random_instance(static_cast<int>(2 + seed % 8), static_cast<int>(1 + seed % 3), seed, 0.75);
    const Simulator sim(inst);
    auto s = sim.reset();
    while (!s.done && checked < 100) {
      const auto g = build_graph(sim, s);
      const auto j = to_json(g);
      CHECK(j["v"] == 1);
      const auto back = graph_from_json(j);
      CHECK(back == g);
      CHECK(to_json(back).dump() == j.dump());
      const auto fs = sim.feasible_actions(s);
      sim.step(s, fs.actions[rng.index(fs.actions.size())]);
      ++checked;
    }
  }
}

TEST_CASE("edge and feature invariants on fuzzed states") {
  Rng rng(4);
  for (std::uint64_t seed = 1; seed <= 120; ++seed) {
    const auto inst = fx::random_instance(static_cast<int>(1 + seed % 15), static_cast<int>(1 + seed % 4), seed, seed % 2 ? 0.75 : 1.0);
    const Simulator sim(inst);
    auto s = sim.reset();
    while (!s.done) {
      const auto g = build_graph(sim, s);
      CHECK(g == build_graph(sim, s));
      std::size_t expected_jm = 0;
      for (const auto& jn : g.jobs) expected_jm += inst.eligible[jn.job].size();
      CHECK(g.jm.size() == expected_jm);
      CHECK(g.ms.size() == static_cast<std::size_t>(inst.m));
      CHECK(g.js.size() == g.jobs.size());
      for (std::size_t i = 1; i < g.setups.size(); ++i) CHECK(g.setups[i - 1].id < g.setups[i].id);
      auto finite = [](double v) { return std::isfinite(v); };
      for (const auto& n : g.jobs) CHECK(std::all_of(n.x.begin(), n.x.end(), finite));
      for (const auto& n : g.machines) {
        CHECK(std::all_of(n.x.begin(), n.x.end(), finite));
        CHECK(n.x[3] >= 0.0);
        CHECK(n.x[5] >= 0.0);
      }
      for (const auto& e : g.jm) CHECK(std::all_of(e.x.begin(), e.x.end(), finite));
      for (const auto& e : g.ms) CHECK(e.x >= 0.0);
      CHECK(g.globals[8] >= 0.0);
      CHECK(g.globals[8] <= 1.0);
      const auto fs = sim.feasible_actions(s);
      sim.step(s, fs.actions[rng.index(fs.actions.size())]);
    }
  }
}

TEST_CASE("relabeling jobs permutes job nodes") {
  const auto inst = fx::random_instance(6, 2, 30);
  std::vector<int> perm{3, 5, 0, 1, 4, 2};  // old j -> new perm[j]
  auto rel = inst;
  for (int j = 0; j < 6; ++j) {
    const int pj = perm[j];
    for (int k = 0; k < 2; ++k) rel.p(pj, k) = inst.p(j, k);
    rel.release[pj] = inst.release[j];
    rel.due[pj] = inst.due[j];
    rel.weight[pj] = inst.weight[j];
    rel.eligible[pj] = inst.eligible[j];
    for (int i = 0; i <= 6; ++i) {
      const int pi = i == 0 ? 0 : perm[i - 1] + 1;
      for (int k = 0; k < 2; ++k) rel.s(pi, pj, k) = inst.s(i, j, k);
    }
  }
  const Simulator a(inst), b(rel);
  const auto ga = build_graph(a, a.reset());
  const auto gb = build_graph(b, b.reset());
  REQUIRE(ga.jobs.size() == gb.jobs.size());
  for (const auto& jn : ga.jobs) {
    const int idx = gb.job_node(perm[jn.job]);
    REQUIRE(idx >= 0);
    CHECK(gb.jobs[idx].x == jn.x);
  }
  CHECK(ga.globals == gb.globals);
}
