#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "upms/atcsr.hpp"

using namespace upms;

TEST_CASE("index reduces to w/p with zero setups, releases and slack") {
  auto inst = fx::random_instance(6, 2, 4);
  std::fill(inst.setup.begin(), inst.setup.end(), 0);
  std::fill(inst.release.begin(), inst.release.end(), 0);
  std::fill(inst.due.begin(), inst.due.end(), 0);
  for (int j = 0; j < 6; ++j) {
    for (int k : inst.eligible[j]) {
      const double idx = atcsr_index(inst, j, k, 0, kIdleSetup, {50.0, 0.0}, {});
      CHECK(idx == doctest::Approx(static_cast<double>(inst.weight[j]) / static_cast<double>(inst.p(j, k))).epsilon(1e-15));
    }
  }
}

TEST_CASE("index arithmetic and setup monotonicity") {
  auto inst = ProblemInstance::zeros(2, 1);
  inst.p(0, 0) = 5;
  inst.p(1, 0) = 5;
  inst.weight = {2, 2};
  inst.release = {0, 0};
  inst.due = {5, 5};
  inst.eligible = {{0}, {0}};
  CHECK(atcsr_index(inst, 0, 0, 0, kIdleSetup, {5.0, 0.0}, {}) == doctest::Approx(0.4).epsilon(1e-15));
  inst.s(0, 0, 0) = 1;
  inst.s(0, 1, 0) = 3;
  const AtcsrContext ctx{5.0, 2.0};
  CHECK(atcsr_index(inst, 0, 0, 0, kIdleSetup, ctx, {}) > atcsr_index(inst, 1, 0, 0, kIdleSetup, ctx, {}));
}

TEST_CASE("index follows the closed form") {
  const auto inst = fx::random_instance(5, 3, 8);
  const AtcsrParams prm{1.5, 0.7, 2.0};
  const AtcsrContext ctx{40.0, 6.0};
  for (int j = 0; j < 5; ++j) {
    for (int k : inst.eligible[j]) {
      const double p = static_cast<double>(inst.p(j, k));
      const double t = 7.0, r = static_cast<double>(inst.release[j]);
      const double slack = std::max(static_cast<double>(inst.due[j]) - p - std::max(t, r), 0.0);
      const double s = static_cast<double>(inst.s(2, j, k));
      const double want = static_cast<double>(inst.weight[j]) / p * std::exp(-slack / (1.5 * 40.0)) * std::exp(-s / (0.7 * 6.0)) *
                          std::exp(-std::max(r - t, 0.0) / (2.0 * 40.0));
      CHECK(atcsr_index(inst, j, k, 7, 2, ctx, prm) == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("ineligible pair throws") {
  auto inst = fx::random_instance(2, 2, 1);
  inst.eligible[0] = {1};
  CHECK_THROWS_AS(atcsr_index(inst, 0, 0, 0, kIdleSetup, {}, {}), std::invalid_argument);
}

TEST_CASE("instance A dispatch picks J1 on M1") {
  const auto inst = fx::instance_a();
  const Simulator sim(inst);
  const auto s = sim.reset();
  CHECK(atcsr_dispatch(sim, s, {}) == Action::assign(0, 0));
  const auto r = solve_atcsr(inst);
  CHECK(r.schedule.sequences[0] == std::vector<int>{0, 1});
  CHECK(r.objectives == ObjectiveValues{4, 2});
}

TEST_CASE("single feasible pair is chosen") {
  auto inst = ProblemInstance::zeros(1, 2);
  inst.p(0, 0) = inst.p(0, 1) = 4;
  inst.weight = {1};
  inst.release = {0};
  inst.due = {3};
  inst.eligible = {{1}};
  const Simulator sim(inst);
  CHECK(atcsr_dispatch(sim, sim.reset(), {}) == Action::assign(0, 1));
}

TEST_CASE("ties go to the lowest job index") {
  auto inst = ProblemInstance::zeros(3, 2);
  for (int j = 0; j < 3; ++j) {
    inst.p(j, 0) = inst.p(j, 1) = 6;
  }
  inst.weight = {3, 3, 3};
  inst.release = {0, 0, 0};
  inst.due = {20, 20, 20};
  inst.eligible = {{0, 1}, {0, 1}, {0, 1}};
  const Simulator sim(inst);
  CHECK(atcsr_dispatch(sim, sim.reset(), {}) == Action::assign(0, 0));
  const auto a = solve_atcsr(inst);
  const auto b = solve_atcsr(inst);
  CHECK(a.schedule.sequences == b.schedule.sequences);
  CHECK(a.schedule.sequences == std::vector<std::vector<int>>{{0, 2}, {1}});
}

TEST_CASE("argmax job not yet released means Wait") {
  auto inst = ProblemInstance::zeros(2, 1);
  inst.p(0, 0) = 50;
  inst.p(1, 0) = 2;
  inst.weight = {1, 10};
  inst.release = {0, 3};
  inst.due = {200, 5};
  inst.eligible = {{0}, {0}};
  const Simulator sim(inst);
  auto s = sim.reset();
  CHECK(atcsr_dispatch(sim, s, {}).is_wait());
  const auto r = solve_atcsr(inst);
  CHECK(r.schedule.sequences[0] == std::vector<int>{1, 0});
  CHECK(validate_schedule(inst, r.schedule).empty());
}

TEST_CASE("zero setup and slack instances follow WSPT on one machine") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto inst = fx::random_instance(7, 1, seed);
    std::fill(inst.setup.begin(), inst.setup.end(), 0);
    std::fill(inst.release.begin(), inst.release.end(), 0);
    std::fill(inst.due.begin(), inst.due.end(), 0);
    const auto r = solve_atcsr(inst);
    const auto& seq = r.schedule.sequences[0];
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const double a = static_cast<double>(inst.weight[seq[i - 1]]) / static_cast<double>(inst.p(seq[i - 1], 0));
      const double b = static_cast<double>(inst.weight[seq[i]]) / static_cast<double>(inst.p(seq[i], 0));
      CHECK(a >= b);
    }
  }
}

TEST_CASE("scaling all weights leaves the schedule unchanged") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto inst = fx::random_instance(10, 3, seed, 0.75);
    auto scaled = inst;
    for (auto& w : scaled.weight) w *= 7;
    CHECK(solve_atcsr(inst).schedule.sequences == solve_atcsr(scaled).schedule.sequences);
  }
}

TEST_CASE("ATCSR schedules are feasible and reproducible") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto inst = fx::random_instance(static_cast<int>(1 + seed % 25), static_cast<int>(1 + seed % 5), seed, seed % 2 ? 0.75 : 1.0);
    const auto r = solve_atcsr(inst);
    CHECK(validate_schedule(inst, r.schedule).empty());
    CHECK(compute_objectives(inst, r.schedule) == r.objectives);
    CHECK(solve_atcsr(inst).schedule.sequences == r.schedule.sequences);
  }
}
