#pragma once

#include "upms/instance_gen.hpp"
#include "upms/problem.hpp"

namespace fx {

// Two jobs on one machine: p=[5,3], d=[4,10], w=[2,1], s01=1, s02=2, s12=1, s21=2.
inline upms::ProblemInstance instance_a() {
  auto inst = upms::ProblemInstance::zeros(2, 1);
  inst.p(0, 0) = 5;
  inst.p(1, 0) = 3;
  inst.release = {0, 0};
  inst.due = {4, 10};
  inst.weight = {2, 1};
  inst.s(0, 0, 0) = 1;
  inst.s(0, 1, 0) = 2;
  inst.s(1, 1, 0) = 1;
  inst.s(2, 0, 0) = 2;
  inst.eligible = {{0}, {0}};
  return inst;
}

inline upms::ProblemInstance random_instance(int n, int m, std::uint64_t seed, double delta = 1.0, double beta = 0.25) {
  upms::GenParams p;
  p.n = n;
  p.m = m;
  p.elig_density_delta = delta;
  p.setup_ratio_beta = beta;
  p.seed = seed;
  return upms::generate_instance(p);
}

}  // namespace fx
