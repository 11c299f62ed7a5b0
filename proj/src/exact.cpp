#include "upms/exact.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include <omp.h>

namespace upms {

void check_exact_size(const ProblemInstance& inst) {
  if (inst.n > kExactMaxJobs || inst.m > kExactMaxMachines) {
    throw std::invalid_argument("exact oracle is limited to n <= 8 and m <= 3 (got n=" + std::to_string(inst.n) +
                                ", m=" + std::to_string(inst.m) + ")");
  }
  if (const auto v = validate_instance(inst); !v.empty()) throw std::invalid_argument("exact oracle: " + v.front().message);
}

bool dominates(const ObjectiveValues& a, const ObjectiveValues& b) {
  return a.twt <= b.twt && a.tst <= b.tst && (a.twt < b.twt || a.tst < b.tst);
}

namespace {

/// Position of a schedule in enumeration order.
struct Key {
  std::uint64_t assignment = 0;
  std::uint64_t combo = 0;
  auto operator<=>(const Key&) const = default;
};

struct MachineOrders {
  std::vector<std::vector<int>> orders;
  std::vector<ObjectiveValues> values;
};

std::uint64_t assignment_count(const ProblemInstance& inst) {
  std::uint64_t count = 1;
  for (const auto& e : inst.eligible) count *= e.size();
  return count;
}

std::vector<std::vector<int>> sorted_eligible(const ProblemInstance& inst) {
  auto e = inst.eligible;
  for (auto& v : e) std::sort(v.begin(), v.end());
  return e;
}

/// Every order of every machine's job group under assignment `a` (mixed
/// radix, job 0 least significant), permutations in lexicographic order.
std::vector<MachineOrders> expand_assignment(const ProblemInstance& inst, const std::vector<std::vector<int>>& elig,
                                             std::uint64_t a) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(inst.m));
  for (int j = 0; j < inst.n; ++j) {
    const auto& e = elig[static_cast<std::size_t>(j)];
    groups[static_cast<std::size_t>(e[a % e.size()])].push_back(j);
    a /= e.size();
  }
  std::vector<MachineOrders> out(static_cast<std::size_t>(inst.m));
  for (int k = 0; k < inst.m; ++k) {
    auto perm = groups[static_cast<std::size_t>(k)];
    MachineOrders& mo = out[static_cast<std::size_t>(k)];
    do {
      mo.values.push_back(sequence_objectives(inst, k, perm));
      mo.orders.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

/// Calls visit(objectives, combo index, per-machine order indices) for every
/// product of per-machine orders; the last machine varies fastest.
template <typename Visit>
void for_each_combo(const std::vector<MachineOrders>& machines, Visit&& visit) {
  const std::size_t m = machines.size();
  std::vector<std::size_t> idx(m, 0);
  std::uint64_t combo = 0;
  for (;;) {
    ObjectiveValues total;
    for (std::size_t k = 0; k < m; ++k) {
      total.twt += machines[k].values[idx[k]].twt;
      total.tst += machines[k].values[idx[k]].tst;
    }
    visit(total, combo++, idx);
    std::size_t k = m;
    while (k > 0) {
      --k;
      if (++idx[k] < machines[k].values.size()) break;
      idx[k] = 0;
      if (k == 0) return;
    }
    if (m == 0) return;
  }
}

std::vector<std::vector<int>> pick_orders(const std::vector<MachineOrders>& machines, const std::vector<std::size_t>& idx) {
  std::vector<std::vector<int>> seqs;
  for (std::size_t k = 0; k < machines.size(); ++k) seqs.push_back(machines[k].orders[idx[k]]);
  return seqs;
}

struct Best {
  bool found = false;
  double value = 0.0;
  ObjectiveValues obj;
  Key key;
  std::vector<std::vector<int>> sequences;
  std::uint64_t enumerated = 0;

  bool better(double v, const ObjectiveValues& o, const Key& k) const {
    if (!found) return true;
    return std::tie(v, o.twt, o.tst, k) < std::tie(value, obj.twt, obj.tst, key);
  }
};

void search_assignment(const ProblemInstance& inst, const std::vector<std::vector<int>>& elig, std::uint64_t a,
                       double alpha, double beta, Best& best) {
  const auto machines = expand_assignment(inst, elig, a);
  for_each_combo(machines, [&](const ObjectiveValues& obj, std::uint64_t combo, const std::vector<std::size_t>& idx) {
    ++best.enumerated;
    const double v = alpha * static_cast<double>(obj.twt) + beta * static_cast<double>(obj.tst);
    const Key key{a, combo};
    if (best.better(v, obj, key)) {
      best.found = true;
      best.value = v;
      best.obj = obj;
      best.key = key;
      best.sequences = pick_orders(machines, idx);
    }
  });
}

struct Front {
  struct Entry {
    ObjectiveValues obj;
    Key key;
    std::vector<std::vector<int>> sequences;
  };
  std::vector<Entry> points;

  /// Returns true when the point enters the front.
  bool offer(const ObjectiveValues& obj, const Key& key) {
    for (Entry& e : points) {
      if (e.obj == obj) {
        if (key < e.key) {
          e.key = key;
          return true;
        }
        return false;
      }
      if (dominates(e.obj, obj)) return false;
    }
    std::erase_if(points, [&](const Entry& e) { return dominates(obj, e.obj); });
    points.push_back({obj, key, {}});
    return true;
  }

  void merge(const Front& other) {
    for (const Entry& e : other.points) {
      if (offer(e.obj, e.key)) {
        for (Entry& mine : points) {
          if (mine.obj == e.obj) mine.sequences = e.sequences;
        }
      }
    }
  }
};

void enumerate_front(const ProblemInstance& inst, const std::vector<std::vector<int>>& elig, std::uint64_t a,
                     Front& front) {
  const auto machines = expand_assignment(inst, elig, a);
  for_each_combo(machines, [&](const ObjectiveValues& obj, std::uint64_t combo, const std::vector<std::size_t>& idx) {
    if (front.offer(obj, {a, combo})) {
      for (auto& e : front.points) {
        if (e.obj == obj) e.sequences = pick_orders(machines, idx);
      }
    }
  });
}

}  // namespace

ExactResult solve_exact_scalarized(const ProblemInstance& inst, double alpha, double beta, Exec exec) {
  check_exact_size(inst);
  if (alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0) throw std::invalid_argument("solve_exact_scalarized: invalid weights");
  const auto elig = sorted_eligible(inst);
  const std::uint64_t count = assignment_count(inst);

  Best best;
  if (exec == Exec::Parallel) {
    std::vector<Best> partial(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel
    {
      Best& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic)
      for (std::uint64_t a = 0; a < count; ++a) search_assignment(inst, elig, a, alpha, beta, mine);
    }
    for (const Best& b : partial) {
      best.enumerated += b.enumerated;
      if (b.found && best.better(b.value, b.obj, b.key)) {
        const auto enumerated = best.enumerated;
        best = b;
        best.enumerated = enumerated;
      }
    }
  } else {
    for (std::uint64_t a = 0; a < count; ++a) search_assignment(inst, elig, a, alpha, beta, best);
  }

  ExactResult result;
  result.schedule = build_schedule(inst, best.sequences);
  result.objectives = compute_objectives(inst, result.schedule);
  result.value = best.value;
  result.enumerated = best.enumerated;
  return result;
}

std::vector<ParetoPoint> pareto_enumerate(const ProblemInstance& inst, Exec exec) {
  check_exact_size(inst);
  const auto elig = sorted_eligible(inst);
  const std::uint64_t count = assignment_count(inst);

  Front front;
  if (exec == Exec::Parallel) {
    std::vector<Front> partial(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel
    {
      Front& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic)
      for (std::uint64_t a = 0; a < count; ++a) enumerate_front(inst, elig, a, mine);
    }
    for (const Front& f : partial) front.merge(f);
  } else {
    for (std::uint64_t a = 0; a < count; ++a) enumerate_front(inst, elig, a, front);
  }

  std::sort(front.points.begin(), front.points.end(),
            [](const Front::Entry& x, const Front::Entry& y) { return x.obj.twt < y.obj.twt; });
  std::vector<ParetoPoint> out;
  for (auto& e : front.points) out.push_back({e.obj, std::move(e.sequences)});
  return out;
}

}  // namespace upms
