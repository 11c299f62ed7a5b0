#include "upms/problem.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace upms {

ProblemInstance ProblemInstance::zeros(int n, int m) {
  ProblemInstance inst;
  inst.n = n;
  inst.m = m;
  const auto nn = static_cast<std::size_t>(n);
  const auto mm = static_cast<std::size_t>(m);
  inst.processing.assign(nn * mm, 0);
  inst.release.assign(nn, 0);
  inst.due.assign(nn, 0);
  inst.weight.assign(nn, 0);
  inst.setup.assign((nn + 1) * nn * mm, 0);
  inst.eligible.assign(nn, {});
  return inst;
}

bool ProblemInstance::is_eligible(int job, int machine) const {
  const auto& e = eligible[static_cast<std::size_t>(job)];
  return std::find(e.begin(), e.end(), machine) != e.end();
}

double ProblemInstance::mean_processing() const {
  if (processing.empty()) return 0.0;
  const double total = std::accumulate(processing.begin(), processing.end(), 0.0);
  return total / static_cast<double>(processing.size());
}

double ProblemInstance::mean_processing_eligible(int job) const {
  const auto& e = eligible[static_cast<std::size_t>(job)];
  if (e.empty()) return 0.0;
  double total = 0.0;
  for (int k : e) total += static_cast<double>(p(job, k));
  return total / static_cast<double>(e.size());
}

double ObjectiveValues::scalarized(double alpha, double beta) const { return scalarize(*this, alpha, beta); }

double scalarize(const ObjectiveValues& obj, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("scalarize: weights must be non-negative");
  if (alpha + beta <= 0.0) throw std::invalid_argument("scalarize: alpha and beta are both zero");
  return alpha * static_cast<double>(obj.twt) + beta * static_cast<double>(obj.tst);
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Dimension: return "dimension";
    case ViolationKind::ProcessingBound: return "processing-bound";
    case ViolationKind::ReleaseBound: return "release-bound";
    case ViolationKind::WeightBound: return "weight-bound";
    case ViolationKind::SetupBound: return "setup-bound";
    case ViolationKind::EligibilityEmpty: return "eligibility-empty";
    case ViolationKind::EligibilityRange: return "eligibility-range";
    case ViolationKind::Partition: return "partition";
    case ViolationKind::Eligibility: return "eligibility";
    case ViolationKind::ReleaseDate: return "release-date";
    case ViolationKind::Capacity: return "capacity";
    case ViolationKind::Duration: return "duration";
    case ViolationKind::MachineMismatch: return "machine-mismatch";
  }
  return "unknown";
}

namespace {

std::string job_name(int j) { return "J" + std::to_string(j + 1); }
std::string machine_name(int k) { return "M" + std::to_string(k + 1); }

Violation make_violation(ViolationKind kind, int job, int machine, std::string message) {
  return Violation{kind, job, machine, to_string(kind) + ": " + std::move(message)};
}

}  // namespace

std::vector<Violation> validate_instance(const ProblemInstance& inst) {
  std::vector<Violation> out;
  if (inst.n < 0 || inst.m < 1) {
    out.push_back(make_violation(ViolationKind::Dimension, -1, -1, "need n >= 0 and m >= 1"));
    return out;
  }
  const auto n = static_cast<std::size_t>(inst.n);
  const auto m = static_cast<std::size_t>(inst.m);
  if (inst.processing.size() != n * m || inst.release.size() != n || inst.due.size() != n ||
      inst.weight.size() != n || inst.setup.size() != (n + 1) * n * m || inst.eligible.size() != n) {
    out.push_back(make_violation(ViolationKind::Dimension, -1, -1, "tensor sizes do not match n and m"));
    return out;
  }
  for (int j = 0; j < inst.n; ++j) {
    for (int k = 0; k < inst.m; ++k) {
      if (inst.p(j, k) < 1) {
        out.push_back(make_violation(ViolationKind::ProcessingBound, j, k,
                                     "p[" + job_name(j) + "][" + machine_name(k) + "] < 1"));
      }
    }
    if (inst.release[static_cast<std::size_t>(j)] < 0) {
      out.push_back(make_violation(ViolationKind::ReleaseBound, j, -1, "r[" + job_name(j) + "] < 0"));
    }
    if (inst.weight[static_cast<std::size_t>(j)] < 1) {
      out.push_back(make_violation(ViolationKind::WeightBound, j, -1, "w[" + job_name(j) + "] < 1"));
    }
    const auto& e = inst.eligible[static_cast<std::size_t>(j)];
    if (e.empty()) {
      out.push_back(make_violation(ViolationKind::EligibilityEmpty, j, -1, "eligible set of " + job_name(j) + " is empty"));
    }
    std::vector<bool> seen(m, false);
    for (int k : e) {
      if (k < 0 || k >= inst.m || seen[static_cast<std::size_t>(k)]) {
        out.push_back(make_violation(ViolationKind::EligibilityRange, j, k,
                                     "eligible set of " + job_name(j) + " has invalid or repeated machine " +
                                         std::to_string(k)));
        continue;
      }
      seen[static_cast<std::size_t>(k)] = true;
    }
  }
  for (int i = 0; i <= inst.n; ++i) {
    for (int j = 0; j < inst.n; ++j) {
      for (int k = 0; k < inst.m; ++k) {
        if (inst.s(i, j, k) < 0) {
          out.push_back(make_violation(ViolationKind::SetupBound, j, k,
                                       "s[" + std::to_string(i) + "][" + job_name(j) + "][" + machine_name(k) + "] < 0"));
        }
      }
    }
  }
  return out;
}

std::vector<Violation> validate_schedule(const ProblemInstance& inst, const Schedule& sched) {
  std::vector<Violation> out;
  if (sched.sequences.size() != static_cast<std::size_t>(inst.m) ||
      sched.jobs.size() != static_cast<std::size_t>(inst.n)) {
    out.push_back(make_violation(ViolationKind::Dimension, -1, -1, "schedule does not match instance dimensions"));
    return out;
  }
  std::vector<int> count(static_cast<std::size_t>(inst.n), 0);
  for (int k = 0; k < inst.m; ++k) {
    const auto& seq = sched.sequences[static_cast<std::size_t>(k)];
    int prev = -1;
    for (int j : seq) {
      if (j < 0 || j >= inst.n) {
        out.push_back(make_violation(ViolationKind::Partition, j, k, "job index out of range on " + machine_name(k)));
        continue;
      }
      ++count[static_cast<std::size_t>(j)];
      const ScheduledJob& sj = sched.jobs[static_cast<std::size_t>(j)];
      if (sj.machine != k) {
        out.push_back(make_violation(ViolationKind::MachineMismatch, j, k,
                                     job_name(j) + " is sequenced on " + machine_name(k) + " but records machine " +
                                         std::to_string(sj.machine)));
      }
      if (!inst.is_eligible(j, k)) {
        out.push_back(make_violation(ViolationKind::Eligibility, j, k, machine_name(k) + " is not eligible for " + job_name(j)));
      }
      if (sj.start < inst.release[static_cast<std::size_t>(j)]) {
        out.push_back(make_violation(ViolationKind::ReleaseDate, j, k,
                                     job_name(j) + " starts at " + std::to_string(sj.start) + " before release " +
                                         std::to_string(inst.release[static_cast<std::size_t>(j)])));
      }
      const Time ready = prev < 0 ? inst.s(kIdleSetup, j, k)
                                  : sched.jobs[static_cast<std::size_t>(prev)].completion + inst.s(prev + 1, j, k);
      if (sj.start < ready) {
        out.push_back(make_violation(ViolationKind::Capacity, j, k,
                                     job_name(j) + " starts at " + std::to_string(sj.start) + " before " + machine_name(k) +
                                         " is set up at " + std::to_string(ready)));
      }
      if (sj.completion != sj.start + inst.p(j, k)) {
        out.push_back(make_violation(ViolationKind::Duration, j, k,
                                     job_name(j) + " completion differs from start + processing time"));
      }
      prev = j;
    }
  }
  for (int j = 0; j < inst.n; ++j) {
    const int c = count[static_cast<std::size_t>(j)];
    if (c != 1) {
      out.push_back(make_violation(ViolationKind::Partition, j, -1,
                                   job_name(j) + " appears " + std::to_string(c) + " times"));
    }
  }
  return out;
}

ObjectiveValues compute_objectives(const ProblemInstance& inst, const Schedule& sched) {
  const auto violations = validate_schedule(inst, sched);
  if (!violations.empty()) throw std::invalid_argument("infeasible schedule: " + violations.front().message);
  ObjectiveValues obj;
  for (int j = 0; j < inst.n; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    obj.twt += inst.weight[jj] * std::max<Time>(0, sched.jobs[jj].completion - inst.due[jj]);
  }
  for (int k = 0; k < inst.m; ++k) {
    int prev = kIdleSetup;
    for (int j : sched.sequences[static_cast<std::size_t>(k)]) {
      obj.tst += inst.s(prev, j, k);
      prev = j + 1;
    }
  }
  return obj;
}

Schedule build_schedule(const ProblemInstance& inst, std::vector<std::vector<int>> sequences) {
  if (sequences.size() != static_cast<std::size_t>(inst.m)) {
    throw std::invalid_argument("build_schedule: expected one sequence per machine");
  }
  Schedule sched;
  sched.jobs.assign(static_cast<std::size_t>(inst.n), ScheduledJob{});
  for (int k = 0; k < inst.m; ++k) {
    Time free_at = 0;
    int prev = kIdleSetup;
    for (int j : sequences[static_cast<std::size_t>(k)]) {
      if (j < 0 || j >= inst.n) throw std::invalid_argument("build_schedule: job index out of range");
      ScheduledJob& sj = sched.jobs[static_cast<std::size_t>(j)];
      sj.machine = k;
      sj.setup_start = std::max(free_at, inst.release[static_cast<std::size_t>(j)]);
      sj.start = sj.setup_start + inst.s(prev, j, k);
      sj.completion = sj.start + inst.p(j, k);
      free_at = sj.completion;
      prev = j + 1;
    }
  }
  sched.sequences = std::move(sequences);
  return sched;
}

ObjectiveValues sequence_objectives(const ProblemInstance& inst, int machine, std::span<const int> sequence) {
  ObjectiveValues obj;
  Time free_at = 0;
  int prev = kIdleSetup;
  for (int j : sequence) {
    const auto jj = static_cast<std::size_t>(j);
    const Time setup = inst.s(prev, j, machine);
    const Time completion = std::max(free_at, inst.release[jj]) + setup + inst.p(j, machine);
    obj.tst += setup;
    obj.twt += inst.weight[jj] * std::max<Time>(0, completion - inst.due[jj]);
    free_at = completion;
    prev = j + 1;
  }
  return obj;
}

nlohmann::ordered_json to_json(const ProblemInstance& inst) {
  nlohmann::ordered_json j;
  j["n"] = inst.n;
  j["m"] = inst.m;
  auto processing = nlohmann::ordered_json::array();
  for (int a = 0; a < inst.n; ++a) {
    auto row = nlohmann::ordered_json::array();
    for (int k = 0; k < inst.m; ++k) row.push_back(inst.p(a, k));
    processing.push_back(std::move(row));
  }
  j["processing"] = std::move(processing);
  j["release"] = inst.release;
  j["due"] = inst.due;
  j["weight"] = inst.weight;
  auto setup = nlohmann::ordered_json::array();
  for (int i = 0; i <= inst.n; ++i) {
    auto plane = nlohmann::ordered_json::array();
    for (int a = 0; a < inst.n; ++a) {
      auto row = nlohmann::ordered_json::array();
      for (int k = 0; k < inst.m; ++k) row.push_back(inst.s(i, a, k));
      plane.push_back(std::move(row));
    }
    setup.push_back(std::move(plane));
  }
  j["setup"] = std::move(setup);
  j["eligible"] = inst.eligible;
  j["meta"] = inst.meta;
  return j;
}

ProblemInstance instance_from_json(const nlohmann::ordered_json& j) {
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  if (n < 0 || m < 1) throw std::invalid_argument("instance json: need n >= 0 and m >= 1");
  ProblemInstance inst = ProblemInstance::zeros(n, m);
  const auto& processing = j.at("processing");
  if (processing.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("instance json: processing has wrong row count");
  for (int a = 0; a < n; ++a) {
    const auto& row = processing.at(static_cast<std::size_t>(a));
    if (row.size() != static_cast<std::size_t>(m)) throw std::invalid_argument("instance json: processing row has wrong length");
    for (int k = 0; k < m; ++k) inst.p(a, k) = row.at(static_cast<std::size_t>(k)).get<Time>();
  }
  inst.release = j.at("release").get<std::vector<Time>>();
  inst.due = j.at("due").get<std::vector<Time>>();
  inst.weight = j.at("weight").get<std::vector<Time>>();
  const auto& setup = j.at("setup");
  if (setup.size() != static_cast<std::size_t>(n) + 1) throw std::invalid_argument("instance json: setup needs n + 1 planes");
  for (int i = 0; i <= n; ++i) {
    const auto& plane = setup.at(static_cast<std::size_t>(i));
    if (plane.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("instance json: setup plane has wrong row count");
    for (int a = 0; a < n; ++a) {
      const auto& row = plane.at(static_cast<std::size_t>(a));
      if (row.size() != static_cast<std::size_t>(m)) throw std::invalid_argument("instance json: setup row has wrong length");
      for (int k = 0; k < m; ++k) inst.s(i, a, k) = row.at(static_cast<std::size_t>(k)).get<Time>();
    }
  }
  inst.eligible = j.at("eligible").get<std::vector<std::vector<int>>>();
  if (j.contains("meta")) inst.meta = j.at("meta");
  if (inst.release.size() != static_cast<std::size_t>(n) || inst.due.size() != static_cast<std::size_t>(n) ||
      inst.weight.size() != static_cast<std::size_t>(n) || inst.eligible.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("instance json: per-job arrays must have length n");
  }
  return inst;
}

ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file " + path);
  return instance_from_json(nlohmann::ordered_json::parse(in));
}

void save_instance(const ProblemInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file " + path);
  out << to_json(inst).dump() << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

nlohmann::ordered_json to_json(const Schedule& sched) {
  nlohmann::ordered_json j;
  j["sequences"] = sched.sequences;
  auto jobs = nlohmann::ordered_json::array();
  for (const auto& sj : sched.jobs) {
    jobs.push_back({{"machine", sj.machine}, {"setup_start", sj.setup_start}, {"start", sj.start}, {"completion", sj.completion}});
  }
  j["jobs"] = std::move(jobs);
  return j;
}

}  // namespace upms
