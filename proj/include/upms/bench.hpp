#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "upms/atcsr.hpp"
#include "upms/exec.hpp"
#include "upms/ga.hpp"
#include "upms/instance_gen.hpp"

namespace upms {

/// Uniform choice over the feasible actions (Wait included when offered).
SolveResult solve_random(const ProblemInstance& inst, std::uint64_t seed);

struct BenchOptions {
  AtcsrParams atcsr;
  GaParams ga;                 // seed is replaced per (instance, run)
  bool ga_match_weights = false;  // set alpha_fitness per instance so GA fitness ranks like alpha*twt + beta*tst
  std::string checkpoint;      // required when "ppo" is requested
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;
};

struct BenchRow {
  std::string instance;
  std::string method;
  int run = 0;
  std::uint64_t seed = 0;
  Time twt = 0;
  Time tst = 0;
  double scalarized = 0.0;
  double wall_ms = 0.0;
  bool valid = false;
};

struct MethodSummary {
  std::string method;
  std::size_t count = 0;
  double avg_twt = 0.0;
  double avg_tst = 0.0;
  double avg_scalarized = 0.0;
  double avg_ms = 0.0;
  bool all_valid = true;
};

struct BenchResult {
  std::vector<BenchRow> rows;           // instance-major, then method, then run
  std::vector<MethodSummary> summary;   // in requested method order
  bool all_valid() const;
};

const std::vector<std::string>& known_methods();

/// Runs every method on every manifest entry `runs` times. Each schedule is
/// re-validated; invalid rows are kept and flagged.
BenchResult run_benchmark(const std::vector<ManifestEntry>& manifest, const std::vector<std::string>& methods, double alpha,
                          double beta, int runs, const BenchOptions& options = {});

std::vector<MethodSummary> summarize(const std::vector<BenchRow>& rows);

/// instance,method,run,seed,twt,tst,scalarized,wall_ms,valid
void write_results_csv(std::ostream& os, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_results_csv(std::istream& is);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
  int df = 0;
};

/// Two-sided paired t-test on a - b. Zero-variance differences with a nonzero
/// mean report t = +-inf and p = 0.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct ParetoRow {
  std::string method;
  double avg_twt = 0.0;
  double avg_tst = 0.0;
  std::vector<std::string> dominates;
  std::vector<std::string> dominated_by;
};

bool dominates_point(double twt_a, double tst_a, double twt_b, double tst_b);

std::vector<ParetoRow> pareto_report(const std::vector<MethodSummary>& summary);

/// method,avg_twt,avg_tst,dominates,dominated_by (lists joined with ';')
void write_pareto_csv(std::ostream& os, const std::vector<ParetoRow>& rows);

}  // namespace upms
