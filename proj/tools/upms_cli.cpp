// upms: instance generation, solving, training and benchmarking.
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "upms/atcsr.hpp"
#include "upms/bench.hpp"
#include "upms/exact.hpp"
#include "upms/ga.hpp"
#include "upms/graph_state.hpp"
#include "upms/instance_gen.hpp"
#include "upms/policy_net.hpp"
#include "upms/ppo.hpp"

namespace fs = std::filesystem;
using namespace upms;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct GenOpts {
  GenParams params;
  int count = 1;
  bool grid = false;
  std::string out_dir = "instances";
};

int run_gen(const GenOpts& o) {
  std::vector<GenParams> cells;
  if (o.grid) {
    cells = standard_grid(o.params.n, o.params.m, o.params.seed);
    for (GenParams& c : cells) c.lambda_arrival = o.params.lambda_arrival;
  } else {
    cells.push_back(o.params);
  }
  for (const GenParams& c : cells) {
    if (auto err = check_params(c); !err.empty()) throw std::invalid_argument(err);
  }
  const SuiteResult res = generate_suite(cells, o.count, o.out_dir);
  for (const std::string& e : res.errors) std::cerr << "error: " << e << '\n';
  std::cout << res.manifest.size() << " instances written to " << o.out_dir << '\n';
  return res.errors.empty() ? 0 : 1;
}

struct SolveOpts {
  std::string instance;
  std::string method = "atcsr";
  AtcsrParams atcsr;
  double alpha = 1.0, beta = 1.0;
  int pop = 60;
  double budget_ms = 1000;
  double alpha_fitness = 0.5;
  std::uint64_t seed = 1;
  std::string checkpoint;
  std::string out;
  std::string pareto_out;
  std::string trace_out;
  std::string graph_out;
};

void export_trace(const ProblemInstance& inst, const SolveOpts& o, const Schedule& sched) {
  // Replays the schedule through the simulator by issuing each machine's next job when it is offered.
  const Simulator sim(inst, {o.alpha, o.beta});
  std::vector<std::size_t> next(static_cast<std::size_t>(inst.m), 0);
  const Policy replay = [&](const EnvState&, const FeasibleSet& fs) {
    for (const Action& a : fs.actions) {
      if (a.is_wait()) continue;
      const auto k = static_cast<std::size_t>(a.machine);
      if (next[k] < sched.sequences[k].size() && sched.sequences[k][next[k]] == a.job) {
        ++next[k];
        return a;
      }
    }
    return fs.actions.back();
  };
  const EpisodeTrace trace = rollout(sim, replay, 4 * inst.n + 16, true);
  if (!o.trace_out.empty()) {
    std::ofstream os(o.trace_out, std::ios::binary);
    write_trace_jsonl(os, trace);
  }
  if (!o.graph_out.empty()) {
    std::ofstream os(o.graph_out, std::ios::binary);
    for (const EnvState& s : trace.states) {
      if (!s.done) os << to_json(build_graph(sim, s)).dump() << '\n';
    }
  }
}

int run_solve(const SolveOpts& o) {
  const ProblemInstance inst = load_instance(o.instance);
  nlohmann::ordered_json out;
  out["instance"] = fs::path(o.instance).filename().string();
  out["method"] = o.method;
  Schedule sched;
  ObjectiveValues obj;
  double wall_ms = 0.0;
  if (o.method == "atcsr") {
    const SolveResult r = solve_atcsr(inst, o.atcsr);
    sched = r.schedule, obj = r.objectives, wall_ms = r.wall_ms;
  } else if (o.method == "ga") {
    GaParams gp;
    gp.population = o.pop;
    gp.budget_ms = o.budget_ms;
    gp.alpha_fitness = o.alpha_fitness;
    gp.seed = o.seed;
    const GaResult r = run_ga(inst, gp);
    sched = r.schedule, obj = r.objectives, wall_ms = r.wall_ms;
    out["fitness"] = r.fitness;
    out["generations"] = r.generations;
  } else if (o.method == "exact") {
    const ExactResult r = solve_exact_scalarized(inst, o.alpha, o.beta);
    sched = r.schedule, obj = r.objectives;
    out["enumerated"] = r.enumerated;
    if (!o.pareto_out.empty()) {
      std::ostringstream csv;
      csv << "twt,tst\n";
      for (const ParetoPoint& p : pareto_enumerate(inst)) csv << p.objectives.twt << ',' << p.objectives.tst << '\n';
      write_text(o.pareto_out, csv.str());
    }
  } else if (o.method == "ppo") {
    if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required for --method ppo");
    const SolveResult r = solve_ppo(load_checkpoint(o.checkpoint), inst);
    sched = r.schedule, obj = r.objectives, wall_ms = r.wall_ms;
  } else if (o.method == "random") {
    const SolveResult r = solve_random(inst, o.seed);
    sched = r.schedule, obj = r.objectives, wall_ms = r.wall_ms;
  } else {
    throw std::invalid_argument("unknown method '" + o.method + "'");
  }
  const auto violations = validate_schedule(inst, sched);
  out["twt"] = obj.twt;
  out["tst"] = obj.tst;
  out["scalarized"] = scalarize(obj, o.alpha, o.beta);
  out["valid"] = violations.empty();
  out["schedule"] = to_json(sched);
  const std::string text = out.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
  // Timing goes to stderr so the JSON output stays reproducible.
  std::cerr << o.method << ": twt=" << obj.twt << " tst=" << obj.tst << " time_ms=" << std::fixed << std::setprecision(2)
            << wall_ms << '\n';
  if (!o.trace_out.empty() || !o.graph_out.empty()) export_trace(inst, o, sched);
  for (const Violation& v : violations) std::cerr << "violation: " << v.message << '\n';
  return violations.empty() ? 0 : 2;
}

struct TrainOpts {
  GenParams cell;
  TrainConfig config;
  std::string out = "run";
  bool quiet = false;
};

int run_train(TrainOpts o) {
  if (auto err = check_params(o.cell); !err.empty()) throw std::invalid_argument(err);
  fs::create_directories(o.out);
  const InstanceSampler sampler{{o.cell}};
  const TrainResult res = train(sampler, o.config, [&](const CurveRow& r) {
    if (!o.quiet) {
      std::cerr << "update " << r.update << " steps " << r.steps << " return " << r.mean_return << " twt " << r.mean_twt
                << " tst " << r.mean_tst << '\n';
    }
  });
  save_checkpoint(res.net, (fs::path(o.out) / "checkpoint.json").string());
  std::ostringstream csv;
  write_curve_csv(csv, res.curve);
  write_text((fs::path(o.out) / "learning_curve.csv").string(), csv.str());
  std::cout << "checkpoint written to " << (fs::path(o.out) / "checkpoint.json").string() << '\n';
  return 0;
}

struct BenchOpts {
  std::string suite;
  std::string methods = "atcsr,ga";
  double alpha = 1.0, beta = 1.0;
  int runs = 1;
  std::string out = "results.csv";
  BenchOptions options;
};

int run_bench(const BenchOpts& o) {
  const auto manifest = load_manifest(o.suite);
  const BenchResult res = run_benchmark(manifest, split_list(o.methods), o.alpha, o.beta, o.runs, o.options);
  std::ostringstream csv;
  write_results_csv(csv, res.rows);
  write_text(o.out, csv.str());
  std::cout << std::left << std::setw(8) << "method" << std::right << std::setw(12) << "avg_twt" << std::setw(12) << "avg_tst"
            << std::setw(14) << "avg_scalar" << std::setw(12) << "avg_ms" << '\n';
  std::cout << std::fixed << std::setprecision(2);
  for (const MethodSummary& s : res.summary) {
    std::cout << std::left << std::setw(8) << s.method << std::right << std::setw(12) << s.avg_twt << std::setw(12) << s.avg_tst
              << std::setw(14) << s.avg_scalarized << std::setw(12) << s.avg_ms << (s.all_valid ? "" : "  INVALID") << '\n';
  }
  return res.all_valid() ? 0 : 2;
}

int run_pareto(const std::string& in, const std::string& out) {
  std::ifstream is(in);
  if (!is) throw std::runtime_error("cannot read " + in);
  const auto rows = read_results_csv(is);
  const auto report = pareto_report(summarize(rows));
  std::ostringstream csv;
  write_pareto_csv(csv, report);
  write_text(out, csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective unrelated parallel machine scheduling lab"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "OpenMP threads (0 = runtime default)");

  GenOpts gen;
  auto* g = app.add_subcommand("gen", "Generate random instances");
  g->add_option("--n", gen.params.n, "Jobs");
  g->add_option("--m", gen.params.m, "Machines");
  g->add_option("--tau", gen.params.tau, "Tardiness factor");
  g->add_option("--range", gen.params.range_R, "Due date range");
  g->add_option("--beta", gen.params.setup_ratio_beta, "Setup to processing ratio");
  g->add_option("--delta", gen.params.elig_density_delta, "Eligibility density");
  g->add_option("--lambda", gen.params.lambda_arrival, "Release spread");
  g->add_option("--count", gen.count, "Instances per cell");
  g->add_option("--seed", gen.params.seed, "Base seed");
  g->add_option("--out-dir", gen.out_dir, "Output directory");
  g->add_flag("--grid", gen.grid, "Use the full 36-cell grid instead of one cell");

  SolveOpts solve;
  auto* s = app.add_subcommand("solve", "Solve one instance");
  s->add_option("--instance", solve.instance, "Instance JSON")->required();
  s->add_option("--method", solve.method)->check(CLI::IsMember({"atcsr", "ga", "exact", "ppo", "random"}));
  s->add_option("--k1", solve.atcsr.k1);
  s->add_option("--k2", solve.atcsr.k2);
  s->add_option("--k3", solve.atcsr.k3);
  s->add_option("--alpha", solve.alpha, "TWT weight");
  s->add_option("--beta", solve.beta, "TST weight");
  s->add_option("--pop", solve.pop, "GA population");
  s->add_option("--budget-ms", solve.budget_ms, "GA time budget");
  s->add_option("--alpha-fitness", solve.alpha_fitness, "GA fitness weight on TWT");
  s->add_option("--seed", solve.seed);
  s->add_option("--checkpoint", solve.checkpoint, "Policy checkpoint for ppo");
  s->add_option("--out", solve.out, "Result JSON (stdout if omitted)");
  s->add_option("--pareto-out", solve.pareto_out, "Exact Pareto front CSV");
  s->add_option("--trace-out", solve.trace_out, "Step trace JSONL");
  s->add_option("--graph-out", solve.graph_out, "Graph state per decision JSONL");

  TrainOpts tr;
  tr.cell.tau = 0.4;
  tr.cell.range_R = 0.6;
  tr.cell.setup_ratio_beta = 0.25;
  tr.cell.elig_density_delta = 1.0;
  auto* t = app.add_subcommand("train", "Train the PPO policy");
  t->add_option("--n", tr.cell.n);
  t->add_option("--m", tr.cell.m);
  t->add_option("--tau", tr.cell.tau);
  t->add_option("--range", tr.cell.range_R);
  t->add_option("--beta", tr.cell.setup_ratio_beta);
  t->add_option("--delta", tr.cell.elig_density_delta);
  t->add_option("--steps", tr.config.total_steps);
  t->add_option("--seed", tr.config.seed);
  t->add_option("--actors", tr.config.actors);
  t->add_option("--rollout", tr.config.rollout_steps, "Steps per actor per update");
  t->add_option("--epochs", tr.config.epochs);
  t->add_option("--minibatch", tr.config.minibatch);
  t->add_option("--lr", tr.config.learning_rate);
  t->add_option("--reward-alpha", tr.config.weights.alpha);
  t->add_option("--reward-beta", tr.config.weights.beta);
  t->add_option("--out", tr.out, "Output directory");
  t->add_flag("--quiet", tr.quiet);

  BenchOpts bench;
  auto* b = app.add_subcommand("bench", "Benchmark methods over a suite");
  b->add_option("--suite", bench.suite, "manifest.json")->required();
  b->add_option("--methods", bench.methods, "Comma separated subset of atcsr,ga,ppo,exact,random");
  b->add_option("--alpha", bench.alpha);
  b->add_option("--beta", bench.beta);
  b->add_option("--runs", bench.runs);
  b->add_option("--out", bench.out);
  b->add_option("--checkpoint", bench.options.checkpoint);
  b->add_option("--seed", bench.options.seed);
  b->add_option("--pop", bench.options.ga.population);
  b->add_option("--budget-ms", bench.options.ga.budget_ms);
  b->add_option("--alpha-fitness", bench.options.ga.alpha_fitness);
  b->add_flag("--ga-match-weights", bench.options.ga_match_weights, "Derive the GA fitness weight from --alpha/--beta per instance");

  std::string pareto_in, pareto_out = "pareto.csv";
  auto* p = app.add_subcommand("pareto", "Pareto report from a results CSV");
  p->add_option("--in", pareto_in)->required();
  p->add_option("--out", pareto_out);

  CLI11_PARSE(app, argc, argv);
  if (workers > 0) omp_set_num_threads(workers);
  try {
    if (*g) return run_gen(gen);
    if (*s) return run_solve(solve);
    if (*t) return run_train(tr);
    if (*b) return run_bench(bench);
    if (*p) return run_pareto(pareto_in, pareto_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
