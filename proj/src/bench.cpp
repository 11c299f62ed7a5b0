#include "upms/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "upms/exact.hpp"
#include "upms/ppo.hpp"
#include "upms/rng.hpp"

namespace upms {

SolveResult solve_random(const ProblemInstance& inst, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Simulator sim(inst);
  Rng rng(seed);
  const EpisodeTrace trace =
      rollout(sim, [&](const EnvState&, const FeasibleSet& fs) { return fs.actions[rng.index(fs.actions.size())]; },
              4 * inst.n + 16);
  SolveResult r;
  r.schedule = trace.schedule;
  r.objectives = trace.objectives;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

bool BenchResult::all_valid() const {
  return std::all_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.valid; });
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods{"atcsr", "ga", "ppo", "exact", "random"};
  return methods;
}

namespace {

std::string instance_name(const std::string& file) {
  const auto slash = file.find_last_of('/');
  return slash == std::string::npos ? file : file.substr(slash + 1);
}

}  // namespace

BenchResult run_benchmark(const std::vector<ManifestEntry>& manifest, const std::vector<std::string>& methods, double alpha,
                          double beta, int runs, const BenchOptions& options) {
  if (runs < 1) throw std::invalid_argument("run_benchmark: runs must be >= 1");
  if (methods.empty()) throw std::invalid_argument("run_benchmark: no methods");
  for (const std::string& m : methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("run_benchmark: unknown method '" + m + "'");
    }
  }
  scalarize({0, 0}, alpha, beta);  // weight checks
  std::optional<PolicyNet> net;
  if (std::find(methods.begin(), methods.end(), "ppo") != methods.end()) {
    if (options.checkpoint.empty()) throw std::invalid_argument("run_benchmark: method ppo needs a checkpoint");
    net = load_checkpoint(options.checkpoint);
  }
  std::vector<ProblemInstance> instances;
  instances.reserve(manifest.size());
  for (const ManifestEntry& e : manifest) instances.push_back(load_instance(e.file));
  for (const ProblemInstance& inst : instances) {
    if (std::find(methods.begin(), methods.end(), "exact") != methods.end()) check_exact_size(inst);
  }

  const std::size_t per_instance = methods.size() * static_cast<std::size_t>(runs);
  BenchResult result;
  result.rows.resize(instances.size() * per_instance);
  std::vector<std::string> errors(result.rows.size());

  auto run_cell = [&](std::size_t cell) {
    const std::size_t i = cell / per_instance;
    const std::size_t mi = (cell % per_instance) / static_cast<std::size_t>(runs);
    const int run = static_cast<int>(cell % static_cast<std::size_t>(runs));
    const ProblemInstance& inst = instances[i];
    const std::string& method = methods[mi];
    BenchRow& row = result.rows[cell];
    row.instance = instance_name(manifest[i].file);
    row.method = method;
    row.run = run;
    row.seed = derive_seed(options.seed, i, static_cast<std::uint64_t>(run));
    try {
      SolveResult sr;
      if (method == "atcsr") {
        sr = solve_atcsr(inst, options.atcsr);
      } else if (method == "ga") {
        GaParams gp = options.ga;
        gp.seed = row.seed;
        gp.exec = Exec::Serial;
        if (options.ga_match_weights) {
          gp.alpha_fitness = ga_alpha_for_weights(fitness_refs(solve_atcsr(inst, options.atcsr).objectives), alpha, beta);
        }
        const auto t0 = std::chrono::steady_clock::now();
        const GaResult g = run_ga(inst, gp);
        sr.schedule = g.schedule;
        sr.objectives = g.objectives;
        sr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      } else if (method == "ppo") {
        sr = solve_ppo(*net, inst);
      } else if (method == "exact") {
        const auto t0 = std::chrono::steady_clock::now();
        const ExactResult ex = solve_exact_scalarized(inst, alpha, beta, Exec::Serial);
        sr.schedule = ex.schedule;
        sr.objectives = ex.objectives;
        sr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      } else {
        sr = solve_random(inst, row.seed);
      }
      // Re-check from scratch instead of trusting the solver's numbers.
      row.valid = validate_schedule(inst, sr.schedule).empty();
      if (row.valid) {
        const ObjectiveValues obj = compute_objectives(inst, sr.schedule);
        row.valid = obj.twt == sr.objectives.twt && obj.tst == sr.objectives.tst;
      }
      row.twt = sr.objectives.twt;
      row.tst = sr.objectives.tst;
      row.scalarized = scalarize(sr.objectives, alpha, beta);
      row.wall_ms = sr.wall_ms;
    } catch (const std::exception& e) {
      errors[cell] = row.instance + " / " + method + ": " + e.what();
    }
  };
  const auto cells = static_cast<std::ptrdiff_t>(result.rows.size());
  if (options.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < cells; ++c) run_cell(static_cast<std::size_t>(c));
  } else {
    for (std::ptrdiff_t c = 0; c < cells; ++c) run_cell(static_cast<std::size_t>(c));
  }
  for (const std::string& e : errors) {
    if (!e.empty()) throw std::runtime_error("run_benchmark: " + e);
  }
  result.summary = summarize(result.rows);
  return result;
}

std::vector<MethodSummary> summarize(const std::vector<BenchRow>& rows) {
  std::vector<MethodSummary> out;
  std::map<std::string, std::size_t> index;
  for (const BenchRow& r : rows) {
    auto [it, inserted] = index.try_emplace(r.method, out.size());
    if (inserted) out.push_back({r.method});
    MethodSummary& s = out[it->second];
    ++s.count;
    s.avg_twt += static_cast<double>(r.twt);
    s.avg_tst += static_cast<double>(r.tst);
    s.avg_scalarized += r.scalarized;
    s.avg_ms += r.wall_ms;
    s.all_valid = s.all_valid && r.valid;
  }
  for (MethodSummary& s : out) {
    const double n = static_cast<double>(s.count);
    s.avg_twt /= n;
    s.avg_tst /= n;
    s.avg_scalarized /= n;
    s.avg_ms /= n;
  }
  return out;
}

void write_results_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  std::ostringstream buf;
  buf << std::setprecision(17);
  buf << "instance,method,run,seed,twt,tst,scalarized,wall_ms,valid\n";
  for (const BenchRow& r : rows) {
    buf << r.instance << ',' << r.method << ',' << r.run << ',' << r.seed << ',' << r.twt << ',' << r.tst << ','
        << r.scalarized << ',' << std::fixed << std::setprecision(3) << r.wall_ms << std::defaultfloat
        << std::setprecision(17) << ',' << (r.valid ? 1 : 0) << '\n';
  }
  os << buf.str();
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<BenchRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_results_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line, ',');
  const std::vector<std::string> expected{"instance", "method", "run", "seed", "twt", "tst", "scalarized", "wall_ms", "valid"};
  if (header != expected) throw std::runtime_error("read_results_csv: unexpected header '" + line + "'");
  std::vector<BenchRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != expected.size()) throw std::runtime_error("read_results_csv: line " + std::to_string(line_no) + " has wrong field count");
    try {
      BenchRow r;
      r.instance = f[0];
      r.method = f[1];
      r.run = std::stoi(f[2]);
      r.seed = std::stoull(f[3]);
      r.twt = std::stoll(f[4]);
      r.tst = std::stoll(f[5]);
      r.scalarized = std::stod(f[6]);
      r.wall_ms = std::stod(f[7]);
      r.valid = f[8] == "1";
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error("read_results_csv: bad number on line " + std::to_string(line_no));
    }
  }
  return rows;
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) {
    throw std::invalid_argument("paired_t_test: all differences are zero");
  }
  TTest out;
  out.df = static_cast<int>(n) - 1;
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.mean_diff = mean;
  if (sd == 0.0) {
    out.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p = 0.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(out.df));
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  return out;
}

bool dominates_point(double twt_a, double tst_a, double twt_b, double tst_b) {
  return twt_a <= twt_b && tst_a <= tst_b && (twt_a < twt_b || tst_a < tst_b);
}

std::vector<ParetoRow> pareto_report(const std::vector<MethodSummary>& summary) {
  if (summary.size() < 2) throw std::invalid_argument("pareto_report: need at least 2 methods");
  std::vector<ParetoRow> out;
  for (const MethodSummary& s : summary) out.push_back({s.method, s.avg_twt, s.avg_tst, {}, {}});
  for (ParetoRow& x : out) {
    for (const ParetoRow& y : out) {
      if (&x == &y) continue;
      if (dominates_point(x.avg_twt, x.avg_tst, y.avg_twt, y.avg_tst)) x.dominates.push_back(y.method);
      if (dominates_point(y.avg_twt, y.avg_tst, x.avg_twt, x.avg_tst)) x.dominated_by.push_back(y.method);
    }
  }
  return out;
}

void write_pareto_csv(std::ostream& os, const std::vector<ParetoRow>& rows) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const std::string& x : v) s += (s.empty() ? "" : ";") + x;
    return s;
  };
  std::ostringstream buf;
  buf << std::setprecision(17);
  buf << "method,avg_twt,avg_tst,dominates,dominated_by\n";
  for (const ParetoRow& r : rows) {
    buf << r.method << ',' << r.avg_twt << ',' << r.avg_tst << ',' << join(r.dominates) << ',' << join(r.dominated_by) << '\n';
  }
  os << buf.str();
}

}  // namespace upms
