// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "upms/atcsr.hpp"
#include "upms/bench.hpp"
#include "upms/exact.hpp"
#include "upms/ga.hpp"
#include "upms/instance_gen.hpp"
#include "upms/ppo.hpp"
#include "upms/rng.hpp"

using namespace upms;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

ProblemInstance grid_instance(int n, int m, std::size_t cell, std::uint64_t seed) {
  GenParams p = standard_grid(n, m, 0)[cell % 36];
  p.seed = seed;
  return generate_instance(p);
}

Action random_action(Rng& rng, const FeasibleSet& fs) { return fs.actions[rng.index(fs.actions.size())]; }

// 1. Random masked rollouts over mixed grid cells always give valid schedules.
Outcome feasibility_fuzz() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int valid = 0;
  const int total = 1000;
  for (int i = 0; i < total; ++i) {
    const int n = 1 + static_cast<int>(rng.index(50));
    const int m = 1 + static_cast<int>(rng.index(8));
    const auto inst = grid_instance(n, m, static_cast<std::size_t>(i), derive_seed(1, static_cast<std::uint64_t>(i)));
    const Simulator sim(inst);
    const auto tr = rollout(sim, [&](const EnvState&, const FeasibleSet& fs) { return random_action(rng, fs); }, 4 * n + 16);
    if (validate_schedule(inst, tr.schedule).empty()) ++valid;
  }
  const double secs = seconds_since(t0);
  return {valid == total && secs < 120.0, std::to_string(valid) + "/" + std::to_string(total) + " valid, " + fmt(secs, 1) + " s (limit 120 s)"};
}

// 2. Sum of rewards plus the scalarized objective is exactly zero.
Outcome telescoping() {
  Rng rng(202);
  const double weights[3] = {0.5, 1.0, 2.0};
  int exact = 0;
  double worst = 0.0;
  for (int e = 0; e < 200; ++e) {
    const double alpha = weights[rng.index(3)], beta = weights[rng.index(3)];
    const int n = 1 + static_cast<int>(rng.index(40));
    const int m = 1 + static_cast<int>(rng.index(6));
    const auto inst = grid_instance(n, m, static_cast<std::size_t>(e), derive_seed(2, static_cast<std::uint64_t>(e)));
    const Simulator sim(inst, {alpha, beta});
    const auto tr = rollout(sim, [&](const EnvState&, const FeasibleSet& fs) { return random_action(rng, fs); }, 4 * n + 16);
    double sum = 0.0;
    for (const auto& s : tr.steps) sum += s.reward;
    const double gap = std::abs(sum + alpha * static_cast<double>(tr.objectives.twt) + beta * static_cast<double>(tr.objectives.tst));
    worst = std::max(worst, gap);
    if (gap == 0.0) ++exact;
  }
  return {exact == 200, std::to_string(exact) + "/200 episodes exact, max gap " + fmt(worst, 6)};
}

// 3. ATCSR and GA never beat the oracle; GA reaches the optimum on >= 80%.
Outcome oracle_optimality() {
  const auto t0 = Clock::now();
  int atcsr_ok = 0, ga_ok = 0, ga_opt = 0;
  const int total = 50;
  for (int i = 0; i < total; ++i) {
    const int n = 4 + i % 3;
    const auto inst = grid_instance(n, 2, static_cast<std::size_t>(i), derive_seed(3, static_cast<std::uint64_t>(i)));
    const auto opt = solve_exact_scalarized(inst, 1, 1);
    const auto at = solve_atcsr(inst);
    GaParams gp;
    gp.seed = derive_seed(33, static_cast<std::uint64_t>(i));
    gp.budget_ms = 500;
    gp.alpha_fitness = ga_alpha_for_weights(fitness_refs(at.objectives), 1, 1);
    const auto ga = run_ga(inst, gp);
    const double ga_value = scalarize(ga.objectives, 1, 1);
    if (scalarize(at.objectives, 1, 1) >= opt.value) ++atcsr_ok;
    if (ga_value >= opt.value && validate_schedule(inst, ga.schedule).empty()) ++ga_ok;
    if (ga_value == opt.value) ++ga_opt;
  }
  const double secs = seconds_since(t0);
  const bool pass = atcsr_ok == total && ga_ok == total && ga_opt * 10 >= total * 8 && secs < 300.0;
  return {pass, "ATCSR>=opt " + std::to_string(atcsr_ok) + "/50, GA>=opt " + std::to_string(ga_ok) + "/50, GA optimal " +
                    std::to_string(ga_opt) + "/50 (need 40), " + fmt(secs, 1) + " s (limit 300 s)"};
}

// 4. GA best fitness never increases; schedules valid; final fitness <= 1.
Outcome ga_anytime() {
  int runs = 0, monotone = 0, valid = 0, bounded = 0;
  for (int i = 0; i < 20; ++i) {
    const auto inst = grid_instance(20, 5, static_cast<std::size_t>(i), derive_seed(4, static_cast<std::uint64_t>(i)));
    for (int s = 0; s < 5; ++s) {
      GaParams gp;
      gp.seed = derive_seed(44, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s));
      gp.budget_ms = 1e9;
      gp.max_generations = 60;
      const auto r = run_ga(inst, gp);
      ++runs;
      bool mono = true;
      for (std::size_t g = 1; g < r.history.size(); ++g) mono = mono && r.history[g] <= r.history[g - 1];
      if (mono) ++monotone;
      if (validate_schedule(inst, r.schedule).empty()) ++valid;
      if (r.fitness <= 1.0) ++bounded;
    }
  }
  return {monotone == runs && valid == runs && bounded == runs,
          "monotone " + std::to_string(monotone) + "/" + std::to_string(runs) + ", valid " + std::to_string(valid) + ", fitness<=1 " +
              std::to_string(bounded)};
}

// 5. Finite-difference checks of policy and value losses through the encoder.
Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int checks = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const PolicyNet net({8, 2, 16, 1}, seed);
    const auto inst = grid_instance(5, 2, seed, derive_seed(5, seed));
    const Simulator sim(inst);
    auto state = sim.reset();
    Rng rng(seed);
    // Move a random number of steps into the episode.
    for (std::size_t k = rng.index(3); k > 0 && !state.done; --k) sim.step(state, random_action(rng, sim.feasible_actions(state)));
    if (state.done) state = sim.reset();
    const Observation obs = observe(sim, state);
    const auto out = net.evaluate(obs.graph, obs.actions);
    const int a = static_cast<int>(rng.index(obs.actions.size()));
    PpoSample sample{&obs, nullptr, a, std::log(out.probs[static_cast<std::size_t>(a)]) - 0.05, rng.uniform01() - 0.5, rng.uniform01() - 0.5};
    const auto gt = make_tensors(obs.graph);
    PolicyNet work = net;
    for (const LossCoefs coefs : {LossCoefs{0.2, 0.0, 0.0}, LossCoefs{0.2, 1.0, 0.0}}) {
      const LossCoefs c = coefs;
      const double err = nn::grad_check(work.params(), [&](nn::Tape& t, const std::vector<nn::Var>& p) {
        if (c.value_coef == 0.0) return sample_loss(t, p, work, gt, sample, c, 1.0);
        // Value loss alone: remove the policy part by using a zero advantage.
        PpoSample v = sample;
        v.advantage = 0.0;
        return sample_loss(t, p, work, gt, v, c, 1.0);
      });
      worst = std::max(worst, err);
      ++checks;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0, std::to_string(checks) + " checks, max rel err " + [&] {
            std::ostringstream os;
            os << std::scientific << std::setprecision(2) << worst;
            return os.str();
          }() + " (limit 1e-4), " + fmt(secs, 1) + " s (limit 60 s)"};
}

// 6. Recursive GAE against the direct double sum.
Outcome gae_equivalence() {
  Rng rng(606);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.index(10);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = 10 * rng.uniform01() - 5;
      v[i] = 10 * rng.uniform01() - 5;
      d[i] = rng.bernoulli(0.15);
    }
    const double gamma = rng.uniform01(), lambda = rng.uniform01(), boot = 10 * rng.uniform01() - 5;
    const auto rec = compute_gae(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      double direct = 0.0, coef = 1.0;
      for (std::size_t l = t; l < n; ++l) {
        const double next = l + 1 < n ? v[l + 1] : boot;
        direct += coef * (r[l] + (d[l] ? 0.0 : gamma * next) - v[l]);
        if (d[l]) break;
        coef *= gamma * lambda;
      }
      worst = std::max(worst, std::abs(direct - rec.advantages[t]));
    }
  }
  std::ostringstream os;
  os << "100 segments, max abs diff " << std::scientific << std::setprecision(2) << worst << " (limit 1e-12)";
  return {worst <= 1e-12, os.str()};
}

// 7. The clipped surrogate is flat past the clip boundary for both signs.
Outcome clip_behavior() {
  const double eps = 0.2;
  bool ok = true;
  int asserts = 0;
  auto check = [&](bool c) {
    ok = ok && c;
    ++asserts;
  };
  for (double A : {0.5, 1.0, 3.0}) {
    for (double rho : {1.2, 1.25, 1.5, 2.0, 10.0}) check(clipped_surrogate(rho, A, eps) == (1.0 + eps) * A);
    for (double rho : {0.0, 0.5, 0.79, 0.8}) check(clipped_surrogate(rho, A, eps) == rho * A);
    for (double rho : {0.0, 0.5, 0.79}) check(clipped_surrogate(rho, -A, eps) == (1.0 - eps) * -A);
    for (double rho : {1.0, 1.3, 5.0}) check(clipped_surrogate(rho, -A, eps) == rho * -A);
  }
  // Derivative in rho through the same tape ops the loss uses.
  for (double A : {1.0, -1.0}) {
    for (double rho : {0.5, 0.95, 1.1, 1.6}) {
      nn::ParamStore ps;
      ps.add("rho", nn::Mat::Constant(1, 1, rho));
      const auto g = nn::gradient(ps, [&](nn::Tape& t, const std::vector<nn::Var>& p) {
        return t.minimum(t.scale(p[0], A), t.scale(t.clamp(p[0], 1.0 - eps, 1.0 + eps), A));
      });
      const bool flat = (A > 0 && rho > 1.0 + eps) || (A < 0 && rho < 1.0 - eps);
      check(flat ? g[0](0, 0) == 0.0 : g[0](0, 0) == A);
    }
  }
  return {ok, std::to_string(asserts) + " analytic assertions"};
}

// 8. Trained PPO and GA both beat ATCSR on held-out n=20, m=5 instances.
Outcome ordering(const fs::path& work) {
  const auto t0 = Clock::now();
  GenParams cell;
  cell.n = 20;
  cell.m = 5;
  cell.tau = 0.4;
  cell.range_R = 0.6;
  cell.setup_ratio_beta = 0.25;
  cell.elig_density_delta = 1.0;
  TrainConfig cfg;
  cfg.total_steps = 200'000;
  cfg.seed = 2024;
  const auto res = train(InstanceSampler{{cell}}, cfg, [&](const CurveRow& r) {
    if (r.update % 10 == 0) {
      std::cerr << "  [train] update " << r.update << " steps " << r.steps << " mean objective " << fmt(-r.mean_return, 1) << " ("
                << fmt(seconds_since(t0), 0) << " s)\n";
    }
  });
  save_checkpoint(res.net, (work / "c8_checkpoint.json").string());
  {
    std::ofstream curve(work / "c8_learning_curve.csv");
    write_curve_csv(curve, res.curve);
  }
  const double train_secs = seconds_since(t0);

  std::vector<ProblemInstance> held_out;
  for (std::size_t rep = 0; rep < 50; ++rep) {
    GenParams p = cell;
    p.seed = suite_seed(0x5EEDF00D, 0, rep);
    held_out.push_back(generate_instance(p));
  }
  const auto ppo = evaluate_policy(res.net, held_out, Exec::Parallel);
  std::vector<double> s_ppo, s_ga, s_at;
  double twt[3] = {}, tst[3] = {};
  bool valid = true;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const auto& inst = held_out[i];
    const auto at = solve_atcsr(inst);
    GaParams gp;
    gp.seed = derive_seed(88, i);
    gp.budget_ms = 1000;
    gp.alpha_fitness = ga_alpha_for_weights(fitness_refs(at.objectives), 1, 1);
    const auto ga = run_ga(inst, gp);
    valid = valid && validate_schedule(inst, ga.schedule).empty() && validate_schedule(inst, at.schedule).empty() &&
            validate_schedule(inst, solve_ppo(res.net, inst).schedule).empty();
    s_ppo.push_back(scalarize(ppo.objectives[i], 1, 1));
    s_ga.push_back(scalarize(ga.objectives, 1, 1));
    s_at.push_back(scalarize(at.objectives, 1, 1));
    const ObjectiveValues objs[3] = {ppo.objectives[i], ga.objectives, at.objectives};
    for (int k = 0; k < 3; ++k) {
      twt[k] += static_cast<double>(objs[k].twt) / 50.0;
      tst[k] += static_cast<double>(objs[k].tst) / 50.0;
    }
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  const TTest t_ppo = paired_t_test(s_ppo, s_at);
  const TTest t_ga = paired_t_test(s_ga, s_at);
  const double secs = seconds_since(t0);
  const bool ppo_ok = mean(s_ppo) <= mean(s_at) && t_ppo.p < 0.05;
  const bool ga_ok = mean(s_ga) <= mean(s_at) && t_ga.p < 0.05;
  const bool ppo_dominates = dominates_point(twt[0], tst[0], twt[1], tst[1]) && dominates_point(twt[0], tst[0], twt[2], tst[2]);
  std::ostringstream os;
  os << "mean scalarized PPO " << fmt(mean(s_ppo), 1) << " / GA " << fmt(mean(s_ga), 1) << " / ATCSR " << fmt(mean(s_at), 1)
     << "; p(PPO vs ATCSR) " << std::scientific << std::setprecision(2) << t_ppo.p << ", p(GA vs ATCSR) " << t_ga.p << std::fixed
     << "; TWT/TST PPO " << fmt(twt[0], 1) << "/" << fmt(tst[0], 1) << " GA " << fmt(twt[1], 1) << "/" << fmt(tst[1], 1) << " ATCSR "
     << fmt(twt[2], 1) << "/" << fmt(tst[2], 1) << "; PPO dominates both on both objectives: " << (ppo_dominates ? "yes" : "no")
     << " (reported only); train " << fmt(train_secs, 0) << " s, total " << fmt(secs, 0) << " s (limit 3600 s)";
  return {ppo_ok && ga_ok && valid && secs < 3600.0, os.str()};
}

// 9. Empirical generator statistics.
Outcome generator_stats() {
  std::size_t counts[5] = {};
  bool ok = true;
  double p_sum = 0.0;
  std::size_t p_count = 0;
  for (std::uint64_t i = 0; i < 220; ++i) {
    GenParams p = standard_grid(50, 10, 0)[i % 36];
    p.seed = derive_seed(9, i);
    const auto inst = generate_instance(p);
    double pbar = 0.0;
    for (Time v : inst.processing) pbar += static_cast<double>(v);
    pbar /= static_cast<double>(inst.processing.size());
    const Time r_hi = static_cast<Time>(std::floor(p.lambda_arrival * pbar + 0.5));
    const Time s_hi = static_cast<Time>(std::floor(p.setup_ratio_beta * pbar + 0.5));
    const auto need = static_cast<std::size_t>(std::ceil(p.elig_density_delta * p.m - 1e-9));
    for (Time v : inst.processing) {
      ok = ok && v >= 1 && v <= 100;
      p_sum += static_cast<double>(v);
      ++p_count;
    }
    for (Time v : inst.release) ok = ok && v >= 0 && v <= r_hi;
    for (Time v : inst.weight) ok = ok && v >= 1 && v <= 10;
    for (Time v : inst.setup) ok = ok && v >= 0 && v <= s_hi;
    for (int j = 0; j < inst.n; ++j) {
      ok = ok && inst.eligible[j].size() == need;
      double pj = 0.0;
      for (int k : inst.eligible[j]) pj += static_cast<double>(inst.p(j, k));
      pj /= static_cast<double>(inst.eligible[j].size());
      const double r = static_cast<double>(inst.release[j]);
      Time lo = static_cast<Time>(std::floor(r + pj * (1 - p.tau - p.range_R / 2) + 0.5));
      Time hi = static_cast<Time>(std::floor(r + pj * (1 - p.tau + p.range_R / 2) + 0.5));
      if (lo > hi) std::swap(lo, hi);
      ok = ok && inst.due[j] >= std::max<Time>(lo, 0) && inst.due[j] <= std::max<Time>(hi, 0);
    }
    counts[0] += inst.processing.size();
    counts[1] += inst.release.size();
    counts[2] += inst.weight.size();
    counts[3] += inst.setup.size();
    counts[4] += inst.due.size();
  }
  const std::size_t fewest = *std::min_element(std::begin(counts), std::end(counts));
  const double mean_p = p_sum / static_cast<double>(p_count);
  const bool pass = ok && fewest >= 10000 && std::abs(mean_p - 50.5) <= 1.0;
  return {pass, "supports " + std::string(ok ? "within bounds" : "VIOLATED") + ", min samples per field " + std::to_string(fewest) +
                    ", mean p " + fmt(mean_p, 3) + " (target 50.5 +- 1.0)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

// 10. CLI outputs are byte identical across two runs.
Outcome determinism(const std::string& cli, const fs::path& work) {
  std::vector<std::string> failures;
  const std::string q = "\"" + cli + "\" --workers 1 ";
  std::string gen_files[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / ("c10_gen" + std::to_string(r));
    fs::remove_all(dir);
    if (run(q + "gen --n 8 --m 3 --tau 0.4 --range 0.6 --beta 0.25 --delta 0.75 --count 3 --seed 5 --out-dir \"" + dir.string() + "\"") != 0) {
      failures.push_back("gen exit code");
    }
    for (const auto& name : {"manifest.json", "cell000_rep000.json", "cell000_rep001.json", "cell000_rep002.json"}) gen_files[r] += slurp(dir / name);
  }
  if (gen_files[0].empty() || gen_files[0] != gen_files[1]) failures.push_back("gen");

  const std::string inst = (work / "c10_gen0" / "cell000_rep000.json").string();
  for (const std::string method : {"atcsr", "exact"}) {
    std::string out[2], pareto[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path o = work / ("c10_" + method + std::to_string(r) + ".json");
      const fs::path pc = work / ("c10_" + method + std::to_string(r) + "_pareto.csv");
      std::string cmd = q + "solve --method " + method + " --instance \"" + inst + "\" --out \"" + o.string() + "\"";
      if (method == "exact") cmd += " --pareto-out \"" + pc.string() + "\"";
      if (run(cmd) != 0) failures.push_back("solve " + method + " exit code");
      out[r] = slurp(o);
      if (method == "exact") pareto[r] = slurp(pc);
    }
    if (out[0].empty() || out[0] != out[1] || pareto[0] != pareto[1]) failures.push_back("solve " + method);
  }

  std::string ckpt[2], curve[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / ("c10_train" + std::to_string(r));
    fs::remove_all(dir);
    if (run(q + "train --n 8 --m 3 --steps 1024 --seed 7 --quiet --out \"" + dir.string() + "\"") != 0) failures.push_back("train exit code");
    ckpt[r] = slurp(dir / "checkpoint.json");
    curve[r] = slurp(dir / "learning_curve.csv");
  }
  if (ckpt[0].empty() || ckpt[0] != ckpt[1] || curve[0] != curve[1]) failures.push_back("train");

  std::string detail = "gen, solve atcsr, solve exact (+ Pareto CSV), train (checkpoint + curve)";
  if (!failures.empty()) {
    detail += "; differing:";
    for (const auto& f : failures) detail += " " + f;
  } else {
    detail += " byte identical across runs";
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string cli, work_dir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the upms executable")->required();
  app.add_option("--work-dir", work_dir);
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work_dir);
  const fs::path work = fs::absolute(work_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"feasibility fuzz", feasibility_fuzz},
      {"telescoping identity", telescoping},
      {"oracle optimality", oracle_optimality},
      {"GA anytime property", ga_anytime},
      {"gradient checks", gradient_checks},
      {"GAE equivalence", gae_equivalence},
      {"PPO clip behavior", clip_behavior},
      {"ordering PPO, GA <= ATCSR", [&] { return ordering(work); }},
      {"generator statistics", generator_stats},
      {"determinism", [&] { return determinism(cli, work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
