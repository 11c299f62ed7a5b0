#include "upms/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "upms/rng.hpp"

namespace upms {

using nn::Mat;
using nn::Tape;
using nn::Var;

std::string check_config(const TrainConfig& c) {
  if (c.total_steps < 1) return "total_steps must be >= 1";
  if (c.learning_rate < 0.0) return "learning_rate must be >= 0";
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) return "gamma must lie in (0, 1]";
  if (!(c.gae_lambda > 0.0 && c.gae_lambda <= 1.0)) return "gae_lambda must lie in (0, 1]";
  if (!(c.clip > 0.0)) return "clip must be > 0";
  if (c.epochs < 1) return "epochs must be >= 1";
  if (c.actors < 1 || c.rollout_steps < 1) return "actors and rollout_steps must be >= 1";
  if (c.minibatch < 1 || static_cast<long>(c.minibatch) > static_cast<long>(c.actors) * c.rollout_steps) {
    return "minibatch must lie in [1, actors * rollout_steps]";
  }
  if (c.value_coef < 0.0 || c.entropy_coef < 0.0) return "loss coefficients must be >= 0";
  return {};
}

ProblemInstance InstanceSampler::sample(std::uint64_t seed) const {
  if (cells.empty()) throw std::invalid_argument("InstanceSampler: no cells");
  Rng rng(seed);
  GenParams params = cells[rng.index(cells.size())];
  params.seed = rng.next_u64();
  return generate_instance(params);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double bootstrap, double gamma, double lambda) {
  if (rewards.size() != values.size() || rewards.size() != dones.size()) {
    throw std::invalid_argument("compute_gae: rewards, values and dones must have equal length");
  }
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

Var sample_loss(Tape& tape, const std::vector<Var>& p, const PolicyNet& net, const GraphTensors& gt, const PpoSample& s,
                const LossCoefs& coefs, double weight, double* ratio_out) {
  const auto& actions = s.obs->actions;
  const Embeddings emb = net.encode(tape, p, gt);
  const PolicyHeads h = net.heads(tape, p, gt, emb, actions);
  const std::vector<std::uint8_t> mask(actions.size(), 1);
  const Var log_probs = tape.masked_log_softmax(h.logits, mask);
  const Var probs = tape.masked_softmax(h.logits, mask);
  const Var ratio = tape.exp(tape.add_scalar(tape.element(log_probs, s.action, 0), -s.old_log_prob));
  if (ratio_out) *ratio_out = tape.scalar(ratio);
  const Var surr_raw = tape.scale(ratio, s.advantage);
  const Var surr_clip = tape.scale(tape.clamp(ratio, 1.0 - coefs.clip, 1.0 + coefs.clip), s.advantage);
  const Var policy_loss = tape.scale(tape.minimum(surr_raw, surr_clip), -1.0);
  const Var value_loss = tape.square(tape.add_scalar(h.value, -s.ret));
  const Var neg_entropy = tape.sum(tape.mul(probs, log_probs));
  Var loss = tape.add(policy_loss, tape.scale(value_loss, coefs.value_coef));
  loss = tape.add(loss, tape.scale(neg_entropy, coefs.entropy_coef));
  return tape.scale(loss, weight);
}

namespace {

struct ChunkResult {
  std::vector<Mat> grads;
  LossStats stats;
  std::ptrdiff_t bad_sample = -1;
  double bad_ratio = 0.0;
};

void run_chunk(const PolicyNet& net, std::span<const PpoSample> batch, std::size_t begin, std::size_t end,
               const LossCoefs& coefs, ChunkResult& out) {
  const double weight = 1.0 / static_cast<double>(batch.size());
  out.grads = net.params().zeros_like();
  Tape tape;
  for (std::size_t i = begin; i < end; ++i) {
    tape.clear();
    const PpoSample& s = batch[i];
    const auto p = tape.parameters(net.params());
    GraphTensors local;
    const GraphTensors* gt = s.tensors;
    if (!gt) {
      local = make_tensors(s.obs->graph);
      gt = &local;
    }
    double ratio = 0.0;
    const Var loss = sample_loss(tape, p, net, *gt, s, coefs, weight, &ratio);
    if (!std::isfinite(ratio)) {
      out.bad_sample = static_cast<std::ptrdiff_t>(i);
      out.bad_ratio = ratio;
      return;
    }
    tape.backward(loss);
    tape.accumulate_param_grads(out.grads);
    out.stats.loss += tape.scalar(loss);
    out.stats.mean_abs_ratio_dev += std::abs(ratio - 1.0) * weight;
    // Recover the unweighted components for reporting.
    const double clipped = clipped_surrogate(ratio, s.advantage, coefs.clip);
    out.stats.policy_loss -= clipped * weight;
  }
}

constexpr std::size_t kLossChunks = 8;

}  // namespace

LossStats ppo_loss(const PolicyNet& net, std::span<const PpoSample> batch, const LossCoefs& coefs, std::vector<Mat>& grads,
                   Exec exec) {
  if (batch.empty()) throw std::invalid_argument("ppo_loss: empty batch");
  // Fixed chunking keeps the floating-point summation order independent of the thread count.
  const std::size_t chunks = std::min(kLossChunks, batch.size());
  std::vector<ChunkResult> parts(chunks);
  const auto bounds = [&](std::size_t c) { return c * batch.size() / chunks; };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
      const auto cc = static_cast<std::size_t>(c);
      run_chunk(net, batch, bounds(cc), bounds(cc + 1), coefs, parts[cc]);
    }
  } else {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(net, batch, bounds(c), bounds(c + 1), coefs, parts[c]);
  }
  LossStats total;
  for (const ChunkResult& part : parts) {
    if (part.bad_sample >= 0) {
      throw std::runtime_error("ppo_loss: non-finite probability ratio " + std::to_string(part.bad_ratio) + " at sample " +
                               std::to_string(part.bad_sample));
    }
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += part.grads[i];
    total.loss += part.stats.loss;
    total.policy_loss += part.stats.policy_loss;
    total.mean_abs_ratio_dev += part.stats.mean_abs_ratio_dev;
  }
  return total;
}

Adam::Adam(const nn::ParamStore& params, double eps, double beta1, double beta2)
    : m_(params.zeros_like()), v_(params.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(nn::ParamStore& params, const std::vector<Mat>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params.values[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(std::vector<Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Mat& g : grads) g *= s;
  }
  return norm;
}

Observation observe(const Simulator& sim, const EnvState& state) {
  return {build_graph(sim, state), sim.feasible_actions(state).actions};
}

namespace {

double log_sum_exp(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return mx + std::log(z);
}

struct Actor {
  std::unique_ptr<ProblemInstance> inst;
  std::unique_ptr<Simulator> sim;
  EnvState state;
  Rng rng{0};
  std::uint64_t episode = 0;
  double raw_return = 0.0;
};

struct EpisodeStat {
  double raw_return;
  Time twt;
  Time tst;
};

void start_episode(Actor& actor, const InstanceSampler& sampler, const TrainConfig& config, std::size_t index) {
  do {
    actor.inst = std::make_unique<ProblemInstance>(sampler.sample(derive_seed(config.seed, 1000 + index, actor.episode)));
    ++actor.episode;
    const double scale = config.scale_rewards ? 1.0 / std::max(actor.inst->mean_processing(), 1.0) : 1.0;
    actor.sim = std::make_unique<Simulator>(*actor.inst, config.weights, scale);
    actor.state = actor.sim->reset();
  } while (actor.state.done);
  actor.raw_return = 0.0;
}

struct ActorBatch {
  std::vector<Transition> steps;
  double bootstrap = 0.0;
  std::vector<EpisodeStat> finished;
};

void collect(const PolicyNet& net, Actor& actor, const InstanceSampler& sampler, const TrainConfig& config,
             std::size_t index, int count, ActorBatch& out) {
  out.steps.clear();
  out.finished.clear();
  for (int t = 0; t < count; ++t) {
    Transition tr;
    tr.obs = observe(*actor.sim, actor.state);
    const PolicyOutput po = net.evaluate(tr.obs.graph, tr.obs.actions);
    const double u = actor.rng.uniform01();
    double acc = 0.0;
    std::size_t choice = po.probs.size() - 1;
    for (std::size_t i = 0; i < po.probs.size(); ++i) {
      acc += po.probs[i];
      if (u < acc) {
        choice = i;
        break;
      }
    }
    tr.action = static_cast<int>(choice);
    tr.log_prob = po.logits[choice] - log_sum_exp(po.logits);
    tr.value = po.value;
    const StepResult r = actor.sim->step(actor.state, tr.obs.actions[choice]);
    tr.reward = r.reward;
    tr.done = r.done;
    actor.raw_return += reward(static_cast<double>(r.info.delta_twt), static_cast<double>(r.info.setup), config.weights.alpha,
                               config.weights.beta);
    out.steps.push_back(std::move(tr));
    if (r.done) {
      out.finished.push_back({actor.raw_return, actor.state.twt, actor.state.tst});
      start_episode(actor, sampler, config, index);
    }
  }
  if (out.steps.back().done) {
    out.bootstrap = 0.0;
  } else {
    const Observation obs = observe(*actor.sim, actor.state);
    out.bootstrap = net.evaluate(obs.graph, obs.actions).value;
  }
}

}  // namespace

TrainResult train(const InstanceSampler& sampler, const TrainConfig& config, const std::function<void(const CurveRow&)>& on_update) {
  if (auto err = check_config(config); !err.empty()) throw std::invalid_argument("train: " + err);
  TrainResult result{PolicyNet(config.net, derive_seed(config.seed, 1)), {}};
  PolicyNet& net = result.net;
  Adam adam(net.params(), config.adam_eps);
  Rng shuffle_rng(derive_seed(config.seed, 2));

  const auto actor_count = static_cast<std::size_t>(config.actors);
  std::vector<Actor> actors(actor_count);
  for (std::size_t a = 0; a < actor_count; ++a) {
    actors[a].rng = Rng(derive_seed(config.seed, 3, a));
    start_episode(actors[a], sampler, config, a);
  }
  std::vector<ActorBatch> batches(actor_count);
  const LossCoefs coefs{config.clip, config.value_coef, config.entropy_coef};

  long steps = 0;
  int update = 0;
  while (steps < config.total_steps) {
    const double lr = config.learning_rate * std::max(0.0, 1.0 - static_cast<double>(steps) / static_cast<double>(config.total_steps));
    const long remaining = config.total_steps - steps;
    const int per_actor = static_cast<int>(std::min<long>(config.rollout_steps, (remaining + config.actors - 1) / config.actors));

    if (config.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(actor_count); ++a) {
        const auto aa = static_cast<std::size_t>(a);
        collect(net, actors[aa], sampler, config, aa, per_actor, batches[aa]);
      }
    } else {
      for (std::size_t a = 0; a < actor_count; ++a) collect(net, actors[a], sampler, config, a, per_actor, batches[a]);
    }
    steps += static_cast<long>(per_actor) * config.actors;

    std::vector<PpoSample> samples;
    CurveRow row;
    for (ActorBatch& b : batches) {
      std::vector<double> rewards, values;
      std::vector<std::uint8_t> dones;
      for (const Transition& tr : b.steps) {
        rewards.push_back(tr.reward);
        values.push_back(tr.value);
        dones.push_back(tr.done ? 1 : 0);
      }
      const GaeResult gae = compute_gae(rewards, values, dones, b.bootstrap, config.gamma, config.gae_lambda);
      for (std::size_t i = 0; i < b.steps.size(); ++i) {
        samples.push_back({&b.steps[i].obs, nullptr, b.steps[i].action, b.steps[i].log_prob, gae.advantages[i], gae.returns[i]});
      }
      for (const EpisodeStat& e : b.finished) {
        row.mean_return += e.raw_return;
        row.mean_twt += static_cast<double>(e.twt);
        row.mean_tst += static_cast<double>(e.tst);
        ++row.episodes;
      }
    }
    if (row.episodes > 0) {
      row.mean_return /= row.episodes;
      row.mean_twt /= row.episodes;
      row.mean_tst /= row.episodes;
    } else {
      row.mean_return = row.mean_twt = row.mean_tst = std::numeric_limits<double>::quiet_NaN();
    }

    double mean_adv = 0.0;
    for (const PpoSample& s : samples) mean_adv += s.advantage;
    mean_adv /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const PpoSample& s : samples) var += (s.advantage - mean_adv) * (s.advantage - mean_adv);
    const double sd = std::sqrt(var / static_cast<double>(samples.size()));
    for (PpoSample& s : samples) s.advantage = (s.advantage - mean_adv) / (sd + 1e-8);

    std::vector<GraphTensors> tensors(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      tensors[i] = make_tensors(samples[i].obs->graph);
      samples[i].tensors = &tensors[i];
    }

    const std::size_t mb = static_cast<std::size_t>(config.minibatch);
    std::vector<std::size_t> order(samples.size());
    std::vector<PpoSample> batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < order.size(); start += mb) {
        batch.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + mb); ++i) batch.push_back(samples[order[i]]);
        std::vector<Mat> grads = net.params().zeros_like();
        const LossStats stats = ppo_loss(net, batch, coefs, grads, config.exec);
        if (stats.mean_abs_ratio_dev > 10.0) {
          throw std::runtime_error("train: diverged, mean |ratio - 1| = " + std::to_string(stats.mean_abs_ratio_dev) +
                                   " at update " + std::to_string(update));
        }
        clip_grad_norm(grads, config.max_grad_norm);
        adam.step(net.params(), grads, lr);
      }
    }

    row.update = update++;
    row.steps = steps;
    row.lr = lr;
    result.curve.push_back(row);
    if (on_update) on_update(row);
  }
  return result;
}

void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& curve) {
  os << "update,steps,mean_return,mean_twt,mean_tst,lr\n";
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(12);
  for (const CurveRow& r : curve) {
    os << r.update << ',' << r.steps << ',' << r.mean_return << ',' << r.mean_twt << ',' << r.mean_tst << ',' << r.lr << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

Action greedy_action(const PolicyNet& net, const Simulator& sim, const EnvState& state) {
  const Observation obs = observe(sim, state);
  const PolicyOutput po = net.evaluate(obs.graph, obs.actions);
  const auto best = std::max_element(po.logits.begin(), po.logits.end()) - po.logits.begin();
  return obs.actions[static_cast<std::size_t>(best)];
}

SolveResult solve_ppo(const PolicyNet& net, const ProblemInstance& inst) {
  const auto t0 = std::chrono::steady_clock::now();
  const Simulator sim(inst);
  EnvState state = sim.reset();
  while (!state.done) sim.step(state, greedy_action(net, sim, state));
  SolveResult result;
  result.schedule = sim.realized_schedule(state);
  result.objectives = compute_objectives(inst, result.schedule);
  result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

PolicyEvaluation evaluate_policy(const PolicyNet& net, const std::vector<ProblemInstance>& instances, Exec exec) {
  PolicyEvaluation out;
  out.objectives.resize(instances.size());
  out.wall_ms.resize(instances.size());
  const auto count = static_cast<std::ptrdiff_t>(instances.size());
  auto run = [&](std::ptrdiff_t i) {
    const SolveResult r = solve_ppo(net, instances[static_cast<std::size_t>(i)]);
    out.objectives[static_cast<std::size_t>(i)] = r.objectives;
    out.wall_ms[static_cast<std::size_t>(i)] = r.wall_ms;
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) run(i);
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) run(i);
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.mean_twt += static_cast<double>(out.objectives[i].twt);
    out.mean_tst += static_cast<double>(out.objectives[i].tst);
    out.mean_ms += out.wall_ms[i];
  }
  if (!instances.empty()) {
    const double n = static_cast<double>(instances.size());
    out.mean_twt /= n;
    out.mean_tst /= n;
    out.mean_ms /= n;
  }
  return out;
}

}  // namespace upms
