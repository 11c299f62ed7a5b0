#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "upms/atcsr.hpp"
#include "upms/exec.hpp"
#include "upms/instance_gen.hpp"
#include "upms/policy_net.hpp"

namespace upms {

struct TrainConfig {
  long total_steps = 200'000;
  double learning_rate = 1e-4;  // decays linearly to 0 over total_steps
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 10;
  int minibatch = 64;
  int actors = 8;
  int rollout_steps = 256;  // per actor and update
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double adam_eps = 1e-5;
  bool scale_rewards = true;  // divide rewards by the instance's mean processing time
  RewardWeights weights;
  NetConfig net;
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;
};

std::string check_config(const TrainConfig& config);

/// Draws training instances uniformly over a list of generator cells.
struct InstanceSampler {
  std::vector<GenParams> cells;
  ProblemInstance sample(std::uint64_t seed) const;
};

struct Observation {
  HeteroGraph graph;
  std::vector<Action> actions;
};

struct Transition {
  Observation obs;
  int action = 0;  // index into obs.actions
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, A_t = delta_t + gamma lambda (1 - done_t) A_{t+1},
/// with V_T = bootstrap. Returns are A + V.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double bootstrap, double gamma, double lambda);

/// min(ratio * A, clamp(ratio, 1 - clip, 1 + clip) * A).
double clipped_surrogate(double ratio, double advantage, double clip);

struct PpoSample {
  const Observation* obs = nullptr;
  const GraphTensors* tensors = nullptr;  // optional cache of make_tensors(obs->graph)
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct LossCoefs {
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
};

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_abs_ratio_dev = 0.0;
};

/// Clipped-surrogate PPO loss averaged over the batch:
///   -min(rA, clip(r) A) + c_v (V - R)^2 - c_e H.
/// Gradients are added into `grads`. Throws std::runtime_error naming the
/// sample when a probability ratio is not finite.
LossStats ppo_loss(const PolicyNet& net, std::span<const PpoSample> batch, const LossCoefs& coefs,
                   std::vector<nn::Mat>& grads, Exec exec = Exec::Serial);

/// Builds one sample's loss on `tape` (used by ppo_loss and gradient checks).
nn::Var sample_loss(nn::Tape& tape, const std::vector<nn::Var>& p, const PolicyNet& net, const GraphTensors& gt,
                    const PpoSample& s, const LossCoefs& coefs, double weight, double* ratio_out = nullptr);

class Adam {
 public:
  explicit Adam(const nn::ParamStore& params, double eps = 1e-5, double beta1 = 0.9, double beta2 = 0.999);
  void step(nn::ParamStore& params, const std::vector<nn::Mat>& grads, double lr);

 private:
  std::vector<nn::Mat> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Scales grads so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::vector<nn::Mat>& grads, double max_norm);

struct CurveRow {
  int update = 0;
  long steps = 0;
  double mean_return = 0.0;  // unscaled, over episodes finished in this update
  double mean_twt = 0.0;
  double mean_tst = 0.0;
  double lr = 0.0;
  int episodes = 0;
};

struct TrainResult {
  PolicyNet net;
  std::vector<CurveRow> curve;
};

TrainResult train(const InstanceSampler& sampler, const TrainConfig& config,
                  const std::function<void(const CurveRow&)>& on_update = {});

/// update,steps,mean_return,mean_twt,mean_tst,lr
void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& curve);

Observation observe(const Simulator& sim, const EnvState& state);

/// Highest-probability feasible action; ties go to the first action.
Action greedy_action(const PolicyNet& net, const Simulator& sim, const EnvState& state);

SolveResult solve_ppo(const PolicyNet& net, const ProblemInstance& inst);

struct PolicyEvaluation {
  std::vector<ObjectiveValues> objectives;
  std::vector<double> wall_ms;
  double mean_twt = 0.0;
  double mean_tst = 0.0;
  double mean_ms = 0.0;
};

PolicyEvaluation evaluate_policy(const PolicyNet& net, const std::vector<ProblemInstance>& instances, Exec exec = Exec::Serial);

}  // namespace upms
