#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upms/autodiff.hpp"
#include "upms/graph_state.hpp"

namespace upms {

struct NetConfig {
  int hidden = 32;       // encoder width
  int rounds = 2;        // message-passing rounds
  int head_hidden = 64;  // width of the actor and critic MLPs
  int head_layers = 2;   // hidden layers per MLP
  bool operator==(const NetConfig&) const = default;
};

/// Node types of the heterogeneous graph.
enum class NodeType { Job = 0, Machine = 1, Setup = 2 };

/// One message direction: messages flow from `src` nodes to `dst` nodes.
struct MessageDirection {
  NodeType src_type;
  NodeType dst_type;
  std::vector<int> src;
  std::vector<int> dst;
  nn::Mat edge_mean;  // per dst node, mean of incoming edge features
};

/// Network inputs derived from one HeteroGraph; all constants.
struct GraphTensors {
  nn::Mat x[3];
  nn::Mat globals;
  std::vector<MessageDirection> directions;
  std::vector<int> jm_lookup;  // job node * m + machine -> jm edge index, -1 when absent
  std::vector<std::array<double, kJmFeatures>> jm_x;
  int m = 0;
  const HeteroGraph* graph = nullptr;
};

GraphTensors make_tensors(const HeteroGraph& g);

struct Embeddings {
  nn::Var nodes[3];
  nn::Var pooled;  // 1 x (2 * hidden + global features)
};

struct PolicyHeads {
  nn::Var logits;  // one row per action in the given list
  nn::Var value;   // 1 x 1
};

/// Evaluated policy at one state.
struct PolicyOutput {
  std::vector<double> probs;   // aligned with the action list
  std::vector<double> logits;
  double value = 0.0;
};

/// Mean-aggregation heterogeneous message passing encoder with a pair-scoring
/// actor head, a Wait head and a value head sharing the encoder.
class PolicyNet {
 public:
  PolicyNet() : PolicyNet(NetConfig{}, 0) {}
  PolicyNet(const NetConfig& config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Per-node embeddings and the pooled state embedding. Throws on a graph
  /// without machine nodes.
  Embeddings encode(nn::Tape& tape, const std::vector<nn::Var>& p, const GraphTensors& gt) const;

  /// Logits over `actions` (assign pairs scored from job, machine and edge
  /// features; Wait scored from the pooled embedding) and the state value.
  /// Throws std::invalid_argument when `actions` is empty.
  PolicyHeads heads(nn::Tape& tape, const std::vector<nn::Var>& p, const GraphTensors& gt, const Embeddings& emb,
                    const std::vector<Action>& actions) const;

  PolicyOutput evaluate(const HeteroGraph& g, const std::vector<Action>& actions) const;

 private:
  int add_linear(const std::string& name, int in, int out, std::uint64_t seed, bool bias = true);
  nn::Var linear(nn::Tape& tape, const std::vector<nn::Var>& p, int layer, nn::Var x) const;
  nn::Var mlp(nn::Tape& tape, const std::vector<nn::Var>& p, const std::vector<int>& layers, nn::Var x) const;

  NetConfig config_;
  nn::ParamStore params_;
  // Index of the weight of each linear layer; its bias, if any, follows at index + 1.
  int input_[3] = {};
  std::vector<std::array<int, 3>> self_;
  std::vector<std::vector<int>> msg_;   // [round][direction]: source projection (no bias)
  std::vector<std::vector<int>> edge_;  // [round][direction]: edge feature projection (no bias)
  std::vector<int> pair_head_;
  std::vector<int> wait_head_;
  std::vector<int> value_head_;
};

/// Probability mass over all n * m pairs plus Wait (last entry); zero at infeasible entries.
std::vector<double> full_distribution(const std::vector<double>& probs, const std::vector<Action>& actions, int n, int m);

void save_checkpoint(const PolicyNet& net, const std::string& path);
PolicyNet load_checkpoint(const std::string& path);
nlohmann::ordered_json checkpoint_json(const PolicyNet& net);
PolicyNet checkpoint_from_json(const nlohmann::ordered_json& j);

}  // namespace upms
