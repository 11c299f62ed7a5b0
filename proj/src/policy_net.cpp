#include "upms/policy_net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "upms/rng.hpp"

namespace upms {

using nn::Mat;
using nn::Tape;
using nn::Var;

namespace {

constexpr int kNodeFeatures[3] = {kJobFeatures, kMachineFeatures, kSetupFeatures};
constexpr double kWeightScale = 0.1;  // weights are DU(1, 10)

struct DirectionSpec {
  NodeType src;
  NodeType dst;
  int edge_features;
};

constexpr DirectionSpec kDirections[] = {
    {NodeType::Machine, NodeType::Job, kJmFeatures},  // jm, reversed
    {NodeType::Setup, NodeType::Job, 1},              // js, reversed
    {NodeType::Job, NodeType::Machine, kJmFeatures},  // jm
    {NodeType::Setup, NodeType::Machine, 1},          // ms, reversed
    {NodeType::Setup, NodeType::Machine, 1},          // sm
    {NodeType::Machine, NodeType::Setup, 1},          // ms
    {NodeType::Job, NodeType::Setup, 1},              // js
    {NodeType::Machine, NodeType::Setup, 1},          // sm, reversed
};
constexpr int kDirectionCount = static_cast<int>(std::size(kDirections));

int type_index(NodeType t) { return static_cast<int>(t); }

MessageDirection make_direction(const DirectionSpec& spec, int dst_count, const std::vector<int>& src,
                                const std::vector<int>& dst, const std::vector<std::vector<double>>& features) {
  MessageDirection d{spec.src, spec.dst, src, dst, Mat::Zero(dst_count, spec.edge_features)};
  std::vector<int> counts(static_cast<std::size_t>(dst_count), 0);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    for (int f = 0; f < spec.edge_features; ++f) d.edge_mean(dst[e], f) += features[e][static_cast<std::size_t>(f)];
    ++counts[static_cast<std::size_t>(dst[e])];
  }
  for (int i = 0; i < dst_count; ++i) {
    if (counts[static_cast<std::size_t>(i)] > 0) d.edge_mean.row(i) /= counts[static_cast<std::size_t>(i)];
  }
  return d;
}

}  // namespace

GraphTensors make_tensors(const HeteroGraph& g) {
  GraphTensors t;
  t.graph = &g;
  t.m = static_cast<int>(g.machines.size());
  const int nj = static_cast<int>(g.jobs.size());
  const int nm = static_cast<int>(g.machines.size());
  const int ns = static_cast<int>(g.setups.size());
  t.x[0].resize(nj, kJobFeatures);
  for (int i = 0; i < nj; ++i) {
    for (int f = 0; f < kJobFeatures; ++f) t.x[0](i, f) = g.jobs[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(f)];
    t.x[0](i, 0) *= kWeightScale;
  }
  t.x[1].resize(nm, kMachineFeatures);
  for (int i = 0; i < nm; ++i) {
    for (int f = 0; f < kMachineFeatures; ++f) t.x[1](i, f) = g.machines[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(f)];
  }
  t.x[2].resize(ns, kSetupFeatures);
  for (int i = 0; i < ns; ++i) {
    for (int f = 0; f < kSetupFeatures; ++f) t.x[2](i, f) = g.setups[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(f)];
  }
  t.globals.resize(1, kGlobalFeatures);
  const double count_scale = 1.0 / std::max(1, g.meta.n);
  for (int f = 0; f < kGlobalFeatures; ++f) t.globals(0, f) = g.globals[static_cast<std::size_t>(f)];
  for (int f : {0, 1, 2}) t.globals(0, f) *= count_scale;
  for (int f : {5, 6}) t.globals(0, f) /= std::max(1, g.meta.m);

  auto collect = [](const std::vector<ScalarEdge>& edges, double scale, std::vector<int>& src, std::vector<int>& dst,
                    std::vector<std::vector<double>>& feats) {
    for (const auto& e : edges) {
      src.push_back(e.src);
      dst.push_back(e.dst);
      feats.push_back({e.x * scale});
    }
  };
  std::vector<int> jm_job, jm_machine;
  std::vector<std::vector<double>> jm_feats;
  for (const auto& e : g.jm) {
    jm_job.push_back(e.job);
    jm_machine.push_back(e.machine);
    jm_feats.emplace_back(e.x.begin(), e.x.end());
    t.jm_x.push_back(e.x);
  }
  std::vector<int> js_src, js_dst, ms_src, ms_dst, sm_src, sm_dst;
  std::vector<std::vector<double>> js_f, ms_f, sm_f;
  collect(g.js, kWeightScale, js_src, js_dst, js_f);
  collect(g.ms, 1.0, ms_src, ms_dst, ms_f);
  collect(g.sm, 1.0, sm_src, sm_dst, sm_f);

  t.directions.push_back(make_direction(kDirections[0], nj, jm_machine, jm_job, jm_feats));
  t.directions.push_back(make_direction(kDirections[1], nj, js_dst, js_src, js_f));
  t.directions.push_back(make_direction(kDirections[2], nm, jm_job, jm_machine, jm_feats));
  t.directions.push_back(make_direction(kDirections[3], nm, ms_dst, ms_src, ms_f));
  t.directions.push_back(make_direction(kDirections[4], nm, sm_src, sm_dst, sm_f));
  t.directions.push_back(make_direction(kDirections[5], ns, ms_src, ms_dst, ms_f));
  t.directions.push_back(make_direction(kDirections[6], ns, js_src, js_dst, js_f));
  t.directions.push_back(make_direction(kDirections[7], ns, sm_dst, sm_src, sm_f));

  t.jm_lookup.assign(static_cast<std::size_t>(nj) * static_cast<std::size_t>(nm), -1);
  for (std::size_t e = 0; e < g.jm.size(); ++e) {
    t.jm_lookup[static_cast<std::size_t>(g.jm[e].job) * static_cast<std::size_t>(nm) + static_cast<std::size_t>(g.jm[e].machine)] =
        static_cast<int>(e);
  }
  return t;
}

PolicyNet::PolicyNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
  if (config.hidden < 1 || config.rounds < 0 || config.head_hidden < 1 || config.head_layers < 0) {
    throw std::invalid_argument("PolicyNet: invalid network configuration");
  }
  const int h = config.hidden;
  std::uint64_t layer_seed = 0;
  auto next_seed = [&] { return derive_seed(seed, layer_seed++); };
  const char* type_names[3] = {"job", "machine", "setup"};
  for (int t = 0; t < 3; ++t) input_[t] = add_linear(std::string("input.") + type_names[t], kNodeFeatures[t], h, next_seed());
  for (int r = 0; r < config.rounds; ++r) {
    const std::string prefix = "round" + std::to_string(r) + ".";
    std::array<int, 3> self{};
    for (int t = 0; t < 3; ++t) self[static_cast<std::size_t>(t)] = add_linear(prefix + "self." + type_names[t], h, h, next_seed());
    self_.push_back(self);
    std::vector<int> msg, edge;
    for (int d = 0; d < kDirectionCount; ++d) {
      const std::string dn = prefix + "dir" + std::to_string(d);
      msg.push_back(add_linear(dn + ".msg", h, h, next_seed(), false));
      edge.push_back(add_linear(dn + ".edge", kDirections[d].edge_features, h, next_seed(), false));
    }
    msg_.push_back(std::move(msg));
    edge_.push_back(std::move(edge));
  }
  const int pooled = 2 * h + kGlobalFeatures;
  auto build_mlp = [&](const std::string& name, int in) {
    std::vector<int> layers;
    int width = in;
    for (int l = 0; l < config.head_layers; ++l) {
      layers.push_back(add_linear(name + "." + std::to_string(l), width, config.head_hidden, next_seed()));
      width = config.head_hidden;
    }
    layers.push_back(add_linear(name + ".out", width, 1, next_seed()));
    return layers;
  };
  pair_head_ = build_mlp("pair", 2 * h + kJmFeatures);
  wait_head_ = build_mlp("wait", pooled);
  value_head_ = build_mlp("value", pooled);
}

int PolicyNet::add_linear(const std::string& name, int in, int out, std::uint64_t seed, bool bias) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / (in + out));
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform01() - 1.0) * limit;
  const int idx = params_.add(name + ".w", std::move(w));
  if (bias) params_.add(name + ".b", Mat::Zero(1, out));
  return idx;
}

Var PolicyNet::linear(Tape& tape, const std::vector<Var>& p, int layer, Var x) const {
  return tape.add(tape.matmul(x, p[static_cast<std::size_t>(layer)]), p[static_cast<std::size_t>(layer) + 1]);
}

Var PolicyNet::mlp(Tape& tape, const std::vector<Var>& p, const std::vector<int>& layers, Var x) const {
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) x = tape.relu(linear(tape, p, layers[l], x));
  return linear(tape, p, layers.back(), x);
}

Embeddings PolicyNet::encode(Tape& tape, const std::vector<Var>& p, const GraphTensors& gt) const {
  if (gt.x[1].rows() == 0) throw std::invalid_argument("encode: graph has no machine nodes");
  Var h[3];
  for (int t = 0; t < 3; ++t) h[t] = tape.relu(linear(tape, p, input_[t], tape.constant(gt.x[t])));
  for (int r = 0; r < config_.rounds; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    Var pre[3];
    for (int t = 0; t < 3; ++t) pre[t] = linear(tape, p, self_[ri][static_cast<std::size_t>(t)], h[t]);
    for (int d = 0; d < kDirectionCount; ++d) {
      const MessageDirection& dir = gt.directions[static_cast<std::size_t>(d)];
      const int dst = type_index(dir.dst_type);
      if (dir.src.empty()) continue;
      const int msg_layer = msg_[ri][static_cast<std::size_t>(d)];
      const int edge_layer = edge_[ri][static_cast<std::size_t>(d)];
      const Var projected = tape.matmul(h[type_index(dir.src_type)], p[static_cast<std::size_t>(msg_layer)]);
      Var message = tape.gather_segment_mean(projected, dir.src, dir.dst, static_cast<int>(gt.x[dst].rows()));
      message = tape.add(message, tape.matmul(tape.constant(dir.edge_mean), p[static_cast<std::size_t>(edge_layer)]));
      pre[dst] = tape.add(pre[dst], message);
    }
    for (int t = 0; t < 3; ++t) h[t] = tape.relu(pre[t]);
  }
  Embeddings emb;
  for (int t = 0; t < 3; ++t) emb.nodes[t] = h[t];
  const Var parts[3] = {tape.mean_rows(h[0]), tape.mean_rows(h[1]), tape.constant(gt.globals)};
  emb.pooled = tape.concat_cols(parts);
  return emb;
}

PolicyHeads PolicyNet::heads(Tape& tape, const std::vector<Var>& p, const GraphTensors& gt, const Embeddings& emb,
                             const std::vector<Action>& actions) const {
  if (actions.empty()) throw std::invalid_argument("heads: no feasible action");
  const HeteroGraph& g = *gt.graph;
  std::vector<int> job_rows, machine_rows;
  Mat edge_x(0, kJmFeatures);
  std::vector<std::array<double, kJmFeatures>> pair_x;
  bool has_wait = false;
  for (const Action& a : actions) {
    if (a.is_wait()) {
      has_wait = true;
      continue;
    }
    const int jn = g.job_node(a.job);
    const int e = jn < 0 ? -1 : gt.jm_lookup[static_cast<std::size_t>(jn) * static_cast<std::size_t>(gt.m) + static_cast<std::size_t>(a.machine)];
    if (e < 0) throw std::invalid_argument("heads: action has no job-machine edge in the graph");
    job_rows.push_back(jn);
    machine_rows.push_back(a.machine);
    pair_x.push_back(gt.jm_x[static_cast<std::size_t>(e)]);
  }
  std::vector<Var> score_parts;
  if (!job_rows.empty()) {
    edge_x.resize(static_cast<Eigen::Index>(pair_x.size()), kJmFeatures);
    for (std::size_t i = 0; i < pair_x.size(); ++i) {
      for (int f = 0; f < kJmFeatures; ++f) edge_x(static_cast<Eigen::Index>(i), f) = pair_x[i][static_cast<std::size_t>(f)];
    }
    const Var parts[3] = {tape.gather_rows(emb.nodes[0], std::move(job_rows)), tape.gather_rows(emb.nodes[1], std::move(machine_rows)),
                          tape.constant(std::move(edge_x))};
    score_parts.push_back(mlp(tape, p, pair_head_, tape.concat_cols(parts)));
  }
  if (has_wait) score_parts.push_back(mlp(tape, p, wait_head_, emb.pooled));
  // Wait, when present, is the last action, matching FeasibleSet ordering.
  if (has_wait && !actions.back().is_wait()) throw std::invalid_argument("heads: Wait must be the last action");
  PolicyHeads out;
  out.logits = score_parts.size() == 1 ? score_parts.front() : tape.concat_rows(score_parts);
  out.value = mlp(tape, p, value_head_, emb.pooled);
  return out;
}

PolicyOutput PolicyNet::evaluate(const HeteroGraph& g, const std::vector<Action>& actions) const {
  Tape tape;
  const auto p = tape.parameters(params_);
  const GraphTensors gt = make_tensors(g);
  const Embeddings emb = encode(tape, p, gt);
  const PolicyHeads h = heads(tape, p, gt, emb, actions);
  const Var probs = tape.masked_softmax(h.logits, std::vector<std::uint8_t>(actions.size(), 1));
  PolicyOutput out;
  const Mat& pv = tape.value(probs);
  const Mat& lv = tape.value(h.logits);
  out.probs.assign(pv.data(), pv.data() + pv.size());
  out.logits.assign(lv.data(), lv.data() + lv.size());
  out.value = tape.scalar(h.value);
  return out;
}

std::vector<double> full_distribution(const std::vector<double>& probs, const std::vector<Action>& actions, int n, int m) {
  if (probs.size() != actions.size()) throw std::invalid_argument("full_distribution: size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(m) + 1, 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) out[static_cast<std::size_t>(actions[i].flat_index(n, m))] = probs[i];
  return out;
}

nlohmann::ordered_json checkpoint_json(const PolicyNet& net) {
  nlohmann::ordered_json j;
  j["v"] = 1;
  const NetConfig& c = net.config();
  j["config"] = {{"hidden", c.hidden}, {"rounds", c.rounds}, {"head_hidden", c.head_hidden}, {"head_layers", c.head_layers}};
  auto params = nlohmann::ordered_json::array();
  const auto& store = net.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Mat& m = store.values[i];
    params.push_back({{"name", store.names[i]},
                      {"shape", {m.rows(), m.cols()}},
                      {"values", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  j["params"] = std::move(params);
  return j;
}

PolicyNet checkpoint_from_json(const nlohmann::ordered_json& j) {
  if (j.at("v").get<int>() != 1) throw std::invalid_argument("checkpoint: unsupported version");
  const auto& c = j.at("config");
  NetConfig config{c.at("hidden").get<int>(), c.at("rounds").get<int>(), c.at("head_hidden").get<int>(),
                   c.at("head_layers").get<int>()};
  PolicyNet net(config, 0);
  auto& store = net.params();
  const auto& params = j.at("params");
  if (params.size() != store.size()) throw std::invalid_argument("checkpoint: parameter count does not match the configuration");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& pj = params.at(i);
    Mat& m = store.values[i];
    if (pj.at("name").get<std::string>() != store.names[i] || pj.at("shape").at(0).get<Eigen::Index>() != m.rows() ||
        pj.at("shape").at(1).get<Eigen::Index>() != m.cols()) {
      throw std::invalid_argument("checkpoint: layout mismatch at " + store.names[i]);
    }
    const auto values = pj.at("values").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != m.size()) throw std::invalid_argument("checkpoint: wrong value count for " + store.names[i]);
    std::copy(values.begin(), values.end(), m.data());
  }
  return net;
}

void save_checkpoint(const PolicyNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_json(net).dump() << '\n';
}

PolicyNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return checkpoint_from_json(nlohmann::ordered_json::parse(in));
}

}  // namespace upms
