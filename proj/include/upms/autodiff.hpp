#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace upms::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_of(const Mat& m);

/// Handle to a tape node.
struct Var {
  int id = -1;
};

/// Named parameter matrices.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Mat> values;

  int add(std::string name, Mat value);
  std::size_t size() const { return values.size(); }
  std::size_t scalar_count() const;
  /// Zero matrices matching every parameter shape.
  std::vector<Mat> zeros_like() const;
};

/// Reverse-mode tape over dense matrices.
///
/// Every op records its inputs; backward() walks the nodes in reverse
/// creation order. Parameter leaves reference the caller's matrices (no
/// copy), so the ParamStore must outlive the tape's use. Shape errors throw
/// std::invalid_argument naming both shapes.
class Tape {
 public:
  Var constant(Mat value);
  Var parameter(const Mat& value, int index);
  /// Registers every parameter of `store` as a leaf, in order.
  std::vector<Var> parameters(const ParamStore& store);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  double scalar(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// a + b; b may also be a 1 x cols row broadcast over a's rows.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var matmul(Var a, Var b);
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var minimum(Var a, Var b);
  Var clamp(Var a, double lo, double hi);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  /// 1 x cols mean over rows; zeros for an empty input.
  Var mean_rows(Var a);
  Var gather_rows(Var a, std::vector<int> rows);
  /// Row-wise mean of `a` grouped by segment id; empty segments are zero.
  Var segment_mean(Var a, std::vector<int> segment, int num_segments);
  /// segment_mean(gather_rows(a, src), dst, num_segments) in one node.
  Var gather_segment_mean(Var a, std::vector<int> src, std::vector<int> dst, int num_segments);
  /// Softmax over all entries where mask != 0; masked entries are 0 with zero gradient.
  Var masked_softmax(Var logits, std::vector<std::uint8_t> mask);
  /// Log-softmax over unmasked entries; masked entries hold 0 with zero gradient.
  Var masked_log_softmax(Var logits, std::vector<std::uint8_t> mask);
  Var sum(Var a);
  Var mean(Var a);
  Var element(Var a, int row, int col);

  /// Seeds d(loss)/d(loss) = 1 for a 1 x 1 node and propagates.
  void backward(Var loss);
  /// Adds parameter-leaf gradients into `grads` (indexed like the ParamStore).
  void accumulate_param_grads(std::span<Mat> grads) const;
  void clear() { nodes_.clear(); }

 private:
  enum class Op {
    Leaf, Param, Add, AddRow, Sub, Mul, Scale, AddScalar, MatMul, Relu, Tanh, Exp, Log, Square, Minimum, Clamp,
    ConcatCols, ConcatRows, MeanRows, GatherRows, SegmentMean, GatherSegmentMean, MaskedSoftmax, MaskedLogSoftmax,
    Sum, Mean, Element,
  };

  struct Node {
    Op op = Op::Leaf;
    Mat value;
    Mat grad;
    const Mat* external = nullptr;
    std::vector<int> inputs;
    std::vector<int> idx;
    std::vector<int> idx2;
    std::vector<std::uint8_t> mask;
    double s0 = 0.0;
    double s1 = 0.0;
    int param = -1;
    int segments = 0;
    bool needs_grad = false;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  Node& node(Var v);
  bool needs(Var v) const { return node(v).needs_grad; }
  void backward_node(Node& n);
  Mat& grad_slot(int id);

  std::vector<Node> nodes_;
};

/// Builds a scalar loss on a fresh tape from the registered parameter leaves.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Gradient of the loss w.r.t. every parameter.
std::vector<Mat> gradient(ParamStore& params, const LossBuilder& build, double* loss_out = nullptr);

/// Max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|) using central
/// differences. Throws std::invalid_argument for eps outside [1e-6, 1e-3] and
/// std::runtime_error on non-finite losses or gradients.
double grad_check(ParamStore& params, const LossBuilder& build, double eps = 1e-5);

}  // namespace upms::nn
