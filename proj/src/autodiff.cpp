#include "upms/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace upms::nn {

std::string shape_of(const Mat& m) { return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]"; }

int ParamStore::add(std::string name, Mat value) {
  names.push_back(std::move(name));
  values.push_back(std::move(value));
  return static_cast<int>(values.size()) - 1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t total = 0;
  for (const Mat& m : values) total += static_cast<std::size_t>(m.size());
  return total;
}

std::vector<Mat> ParamStore::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(values.size());
  for (const Mat& m : values) out.push_back(Mat::Zero(m.rows(), m.cols()));
  return out;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("Tape: invalid variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("Tape: invalid variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Mat& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

const Mat& Tape::grad(Var v) const { return node(v).grad; }

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw std::invalid_argument("Tape::scalar: expected 1x1, got " + shape_of(m));
  return m(0, 0);
}

Mat& Tape::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& v = n.external ? *n.external : n.value;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::constant(Mat value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Mat& value, int index) {
  Node n;
  n.op = Op::Param;
  n.external = &value;
  n.param = index;
  n.needs_grad = true;
  return push(std::move(n));
}

std::vector<Var> Tape::parameters(const ParamStore& store) {
  std::vector<Var> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(parameter(store.values[i], static_cast<int>(i)));
  return out;
}

Var Tape::add(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  Node n;
  n.inputs = {a.id, b.id};
  n.needs_grad = needs(a) || needs(b);
  if (va.rows() == vb.rows() && va.cols() == vb.cols()) {
    n.op = Op::Add;
    n.value = va + vb;
  } else if (vb.rows() == 1 && vb.cols() == va.cols()) {
    n.op = Op::AddRow;
    n.value = va.rowwise() + vb.row(0);
  } else {
    shape_error("add", va, vb);
  }
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("sub", va, vb);
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  n.needs_grad = needs(a) || needs(b);
  n.value = va - vb;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("mul", va, vb);
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  n.needs_grad = needs(a) || needs(b);
  n.value = va.cwiseProduct(vb);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.s0 = s;
  n.value = value(a) * s;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  Node n;
  n.op = Op::AddScalar;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).array() + s;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id};
  n.needs_grad = needs(a) || needs(b);
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).cwiseMax(0.0);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).array().tanh();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::Exp;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).array().exp();
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).array().log();
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::Square;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = value(a).array().square();
  return push(std::move(n));
}

Var Tape::minimum(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("minimum", va, vb);
  Node n;
  n.op = Op::Minimum;
  n.inputs = {a.id, b.id};
  n.needs_grad = needs(a) || needs(b);
  n.value = va.cwiseMin(vb);
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Node n;
  n.op = Op::Clamp;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.s0 = lo;
  n.s1 = hi;
  n.value = value(a).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  Node n;
  n.op = Op::ConcatCols;
  for (Var p : parts) {
    const Mat& v = value(p);
    if (v.rows() != rows) shape_error("concat_cols", value(parts[0]), v);
    cols += v.cols();
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || needs(p);
  }
  n.value.resize(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& v = value(p);
    n.value.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  Node n;
  n.op = Op::ConcatRows;
  for (Var p : parts) {
    const Mat& v = value(p);
    if (v.cols() != cols) shape_error("concat_rows", value(parts[0]), v);
    rows += v.rows();
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || needs(p);
  }
  n.value.resize(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& v = value(p);
    n.value.middleRows(offset, v.rows()) = v;
    offset += v.rows();
  }
  return push(std::move(n));
}

Var Tape::mean_rows(Var a) {
  const Mat& va = value(a);
  Node n;
  n.op = Op::MeanRows;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = Mat::Zero(1, va.cols());
  if (va.rows() > 0) n.value = va.colwise().mean();
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Mat& va = value(a);
  Node n;
  n.op = Op::GatherRows;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value.resize(static_cast<Eigen::Index>(rows.size()), va.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= va.rows()) throw std::invalid_argument("gather_rows: row index out of range for " + shape_of(va));
    n.value.row(static_cast<Eigen::Index>(i)) = va.row(rows[i]);
  }
  n.idx = std::move(rows);
  return push(std::move(n));
}

namespace {

std::vector<int> segment_counts(const std::vector<int>& segment, int num_segments) {
  std::vector<int> counts(static_cast<std::size_t>(num_segments), 0);
  for (int s : segment) {
    if (s < 0 || s >= num_segments) throw std::invalid_argument("segment_mean: segment id out of range");
    ++counts[static_cast<std::size_t>(s)];
  }
  return counts;
}

}  // namespace

Var Tape::segment_mean(Var a, std::vector<int> segment, int num_segments) {
  const Mat& va = value(a);
  if (static_cast<Eigen::Index>(segment.size()) != va.rows()) {
    throw std::invalid_argument("segment_mean: " + std::to_string(segment.size()) + " segment ids for " + shape_of(va));
  }
  const auto counts = segment_counts(segment, num_segments);
  Node n;
  n.op = Op::SegmentMean;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.segments = num_segments;
  n.value = Mat::Zero(num_segments, va.cols());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    n.value.row(segment[i]) += va.row(static_cast<Eigen::Index>(i)) / counts[static_cast<std::size_t>(segment[i])];
  }
  n.idx = std::move(segment);
  return push(std::move(n));
}

Var Tape::gather_segment_mean(Var a, std::vector<int> src, std::vector<int> dst, int num_segments) {
  const Mat& va = value(a);
  if (src.size() != dst.size()) throw std::invalid_argument("gather_segment_mean: src and dst lengths differ");
  const auto counts = segment_counts(dst, num_segments);
  Node n;
  n.op = Op::GatherSegmentMean;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.segments = num_segments;
  n.value = Mat::Zero(num_segments, va.cols());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] < 0 || src[i] >= va.rows()) throw std::invalid_argument("gather_segment_mean: source row out of range for " + shape_of(va));
    n.value.row(dst[i]) += va.row(src[i]) / counts[static_cast<std::size_t>(dst[i])];
  }
  n.idx = std::move(src);
  n.idx2 = std::move(dst);
  return push(std::move(n));
}

namespace {

/// Writes log-softmax over unmasked entries into out (masked entries 0).
void masked_log_softmax_values(const Mat& logits, const std::vector<std::uint8_t>& mask, Mat& out) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.size()) {
    throw std::invalid_argument("masked softmax: mask has " + std::to_string(mask.size()) + " entries for " + shape_of(logits));
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, logits.data()[i]);
  }
  if (!std::isfinite(mx)) throw std::invalid_argument("masked softmax: every entry is masked");
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) z += std::exp(logits.data()[i] - mx);
  }
  const double log_z = mx + std::log(z);
  out.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out.data()[i] = mask[static_cast<std::size_t>(i)] ? logits.data()[i] - log_z : 0.0;
  }
}

}  // namespace

Var Tape::masked_softmax(Var logits, std::vector<std::uint8_t> mask) {
  Node n;
  n.op = Op::MaskedSoftmax;
  n.inputs = {logits.id};
  n.needs_grad = needs(logits);
  masked_log_softmax_values(value(logits), mask, n.value);
  for (Eigen::Index i = 0; i < n.value.size(); ++i) {
    n.value.data()[i] = mask[static_cast<std::size_t>(i)] ? std::exp(n.value.data()[i]) : 0.0;
  }
  n.mask = std::move(mask);
  return push(std::move(n));
}

Var Tape::masked_log_softmax(Var logits, std::vector<std::uint8_t> mask) {
  Node n;
  n.op = Op::MaskedLogSoftmax;
  n.inputs = {logits.id};
  n.needs_grad = needs(logits);
  masked_log_softmax_values(value(logits), mask, n.value);
  n.mask = std::move(mask);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = Mat::Constant(1, 1, value(a).sum());
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Mat& va = value(a);
  if (va.size() == 0) throw std::invalid_argument("mean: empty input");
  Node n;
  n.op = Op::Mean;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.value = Mat::Constant(1, 1, va.mean());
  return push(std::move(n));
}

Var Tape::element(Var a, int row, int col) {
  const Mat& va = value(a);
  if (row < 0 || row >= va.rows() || col < 0 || col >= va.cols()) {
    throw std::invalid_argument("element: (" + std::to_string(row) + "," + std::to_string(col) + ") outside " + shape_of(va));
  }
  Node n;
  n.op = Op::Element;
  n.inputs = {a.id};
  n.needs_grad = needs(a);
  n.idx = {row, col};
  n.value = Mat::Constant(1, 1, va(row, col));
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  const Mat& v = value(loss);
  if (v.size() != 1) throw std::invalid_argument("backward: loss must be 1x1, got " + shape_of(v));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  grad_slot(loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    backward_node(n);
  }
}

void Tape::backward_node(Node& n) {
  const Mat& g = n.grad;
  auto input_needs = [&](std::size_t i) { return nodes_[static_cast<std::size_t>(n.inputs[i])].needs_grad; };
  auto in_value = [&](std::size_t i) -> const Mat& { return value(Var{n.inputs[i]}); };
  switch (n.op) {
    case Op::Leaf:
    case Op::Param:
      break;
    case Op::Add:
      if (input_needs(0)) grad_slot(n.inputs[0]) += g;
      if (input_needs(1)) grad_slot(n.inputs[1]) += g;
      break;
    case Op::AddRow:
      if (input_needs(0)) grad_slot(n.inputs[0]) += g;
      if (input_needs(1)) grad_slot(n.inputs[1]) += g.colwise().sum();
      break;
    case Op::Sub:
      if (input_needs(0)) grad_slot(n.inputs[0]) += g;
      if (input_needs(1)) grad_slot(n.inputs[1]) -= g;
      break;
    case Op::Mul:
      if (input_needs(0)) grad_slot(n.inputs[0]) += g.cwiseProduct(in_value(1));
      if (input_needs(1)) grad_slot(n.inputs[1]) += g.cwiseProduct(in_value(0));
      break;
    case Op::Scale:
      grad_slot(n.inputs[0]) += g * n.s0;
      break;
    case Op::AddScalar:
      grad_slot(n.inputs[0]) += g;
      break;
    case Op::MatMul:
      if (input_needs(0)) grad_slot(n.inputs[0]).noalias() += g * in_value(1).transpose();
      if (input_needs(1)) grad_slot(n.inputs[1]).noalias() += in_value(0).transpose() * g;
      break;
    case Op::Relu:
      grad_slot(n.inputs[0]).array() += (n.value.array() > 0.0).select(g.array(), 0.0);
      break;
    case Op::Tanh:
      grad_slot(n.inputs[0]) += g.cwiseProduct((1.0 - n.value.array().square()).matrix());
      break;
    case Op::Exp:
      grad_slot(n.inputs[0]) += g.cwiseProduct(n.value);
      break;
    case Op::Log:
      grad_slot(n.inputs[0]) += g.cwiseQuotient(in_value(0));
      break;
    case Op::Square:
      grad_slot(n.inputs[0]) += 2.0 * g.cwiseProduct(in_value(0));
      break;
    case Op::Minimum: {
      const Mat& a = in_value(0);
      const Mat& b = in_value(1);
      // Ties route the gradient to the first input.
      if (input_needs(0)) grad_slot(n.inputs[0]).array() += (a.array() <= b.array()).select(g.array(), 0.0);
      if (input_needs(1)) grad_slot(n.inputs[1]).array() += (a.array() <= b.array()).select(0.0, g.array());
      break;
    }
    case Op::Clamp: {
      const Mat& a = in_value(0);
      grad_slot(n.inputs[0]).array() += (a.array() >= n.s0 && a.array() <= n.s1).select(g.array(), 0.0);
      break;
    }
    case Op::ConcatCols: {
      Eigen::Index offset = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Eigen::Index cols = in_value(i).cols();
        if (input_needs(i)) grad_slot(n.inputs[i]) += g.middleCols(offset, cols);
        offset += cols;
      }
      break;
    }
    case Op::ConcatRows: {
      Eigen::Index offset = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Eigen::Index rows = in_value(i).rows();
        if (input_needs(i)) grad_slot(n.inputs[i]) += g.middleRows(offset, rows);
        offset += rows;
      }
      break;
    }
    case Op::MeanRows: {
      const Eigen::Index rows = in_value(0).rows();
      if (rows > 0) grad_slot(n.inputs[0]).rowwise() += g.row(0) / static_cast<double>(rows);
      break;
    }
    case Op::GatherRows: {
      Mat& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < n.idx.size(); ++i) ga.row(n.idx[i]) += g.row(static_cast<Eigen::Index>(i));
      break;
    }
    case Op::SegmentMean: {
      const auto counts = segment_counts(n.idx, n.segments);
      Mat& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        ga.row(static_cast<Eigen::Index>(i)) += g.row(n.idx[i]) / counts[static_cast<std::size_t>(n.idx[i])];
      }
      break;
    }
    case Op::GatherSegmentMean: {
      const auto counts = segment_counts(n.idx2, n.segments);
      Mat& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        ga.row(n.idx[i]) += g.row(n.idx2[i]) / counts[static_cast<std::size_t>(n.idx2[i])];
      }
      break;
    }
    case Op::MaskedSoftmax: {
      // dL/dz_i = p_i (g_i - sum_j g_j p_j) over unmasked entries.
      double dot = 0.0;
      for (Eigen::Index i = 0; i < g.size(); ++i) dot += g.data()[i] * n.value.data()[i];
      Mat& ga = grad_slot(n.inputs[0]);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (n.mask[static_cast<std::size_t>(i)]) ga.data()[i] += n.value.data()[i] * (g.data()[i] - dot);
      }
      break;
    }
    case Op::MaskedLogSoftmax: {
      // dL/dz_i = g_i - p_i * sum_j g_j over unmasked entries.
      double total = 0.0;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (n.mask[static_cast<std::size_t>(i)]) total += g.data()[i];
      }
      Mat& ga = grad_slot(n.inputs[0]);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (!n.mask[static_cast<std::size_t>(i)]) continue;
        ga.data()[i] += g.data()[i] - std::exp(n.value.data()[i]) * total;
      }
      break;
    }
    case Op::Sum:
      grad_slot(n.inputs[0]).array() += g(0, 0);
      break;
    case Op::Mean: {
      Mat& ga = grad_slot(n.inputs[0]);
      ga.array() += g(0, 0) / static_cast<double>(ga.size());
      break;
    }
    case Op::Element:
      grad_slot(n.inputs[0])(n.idx[0], n.idx[1]) += g(0, 0);
      break;
  }
}

void Tape::accumulate_param_grads(std::span<Mat> grads) const {
  for (const Node& n : nodes_) {
    if (n.op != Op::Param || n.grad.size() == 0) continue;
    Mat& dst = grads[static_cast<std::size_t>(n.param)];
    if (dst.rows() != n.grad.rows() || dst.cols() != n.grad.cols()) shape_error("accumulate_param_grads", dst, n.grad);
    dst += n.grad;
  }
}

std::vector<Mat> gradient(ParamStore& params, const LossBuilder& build, double* loss_out) {
  Tape tape;
  const auto vars = tape.parameters(params);
  const Var loss = build(tape, vars);
  tape.backward(loss);
  std::vector<Mat> grads = params.zeros_like();
  tape.accumulate_param_grads(grads);
  if (loss_out) *loss_out = tape.scalar(loss);
  return grads;
}

double grad_check(ParamStore& params, const LossBuilder& build, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  auto evaluate = [&]() {
    Tape tape;
    const auto vars = tape.parameters(params);
    return tape.scalar(build(tape, vars));
  };
  double loss = 0.0;
  const std::vector<Mat> analytic = gradient(params, build, &loss);
  if (!std::isfinite(loss)) throw std::runtime_error("grad_check: non-finite loss");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Mat& value = params.values[p];
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + eps;
      const double up = evaluate();
      value.data()[i] = saved - eps;
      const double down = evaluate();
      value.data()[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[p].data()[i];
      if (!std::isfinite(fd) || !std::isfinite(ad)) {
        throw std::runtime_error("grad_check: non-finite gradient for " + params.names[p] + "[" + std::to_string(i) + "]");
      }
      worst = std::max(worst, std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)}));
    }
  }
  return worst;
}

}  // namespace upms::nn
