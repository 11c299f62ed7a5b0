#include <doctest.h>

#include <cmath>

#include "upms/autodiff.hpp"
#include "upms/rng.hpp"

using namespace upms;
using namespace upms::nn;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.uniform01() - 1.0);
  return m;
}

}  // namespace

TEST_CASE("relu backward") {
  ParamStore ps;
  ps.add("x", row({-1, 2}));
  const auto g = gradient(ps, [](Tape& t, const std::vector<Var>& p) { return t.sum(t.relu(p[0])); });
  CHECK(g[0](0, 0) == 0.0);
  CHECK(g[0](0, 1) == 1.0);
}

TEST_CASE("masked softmax over equal logits") {
  Tape t;
  const Var l = t.constant(row({0, 0, 0}));
  const Var p = t.masked_softmax(l, {1, 1, 0});
  CHECK(t.value(p)(0, 0) == 0.5);
  CHECK(t.value(p)(0, 1) == 0.5);
  CHECK(t.value(p)(0, 2) == 0.0);
  CHECK_THROWS_AS(t.masked_softmax(l, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("masked slots get zero gradient") {
  ParamStore ps;
  ps.add("l", row({0.3, -1.2, 2.0, 0.7}));
  const auto g = gradient(ps, [](Tape& t, const std::vector<Var>& p) {
    const Var ls = t.masked_log_softmax(p[0], {1, 0, 1, 1});
    const Var pr = t.masked_softmax(p[0], {1, 0, 1, 1});
    return t.add(t.element(ls, 0, 2), t.sum(t.mul(pr, pr)));
  });
  CHECK(g[0](0, 1) == 0.0);
  CHECK(g[0](0, 0) != 0.0);
}

TEST_CASE("mean over a set splits the gradient") {
  ParamStore ps;
  Mat x(2, 1);
  x << 2, 4;
  ps.add("x", x);
  double loss = 0;
  const auto g = gradient(ps, [](Tape& t, const std::vector<Var>& p) { return t.sum(t.mean_rows(p[0])); }, &loss);
  CHECK(loss == 3.0);
  CHECK(g[0](0, 0) == 0.5);
  CHECK(g[0](1, 0) == 0.5);
}

TEST_CASE("shape errors name both shapes") {
  Tape t;
  const Var a = t.constant(Mat::Zero(2, 3));
  const Var b = t.constant(Mat::Zero(2, 3));
  try {
    t.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(t.add(a, t.constant(Mat::Zero(3, 3))), std::invalid_argument);
}

TEST_CASE("grad check on sum of squares, an MLP and a constant") {
  Rng rng(1);
  ParamStore sq;
  sq.add("x", random_mat(rng, 3, 4));
  CHECK(grad_check(sq, [](Tape& t, const std::vector<Var>& p) { return t.sum(t.square(p[0])); }) < 1e-8);

  for (int seed = 0; seed < 5; ++seed) {
    ParamStore mlp;
    mlp.add("w1", random_mat(rng, 4, 8));
    mlp.add("b1", random_mat(rng, 1, 8));
    mlp.add("w2", random_mat(rng, 8, 1));
    const Mat x = random_mat(rng, 5, 4);
    const double err = grad_check(mlp, [&](Tape& t, const std::vector<Var>& p) {
      const Var h = t.tanh(t.add(t.matmul(t.constant(x), p[0]), p[1]));
      return t.mean(t.matmul(h, p[2]));
    });
    CHECK(err < 1e-4);
  }

  ParamStore c;
  c.add("x", random_mat(rng, 2, 2));
  const auto g = gradient(c, [](Tape& t, const std::vector<Var>&) { return t.constant(row({3.0})); });
  CHECK(g[0].isZero());
  CHECK(grad_check(c, [](Tape& t, const std::vector<Var>&) { return t.constant(row({3.0})); }) == 0.0);
}

TEST_CASE("grad check rejects bad eps and non-finite values") {
  ParamStore ps;
  ps.add("x", row({1.0}));
  const LossBuilder f = [](Tape& t, const std::vector<Var>& p) { return t.sum(p[0]); };
  CHECK_THROWS_AS(grad_check(ps, f, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(ps, f, 1e-8), std::invalid_argument);
  ps.values[0](0, 0) = -1.0;
  CHECK_THROWS_AS(grad_check(ps, [](Tape& t, const std::vector<Var>& p) { return t.sum(t.log(p[0])); }), std::runtime_error);
}

TEST_CASE("every op passes a gradient check") {
  Rng rng(7);
  ParamStore ps;
  ps.add("a", random_mat(rng, 3, 4));
  ps.add("b", random_mat(rng, 3, 4));
  ps.add("r", random_mat(rng, 1, 4));
  ps.add("w", random_mat(rng, 4, 2));
  // Keep exp/log arguments positive and away from kinks.
  ps.add("pos", (random_mat(rng, 2, 2).array().abs() + 0.5).matrix());
  const double err = grad_check(ps, [](Tape& t, const std::vector<Var>& p) {
    const Var x = t.sub(t.add(t.mul(p[0], p[1]), p[2]), t.scale(p[1], 0.3));
    const Var y = t.add_scalar(t.matmul(x, p[3]), 0.1);
    const Var z = t.tanh(t.relu(t.add_scalar(y, 0.05)));
    const Var cat = t.concat_cols(std::vector<Var>{z, t.square(y)});
    const Var rows = t.concat_rows(std::vector<Var>{cat, t.mean_rows(cat)});
    const Var g = t.gather_rows(rows, {0, 2, 2, 3});
    const Var sm = t.segment_mean(g, {1, 0, 1, 1}, 3);
    const Var gsm = t.gather_segment_mean(rows, {3, 1, 0}, {0, 0, 1}, 2);
    const Var m = t.minimum(t.exp(p[4]), t.log(t.add_scalar(p[4], 1.0)));
    const Var cl = t.clamp(p[0], -0.5, 0.5);
    const Var soft = t.masked_softmax(t.concat_cols(std::vector<Var>{t.element(y, 0, 0), t.element(y, 1, 1), t.element(y, 2, 0)}), {1, 1, 1});
    Var loss = t.add(t.sum(sm), t.mean(gsm));
    loss = t.add(loss, t.sum(m));
    loss = t.add(loss, t.sum(t.square(cl)));
    loss = t.add(loss, t.element(t.masked_log_softmax(t.matmul(t.mean_rows(p[1]), p[3]), {1, 1}), 0, 1));
    loss = t.add(loss, t.element(soft, 0, 2));
    return loss;
  });
  CHECK(err < 1e-6);
}

TEST_CASE("row broadcast add and parameter leaves share storage") {
  ParamStore ps;
  ps.add("b", row({1, 2}));
  Tape t;
  const auto p = t.parameters(ps);
  const Var x = t.constant(Mat::Ones(3, 2));
  const Var y = t.add(x, p[0]);
  CHECK(t.value(y)(2, 1) == 3.0);
  t.backward(t.sum(y));
  std::vector<Mat> grads = ps.zeros_like();
  t.accumulate_param_grads(grads);
  CHECK(grads[0](0, 0) == 3.0);
  CHECK(ps.scalar_count() == 2);
}
