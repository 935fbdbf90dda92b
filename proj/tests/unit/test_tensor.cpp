#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "mmcot/error.hpp"
#include "mmcot/tensor.hpp"
#include "mmcot/tensor_io.hpp"

using namespace mmcot;

namespace {

std::vector<double> loop_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i, p) * b.at(p, j);
  return out;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(TensorConstruction, ShapeMatchesData) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
}

TEST(TensorConstruction, NonFiniteValuesRejected) {
  EXPECT_THROW(Tensor::vector({1.0, std::nan("")}), NonFiniteError);
  EXPECT_THROW(Tensor::scalar(INFINITY), NonFiniteError);
}

TEST(TensorConstruction, SeededUniformIsDeterministic) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(values(Tensor::uniform({3, 4}, -1, 1, a)), values(Tensor::uniform({3, 4}, -1, 1, b)));
}

TEST(Matmul, IdentityCases) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(values(matmul(a, eye)), values(a));
  EXPECT_EQ(values(matmul(eye, Tensor::matrix({{5}, {7}}))), (std::vector<double>{5, 7}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = Tensor::uniform({3, 4}, -2, 2, rng);
    Tensor b = Tensor::uniform({4, 2}, -2, 2, rng);
    EXPECT_EQ(values(matmul(a, b)), loop_matmul(a, b));
  }
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Softmax, UniformRow) {
  Tensor s = softmax_rows(Tensor::matrix({{0, 0, 0}}));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesDirectFormula) {
  Tensor s = softmax_rows(Tensor::matrix({{1, 2, 3}}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(s[1], std::exp(2.0) / z, 1e-12);
  EXPECT_NEAR(s[2], std::exp(3.0) / z, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::uniform({4, 6}, -10, 10, rng);
    Tensor s = softmax_rows(x);
    const double c = shift(rng);
    std::vector<double> shifted = values(x);
    for (double& v : shifted) v += c;
    Tensor s2 = softmax_rows(Tensor::from({4, 6}, shifted));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        total += s.at(r, j);
        EXPECT_NEAR(s.at(r, j), s2.at(r, j), 1e-12);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tensor s = softmax_rows(Tensor::matrix({{1000, 0, -1000}}));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  Tensor ls = log_softmax_rows(Tensor::matrix({{1000, 0, -1000}}));
  EXPECT_NEAR(ls[2], -2000.0, 1e-9);
}

TEST(Sigmoid, KnownValues) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(sigmoid(Tensor::scalar(2.0)).item(), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(sigmoid(Tensor::scalar(2.0)).item(), 0.8807970779778823, 1e-15);
  for (double x : {-30.0, -3.5, 0.1, 7.0, 40.0}) {
    EXPECT_NEAR(sigmoid(Tensor::scalar(x)).item() + sigmoid(Tensor::scalar(-x)).item(), 1.0, 1e-15);
  }
}

TEST(Elementwise, IdentitiesAndProduct) {
  Tensor a = Tensor::vector({1.5, -2.0, 3.0});
  EXPECT_EQ(values(mul(a, Tensor::full({3}, 1.0))), values(a));
  EXPECT_EQ(values(add(a, Tensor::zeros({3}))), values(a));
  EXPECT_EQ(values(mul(Tensor::vector({1, 2}), Tensor::vector({3, 4}))), (std::vector<double>{3, 8}));
  EXPECT_EQ(values(sub(Tensor::vector({1, 2}), Tensor::vector({3, 4}))), (std::vector<double>{-2, -2}));
  EXPECT_THROW(add(a, Tensor::zeros({2})), DimensionError);
}

TEST(ConcatLast, ShapesAndValues) {
  EXPECT_EQ(values(concat_last(Tensor::matrix({{1}}), Tensor::matrix({{2}}))), (std::vector<double>{1, 2}));
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(values(concat_last(a, Tensor::zeros({2, 0}))), values(a));
  EXPECT_EQ(concat_last(Tensor::zeros({2, 3}), Tensor::zeros({2, 5})).shape(), (Shape{2, 8}));
}

TEST(MeanRows, Cases) {
  EXPECT_EQ(values(mean_rows(Tensor::matrix({{4, 5}}))), (std::vector<double>{4, 5}));
  EXPECT_EQ(values(mean_rows(Tensor::matrix({{1, 3}, {3, 1}}))), (std::vector<double>{2, 2}));
  std::mt19937_64 rng(8);
  Tensor x = Tensor::uniform({4, 3}, -1, 1, rng);
  Tensor m = mean_rows(x);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += x.at(i, j);
    EXPECT_NEAR(m[j], s / 4.0, 1e-15);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from({2, 3}, {1, -2, 3, 0.5, 7, 9}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  Tensor x = Tensor::vector({1.5, -2.0, 0.25}, true);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(x), ContractError);
}

TEST(Backward, LinearityOverIndependentLosses) {
  std::mt19937_64 rng(21);
  Tensor w = Tensor::uniform({3, 3}, -1, 1, rng, true);
  Tensor x = Tensor::uniform({2, 3}, -1, 1, rng);
  auto l1 = [&] { return sum(softmax_rows(matmul(x, w))); };
  auto l2 = [&] { return mean(sigmoid(matmul(x, w))); };
  backward(l1());
  const std::vector<double> g1(w.grad().begin(), w.grad().end());
  w.clear_grad();
  backward(l2());
  const std::vector<double> g2(w.grad().begin(), w.grad().end());
  w.clear_grad();
  backward(add(l1(), l2()));
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(w.grad()[i], g1[i] + g2[i], 1e-14);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  backward(add(y, y));  // 2x^2
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tape, VisitsEachNodeOnceInReverseTopologicalOrder) {
  Tensor a = Tensor::vector({1, 2}, true);
  Tensor b = Tensor::vector({3, 4}, true);
  Tensor c = mul(a, b);
  Tensor d = add(c, a);
  Tensor e = sum(add(d, c));
  ComputationTape tape = ComputationTape::record(e);
  const auto ids = tape.node_ids();
  EXPECT_EQ(std::set<std::uint64_t>(ids.begin(), ids.end()).size(), ids.size());
  auto pos = [&](const Tensor& t) { return std::find(ids.begin(), ids.end(), t.id()) - ids.begin(); };
  EXPECT_EQ(pos(e), 0);
  EXPECT_LT(pos(d), pos(c));
  EXPECT_LT(pos(c), pos(a));
  EXPECT_LT(pos(c), pos(b));
  EXPECT_EQ(ids.size(), 6u);  // e, add(d,c), d, c, a, b
}

TEST(Tape, FrozenInputsNeverReceiveGradients) {
  Tensor w = Tensor::vector({1, 2}, true);
  Tensor frozen = Tensor::vector({3, 4});
  backward(sum(mul(w, frozen)));
  EXPECT_FALSE(frozen.has_grad());
  EXPECT_TRUE(w.has_grad());
}

TEST(Sgd, ZeroRateLeavesParams) {
  Tensor p = Tensor::vector({1, 2}, true);
  backward(sum(mul(p, p)));
  std::vector<Tensor> params{p};
  sgd_step(params, 0.0);
  EXPECT_EQ(values(p), (std::vector<double>{1, 2}));
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Sgd, ScalarStep) {
  Tensor p = Tensor::scalar(1.0, true);
  backward(scale(p, 2.0));  // grad 2
  std::vector<Tensor> params{p};
  sgd_step(params, 0.5);
  EXPECT_DOUBLE_EQ(p.item(), 0.0);
}

TEST(Sgd, TwoStepsDecreaseQuadratic) {
  Tensor p = Tensor::vector({3, -2}, true);
  auto loss = [&] { return sum(mul(p, p)); };
  std::vector<Tensor> params{p};
  const double l0 = loss().item();
  backward(loss());
  sgd_step(params, 0.1);
  const double l1 = loss().item();
  backward(loss());
  sgd_step(params, 0.1);
  const double l2 = loss().item();
  EXPECT_LT(l1, l0);
  EXPECT_LT(l2, l1);
}

TEST(Sgd, ClippingCapsStepNorm) {
  Tensor p = Tensor::vector({0, 0}, true);
  backward(sum(mul(Tensor::vector({30, 40}), p)));  // grad (30, 40), norm 50
  EXPECT_DOUBLE_EQ(grad_norm(std::vector<Tensor>{p}), 50.0);
  std::vector<Tensor> params{p};
  sgd_step(params, 1.0, 5.0);
  EXPECT_NEAR(p[0], -3.0, 1e-15);
  EXPECT_NEAR(p[1], -4.0, 1e-15);
}

TEST(Sgd, MissingGradientIsContractError) {
  std::vector<Tensor> params{Tensor::vector({1}, true)};
  EXPECT_THROW(sgd_step(params, 0.1), ContractError);
}

TEST(L2Normalize, ZeroVectorRejected) {
  EXPECT_THROW(l2_normalize(Tensor::vector({0, 0})), ContractError);
  Tensor n = l2_normalize(Tensor::vector({3, 4}));
  EXPECT_DOUBLE_EQ(n[0], 0.6);
  EXPECT_DOUBLE_EQ(n[1], 0.8);
}

TEST(PickMean, SkipsPadAndRejectsAllPad) {
  Tensor x = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::size_t idx[] = {1, 0, 0};
  EXPECT_DOUBLE_EQ(pick_mean(x, idx, 9).item(), (2.0 + 3.0 + 5.0) / 3.0);
  const std::size_t skip_zero[] = {1, 0, 0};
  EXPECT_DOUBLE_EQ(pick_mean(x, skip_zero, 0).item(), 2.0);
  const std::size_t all_pad[] = {0, 0, 0};
  EXPECT_THROW(pick_mean(x, all_pad, 0), ContractError);
}

// Every differentiable primitive against central differences on random inputs.
TEST(GradientCheck, EveryPrimitive) {
  std::mt19937_64 rng(1234);
  auto param = [&](Shape s) { return Tensor::uniform(std::move(s), -1, 1, rng, true); };
  Tensor a = param({3, 4}), b = param({3, 4}), c = param({4, 2}), v = param({4}), r = param({5});
  const std::size_t ids[] = {2, 0, 2};
  const std::size_t targets[] = {1, 3, 0};
  struct Case {
    const char* name;
    std::function<Tensor()> loss;
    std::vector<NamedTensor> params;
  };
  // Weighted sums keep every output element in the loss with a distinct coefficient.
  Tensor wa = Tensor::uniform({3, 4}, -1, 1, rng);
  auto weigh = [&](const Tensor& t) { return sum(mul(t, wa)); };
  std::vector<Case> cases{
      {"add", [&] { return weigh(add(a, b)); }, {{"a", a}, {"b", b}}},
      {"sub", [&] { return weigh(sub(a, b)); }, {{"a", a}, {"b", b}}},
      {"mul", [&] { return weigh(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"scale", [&] { return weigh(scale(a, -1.7)); }, {{"a", a}}},
      {"one_minus", [&] { return weigh(one_minus(a)); }, {{"a", a}}},
      {"matmul", [&] { return sum(mul(matmul(a, c), matmul(a, c))); }, {{"a", a}, {"c", c}}},
      {"transpose", [&] { return sum(matmul(transpose(a), a)); }, {{"a", a}}},
      {"add_row_bias", [&] { return weigh(mul(add_row_bias(a, v), a)); }, {{"a", a}, {"v", v}}},
      {"softmax_rows", [&] { return weigh(softmax_rows(a)); }, {{"a", a}}},
      {"log_softmax_rows", [&] { return weigh(log_softmax_rows(a)); }, {{"a", a}}},
      {"sigmoid", [&] { return weigh(sigmoid(scale(a, 3.0))); }, {{"a", a}}},
      {"relu", [&] { return weigh(relu(add(a, Tensor::full({3, 4}, 0.05)))); }, {{"a", a}}},
      {"concat_last", [&] { return sum(mul(concat_last(a, b), concat_last(b, a))); }, {{"a", a}, {"b", b}}},
      {"mean_rows", [&] { return sum(mul(mean_rows(a), v)); }, {{"a", a}, {"v", v}}},
      {"mean", [&] { return mean(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"l2_normalize", [&] { return sum(mul(l2_normalize(r), Tensor::vector({1, -2, 3, 0.5, 2}))); }, {{"r", r}}},
      {"stack_rows",
       [&] {
         const Tensor rows[] = {v, scale(v, 2.0), mean_rows(a)};
         return sum(mul(stack_rows(rows), stack_rows(rows)));
       },
       {{"v", v}, {"a", a}}},
      {"gather_rows", [&] { return sum(mul(gather_rows(c, ids), gather_rows(c, ids))); }, {{"c", c}}},
      {"pick_mean", [&] { return pick_mean(log_softmax_rows(a), targets, 0); }, {{"a", a}}},
  };
  for (const auto& tc : cases) {
    const auto result = mmcot::testing::check_gradients(tc.loss, tc.params);
    EXPECT_LT(result.max_relative_error, 1e-4) << tc.name << " worst " << result.worst;
    EXPECT_GT(result.checked, 0u) << tc.name;
  }
}

TEST(TensorIo, RoundTripIsBitExact) {
  std::mt19937_64 rng(99);
  Tensor t = Tensor::uniform({3, 5}, -1e3, 1e3, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(values(back), values(t));
  EXPECT_FALSE(back.requires_grad());
}

TEST(TensorIo, MalformedInputRejected) {
  std::stringstream missing("shape: 2 2\n1 2\n");
  EXPECT_THROW(read_tensor(missing), FormatError);
  std::stringstream garbage("shape: 1 2\n1 x\n");
  EXPECT_THROW(read_tensor(garbage), FormatError);
  std::stringstream header("rows 2\n");
  EXPECT_THROW(read_tensor(header), FormatError);
}

TEST(TensorIo, ParameterFileRoundTrip) {
  std::mt19937_64 rng(4);
  std::vector<NamedTensor> params{{"w", Tensor::uniform({2, 3}, -1, 1, rng, true)},
                                  {"b", Tensor::uniform({3}, -1, 1, rng, true)}};
  std::stringstream ss;
  write_parameters(ss, params);
  const auto back = read_parameters(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "w");
  EXPECT_EQ(values(back[1].second), values(params[1].second));

  std::vector<NamedTensor> target{{"w", Tensor::zeros({2, 3}, true)}, {"b", Tensor::zeros({3}, true)}};
  assign_parameters(target, back);
  EXPECT_EQ(values(target[0].second), values(params[0].second));
  std::vector<NamedTensor> wrong{{"w", Tensor::zeros({3, 2}, true)}, {"b", Tensor::zeros({3}, true)}};
  EXPECT_THROW(assign_parameters(wrong, back), std::exception);
}
