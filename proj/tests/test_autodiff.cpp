#include <cmath>
#include <stdexcept>

#include "ant/autodiff.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ant;
using ant_test::gradcheck;
using ant_test::random_tensor;

namespace {

// weighted sum with a fixed random cotangent, so every output entry matters
Val weighted_sum(Tape& t, Val out, const Tensor& w) {
  return t.sum(t.mul(out, t.constant(w)));
}

}  // namespace

TEST_CASE("linear forward matches hand arithmetic") {
  Tape t(false);
  Val x = t.constant(Tensor::from_rows(1, 2, {1, 2}));
  Val w = t.constant(Tensor::from_rows(2, 1, {1, 1}));
  Val b = t.constant(Tensor::from_rows(1, 1, {1}));
  Val y = t.add_row(t.matmul(x, w), b);
  CHECK(t.value(y).item() == doctest::Approx(4.0).epsilon(1e-15));

  // identity weights leave the input unchanged
  Val xi = t.constant(Tensor::from_rows(2, 2, {3, -1, 0.5, 2}));
  Val wi = t.constant(Tensor::from_rows(2, 2, {1, 0, 0, 1}));
  Val yi = t.matmul(xi, wi);
  for (size_t i = 0; i < 4; ++i) CHECK(t.value(yi)[i] == t.value(xi)[i]);
}

TEST_CASE("matmul matches naive triple loop oracle") {
  Rng rng(7);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 5, rng);
  Tape t(false);
  const Tensor& c = t.value(t.matmul(t.constant(a), t.constant(b)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("shape mismatch names both shapes") {
  Tape t(false);
  Val a = t.constant(Tensor(2, 3));
  Val b = t.constant(Tensor(2, 3));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("softmax basics") {
  Tape t(false);
  SUBCASE("uniform on equal logits") {
    const Tensor& y = t.value(t.softmax_rows(t.constant(Tensor::from_rows(1, 3, {0, 0, 0}))));
    for (int j = 0; j < 3; ++j) CHECK(y[j] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("independent evaluation of [1,2]") {
    const Tensor& y = t.value(t.softmax_rows(t.constant(Tensor::from_rows(1, 2, {1, 2}))));
    CHECK(y[0] == doctest::Approx(0.26894142136999512).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.73105857863000488).epsilon(1e-12));
  }
  SUBCASE("mask semantics give exact zeros") {
    const Tensor& y =
        t.value(t.softmax_rows(t.constant(Tensor::from_rows(1, 2, {kMaskedLogit, 5.0}))));
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 1.0);
  }
  SUBCASE("fully masked row throws") {
    CHECK_THROWS_AS(t.softmax_rows(t.constant(Tensor::from_rows(1, 2, {kMaskedLogit, kMaskedLogit}))),
                    std::domain_error);
  }
  SUBCASE("rows sum to one within 1e-12") {
    Rng rng(3);
    Val y = t.softmax_rows(t.constant(random_tensor(6, 50, rng, -30.0, 30.0)));
    for (int i = 0; i < 6; ++i) {
      double s = 0.0;
      for (int j = 0; j < 50; ++j) s += t.value(y).at(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("monotone in logits") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      Tensor x = random_tensor(1, 8, rng, -3, 3);
      Tape t2(false);
      const double before = t2.value(t2.softmax_rows(t2.constant(x)))[2];
      x[2] += 0.5;
      const double after = t2.value(t2.softmax_rows(t2.constant(x)))[2];
      CHECK(after > before);
    }
  }
}

TEST_CASE("scaled dot attention degenerates correctly") {
  Rng rng(5);
  SUBCASE("single key/value row returns that row") {
    Tape t(false);
    Tensor q = random_tensor(3, 4, rng), k = random_tensor(1, 4, rng), v = random_tensor(1, 4, rng);
    const Tensor& out = t.value(
        scaled_dot_attention(t, t.constant(q), t.constant(k), t.constant(v)));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) CHECK(out.at(i, j) == doctest::Approx(v[j]).epsilon(1e-14));
  }
  SUBCASE("saturated logit selects one value row") {
    Tape t(false);
    Tensor q = Tensor::from_rows(1, 2, {100.0, 0.0});
    Tensor k = Tensor::from_rows(2, 2, {100.0, 0.0, 0.0, 100.0});  // orthogonal keys
    Tensor v = random_tensor(2, 2, rng);
    const Tensor& out =
        t.value(scaled_dot_attention(t, t.constant(q), t.constant(k), t.constant(v)));
    CHECK(out.at(0, 0) == doctest::Approx(v.at(0, 0)).epsilon(1e-9));
    CHECK(out.at(0, 1) == doctest::Approx(v.at(0, 1)).epsilon(1e-9));
  }
  SUBCASE("random case matches naive oracle") {
    Tensor q = random_tensor(3, 4, rng), k = random_tensor(5, 4, rng), v = random_tensor(5, 4, rng);
    Tape t(false);
    const Tensor& out =
        t.value(scaled_dot_attention(t, t.constant(q), t.constant(k), t.constant(v)));
    for (int i = 0; i < 3; ++i) {
      std::vector<double> logits(5), probs(5);
      double mx = -1e300, denom = 0.0;
      for (int j = 0; j < 5; ++j) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += q.at(i, c) * k.at(j, c);
        logits[j] = s / std::sqrt(4.0);
        mx = std::max(mx, logits[j]);
      }
      for (int j = 0; j < 5; ++j) denom += (probs[j] = std::exp(logits[j] - mx));
      for (int j = 0; j < 5; ++j) probs[j] /= denom;
      for (int c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 5; ++j) acc += probs[j] * v.at(j, c);
        CHECK(out.at(i, c) == doctest::Approx(acc).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Parameter p("p", Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6}));
  Tape t(true);
  t.backward(t.sum(t.leaf(p)));
  for (size_t i = 0; i < 6; ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("backward: masked logits receive exactly zero gradient") {
  Parameter p("p", Tensor::from_rows(1, 3, {0.4, kMaskedLogit, -0.2}));
  Tape t(true);
  Val lp = t.log_softmax_rows(t.leaf(p));
  t.backward(t.at(lp, 0, 0));
  CHECK(p.grad[1] == 0.0);
  CHECK(p.grad[0] != 0.0);

  Parameter q("q", Tensor::from_rows(1, 3, {0.4, kMaskedLogit, -0.2}));
  Tape t2(true);
  Val sm = t2.softmax_rows(t2.leaf(q));
  t2.backward(t2.at(sm, 0, 2));
  CHECK(q.grad[1] == 0.0);
}

TEST_CASE("backward requires scalar loss") {
  Parameter p("p", Tensor(2, 2));
  Tape t(true);
  CHECK_THROWS_AS(t.backward(t.leaf(p)), std::invalid_argument);
}

TEST_CASE("gradcheck: every primitive matches central finite differences") {
  Rng rng(42);
  const int kInstances = 50;
  const double kTol = 1e-4;

  auto check_unary = [&](const std::function<Val(Tape&, Val)>& op, int rows, int cols, double lo,
                         double hi) {
    double worst = 0.0;
    for (int inst = 0; inst < kInstances; ++inst) {
      Tensor x = random_tensor(rows, cols, rng, lo, hi);
      // nudge away from the relu kink where finite differences misbehave
      for (size_t i = 0; i < x.size(); ++i)
        if (std::fabs(x[i]) < 5e-3) x[i] += 1e-2;
      worst = std::max(worst, gradcheck({x}, [&](Tape& t, std::vector<Val>& vs) {
                         Val out = op(t, vs[0]);
                         Rng wr(1234);
                         Tensor w(t.value(out).rows(), t.value(out).cols());
                         for (size_t i = 0; i < w.size(); ++i) w[i] = wr.uniform(-1, 1);
                         return weighted_sum(t, out, w);
                       }));
    }
    CHECK(worst < kTol);
  };

  SUBCASE("relu") { check_unary([](Tape& t, Val a) { return t.relu(a); }, 3, 4, -1, 1); }
  SUBCASE("sigmoid") { check_unary([](Tape& t, Val a) { return t.sigmoid(a); }, 3, 4, -3, 3); }
  SUBCASE("tanh") { check_unary([](Tape& t, Val a) { return t.tanh(a); }, 3, 4, -3, 3); }
  SUBCASE("sqrt") { check_unary([](Tape& t, Val a) { return t.sqrt(a); }, 3, 4, 0.2, 4.0); }
  SUBCASE("exp") { check_unary([](Tape& t, Val a) { return t.exp(a); }, 3, 4, -2, 2); }
  SUBCASE("log") { check_unary([](Tape& t, Val a) { return t.log(a); }, 3, 4, 0.2, 4.0); }
  SUBCASE("scale/add_scalar") {
    check_unary([](Tape& t, Val a) { return t.add_scalar(t.scale(a, -1.7), 0.3); }, 3, 4, -1, 1);
  }
  SUBCASE("transpose") { check_unary([](Tape& t, Val a) { return t.transpose(a); }, 3, 4, -1, 1); }
  SUBCASE("mean_rows") { check_unary([](Tape& t, Val a) { return t.mean_rows(a); }, 4, 3, -1, 1); }
  SUBCASE("slice_cols") {
    check_unary([](Tape& t, Val a) { return t.slice_cols(a, 1, 3); }, 3, 4, -1, 1);
  }
  SUBCASE("row/at") {
    check_unary([](Tape& t, Val a) { return t.add_scalar(t.at(t.row(a, 2), 0, 1), 0.0); }, 3, 4, -1, 1);
  }
  SUBCASE("softmax_rows") {
    check_unary([](Tape& t, Val a) { return t.softmax_rows(a); }, 3, 5, -2, 2);
  }
  SUBCASE("log_softmax_rows") {
    check_unary([](Tape& t, Val a) { return t.log_softmax_rows(a); }, 3, 5, -2, 2);
  }
  SUBCASE("masked softmax") {
    double worst = 0.0;
    for (int inst = 0; inst < kInstances; ++inst) {
      Tensor x = random_tensor(2, 6, rng, -2, 2);
      worst = std::max(worst, gradcheck({x}, [&](Tape& t, std::vector<Val>& vs) {
                         Tensor mask(2, 6);
                         for (int j = 0; j < 6; ++j) {
                           mask.at(0, j) = (j % 3 == 0) ? kMaskedLogit : 0.0;
                           mask.at(1, j) = (j % 2 == 0) ? kMaskedLogit : 0.0;
                         }
                         Val masked = t.add(vs[0], t.constant(mask));
                         Val sm = t.softmax_rows(masked);
                         Rng wr(77);
                         Tensor w(2, 6);
                         for (size_t i = 0; i < w.size(); ++i) w[i] = wr.uniform(-1, 1);
                         return weighted_sum(t, sm, w);
                       }));
    }
    CHECK(worst < kTol);
  }

  auto check_binary = [&](const std::function<Val(Tape&, Val, Val)>& op, int r1, int c1, int r2,
                          int c2) {
    double worst = 0.0;
    for (int inst = 0; inst < kInstances; ++inst) {
      Tensor a = random_tensor(r1, c1, rng);
      Tensor b = random_tensor(r2, c2, rng, 0.3, 1.5);  // keep div_row away from 0
      worst = std::max(worst, gradcheck({a, b}, [&](Tape& t, std::vector<Val>& vs) {
                         Val out = op(t, vs[0], vs[1]);
                         Rng wr(4321);
                         Tensor w(t.value(out).rows(), t.value(out).cols());
                         for (size_t i = 0; i < w.size(); ++i) w[i] = wr.uniform(-1, 1);
                         return weighted_sum(t, out, w);
                       }));
    }
    CHECK(worst < kTol);
  };

  SUBCASE("matmul") {
    check_binary([](Tape& t, Val a, Val b) { return t.matmul(a, b); }, 3, 4, 4, 2);
  }
  SUBCASE("matmul_nt") {
    check_binary([](Tape& t, Val a, Val b) { return t.matmul_nt(a, b); }, 3, 4, 5, 4);
  }
  SUBCASE("add/sub/mul") {
    check_binary([](Tape& t, Val a, Val b) { return t.mul(t.add(a, b), t.sub(a, b)); }, 3, 4, 3, 4);
  }
  SUBCASE("row broadcasts") {
    check_binary(
        [](Tape& t, Val a, Val b) {
          return t.div_row(t.mul_row(t.sub_row(t.add_row(a, b), b), b), b);
        },
        4, 3, 1, 3);
  }
  SUBCASE("concat_cols") {
    check_binary([](Tape& t, Val a, Val b) { return t.concat_cols({a, b, a}); }, 3, 2, 3, 4);
  }
  SUBCASE("gather_rows") {
    check_unary([](Tape& t, Val a) { return t.gather_rows(a, {2, 0, 2, 1}); }, 4, 3, -1, 1);
  }
}

TEST_CASE("finite check flags NaN") {
  Tape t(true);
  t.set_check_finite(true);
  Val x = t.constant(Tensor::from_rows(1, 2, {-1.0, 2.0}));
  CHECK_THROWS_AS(t.log(x), std::runtime_error);
}
