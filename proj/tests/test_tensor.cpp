#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "xferlab/tensor.hpp"

using namespace xferlab;
using testutil::max_fd_error;
using testutil::random_tensor;

TEST_CASE("matmul identity and hand-computed product") {
  Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor ab = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor ones = Tensor::from({2, 1}, {1, 1});
  Tape tape;
  const auto& prod = tape.val(tape.matmul(tape.leaf(i2), tape.leaf(i2)));
  CHECK(prod == std::vector<double>{1, 0, 0, 1});
  const auto& v = tape.val(tape.matmul(tape.leaf(ab), tape.leaf(ones)));
  CHECK(v == std::vector<double>{3, 7});
}

TEST_CASE("gradient of sum(a*b) at identity matrices is the ones matrix") {
  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {1, 0, 0, 1});
  a.requires_grad = true;
  Tape tape;
  tape.backward(tape.sum(tape.matmul(tape.leaf(a), tape.leaf(b))));
  CHECK(a.grad == std::vector<double>{1, 1, 1, 1});

  auto eval = [&]() {
    Tape t;
    return t.scalar_val(t.sum(t.matmul(t.leaf(a), t.leaf(b))));
  };
  CHECK(max_fd_error({&a}, eval) < 1e-4);
}

TEST_CASE("layer_norm spec examples") {
  Tensor gamma = Tensor::from({2}, {1, 1});
  Tensor beta = Tensor::from({2}, {0, 0});
  SUBCASE("constant input maps to zero under eps") {
    Tensor x = Tensor::from({2}, {3.5, 3.5});
    Tape tape;
    const auto& y = tape.val(
        tape.layer_norm(tape.leaf(x), tape.leaf(gamma), tape.leaf(beta), 1e-5));
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(0.0));
  }
  SUBCASE("already normalized input is nearly fixed as eps -> 0") {
    Tensor x = Tensor::from({2}, {1, -1});
    Tape tape;
    const auto& y = tape.val(
        tape.layer_norm(tape.leaf(x), tape.leaf(gamma), tape.leaf(beta), 1e-12));
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-6));
  }
  SUBCASE("beta shifts the normalized output exactly") {
    Tensor x = Tensor::from({2}, {2, 4});
    Tensor b5 = Tensor::from({2}, {5, 5});
    Tape tape;
    Tape::Id base =
        tape.layer_norm(tape.leaf(x), tape.leaf(gamma), tape.leaf(beta), 1e-5);
    Tape::Id shifted =
        tape.layer_norm(tape.leaf(x), tape.leaf(gamma), tape.leaf(b5), 1e-5);
    for (int i = 0; i < 2; ++i)
      CHECK(tape.val(shifted)[i] == tape.val(base)[i] + 5.0);
  }
}

TEST_CASE("swish fixed points") {
  Tensor x = Tensor::from({3}, {0.0, 1.0, 30.0});
  Tape tape;
  const auto& y = tape.val(tape.swish(tape.leaf(x)));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(30.0).epsilon(1e-10));
}

TEST_CASE("log_softmax stability and normalization") {
  SUBCASE("uniform logits") {
    Tensor x = Tensor::from({5}, {2, 2, 2, 2, 2});
    Tape tape;
    const auto& y = tape.val(tape.log_softmax(tape.leaf(x)));
    for (double v : y) CHECK(v == doctest::Approx(std::log(0.2)).epsilon(1e-12));
  }
  SUBCASE("extreme logits do not overflow") {
    Tensor x = Tensor::from({2}, {1000.0, 0.0});
    Tape tape;
    const auto& y = tape.val(tape.log_softmax(tape.leaf(x)));
    CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(-1000.0).epsilon(1e-12));
  }
  SUBCASE("rows logsumexp to zero") {
    Tensor x = random_tensor({4, 7}, 9);
    Tape tape;
    const auto& y = tape.val(tape.log_softmax(tape.leaf(x)));
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) s += std::exp(y[static_cast<std::size_t>(r * 7 + j)]);
      CHECK(std::fabs(std::log(s)) < 1e-12);
    }
  }
}

TEST_CASE("gradient check across the op set") {
  // one composite expression per op family, differentiated w.r.t. every leaf
  Tensor a = random_tensor({3, 4}, 1, "a");
  Tensor b = random_tensor({3, 4}, 2, "b");
  Tensor w = random_tensor({4, 5}, 3, "w", 0.5);
  Tensor u = random_tensor({2, 5}, 4, "u");
  Tensor bias = random_tensor({5}, 5, "bias");
  Tensor gamma = random_tensor({4}, 6, "gamma");
  Tensor beta = random_tensor({4}, 7, "beta");
  Tensor table = random_tensor({6, 4}, 8, "table");
  for (Tensor* t : {&a, &b, &w, &u, &bias, &gamma, &beta, &table})
    t->requires_grad = true;

  auto build = [&](Tape& tape) {
    Tape::Id xa = tape.leaf(a);
    Tape::Id xb = tape.leaf(b);
    Tape::Id mixed = tape.mul(tape.add(xa, xb), tape.sub(xa, tape.scale(xb, 0.3)));
    Tape::Id nrm =
        tape.layer_norm(mixed, tape.leaf(gamma), tape.leaf(beta), 1e-5);
    Tape::Id emb = tape.embed(tape.leaf(table), {0, 5, 2});
    Tape::Id cat = tape.concat_last(
        {tape.rows(nrm, 0, 3), tape.rows(emb, 0, 3)});          // [3,8]
    Tape::Id sl = tape.slice_last(cat, 2, 6);                   // [3,4]
    Tape::Id mm = tape.matmul(tape.swish(sl), tape.leaf(w));    // [3,5]
    Tape::Id rowed = tape.add_row(mm, tape.leaf(bias));
    Tape::Id att = tape.matmul_nt(tape.sigmoid(rowed), tape.leaf(u));  // [3,2]
    Tape::Id sm = tape.softmax(att);
    Tape::Id lsm = tape.log_softmax(tape.tanh(att));
    Tape::Id outer = tape.add_outer(sm, lsm);  // [3,3,2]
    Tape::Id stacked = tape.stack_rows(
        {tape.pick(outer, 0), tape.pick(outer, 7), tape.logaddexp(tape.pick(outer, 3),
                                                                  tape.pick(outer, 5))});
    return tape.mean_scalars({tape.sum(outer), tape.sum(stacked), tape.sum(sm)});
  };

  Tape tape;
  tape.backward(build(tape));
  auto eval = [&]() {
    Tape t;
    return t.scalar_val(build(t));
  };
  CHECK(max_fd_error({&a, &b, &w, &u, &bias, &gamma, &beta, &table}, eval) < 1e-4);
}

TEST_CASE("dropout semantics") {
  SUBCASE("rate zero records nothing") {
    Tensor x = random_tensor({8}, 11);
    Tape tape;
    Tape::Id id = tape.leaf(x);
    CHECK(tape.dropout(id, 0.0, RngStream(1, "d")) == id);
  }
  SUBCASE("inverted scaling preserves the mean within 1 percent") {
    const std::size_t n = 20000;
    Tensor x(std::vector<int>{static_cast<int>(n)}, 1.0);
    Tape tape;
    const auto& y = tape.val(tape.dropout(tape.leaf(x), 0.3, RngStream(7, "drop")));
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::fabs(mean - 1.0) < 0.01);
  }
  SUBCASE("gradient flows through the frozen mask") {
    Tensor x = random_tensor({40}, 12);
    x.requires_grad = true;
    auto build = [&](Tape& t) {
      return t.sum(t.mul(t.dropout(t.leaf(x), 0.5, RngStream(3, "gd")), t.leaf(x)));
    };
    Tape tape;
    tape.backward(build(tape));
    auto eval = [&]() {
      Tape t;
      return t.scalar_val(build(t));
    };
    CHECK(max_fd_error({&x}, eval) < 1e-4);
  }
}

TEST_CASE("backward contract") {
  Tensor w = random_tensor({3}, 13);
  w.requires_grad = true;
  SUBCASE("sum of weights gives a gradient of ones") {
    Tape tape;
    tape.backward(tape.sum(tape.leaf(w)));
    CHECK(w.grad == std::vector<double>{1, 1, 1});
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    Tape::Id id = tape.leaf(w);
    CHECK_THROWS_AS(tape.backward(id), ShapeError);
  }
  SUBCASE("frozen leaves keep no gradient buffer") {
    Tensor frozen = random_tensor({3}, 14);
    frozen.requires_grad = false;
    Tape tape;
    tape.backward(tape.sum(tape.add(tape.leaf(w), tape.leaf(frozen))));
    CHECK(frozen.grad.empty());
    CHECK(w.grad.size() == 3);
  }
}

TEST_CASE("non-finite values are rejected, not propagated") {
  Tensor x = Tensor::from({2}, {1e308, 1.0});
  Tape tape;
  Tape::Id id = tape.leaf(x);
  CHECK_THROWS_AS(tape.scale(tape.scale(id, 10.0), 10.0), NumericError);

  Tensor bad = Tensor::from({1}, {std::numeric_limits<double>::quiet_NaN()});
  Tape tape2;
  CHECK_THROWS_AS(tape2.leaf(bad), NumericError);
}

TEST_CASE("identical seeds give bit-identical outputs and gradients") {
  auto run = [](std::vector<double>* grads) {
    Tensor x = random_tensor({6, 6}, 77, "det");
    Tensor w = random_tensor({6, 6}, 78, "det2");
    x.requires_grad = w.requires_grad = true;
    Tape tape;
    Tape::Id y = tape.sum(tape.dropout(
        tape.softmax(tape.matmul(tape.leaf(x), tape.leaf(w))), 0.25,
        RngStream(5, "det-drop", 3)));
    tape.backward(y);
    *grads = x.grad;
    std::vector<double> out = tape.val(y);
    out.insert(out.end(), w.grad.begin(), w.grad.end());
    return out;
  };
  std::vector<double> g1, g2;
  const auto a = run(&g1);
  const auto b = run(&g2);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("embedding rejects out-of-range ids") {
  Tensor table = random_tensor({4, 3}, 21);
  Tape tape;
  CHECK_THROWS_AS(tape.embed(tape.leaf(table), {0, 4}), DataError);
  CHECK_THROWS_AS(tape.embed(tape.leaf(table), {-1}), DataError);
}

TEST_CASE("shape errors carry op context") {
  Tensor a = random_tensor({2, 3}, 22);
  Tensor b = random_tensor({3, 3}, 23);
  Tape tape;
  CHECK_THROWS_AS(tape.add(tape.leaf(a), tape.leaf(b)), ShapeError);
  CHECK_THROWS_AS(tape.matmul(tape.leaf(a), tape.leaf(a)), ShapeError);
}
