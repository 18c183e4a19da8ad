#include <doctest.h>

#include <cmath>

#include "dtrm/gradcheck.hpp"
#include "dtrm/ops.hpp"
#include "dtrm/optim.hpp"
#include "dtrm/rng.hpp"

using namespace dtrm;

namespace {

Tensor random_tensor(Rng& rng, const std::vector<int>& shape, bool requires_grad = true,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape, requires_grad);
  for (double& v : *t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand values") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
  Tensor prod = matmul(eye, b);
  for (int i = 0; i < 4; ++i) CHECK(prod.at(i) == b.at(i));

  Tensor r = matmul(Tensor::from_values({1, 2}, {1, 2}), Tensor::from_values({2, 1}, {3, 4}));
  CHECK(r.value() == doctest::Approx(11.0).epsilon(0));

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("matmul matches an independent triple-loop oracle") {
  Rng rng(42);
  Tensor a = random_tensor(rng, {5, 7}, false);
  Tensor b = random_tensor(rng, {7, 3}, false);
  Tensor c = matmul(a, b);
  // oracle deliberately uses a different loop order
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 5; ++i) {
      double acc = 0.0;
      for (int k = 0; k < 7; ++k) acc += a.at(i * 7 + k) * b.at(k * 3 + j);
      CHECK(std::abs(c.at(i * 3 + j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("softmax basics") {
  Tensor s = softmax_lastdim(Tensor::from_values({3}, {0, 0, 0}));
  for (int i = 0; i < 3; ++i) CHECK(s.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor big = softmax_lastdim(Tensor::from_values({3}, {1000, 0, 0}));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) == doctest::Approx(0.0));

  Tensor x = Tensor::from_values({3}, {1, 2, 3});
  Tensor y = softmax_lastdim(x);
  double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(y.at(i) - std::exp(1.0 + i) / denom) < 1e-12);
  }
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {6, 9}, false, -5.0, 5.0);
  Tensor y = softmax_lastdim(x);
  for (int r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 9; ++c) {
      CHECK(y.at(r * 9 + c) >= 0.0);
      sum += y.at(r * 9 + c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("layer_norm standardizes slices") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor flat = layer_norm(Tensor::from_values({3}, {5, 5, 5}), gain, bias, 1e-8);
  for (int i = 0; i < 3; ++i) CHECK(flat.at(i) == doctest::Approx(0.0));

  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor two = layer_norm(Tensor::from_values({2}, {1, 3}), g2, b2, 1e-8);
  CHECK(std::abs(two.at(0) + 1.0) < 1e-6);
  CHECK(std::abs(two.at(1) - 1.0) < 1e-6);

  Rng rng(11);
  Tensor x = random_tensor(rng, {4, 8}, false, -2.0, 2.0);
  Tensor g8 = Tensor::full({8}, 1.0);
  Tensor b8 = Tensor::zeros({8});
  Tensor y = layer_norm(x, g8, b8, 1e-10);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 8; ++c) mean += y.at(r * 8 + c);
    mean /= 8;
    for (int c = 0; c < 8; ++c) var += (y.at(r * 8 + c) - mean) * (y.at(r * 8 + c) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({4}), gain, bias, 1e-8), std::invalid_argument);
}

TEST_CASE("backward: sum gives ones, quadratic gives 2x") {
  Tensor x = Tensor::from_values({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
  backward(sum_all(x));
  for (int i = 0; i < 6; ++i) CHECK((*x.grad)[i] == 1.0);

  Tensor y = Tensor::from_values({2}, {1, 2}, true);
  backward(sum_all(mul(y, y)));
  CHECK((*y.grad)[0] == doctest::Approx(2.0));
  CHECK((*y.grad)[1] == doctest::Approx(4.0));

  CHECK_THROWS_AS(backward(Tensor::zeros({3}, true)), std::invalid_argument);
}

TEST_CASE("backward accumulates across fan-out and visits nodes once") {
  Tensor x = Tensor::from_values({2}, {3, -1}, true);
  Tensor y = scale(x, 2.0);       // shared subgraph
  Tensor a = mul(y, y);           // consumes y twice
  Tensor loss = add(sum_all(a), sum_all(y));
  backward(loss);
  // d/dx [ (2x)^2 + 2x ] = 8x + 2
  CHECK((*x.grad)[0] == doctest::Approx(8.0 * 3 + 2));
  CHECK((*x.grad)[1] == doctest::Approx(8.0 * -1 + 2));
}

TEST_CASE("adamw: zero gradient and zero decay leave params unchanged") {
  Tensor p = Tensor::from_values({3}, {1, -2, 0.5}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({p}, cfg);
  opt.zero_grad();
  opt.step();
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == -2.0);
  CHECK(p.at(2) == 0.5);
}

TEST_CASE("adamw: single step matches hand computation") {
  const double lr = 1e-2, eps = 1e-8;
  Tensor p = Tensor::from_values({2}, {1.0, -1.0}, true);
  (*p.grad)[0] = 0.3;
  (*p.grad)[1] = -0.7;
  AdamWConfig cfg;
  cfg.lr = lr;
  cfg.eps = eps;
  cfg.weight_decay = 0.0;
  AdamW opt({p}, cfg);
  opt.step();
  // bias-corrected m-hat = g, v-hat = g^2 -> update = lr*g/(|g|+eps)
  CHECK(p.at(0) == doctest::Approx(1.0 - lr * 0.3 / (0.3 + eps)).epsilon(1e-12));
  CHECK(p.at(1) == doctest::Approx(-1.0 + lr * 0.7 / (0.7 + eps)).epsilon(1e-12));
}

TEST_CASE("adamw: decoupled decay scales the parameter first") {
  const double lr = 1e-2, eps = 1e-8, wd = 0.1;
  Tensor p = Tensor::from_values({1}, {2.0}, true);
  (*p.grad)[0] = 0.5;
  AdamWConfig cfg;
  cfg.lr = lr;
  cfg.eps = eps;
  cfg.weight_decay = wd;
  AdamW opt({p}, cfg);
  opt.step();
  const double expected = 2.0 * (1.0 - lr * wd) - lr * 0.5 / (0.5 + eps);
  CHECK(p.at(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("grad_check: quadratic is exact to roundoff") {
  Tensor x = Tensor::from_values({4}, {0.3, -0.8, 0.1, 0.9}, true);
  auto loss = [&]() { return sum_all(mul(x, x)); };
  auto report = grad_check(loss, {{"x", x}}, 1e-5);
  CHECK(report.max_rel_err <= 1e-8);
}

TEST_CASE("grad_check passes for every elementwise and reduction op") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {3, 4});
  Tensor y = random_tensor(rng, {3, 4});

  auto check = [&](const char* name, const std::function<Tensor()>& fn) {
    CAPTURE(name);
    auto report = grad_check(fn, {{"x", x}, {"y", y}}, 1e-5);
    CHECK(report.max_rel_err <= 1e-4);
  };

  check("add", [&] { return sum_all(mul(add(x, y), add(x, y))); });
  check("sub", [&] { return sum_all(mul(sub(x, y), sub(x, y))); });
  check("mul", [&] { return sum_all(mul(x, y)); });
  check("exp", [&] { return sum_all(exp_elem(x)); });
  check("tanh", [&] { return sum_all(mul(tanh_elem(x), y)); });
  check("gelu", [&] { return sum_all(mul(gelu(x), y)); });
  check("scale_shift", [&] { return sum_all(shift(scale(x, 1.7), 0.3)); });
  check("mean", [&] { return mean_all(mul(x, y)); });
  check("softmax", [&] { return sum_all(mul(softmax_lastdim(x), y)); });
  check("log_softmax", [&] { return sum_all(mul(log_softmax_lastdim(x), y)); });
  check("mse", [&] { return mse_loss(x, y); });
}

TEST_CASE("grad_check passes for matrix and indexing ops") {
  Rng rng(6);
  Tensor a = random_tensor(rng, {4, 3});
  Tensor b = random_tensor(rng, {3, 5});
  Tensor bias = random_tensor(rng, {5});

  auto r1 = grad_check([&] { return sum_all(mul(matmul(a, b), matmul(a, b))); },
                       {{"a", a}, {"b", b}}, 1e-5);
  CHECK(r1.max_rel_err <= 1e-4);

  auto r2 = grad_check([&] { return sum_all(exp_elem(scale(linear(a, b, bias), 0.5))); },
                       {{"a", a}, {"b", b}, {"bias", bias}}, 1e-5);
  CHECK(r2.max_rel_err <= 1e-4);

  Tensor table = random_tensor(rng, {6, 3});
  auto r3 = grad_check([&] { return sum_all(mul(gather_rows(table, {1, 4, 1}),
                                                gather_rows(table, {0, 2, 5}))); },
                       {{"table", table}}, 1e-5);
  CHECK(r3.max_rel_err <= 1e-4);

  Tensor g = random_tensor(rng, {3});
  Tensor bn = random_tensor(rng, {3});
  auto r4 = grad_check([&] { return sum_all(mul(layer_norm(a, g, bn, 1e-8), matmul(a, b))); },
                       {{"a", a}, {"g", g}, {"bn", bn}, {"b", b}}, 1e-5);
  CHECK(r4.max_rel_err <= 1e-4);

  Tensor pred = random_tensor(rng, {3});
  Tensor cb = random_tensor(rng, {5, 3});
  auto r5 = grad_check([&] { return cross_entropy_logits(neg_sqdist(pred, cb), {2}); },
                       {{"pred", pred}, {"cb", cb}}, 1e-5);
  CHECK(r5.max_rel_err <= 1e-4);

  Tensor logits = random_tensor(rng, {4, 6});
  auto r6 = grad_check([&] { return mean_all(softmax_entropy_rows(logits)); },
                       {{"logits", logits}}, 1e-5);
  CHECK(r6.max_rel_err <= 1e-4);

  auto r7 = grad_check([&] { return cross_entropy_logits(logits, {1, 0, 5, 3}); },
                       {{"logits", logits}}, 1e-5);
  CHECK(r7.max_rel_err <= 1e-4);

  auto r8 = grad_check(
      [&] {
        std::vector<Tensor> rows = {row(a, 0), row(a, 2), flatten(gather_rows(table, {3}))};
        return sum_all(mul(stack_rows(rows), stack_rows(rows)));
      },
      {{"a", a}, {"table", table}}, 1e-5);
  CHECK(r8.max_rel_err <= 1e-4);

  auto r9 = grad_check([&] { return sum_all(mul(pick(logits, {2, 0, 1, 4}),
                                                pick(logits, {3, 5, 0, 0}))); },
                       {{"logits", logits}}, 1e-5);
  CHECK(r9.max_rel_err <= 1e-4);
}

TEST_CASE("cross entropy floors: uniform logits give ln C") {
  Tensor logits = Tensor::zeros({8});
  Tensor ce = cross_entropy_logits(logits, {3});
  CHECK(ce.value() == doctest::Approx(std::log(8.0)).epsilon(1e-12));

  // near-one-hot: huge margin drives the loss to ~0
  Tensor hot = Tensor::from_values({4}, {50, 0, 0, 0});
  CHECK(cross_entropy_logits(hot, {0}).value() < 1e-12);
}

TEST_CASE("non-finite values are surfaced, not propagated") {
  Tensor x = Tensor::from_values({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(x, x), std::runtime_error);
  CHECK_THROWS_AS(exp_elem(Tensor::from_values({1}, {1000.0})), std::runtime_error);
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  CHECK(a.next_u64() != c.next_u64());

  Rng d(9);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += d.normal();
  mean /= n;
  CHECK(std::abs(mean) < 0.05);

  Rng e(10);
  for (int i = 0; i < 1000; ++i) {
    const double u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = e.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
}

TEST_CASE("dropout: inverted scaling at train, identity at eval") {
  Rng rng(3);
  Tensor x = Tensor::full({1000}, 1.0);
  Tensor eval = dropout(x, 0.4, rng, false);
  CHECK(eval.data.get() == x.data.get());  // pass-through

  Tensor train = dropout(x, 0.4, rng, true);
  int kept = 0;
  for (double v : *train.data) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(1.0 / 0.6));
      ++kept;
    }
  }
  CHECK(kept > 500);
  CHECK(kept < 700);
}
