#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "owl/tensor.hpp"

using namespace owl;

namespace {

// Reduce a matrix node to a scalar via fixed random row/column probes so any
// op can be gradient-checked.
Tape::NodeId to_scalar(Tape& tape, Tape::NodeId x, Rng& rng) {
  const Tensor2& v = tape.value(x);
  Tensor2 u(1, v.rows), w(v.cols, 1);
  for (double& e : u.data) e = rng.normal();
  for (double& e : w.data) e = rng.normal();
  return tape.matmul(tape.matmul(tape.input(u), x), tape.input(w));
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor2 eye = Tensor2::from_rows({{1, 0}, {0, 1}});
  Tensor2 b = Tensor2::from_rows({{3, 4}, {5, 6}});
  Tensor2 y = matmul_plain(eye, b);
  for (size_t k = 0; k < b.data.size(); ++k) CHECK(y.data[k] == b.data[k]);

  Tensor2 row = Tensor2::from_rows({{1, 2}});
  Tensor2 col = Tensor2::from_rows({{3}, {4}});
  CHECK(matmul_plain(row, col).at(0, 0) == 11.0);

  Rng rng(42);
  Tensor2 a = oracles::random_tensor(rng, 3, 4);
  Tensor2 c = oracles::random_tensor(rng, 4, 2);
  Tensor2 got = matmul_plain(a, c);
  Tensor2 want = oracles::naive_matmul(a, c);
  for (size_t k = 0; k < got.data.size(); ++k) CHECK(got.data[k] == want.data[k]);

  CHECK_THROWS_AS(matmul_plain(a, a), Error);
  try {
    matmul_plain(a, a);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension);
    CHECK(std::string(e.what()).find("3x4") != std::string::npos);
  }
}

TEST_CASE("matmul agrees exactly with the naive oracle on all shapes <= 8x8") {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    for (int m = 1; m <= 8; ++m)
      for (int k = 1; k <= 8; ++k)
        for (int n = 1; n <= 8; ++n) {
          Tensor2 a = oracles::random_tensor(rng, m, k);
          Tensor2 b = oracles::random_tensor(rng, k, n);
          Tensor2 got = matmul_plain(a, b);
          Tensor2 want = oracles::naive_matmul(a, b);
          for (size_t i = 0; i < got.data.size(); ++i) REQUIRE(got.data[i] == want.data[i]);
        }
  }
}

TEST_CASE("masked row softmax") {
  AttentionMask all = AttentionMask::all_allowed(1, 2);
  Tensor2 y = masked_row_softmax_plain(Tensor2::from_rows({{5, 5}}), all);
  CHECK(y.at(0, 0) == 0.5);
  CHECK(y.at(0, 1) == 0.5);

  AttentionMask one = AttentionMask::all_allowed(1, 2);
  one.set(0, 1, false);
  Tensor2 y2 = masked_row_softmax_plain(Tensor2::from_rows({{100, 0}}), one);
  CHECK(y2.at(0, 0) == 1.0);
  CHECK(y2.at(0, 1) == 0.0);

  Tensor2 y3 = masked_row_softmax_plain(Tensor2::from_rows({{1, 2, 3}}),
                                        AttentionMask::all_allowed(1, 3));
  auto want = oracles::longdouble_softmax({1, 2, 3});
  for (int j = 0; j < 3; ++j) CHECK(std::fabs(y3.at(0, j) - want[j]) <= 1e-12);

  AttentionMask none = AttentionMask::all_allowed(1, 2);
  none.set(0, 0, false);
  none.set(0, 1, false);
  CHECK_THROWS_AS(masked_row_softmax_plain(Tensor2::from_rows({{1, 2}}), none), Error);
  try {
    masked_row_softmax_plain(Tensor2::from_rows({{1, 2}}), none);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mask);
  }
}

TEST_CASE("masked softmax rows sum to one and masked entries are exactly zero") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    int rows = rng.uniform_int(1, 6), cols = rng.uniform_int(1, 6);
    Tensor2 s = oracles::random_tensor(rng, rows, cols, 5.0);
    AttentionMask mask = AttentionMask::all_allowed(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (rng.uniform() < 0.4) mask.set(i, j, false);
    for (int i = 0; i < rows; ++i) mask.set(i, rng.uniform_int(0, cols - 1), true);
    Tensor2 y = masked_row_softmax_plain(s, mask);
    for (int i = 0; i < rows; ++i) {
      double sum = 0.0;
      for (int j = 0; j < cols; ++j) {
        if (mask.at(i, j)) {
          sum += y.at(i, j);
        } else {
          REQUIRE(y.at(i, j) == 0.0);
        }
      }
      REQUIRE(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("linear") {
  Tape tape;
  Param w("w", Tensor2(3, 2));
  Param b("b", Tensor2::from_rows({{1, 2}}));
  Rng rng(7);
  auto x = tape.input(oracles::random_tensor(rng, 4, 3));
  auto y = tape.linear(x, tape.param(w), tape.param(b));
  for (int i = 0; i < 4; ++i) {
    CHECK(tape.value(y).at(i, 0) == 1.0);
    CHECK(tape.value(y).at(i, 1) == 2.0);
  }

  Tape tape2;
  Param eye("w", Tensor2::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  Param zb("b", Tensor2(1, 3));
  Tensor2 xin = oracles::random_tensor(rng, 2, 3);
  auto y2 = tape2.linear(tape2.input(xin), tape2.param(eye), tape2.param(zb));
  for (size_t k = 0; k < xin.data.size(); ++k) CHECK(tape2.value(y2).data[k] == xin.data[k]);

  Tape tape3;
  Param w3("w", oracles::random_tensor(rng, 3, 2));
  Param b3("b", oracles::random_tensor(rng, 1, 2));
  Tensor2 x3 = oracles::random_tensor(rng, 2, 3);
  auto y3 = tape3.linear(tape3.input(x3), tape3.param(w3), tape3.param(b3));
  Tensor2 want = oracles::naive_matmul(x3, w3.value);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(tape3.value(y3).at(i, j) == want.at(i, j) + b3.value.at(0, j));

  Tape tape4;
  CHECK_THROWS_AS(tape4.linear(tape4.input(Tensor2(2, 4)), tape4.param(w3), tape4.param(b3)),
                  Error);
}

TEST_CASE("cross entropy") {
  Tape tape;
  auto loss = tape.cross_entropy(tape.input(Tensor2::from_rows({{0, 0, 0}})), {1});
  CHECK(tape.value(loss).at(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  Tape tape2;
  auto sat = tape2.cross_entropy(tape2.input(Tensor2::from_rows({{1000, 0}})), {0});
  CHECK(tape2.value(sat).at(0, 0) < 1e-12);

  Tape tape3;
  CHECK_THROWS_AS(tape3.cross_entropy(tape3.input(Tensor2(2, 3)), {0, 5}), Error);
  try {
    Tape t;
    t.cross_entropy(t.input(Tensor2(2, 3)), {0, 5});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::label);
  }
}

TEST_CASE("cross entropy gradient matches central finite differences") {
  Rng rng(11);
  Param logits("l", oracles::random_tensor(rng, 4, 5));
  std::vector<int> targets = {2, 0, 4, 1};
  auto loss_fn = [&]() {
    Tape tape;
    auto l = tape.cross_entropy(tape.param(logits), targets);
    tape.backward(l);
    return tape.value(l).at(0, 0);
  };
  Param* ps[] = {&logits};
  CHECK(grad_check(loss_fn, ps, 1e-5) < 1e-6);
}

TEST_CASE("grad_check on theta squared and on a constant") {
  Param theta("t", Tensor2(1, 1, 3.0));
  auto square = [&]() {
    Tape tape;
    auto x = tape.param(theta);
    auto y = tape.mul(x, x);
    tape.backward(y);
    return tape.value(y).at(0, 0);
  };
  Param* ps[] = {&theta};
  CHECK(grad_check(square, ps, 1e-5) < 1e-10);
  CHECK(theta.grad.at(0, 0) == doctest::Approx(6.0).epsilon(1e-12));

  Param unused("u", Tensor2(1, 1, 2.0));
  auto constant = [&]() {
    Tape tape;
    auto c = tape.input(Tensor2(1, 1, 5.0));
    tape.backward(c);
    return 5.0;
  };
  Param* qs[] = {&unused};
  CHECK(grad_check(constant, qs, 1e-5) == 0.0);

  CHECK_THROWS_AS(grad_check(square, ps, 0.0), Error);
  CHECK_THROWS_AS(grad_check(square, ps, 1e-2), Error);
}

TEST_CASE("sgd step and zero_grads") {
  Param p("p", Tensor2(1, 1, 1.0));
  p.grad.at(0, 0) = 2.0;
  Param* ps[] = {&p};
  sgd_step(ps, 0.1);
  CHECK(p.value.at(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

  Param q("q", Tensor2(1, 1, 3.5));
  Param* qs[] = {&q};
  sgd_step(qs, 0.5);
  CHECK(q.value.at(0, 0) == 3.5);

  // Two steps with a fixed gradient equal one step at the summed displacement.
  Param a("a", Tensor2(1, 1, 1.0)), b("b", Tensor2(1, 1, 1.0));
  a.grad.at(0, 0) = b.grad.at(0, 0) = 0.25;
  Param* as[] = {&a};
  Param* bs[] = {&b};
  sgd_step(as, 0.1);
  sgd_step(as, 0.1);
  sgd_step(bs, 0.2);
  CHECK(a.value.at(0, 0) == b.value.at(0, 0));

  CHECK_THROWS_AS(sgd_step(ps, 0.0), Error);
  CHECK_THROWS_AS(sgd_step(ps, -1.0), Error);

  zero_grads(ps);
  CHECK(p.grad.at(0, 0) == 0.0);
}

TEST_CASE("every tape op passes grad_check on random small inputs") {
  auto run = [](const char* name, auto&& build) {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 977 + 13);
      double err = build(rng);
      INFO(name << " seed " << seed);
      REQUIRE(err < 1e-5);
    }
  };

  run("matmul", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 3, 4));
    Param b("b", oracles::random_tensor(rng, 4, 2));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.matmul(t.param(a), t.param(b)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a, &b};
    return grad_check(fn, ps, 1e-5);
  });

  run("transpose+scale+add", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 3, 4));
    Param b("b", oracles::random_tensor(rng, 4, 3));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto x = t.add(t.scale(t.transpose(t.param(a)), 1.7), t.param(b));
      auto s = to_scalar(t, x, prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a, &b};
    return grad_check(fn, ps, 1e-5);
  });

  run("mul+sigmoid", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 3, 3));
    Param b("b", oracles::random_tensor(rng, 3, 3));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.mul(t.sigmoid(t.param(a)), t.param(b)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a, &b};
    return grad_check(fn, ps, 1e-5);
  });

  run("relu", [](Rng& rng) {
    // Keep entries away from the kink so central differences are valid.
    Tensor2 init(3, 4);
    for (double& v : init.data) {
      double n = rng.normal();
      v = (n >= 0 ? 1.0 : -1.0) * (0.1 + std::fabs(n));
    }
    Param a("a", init);
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.relu(t.param(a)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a};
    return grad_check(fn, ps, 1e-5);
  });

  run("concat_cols+linear", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 3, 2));
    Param b("b", oracles::random_tensor(rng, 3, 3));
    Param w("w", oracles::random_tensor(rng, 5, 2));
    Param bias("bias", oracles::random_tensor(rng, 1, 2));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto x = t.concat_cols(t.param(a), t.param(b));
      auto s = to_scalar(t, t.linear(x, t.param(w), t.param(bias)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a, &b, &w, &bias};
    return grad_check(fn, ps, 1e-5);
  });

  run("masked_row_softmax", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 4, 4, 2.0));
    AttentionMask mask = AttentionMask::all_allowed(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (rng.uniform() < 0.35) mask.set(i, j, false);
    for (int i = 0; i < 4; ++i) mask.set(i, i, true);
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.masked_row_softmax(t.param(a), mask), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a};
    return grad_check(fn, ps, 1e-5);
  });

  run("layer_norm", [](Rng& rng) {
    Param x("x", oracles::random_tensor(rng, 3, 6));
    Param g("g", oracles::random_tensor(rng, 1, 6));
    Param b("b", oracles::random_tensor(rng, 1, 6));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.layer_norm(t.param(x), t.param(g), t.param(b)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&x, &g, &b};
    return grad_check(fn, ps, 1e-5);
  });

  run("cross_entropy", [](Rng& rng) {
    Param logits("l", oracles::random_tensor(rng, 4, 5));
    std::vector<int> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(rng.uniform_int(0, 4));
    auto fn = [&]() {
      Tape t;
      auto l = t.cross_entropy(t.param(logits), targets);
      t.backward(l);
      return t.value(l).at(0, 0);
    };
    Param* ps[] = {&logits};
    return grad_check(fn, ps, 1e-5);
  });

  run("bce_with_logits", [](Rng& rng) {
    Param logits("l", oracles::random_tensor(rng, 4, 3));
    Tensor2 targets(4, 3);
    for (double& v : targets.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto fn = [&]() {
      Tape t;
      auto l = t.bce_with_logits(t.param(logits), targets);
      t.backward(l);
      return t.value(l).at(0, 0);
    };
    Param* ps[] = {&logits};
    return grad_check(fn, ps, 1e-5);
  });

  run("row_softmax", [](Rng& rng) {
    Param a("a", oracles::random_tensor(rng, 3, 5, 2.0));
    uint64_t probe = rng.next_u64();
    auto fn = [&]() {
      Tape t;
      Rng prng(probe);
      auto s = to_scalar(t, t.row_softmax(t.param(a)), prng);
      t.backward(s);
      return t.value(s).at(0, 0);
    };
    Param* ps[] = {&a};
    return grad_check(fn, ps, 1e-5);
  });
}

TEST_CASE("identical seeds give bit-identical forward values and gradients") {
  auto run_once = [](uint64_t seed, double* loss_out, std::vector<double>* grads_out) {
    Rng rng(seed);
    Param w("w", oracles::random_tensor(rng, 4, 3));
    Param b("b", oracles::random_tensor(rng, 1, 3));
    Tensor2 x = oracles::random_tensor(rng, 5, 4);
    std::vector<int> targets;
    for (int i = 0; i < 5; ++i) targets.push_back(rng.uniform_int(0, 2));
    Tape tape;
    auto logits = tape.linear(tape.input(x), tape.param(w), tape.param(b));
    auto loss = tape.cross_entropy(logits, targets);
    tape.backward(loss);
    *loss_out = tape.value(loss).at(0, 0);
    grads_out->clear();
    grads_out->insert(grads_out->end(), w.grad.data.begin(), w.grad.data.end());
    grads_out->insert(grads_out->end(), b.grad.data.begin(), b.grad.data.end());
  };
  double l1, l2;
  std::vector<double> g1, g2;
  run_once(99, &l1, &g1);
  run_once(99, &l2, &g2);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  auto x = tape.input(Tensor2(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), Error);
}
