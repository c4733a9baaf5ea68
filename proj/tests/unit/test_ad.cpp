#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hce/ad/checkpoint.hpp"
#include "hce/ad/gradcheck.hpp"
#include "hce/ad/optim.hpp"
#include "hce/ad/tape.hpp"

using namespace hce;
using namespace hce::ad;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, Real scale = 1) {
  Tensor t(std::move(shape));
  for (Real& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("forward primitives") {
  Tape t;
  Var s = softmax(t.constant(Tensor::vector({0, 0, 0})));
  for (Real v : s.value().values()) CHECK(v == doctest::Approx(1.0 / 3));
  Rng rng(1);
  const Tensor x = random_tensor({3, 4}, rng);
  CHECK(matmul(t.constant(Tensor::identity(3)), t.constant(x)).value().values()[5] == x[5]);
  CHECK(max_abs_diff(matmul(t.constant(Tensor::identity(3)), t.constant(x)).value(), x) == 0);
  Var z = tanh(t.constant(Tensor::zeros(2, 3)));
  for (Real v : z.value().values()) CHECK(v == 0);
}

TEST_CASE("softmax rows sum to one and cross entropy of a certain prediction is zero") {
  Rng rng(2);
  Tape t;
  Var s = softmax(t.constant(random_tensor({5, 7}, rng, 20)));
  for (std::size_t r = 0; r < 5; ++r) {
    Real sum = 0;
    for (Real v : s.value().row(r)) sum += v;
    CHECK(std::abs(sum - 1) < 1e-12);
  }
  const std::size_t target = 2;
  Var ce = cross_entropy(t.constant(Tensor::matrix(1, 3, {-1e4, -1e4, 1e4})), std::span(&target, 1));
  CHECK(ce.value()[0] == 0);
}

TEST_CASE("shape errors name the op") {
  Tape t;
  try {
    matmul(t.constant(Tensor::zeros(2, 3)), t.constant(Tensor::zeros(2, 3)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(t.constant(Tensor::zeros(2, 3)), t.constant(Tensor::zeros(3, 2))), ShapeError);
  CHECK_THROWS_AS(add_row(t.constant(Tensor::zeros(2, 3)), t.constant(Tensor::zeros(1, 2))), ShapeError);
}

TEST_CASE("backward basics") {
  ParameterStore store;
  Parameter& x = store.add("x", Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Parameter& unused = store.add("unused", Tensor::vector({5, 6}));
  Tape t;
  t.backward(sum(t.param(x)));
  for (Real g : x.grad.values()) CHECK(g == 1);
  for (Real g : unused.grad.values()) CHECK(g == 0);
  Tape t2;
  CHECK_THROWS_AS(t2.backward(t2.param(x)), ContractError);
}

TEST_CASE("gradient of sum(W x) has outer-product structure") {
  Rng rng(3);
  ParameterStore store;
  Parameter& w = store.add("w", random_tensor({3, 4}, rng));
  const Tensor x = random_tensor({4, 1}, rng);
  Tape t;
  t.backward(sum(matmul(t.param(w), t.constant(x))));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(w.grad(i, j) == doctest::Approx(x[j]).epsilon(1e-14));
  }
  CHECK(check_gradient(store, [&](Tape& tp) { return sum(matmul(tp.param(w), tp.constant(x))); }) < 1e-9);
}

TEST_CASE("parameter gradients accumulate across uses") {
  ParameterStore store;
  Parameter& x = store.add("x", Tensor::vector({1, 2}));
  Tape t;
  Var a = t.param(x);
  Var b = t.param(x);
  CHECK(a.id == b.id);
  t.backward(sum(add(mul(a, b), a)));
  CHECK(x.grad[0] == doctest::Approx(3));
  CHECK(x.grad[1] == doctest::Approx(5));
}

TEST_CASE("check_gradient contract") {
  Rng rng(4);
  const Tensor x = random_tensor({2, 3}, rng);
  CHECK(check_gradient([](Tape&, Var v) { return sum(sigmoid(v)); }, x, 1e-5) < 1e-6);
  CHECK(check_gradient([](Tape&, Var v) { return sum(scale(v, 3)); }, x, 1e-5) < 1e-9);
  CHECK_THROWS_AS(check_gradient([](Tape&, Var v) { return v; }, x, 1e-5), ContractError);
  CHECK_THROWS_AS(check_gradient([](Tape&, Var v) { return sum(v); }, x, 1e-2), ContractError);
}

TEST_CASE("every primitive passes the gradient check") {
  Rng rng(5);
  const Real tol = 1e-4;
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({5, 4}, rng);
  const Tensor row = random_tensor({4}, rng);
  const Tensor weights = random_tensor({3, 4}, rng);
  // A random linear read-out keeps every output coordinate in play.
  auto readout = [&](Tape& t, Var v) {
    Rng r(17);
    return sum(mul(v, t.constant(random_tensor(v.value().shape(), r))));
  };

  SUBCASE("elementwise") {
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, add(v, t.constant(b))); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, sub(t.constant(b), v)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, mul(v, v)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, tanh(v)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, sigmoid(v)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, add_row(t.constant(a), v)); }, row) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, apply_mask(v, weights)); }, a) < tol);
  }
  SUBCASE("matrix products") {
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, linear(v, t.constant(w))); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, linear(t.constant(a), v)); }, w) < tol);
    const Tensor bt = random_tensor({4, 2}, rng);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, matmul(v, t.constant(bt))); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, matmul(t.constant(a), v)); }, bt) < tol);
  }
  SUBCASE("softmax family") {
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, softmax(v)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, log_softmax(v)); }, a) < tol);
    const std::vector<std::size_t> targets{0, 3, 1};
    CHECK(check_gradient([&](Tape&, Var v) { return cross_entropy(v, targets); }, a) < tol);
  }
  SUBCASE("structural") {
    CHECK(check_gradient(
              [&](Tape& t, Var v) {
                const Var parts[] = {v, t.constant(b), v};
                return readout(t, concat_cols(parts));
              },
              a) < tol);
    CHECK(check_gradient(
              [&](Tape& t, Var v) {
                const Var parts[] = {t.constant(b), v};
                return readout(t, concat_rows(parts));
              },
              a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, slice_cols(v, 1, 3)); }, a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, slice_rows(v, 1, 3)); }, a) < tol);
    CHECK(check_gradient(
              [&](Tape& t, Var v) {
                const Var srcs[] = {v, t.constant(b)};
                const RowRef refs[] = {{0, 2}, {1, 0}, {0, 2}, {0, 0}};
                return readout(t, gather_rows(srcs, refs));
              },
              a) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, unfold(v, 2)); }, a) < tol);
    const std::vector<std::size_t> offsets{0, 1, 3};
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, segment_max(v, offsets)); }, a) < tol);
    }
  SUBCASE("fused") {
    const Tensor x2 = random_tensor({3, 2}, rng);
    const Tensor w2 = random_tensor({5, 2}, rng);
    const Tensor bias = random_tensor({5}, rng);
    auto aff = [&](Tape& t, Var xa, Var wa, Var bb) {
      const Var xs[] = {xa, t.constant(x2)};
      const Var ws[] = {wa, t.constant(w2)};
      return affine(xs, ws, bb);
    };
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, aff(t, v, t.constant(w), t.constant(bias))); }, a) <
          tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, aff(t, t.constant(a), v, {})); }, w) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, aff(t, t.constant(a), t.constant(w), v)); }, bias) <
          tol);
    const Tensor pre = random_tensor({3, 10}, rng);
    const Tensor cl = random_tensor({3, 2}, rng);
    const Tensor cr = random_tensor({3, 2}, rng);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, tree_cell(v, t.constant(cl), t.constant(cr))); },
                         pre) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, tree_cell(v, {}, {})); }, pre) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, tree_cell(t.constant(pre), v, t.constant(cr))); },
                         cl) < tol);
    CHECK(check_gradient([&](Tape& t, Var v) { return readout(t, tree_cell(t.constant(pre), t.constant(cl), v)); },
                         cr) < tol);
  }
}

TEST_CASE("fused ops match their unfused compositions") {
  Rng rng(8);
  const Tensor x1 = random_tensor({4, 3}, rng), w1 = random_tensor({6, 3}, rng);
  const Tensor x2 = random_tensor({4, 2}, rng), w2 = random_tensor({6, 2}, rng);
  const Tensor b = random_tensor({6}, rng);
  Tape t;
  const Var xs[] = {t.constant(x1), t.constant(x2)};
  const Var ws[] = {t.constant(w1), t.constant(w2)};
  const Var fused = affine(xs, ws, t.constant(b));
  const Var plain = add_row(add(linear(xs[0], ws[0]), linear(xs[1], ws[1])), t.constant(b));
  CHECK(max_abs_diff(fused.value(), plain.value()) < 1e-14);
  CHECK_THROWS_AS(affine(xs, std::span<const Var>(ws, 1), {}), ShapeError);

  const std::size_t H = 3;
  const Var pre = t.constant(random_tensor({4, 5 * H}, rng));
  const Var cl = t.constant(random_tensor({4, H}, rng)), cr = t.constant(random_tensor({4, H}, rng));
  const Var cell = tree_cell(pre, cl, cr);
  const Var gates = sigmoid(slice_cols(pre, 0, 4 * H));
  const Var cand = tanh(slice_cols(pre, 4 * H, 5 * H));
  const Var c = add(add(mul(slice_cols(gates, 0, H), cand), mul(slice_cols(gates, H, 2 * H), cl)),
                    mul(slice_cols(gates, 2 * H, 3 * H), cr));
  const Var h = mul(slice_cols(gates, 3 * H, 4 * H), tanh(c));
  CHECK(max_abs_diff(slice_cols(cell, 0, 4 * H).value(), gates.value()) < 1e-14);
  CHECK(max_abs_diff(slice_cols(cell, 4 * H, 5 * H).value(), cand.value()) < 1e-14);
  CHECK(max_abs_diff(slice_cols(cell, 5 * H, 6 * H).value(), c.value()) < 1e-14);
  CHECK(max_abs_diff(slice_cols(cell, 6 * H, 7 * H).value(), h.value()) < 1e-14);
  CHECK_THROWS_AS(tree_cell(t.constant(random_tensor({2, 7}, rng)), {}, {}), ShapeError);
  CHECK_THROWS_AS(tree_cell(pre, cl, {}), ShapeError);
}

TEST_CASE("lookup scatters into touched rows") {
  Rng rng(6);
  ParameterStore store;
  Parameter& table = store.add("emb", random_tensor({5, 3}, rng), true);
  const std::vector<std::size_t> rows{1, 3, 1};
  Tape t;
  t.backward(sum(lookup(t, table, rows)));
  CHECK(table.touched == std::vector<std::uint8_t>{0, 1, 0, 1, 0});
  CHECK(table.grad(1, 0) == 2);
  CHECK(table.grad(3, 2) == 1);
  CHECK(table.grad(0, 0) == 0);
  CHECK(check_gradient(store, [&](Tape& tp) {
          Rng r(2);
          Var v = lookup(tp, table, rows);
          return sum(mul(v, tp.constant(random_tensor({3, 3}, r))));
        }) < 1e-6);
  store.zero_grad();
  for (Real g : table.grad.values()) CHECK(g == 0);
  CHECK(table.touched == std::vector<std::uint8_t>(5, 0));
}

TEST_CASE("unfold windows are contiguous row blocks") {
  Tape t;
  Var u = unfold(t.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})), 2);
  CHECK(u.value().shape() == std::vector<std::size_t>{2, 4});
  CHECK(u.value() == Tensor::matrix(2, 4, {1, 2, 3, 4, 3, 4, 5, 6}));
  Var m = segment_max(t.constant(Tensor::matrix(3, 2, {1, 9, 3, 4, 2, 6})), std::vector<std::size_t>{0, 3});
  CHECK(m.value() == Tensor::matrix(1, 2, {3, 9}));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterStore store;
    Parameter& p = store.add("p", Tensor::vector({1, -2, 3}));
    AdamState st;
    adam_step(store, st);
    CHECK(p.value == Tensor::vector({1, -2, 3}));
    CHECK(st.step == 1);
  }
  SUBCASE("first step is lr times sign") {
    ParameterStore store;
    Parameter& p = store.add("p", Tensor::vector({0, 0, 0}));
    p.grad = Tensor::vector({0.3, -7, 1e-3});
    AdamState st;
    st.config.lr = 0.01;
    adam_step(store, st);
    CHECK(p.value[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p.value[2] == doctest::Approx(-0.01).epsilon(1e-4));
  }
  SUBCASE("constant gradient gives steps of size lr") {
    ParameterStore store;
    Parameter& p = store.add("p", Tensor::vector({0}));
    AdamState st;
    st.config.lr = 0.001;
    Real prev = 0;
    for (int i = 0; i < 1000; ++i) {
      p.grad = Tensor::vector({2.5});
      adam_step(store, st);
      const Real step = prev - p.value[0];
      CHECK(step == doctest::Approx(0.001).epsilon(1e-6));
      prev = p.value[0];
    }
    CHECK(st.step == 1000);
  }
  SUBCASE("row-sparse parameters only move touched rows") {
    ParameterStore store;
    Parameter& p = store.add("emb", Tensor::zeros(3, 2), true);
    p.grad(1, 0) = 1;
    p.touch_row(1);
    p.grad(2, 0) = 1;  // untouched: ignored
    AdamState st;
    adam_step(store, st);
    CHECK(p.value(1, 0) != 0);
    CHECK(p.value(2, 0) == 0);
    CHECK(p.value(0, 0) == 0);
  }
  SUBCASE("store version changes") {
    ParameterStore store;
    store.add("p", Tensor::vector({1}));
    const auto v = store.version();
    AdamState st;
    adam_step(store, st);
    CHECK(store.version() > v);
  }
}

TEST_CASE("dropout mask") {
  Rng rng(8);
  const Tensor ones = dropout_mask({4, 5}, 0, rng, true);
  for (Real v : ones.values()) CHECK(v == 1);
  const Tensor eval = dropout_mask({4, 5}, 0.4, rng, false);
  for (Real v : eval.values()) CHECK(v == 1);
  const Tensor m = dropout_mask({100000}, 0.5, rng, true);
  Real mean = 0;
  for (Real v : m.values()) {
    CHECK((v == 0 || v == 2));
    mean += v;
  }
  mean /= 100000;
  CHECK(mean >= 0.98);
  CHECK(mean <= 1.02);
  CHECK_THROWS_AS(dropout_mask({2}, 1.0, rng, true), ContractError);
}

TEST_CASE("gradient clipping") {
  ParameterStore store;
  Parameter& p = store.add("p", Tensor::vector({0, 0}));
  p.grad = Tensor::vector({3, 4});
  CHECK(store.clip_grad_norm(1) == doctest::Approx(5));
  CHECK(store.grad_norm() == doctest::Approx(1));
  CHECK(store.clip_grad_norm(10) == doctest::Approx(1));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(9);
  ParameterStore a;
  a.add("w", random_tensor({3, 4}, rng));
  a.add("b", random_tensor({4}, rng));
  const auto path = std::filesystem::temp_directory_path() / "hce_ckpt_test.bin";
  save_checkpoint(path, snapshot(a, {{"hidden", 8}}));
  const Checkpoint c = load_checkpoint(path);
  CHECK(c.manifest.at("hidden") == 8);
  ParameterStore b;
  b.add("w", Tensor::zeros(3, 4));
  b.add("b", Tensor({4}));
  restore(b, c);
  CHECK(b.at("w").value == a.at("w").value);
  CHECK(b.at("b").value == a.at("b").value);
  ParameterStore wrong;
  wrong.add("w", Tensor::zeros(4, 3));
  CHECK_THROWS_AS(restore(wrong, c), DataError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
}
