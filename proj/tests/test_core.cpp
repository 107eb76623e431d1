#include <doctest.h>

#include <cmath>
#include <numeric>

#include "deepinv/core/errors.hpp"
#include "deepinv/core/nn.hpp"
#include "deepinv/core/optim.hpp"
#include "support.hpp"

using namespace deepinv;
using deepinv::testing::gradient_error;
using deepinv::testing::kFdRelTol;
using deepinv::testing::positive;
using deepinv::testing::project;

TEST_CASE("tensor construction and row slices") {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6);
  const Tensor r = m.row_slice(1, 2);
  CHECK(r.shape() == Tensor::Shape{1, 3});
  CHECK(r[0] == 4);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::vector({1, 2}).rows(), DimensionError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("random source is reproducible and roughly standard") {
  RandomSource a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

  RandomSource rng(7);
  const int n = 200000;
  Real s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const Real x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);

  for (int i = 0; i < 1000; ++i) {
    const Real u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(3) < 3);
  }
}

TEST_CASE("mt19937_64 stream matches the standard's 10000th value") {
  // The C++ standard fixes the 10000th output of a default-seeded mt19937_64.
  RandomSource rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("elementwise primitives match finite differences") {
  RandomSource rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor::Shape s{3, 4};
    const Tensor a = normal(rng, s), b = normal(rng, s), d = positive(rng, s);
    const Real c = rng.uniform(-2, 2);
    RandomSource proj(trial);
    auto with = [&](auto op) {
      return [&, op](Tape& t, std::vector<Var>& x) {
        RandomSource p = proj;
        return project(t, op(x), p);
      };
    };
    CHECK(gradient_error(with([](auto& x) { return add(x[0], x[1]); }), {a, b}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& x) { return sub(x[0], x[1]); }), {a, b}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& x) { return mul(x[0], x[1]); }), {a, b}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& x) { return div(x[0], x[1]); }), {a, d}) < kFdRelTol);
    CHECK(gradient_error(with([c](auto& x) { return add(x[0], c); }), {a}) < kFdRelTol);
    CHECK(gradient_error(with([c](auto& x) { return mul(x[0], c); }), {a}) < kFdRelTol);
    CHECK(gradient_error(with([c](auto& x) { return div(x[0], c + 3.0); }), {a}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& x) { return silu(x[0]); }), {a}) < kFdRelTol);
  }
}

TEST_CASE("matrix primitives match finite differences") {
  RandomSource rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = normal(rng, {4, 3}), w = normal(rng, {3, 5}), bias = normal(rng, {5});
    const Tensor g = normal(rng, {3}), gb = normal(rng, {3}), other = normal(rng, {4, 2});
    const Tensor table = normal(rng, {5, 3});
    RandomSource proj(100 + trial);
    auto with = [&](auto op) {
      return [&, op](Tape& t, std::vector<Var>& v) {
        RandomSource p = proj;
        return project(t, op(v), p);
      };
    };
    CHECK(gradient_error(with([](auto& v) { return matmul(v[0], v[1]); }), {x, w}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return add_row(v[0], v[1]); }), {normal(rng, {4, 5}), bias}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return linear(v[0], v[1], v[2]); }), {x, w, bias}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return layer_norm(v[0], v[1], v[2]); }), {x, g, gb}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return concat_cols(v[0], v[1]); }), {x, other}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return slice_cols(v[0], 1, 3); }), {x}) < kFdRelTol);
    CHECK(gradient_error(with([](auto& v) { return gather_rows(v[0], {0, 3, 3, 1}); }), {table}) < kFdRelTol);
    CHECK(gradient_error([](Tape&, std::vector<Var>& v) { return mean_squared(v[0]); }, {x}) < kFdRelTol);
    CHECK(gradient_error([](Tape&, std::vector<Var>& v) { return sum(v[0]); }, {x}) < kFdRelTol);
  }
}

TEST_CASE("autodiff contracts") {
  Tape tape;
  Var a = tape.input(Tensor::matrix(1, 2, {1, 2}));
  CHECK_THROWS_AS(tape.backward(a), ContractError);
  CHECK_THROWS_AS(div(a, 0.0), DomainError);
  CHECK_THROWS_AS(add(a, tape.input(Tensor::matrix(2, 1, {1, 2}))), DimensionError);
  Tape empty_tape;
  CHECK_THROWS_AS(mean_squared(empty_tape.input(Tensor({0, 3}))), DomainError);
}

TEST_CASE("a parameter used twice accumulates both gradients") {
  Parameter p{"p", Tensor::matrix(1, 2, {1.5, -2.0}), true};
  Tape tape;
  Var x = tape.param(p);
  Var y = tape.param(p);
  CHECK(x.id() == y.id());
  const Gradients g = tape.backward(sum(mul(x, y)));
  CHECK(g.of(p)[0] == doctest::Approx(3.0));
  CHECK(g.of(p)[1] == doctest::Approx(-4.0));
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  RandomSource rng(3);
  Tape tape;
  Var x = tape.constant(normal(rng, {5, 16}));
  const Tensor y = layer_norm(x, tape.constant(Tensor::full({16}, 1.0)), tape.constant(Tensor::zeros({16}))).value();
  for (std::size_t r = 0; r < 5; ++r) {
    Real m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 16 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("adam matches a scalar reference loop") {
  Parameter p{"w", Tensor::vector({0.3, -1.2, 2.0}), true};
  Parameter frozen{"f", Tensor::vector({1.0}), false};
  Adam opt({&p, &frozen}, AdamHyper{0.01, 0.9, 0.999, 1e-8});
  std::vector<Real> ref{0.3, -1.2, 2.0}, m(3, 0), v(3, 0);
  for (int step = 1; step <= 25; ++step) {
    Gradients g;
    Tensor grad({3});
    for (int i = 0; i < 3; ++i) grad[i] = std::sin(step * 0.7 + i) * (1 + i);
    g.set(p, grad);
    g.set(frozen, Tensor::vector({5.0}));
    opt.step(g);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const Real mh = m[i] / (1 - std::pow(0.9, step));
      const Real vh = v[i] / (1 - std::pow(0.999, step));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(p.value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  CHECK(frozen.value[0] == 1.0);
  CHECK(opt.state().step_count == 25);
}

TEST_CASE("sinusoidal embedding matches the direct formula") {
  const std::vector<int> t{0, 7, 50};
  const Tensor e = sinusoidal_embedding(t, 8);
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t i = 0; i < 4; ++i) {
      const Real f = std::pow(10000.0, -static_cast<Real>(i) / 4.0);
      CHECK(e.at(r, i) == doctest::Approx(std::sin(t[r] * f)).epsilon(1e-12));
      CHECK(e.at(r, i + 4) == doctest::Approx(std::cos(t[r] * f)).epsilon(1e-12));
    }
  }
}

TEST_CASE("parameter sets reject duplicate names") {
  ParameterSet set;
  set.add("a", Tensor::vector({1}));
  CHECK_THROWS_AS(set.add("a", Tensor::vector({2})), ContractError);
  CHECK(set.scalar_count() == 1);
}
