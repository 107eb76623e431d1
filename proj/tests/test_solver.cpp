#include <doctest.h>

#include <cmath>

#include "deepinv/core/errors.hpp"
#include "deepinv/core/optim.hpp"
#include "support.hpp"

using namespace deepinv;
using deepinv::testing::kFdRelTol;

namespace {

SolverConfig small_config() {
  SolverConfig c;
  c.hidden_width = 8;
  c.cond_width = 4;
  c.time_width = 8;
  c.latent_dim = 2;
  c.n_classes = 3;
  return c;
}

struct Inputs {
  Tensor eps, z, z0;
  std::vector<int> t;
  std::vector<Condition> cond;
};

Inputs random_inputs(RandomSource& rng, std::size_t batch, std::size_t n) {
  Inputs in{normal(rng, {batch, n}), normal(rng, {batch, n}), normal(rng, {batch, n}), {}, {}};
  for (std::size_t i = 0; i < batch; ++i) {
    in.t.push_back(static_cast<int>(rng.below(50)));
    in.cond.push_back(i % 2 == 0 ? Condition::null() : Condition::cls(static_cast<int>(rng.below(3))));
  }
  return in;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  Real m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// One Adam step on mean_squared(output - target) honouring trainable flags.
void train_step(DualBranchSolver& solver, const Inputs& in, const Tensor& target) {
  Tape tape;
  Var out = solver.forward(tape, tape.constant(in.eps), tape.constant(in.z), in.t, in.cond, tape.constant(in.z0));
  const Gradients g = tape.backward(mean_squared(sub(out, tape.constant(target))));
  Adam opt(solver.parameters().all(), AdamHyper{0.05});
  opt.step(g);
}

std::vector<Tensor> snapshot(const DualBranchSolver& solver) {
  std::vector<Tensor> out;
  for (const Parameter* p : solver.parameters().all()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("fresh solver returns the DDIM noise exactly") {
  RandomSource rng(1);
  const DualBranchSolver solver(SolverConfig{}, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Inputs in = random_inputs(rng, 5, 2);
    const Tensor out = solver.forward(in.eps, in.z, in.t, in.cond, in.z0);
    CHECK(out.shape() == in.eps.shape());
    CHECK(out == in.eps);
  }
  CHECK(solver.total_blocks() == 5);
}

TEST_CASE("parameter count matches a hand count") {
  RandomSource rng(2);
  DualBranchSolver solver(SolverConfig{}, rng);
  // n = 2, d = 64, c = 32, time width 64, 3 classes + null:
  //   cond table 128, t1 3104, z0 pool 96, t2 3104, left in 192, right in 320,
  //   4 blocks x 12672, aggregation 41728, final 258.
  CHECK(solver.parameters().scalar_count() == 99618);
  CHECK(DualBranchSolver::parameter_count(SolverConfig{}) == 99618);
  solver.extend_layers(4, rng);
  CHECK(solver.parameters().scalar_count() == 99618 + 4 * 12672);
  CHECK(solver.total_blocks() == 9);
}

TEST_CASE("solver construction is deterministic per seed") {
  RandomSource a(3), b(3);
  const DualBranchSolver x(SolverConfig{}, a), y(SolverConfig{}, b);
  const auto px = x.parameters().all(), py = y.parameters().all();
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(px[i]->value == py[i]->value);
  SolverConfig bad;
  bad.left_blocks = 0;
  CHECK_THROWS_AS(DualBranchSolver(bad, a), ContractError);
}

TEST_CASE("timestep embeddings separate condition and clean latent") {
  RandomSource rng(4);
  DualBranchSolver solver(SolverConfig{}, rng);
  const std::vector<int> t{7};
  const std::vector<Condition> c{Condition::cls(1)};
  const Tensor z0a = normal(rng, {1, 2}), z0b = normal(rng, {1, 2});
  const auto ea = solver.embed_timesteps(t, c, z0a);
  const auto eb = solver.embed_timesteps(t, c, z0b);
  CHECK(ea.t1 == eb.t1);
  CHECK_FALSE(ea.t2 == eb.t2);
  const std::vector<Condition> other{Condition::null()};
  CHECK_FALSE(solver.embed_timesteps(t, other, z0a).t1 == ea.t1);
  CHECK(solver.embed_timesteps(t, other, z0a).t2 == ea.t2);
}

TEST_CASE("solver forward gradients match finite differences") {
  RandomSource rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    DualBranchSolver solver(small_config(), rng);
    if (trial % 2 == 1) solver.extend_layers(2, rng);
    deepinv::testing::scramble(solver, rng);
    const Inputs in = random_inputs(rng, 3, 2);
    const Tensor target = normal(rng, {3, 2});
    auto loss = [&](Tape& tape, std::vector<Var>& x) {
      return mean_squared(sub(solver.forward(tape, x[0], x[1], in.t, in.cond, x[2]), tape.constant(target)));
    };
    CHECK(deepinv::testing::gradient_error(loss, {in.eps, in.z, in.z0}) < kFdRelTol);
    auto param_loss = [&](Tape& tape) {
      Var out = solver.forward(tape, tape.constant(in.eps), tape.constant(in.z), in.t, in.cond, tape.constant(in.z0));
      return mean_squared(sub(out, tape.constant(target)));
    };
    CHECK(deepinv::testing::parameter_gradient_error(param_loss, solver.parameters().all()) < kFdRelTol);
  }
}

TEST_CASE("condition gradients stay out of the right branch and z0 gradients out of the left") {
  RandomSource rng(6);
  DualBranchSolver solver(small_config(), rng);
  deepinv::testing::scramble(solver, rng);
  const Inputs in = random_inputs(rng, 4, 2);
  Parameter* table = solver.parameters().find("solver.cond_table");
  REQUIRE(table != nullptr);
  {
    Tape tape;
    Var z0 = tape.input(in.z0);
    const SolverTrace tr = solver.trace(tape, tape.constant(in.eps), tape.constant(in.z), in.t, in.cond, z0);
    const Gradients g = tape.backward(sum(mul(tr.right, tape.constant(normal(rng, tr.right.shape())))));
    const Tensor g_table = g.of(*table), g_z0 = tape.grad(z0);
    for (Real v : g_table.data()) CHECK(v == 0.0);
    bool reached = false;
    for (Real v : g_z0.data()) reached = reached || v != 0.0;
    CHECK(reached);
  }
  {
    Tape tape;
    Var z0 = tape.input(in.z0);
    const SolverTrace tr = solver.trace(tape, tape.constant(in.eps), tape.constant(in.z), in.t, in.cond, z0);
    const Gradients g = tape.backward(sum(mul(tr.left, tape.constant(normal(rng, tr.left.shape())))));
    const Tensor g_table = g.of(*table), g_z0 = tape.grad(z0);
    for (Real v : g_z0.data()) CHECK(v == 0.0);
    bool reached = false;
    for (Real v : g_table.data()) reached = reached || v != 0.0;
    CHECK(reached);
  }
}

TEST_CASE("extension preserves the function and the old parameters") {
  RandomSource rng(7);
  DualBranchSolver solver(SolverConfig{}, rng);
  const Inputs probe = random_inputs(rng, 10, 2);
  for (int step = 0; step < 5; ++step) train_step(solver, random_inputs(rng, 16, 2), normal(rng, {16, 2}));
  const Tensor before = solver.forward(probe.eps, probe.z, probe.t, probe.cond, probe.z0);
  const auto old_values = snapshot(solver);
  solver.extend_layers(4, rng);
  const Tensor after = solver.forward(probe.eps, probe.z, probe.t, probe.cond, probe.z0);
  CHECK(max_abs_diff(before, after) <= 1e-7);
  const auto all = solver.parameters().all();
  for (std::size_t i = 0; i < old_values.size(); ++i) CHECK(all[i]->value == old_values[i]);
  CHECK(solver.extension_history() == std::vector<std::size_t>{4});
  CHECK(solver.newest_parameters().size() == all.size() - old_values.size());
}

TEST_CASE("trainable selectors gate optimizer updates") {
  RandomSource rng(8);
  DualBranchSolver solver(SolverConfig{}, rng);
  CHECK_THROWS_AS(solver.set_trainable(TrainableSelector::kNewOnly), ContractError);
  const Inputs in = random_inputs(rng, 16, 2);
  const Tensor target = normal(rng, {16, 2});
  train_step(solver, in, target);
  train_step(solver, in, target);

  solver.set_trainable(TrainableSelector::kNone);
  auto before = snapshot(solver);
  train_step(solver, in, target);
  CHECK(snapshot(solver) == before);

  solver.extend_layers(4, rng);
  solver.set_trainable(TrainableSelector::kNewOnly);
  before = snapshot(solver);
  const std::size_t n_old = before.size() - solver.newest_parameters().size();
  train_step(solver, in, target);
  const auto after = snapshot(solver);
  for (std::size_t i = 0; i < n_old; ++i) CHECK(after[i] == before[i]);
  bool new_moved = false;
  for (std::size_t i = n_old; i < after.size(); ++i) new_moved = new_moved || !(after[i] == before[i]);
  CHECK(new_moved);

  solver.set_trainable(TrainableSelector::kAll);
  for (const Parameter* p : solver.parameters().all()) CHECK(p->trainable);
  CHECK(parse_selector("new_only") == TrainableSelector::kNewOnly);
  CHECK_THROWS(parse_selector("some"));
}
