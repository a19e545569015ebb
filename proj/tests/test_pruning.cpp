#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spidernet/errors.hpp"
#include "spidernet/mutation.hpp"
#include "spidernet/pruner.hpp"
#include "spidernet/pruning.hpp"
#include "test_util.hpp"

using namespace spidernet;
using spidernet::testing::small_config;

TEST(Pruner, GateAndSawValues) {
  EXPECT_EQ(pruner_gate(-1e-12), 0.0);
  EXPECT_EQ(pruner_gate(0.0), 1.0);
  EXPECT_EQ(pruner_gate(0.3), 1.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = pruner_saw(w(rng));
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 1.0 / kPrunerScale);
  }
}

TEST(Pruner, ForwardAndUnitSlopeGradient) {
  PrunerState st;
  st.set_w(0.1);
  Tape tape(Mode::kTrain);
  Param x("x", Shape{1, 2, 1, 2});
  x.value.data = {1.0, -2.0, 3.0, 0.5};
  const Var y = pruner_apply(tape, tape.param(x), st);
  const double mult = st.multiplier();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(tape.value(y).data[i], mult * x.value.data[i]);
  tape.backward(y, Tensor(Shape{1, 2, 1, 2}, 1.0));
  EXPECT_DOUBLE_EQ(st.weight.grad.data[0], 2.5);
  for (double g : x.grad.data) EXPECT_DOUBLE_EQ(g, mult);
}

TEST(Pruner, OffGateSuppressesOutput) {
  PrunerState st;
  st.set_w(-0.2);
  EXPECT_TRUE(st.gate_off());
  Tape tape(Mode::kEval);
  const Var y = pruner_apply(tape, tape.constant(Tensor(Shape{1, 1, 2, 2}, 7.0)), st);
  EXPECT_LE(tape.value(y).max_abs(), 7.0 * 1e-9);
}

TEST(Pruner, ReinitialiseDrawsInRangeAndClearsHistory) {
  PrunerState st;
  st.off_history.set_capacity(4);
  st.off_history.push(true);
  std::mt19937_64 rng(2);
  st.reinitialize(rng);
  EXPECT_GE(st.w(), kPrunerInitLow);
  EXPECT_LE(st.w(), kPrunerInitHigh);
  EXPECT_EQ(st.off_history.size(), 0u);
}

TEST(UsageHistory, RingSemantics) {
  UsageHistory h(4);
  EXPECT_FALSE(h.full());
  h.push(true);
  h.push(true);
  h.push(true);
  EXPECT_EQ(h.off_fraction(), 0.0);  // partial window
  h.push(false);
  EXPECT_TRUE(h.full());
  EXPECT_EQ(h.off_fraction(), 0.75);
  h.push(false);  // evicts the oldest "off"
  EXPECT_EQ(h.off_count(), 2u);
  h.set_capacity(4);
  EXPECT_EQ(h.size(), 4u);
  h.set_capacity(8);
  EXPECT_EQ(h.size(), 0u);
}

namespace {

// Fills op's window with `off` of `window` entries set.
void fill_window(CandidateOp& op, std::size_t window, std::size_t off) {
  op.pruner.off_history.set_capacity(window);
  op.pruner.off_history.clear();
  for (std::size_t i = 0; i < window; ++i) op.pruner.off_history.push(i < off);
}

}  // namespace

TEST(Deadhead, ThresholdIsStrict) {
  std::mt19937_64 rng(3);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  set_usage_window(m, 25);  // window of 100 batches
  Edge& e = m.cells[2].edges[0];
  fill_window(e.ops[3], 100, 76);
  fill_window(e.ops[4], 100, 75);
  const DeadheadResult r = deadhead_pass(m, 0, 3);
  ASSERT_EQ(r.deleted, 1u);
  EXPECT_EQ(r.records[0].kind, PrimitiveKind::kSepConv3x3);
  EXPECT_NEAR(r.records[0].off_fraction, 0.76, 1e-12);
  EXPECT_EQ(m.cells[2].edges[0].ops.size(), 6u);
  EXPECT_EQ(m.op_count(), 62u);
}

TEST(Deadhead, PartialWindowNeverDeletes) {
  std::mt19937_64 rng(4);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  set_usage_window(m, 10);
  CandidateOp& op = m.cells[0].edges[0].ops[2];
  for (int i = 0; i < 39; ++i) op.pruner.off_history.push(true);
  EXPECT_EQ(deadhead_pass(m, 0, 0).deleted, 0u);
  op.pruner.off_history.push(true);
  EXPECT_EQ(deadhead_pass(m, 0, 1).deleted, 1u);
}

TEST(Deadhead, NothingOffMeansNothingDeleted) {
  std::mt19937_64 rng(5);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  set_usage_window(m, 1);
  for (int i = 0; i < 4; ++i) record_usage(m);
  EXPECT_EQ(deadhead_pass(m, 0, 3).deleted, 0u);
}

TEST(RemoveOp, GuardRefusesDisconnectingOutput) {
  std::mt19937_64 rng(6);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  Cell& c = m.cells[0];  // one input -> mid -> output
  Edge& last = c.edges.back();
  last.ops.resize(1);
  const RemovalOutcome out = remove_op(m, last.id, 0);
  EXPECT_FALSE(out.removed);
  EXPECT_EQ(m.edge_count(), 9u);
  validate(m);
}

TEST(RemoveOp, EmptiedInputEdgeIsRemoved) {
  std::mt19937_64 rng(7);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  Cell& c = m.cells[2];  // three inputs
  Edge& e = c.edges[0];
  e.ops.resize(1);
  const EdgeId id = e.id;
  const RemovalOutcome out = remove_op(m, id, 0);
  EXPECT_TRUE(out.removed);
  EXPECT_TRUE(out.collateral.empty());
  EXPECT_EQ(m.find_edge(id), nullptr);
  EXPECT_EQ(m.edge_count(), 8u);
  validate(m);
  // The orphaned input is skipped by the forward pass.
  const Tensor logits = model_logits(m, Tensor(Shape{2, 3, 8, 8}, 0.1), Mode::kEval);
  EXPECT_TRUE(logits.all_finite());
}

TEST(RemoveOp, StrandedNodeGoesWithItsEdges) {
  std::mt19937_64 rng(8);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  const MutationResult mr = triangular_mutate(m, m.cells[1].edges[0].id, rng);
  Edge& into = *m.find_edge(mr.into_new);
  into.ops.resize(1);
  const RemovalOutcome out = remove_op(m, mr.into_new, 0);
  EXPECT_TRUE(out.removed);
  EXPECT_EQ(out.collateral.size(), 7u);  // the full C -> B edge
  EXPECT_EQ(m.find_edge(mr.out_of_new), nullptr);
  EXPECT_EQ(m.cells[1].find_node(mr.new_node), nullptr);
  EXPECT_EQ(m.node_count(), 12u);
  validate(m);
}

TEST(RemoveOp, UnknownEdgeIsStructuralError) {
  std::mt19937_64 rng(9);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  EXPECT_THROW(remove_op(m, EdgeId{999}, 0), StructuralError);
  EXPECT_THROW(remove_op(m, m.cells[0].edges[0].id, 7), StructuralError);
}

TEST(Deadhead, DeletionIsPermanentAcrossReinit) {
  std::mt19937_64 rng(10);
  SupernetModel m = init_minimum_viable_model(small_config(), rng);
  set_usage_window(m, 1);
  for (int k = 0; k < 5; ++k) fill_window(m.cells[1].edges[k % 3].ops[k < 3 ? 1 : 2], 4, 4);
  EXPECT_EQ(deadhead_pass(m, 0, 3).deleted, 5u);
  EXPECT_EQ(m.op_count(), 58u);
  reinit_weights(m, rng);
  EXPECT_EQ(m.op_count(), 58u);
  validate(m);
}
