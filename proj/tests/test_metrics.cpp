#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lrc_oracle.hpp"
#include "spidernet/errors.hpp"
#include "spidernet/genotype.hpp"
#include "spidernet/metrics.hpp"
#include "spidernet/mutation.hpp"
#include "test_util.hpp"

using namespace spidernet;
using spidernet::testing::flat_params;
using spidernet::testing::small_config;

namespace {

bool all_one_channel(const SupernetModel& s) {
  for (const Cell& c : s.cells) {
    if (c.channels != 1) return false;
    for (const Edge& e : c.edges) {
      for (const CandidateOp& op : e.ops) {
        if (op.block.in_channels != 1 || op.block.out_channels != 1) return false;
      }
    }
  }
  return s.stem.out_channels == 1;
}

}  // namespace

TEST(SlimCopy, SameStructureOneChannel) {
  std::mt19937_64 rng(1);
  const SupernetModel m = init_minimum_viable_model(small_config(8), rng);
  const SupernetModel s = make_slim_copy(m, rng);
  EXPECT_EQ(s.edge_count(), 9u);
  EXPECT_EQ(s.edge_ids(), m.edge_ids());
  EXPECT_TRUE(all_one_channel(s));
  validate(s);
}

TEST(SlimCopy, IdempotentClampAndChannelIndependent) {
  std::mt19937_64 rng(2);
  const SupernetModel a = init_minimum_viable_model(small_config(8), rng);
  const SupernetModel b = init_minimum_viable_model(small_config(16), rng);
  const SupernetModel sa = make_slim_copy(a, rng);
  const SupernetModel ssa = make_slim_copy(sa, rng);
  const SupernetModel sb = make_slim_copy(b, rng);
  EXPECT_EQ(parameter_count(sa), parameter_count(ssa));
  EXPECT_EQ(parameter_count(sa), parameter_count(sb));
  EXPECT_EQ(ssa.edge_ids(), sa.edge_ids());
}

TEST(SlimCopy, CopiesAreBitwiseEqualAndGatesFollowSource) {
  std::mt19937_64 rng(3);
  SupernetModel m = init_minimum_viable_model(small_config(4), rng);
  m.cells[1].edges[2].ops[5].pruner.set_w(-0.3);
  const SupernetModel s = make_slim_copy(m, rng);
  SupernetModel c1 = s;
  SupernetModel c2 = s;
  EXPECT_EQ(flat_params(c1), flat_params(c2));
  EXPECT_TRUE(c1.cells[1].edges[2].ops[5].pruner.gate_off());
}

TEST(Ntk, OrthonormalProbeOnLinearMapGivesOne) {
  Param w("w", Shape{1, 2, 1, 1});
  w.value.data = {0.7, -1.3};
  Tensor probe(Shape{2, 2, 1, 1});
  probe.data = {1.0, 0.0, 0.0, 1.0};
  const Tensor zero(Shape{1, 1, 1, 1}, 0.0);
  Param* ps[] = {&w};
  const Eigen::MatrixXd j = output_jacobian(
      [&](Tape& t) { return ops::linear(t, t.constant(probe), t.param(w), t.constant(zero)); },
      ps);
  EXPECT_TRUE(j.isApprox(Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_NEAR(ntk_condition_number(j), 1.0, 1e-6);
}

TEST(Ntk, DuplicatedProbeRowsAreSingular) {
  Eigen::MatrixXd j(2, 3);
  j << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
  EXPECT_TRUE(std::isinf(ntk_condition_number(j)));

  std::mt19937_64 rng(4);
  SupernetModel m = init_minimum_viable_model(small_config(2), rng);
  SupernetModel s = make_slim_copy(m, rng);
  Tensor probe = draw_probe(s.config, 4, rng);
  const std::size_t per = probe.size() / 4;
  std::copy_n(probe.data.begin(), per, probe.data.begin() + static_cast<std::ptrdiff_t>(per));
  EXPECT_TRUE(std::isinf(ntk_condition_number(s, probe)));
}

TEST(Ntk, InvariantUnderProbePermutation) {
  std::mt19937_64 rng(5);
  SupernetModel m = init_minimum_viable_model(small_config(2), rng);
  SupernetModel s = make_slim_copy(m, rng);
  const Tensor probe = draw_probe(s.config, 6, rng);
  Tensor swapped = probe;
  const std::size_t per = probe.size() / 6;
  for (std::size_t i = 0; i < per; ++i) std::swap(swapped.data[i], swapped.data[5 * per + i]);
  const double k1 = ntk_condition_number(s, probe);
  const double k2 = ntk_condition_number(s, swapped);
  ASSERT_TRUE(std::isfinite(k1));
  EXPECT_GE(k1, 1.0);
  EXPECT_NEAR(k1, k2, 1e-6 * k1);
}

TEST(Ntk, SingleProbeIsInputError) {
  std::mt19937_64 rng(6);
  SupernetModel m = init_minimum_viable_model(small_config(1), rng);
  EXPECT_THROW(ntk_condition_number(m, draw_probe(m.config, 1, rng)), InputError);
}

TEST(Ntk, NonFiniteJacobianNamesTheBlock) {
  std::mt19937_64 rng(7);
  SupernetModel m = init_minimum_viable_model(small_config(1), rng);
  m.classifier.params[0].value.data[0] = NAN;
  try {
    ntk_condition_number(m, draw_probe(m.config, 3, rng));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("/"), std::string::npos);
  }
}

TEST(Lrc, NetworkWithoutReluHasOneRegion) {
  std::mt19937_64 rng(8);
  Param w("w", Shape{3, 2, 1, 1});
  for (double& v : w.value.data) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  const Tensor b(Shape{1, 3, 1, 1}, 0.1);
  Tensor x(Shape{200, 2, 1, 1});
  for (double& v : x.data) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto n = count_activation_patterns(
      [&](Tape& t) { ops::linear(t, t.constant(x), t.param(w), t.constant(b)); });
  EXPECT_EQ(n, 1u);
}

TEST(Lrc, SingleSampleHasOnePattern) {
  std::mt19937_64 rng(9);
  SupernetModel m = init_minimum_viable_model(small_config(2), rng);
  SupernetModel s = make_slim_copy(m, rng);
  EXPECT_EQ(count_linear_regions(s, 1, rng), 1u);
}

TEST(Lrc, ThreeHyperplanesNeverExceedArrangementCount) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w(Shape{3, 2, 1, 1});
    Tensor b(Shape{1, 3, 1, 1});
    for (double& v : w.data) v = g(rng);
    for (double& v : b.data) v = g(rng) * 0.5;
    std::vector<spidernet::testing::Line> lines;
    for (int k = 0; k < 3; ++k) lines.push_back({w.data[2 * k], w.data[2 * k + 1], b.data[k]});
    const std::size_t exact = spidernet::testing::arrangement_regions(lines);
    EXPECT_LE(exact, 7u);

    Tensor x(Shape{10000, 2, 1, 1});
    for (double& v : x.data) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Tensor wo(Shape{1, 3, 1, 1}, 1.0);
    const Tensor bo(Shape{1, 1, 1, 1}, 0.0);
    const auto sampled = count_activation_patterns([&](Tape& t) {
      const Var h = ops::relu(t, ops::linear(t, t.constant(x), t.constant(w), t.constant(b)));
      ops::linear(t, h, t.constant(wo), t.constant(bo));
    });
    EXPECT_GE(sampled, 1u);
    EXPECT_LE(sampled, exact);
  }
}

TEST(Lrc, ChunkingDoesNotChangeTheCount) {
  std::mt19937_64 rng(11);
  SupernetModel m = init_minimum_viable_model(small_config(2), rng);
  SupernetModel s = make_slim_copy(m, rng);
  const Tensor x = draw_uniform_inputs(s.config, 150, rng);
  const std::size_t whole = count_linear_regions(s, x);
  std::size_t single = count_activation_patterns(
      [&](Tape& t) { model_forward(s, t, t.constant(x)); });
  EXPECT_EQ(whole, single);
  EXPECT_GE(whole, 1u);
  EXPECT_LE(whole, 150u);
}

TEST(JointRank, WorkedExample) {
  const std::vector<MetricPair> c{{10, 5}, {20, 9}, {30, 7}};
  EXPECT_EQ(joint_rank_scores(c), (std::vector<std::size_t>{4, 5, 3}));
  EXPECT_EQ(joint_rank(c), 1u);
}

TEST(JointRank, SingletonAndTies) {
  EXPECT_EQ(joint_rank(std::vector<MetricPair>{{3.0, 4}}), 0u);
  EXPECT_EQ(joint_rank(std::vector<MetricPair>{{3.0, 4}, {3.0, 4}}), 0u);
  // Equal scores: lower kappa wins.
  const std::vector<MetricPair> c{{5.0, 1}, {2.0, 1}, {9.0, 3}};
  const auto s = joint_rank_scores(c);
  ASSERT_EQ(s[1], s[2]);
  EXPECT_EQ(joint_rank(c), 1u);
  EXPECT_THROW(joint_rank(std::vector<MetricPair>{}), InputError);
}

TEST(JointRank, InfiniteKappaRanksWorst) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<MetricPair> c{{inf, 10}, {50.0, 10}};
  EXPECT_EQ(joint_rank(c), 1u);
}

TEST(JointRank, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> k(1.0, 100.0);
  std::uniform_int_distribution<std::size_t> l(1, 20);
  for (int t = 0; t < 100; ++t) {
    std::vector<MetricPair> c(2 + rng() % 8);
    for (auto& p : c) p = MetricPair{std::round(k(rng)), l(rng)};
    const std::size_t best = joint_rank(c);
    auto kt = c;
    for (auto& p : kt) p.ntk_condition = std::exp(p.ntk_condition / 10.0) + 3.0;
    auto lt = c;
    for (auto& p : lt) p.lrc = p.lrc * p.lrc + 7;
    EXPECT_EQ(joint_rank(kt), best);
    EXPECT_EQ(joint_rank(lt), best);
  }
}

TEST(Admission, PredicateOnStatedInputs) {
  EXPECT_TRUE(admits({50.0, 12}, {60.0, 12}));
  EXPECT_FALSE(admits({61.0, 12}, {60.0, 12}));
  EXPECT_FALSE(admits({50.0, 11}, {60.0, 12}));
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(admits({inf, 12}, {60.0, 12}));
  EXPECT_TRUE(admits({inf, 12}, {inf, 12}));
}

TEST(Selection, TrialPairsAreIdenticalAndOffMatchesTemplate) {
  std::mt19937_64 rng(13);
  SupernetModel m = init_minimum_viable_model(small_config(4), rng);
  SelectionOptions o;
  o.budget_bytes = std::size_t{1} << 40;
  o.lrc_samples = 100;
  int trials = 0;
  o.observer = [&](SupernetModel& tmpl, SupernetModel& on, SupernetModel& off, const Tensor& probe) {
    ++trials;
    EXPECT_EQ(flat_params(on), flat_params(off));
    const Tensor a = model_logits(tmpl, probe, Mode::kEval);
    const Tensor b = model_logits(off, probe, Mode::kEval);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-5);
  };
  const SelectionResult r = select_mutation_ntklrc(m, o, rng);
  EXPECT_EQ(static_cast<std::size_t>(trials), r.rows.size());
  ASSERT_TRUE(r.edge.has_value());
  ASSERT_TRUE(r.winner.has_value());
  const CandidateRow& w = r.rows[*r.winner];
  EXPECT_EQ(w.edge, *r.edge);
  EXPECT_TRUE(admits(w.on, w.off));
  EXPECT_LT(r.model_bytes + 2 * r.edge_bytes, r.budget_bytes);
}

TEST(Selection, MemoryGateCanRefuseTheWinner) {
  std::mt19937_64 rng(14);
  SupernetModel m = init_minimum_viable_model(small_config(4), rng);
  SelectionOptions o;
  o.lrc_samples = 50;
  o.budget_bytes = estimate_memory(m, o.batch_size).total() + 1;
  const SelectionResult r = select_mutation_ntklrc(m, o, rng);
  if (r.winner) {
    EXPECT_FALSE(r.gate_passed);
    EXPECT_FALSE(r.edge.has_value());
  }
}

TEST(Selection, SeededCallsAgree) {
  std::mt19937_64 init(15);
  SupernetModel m = init_minimum_viable_model(small_config(2), init);
  SelectionOptions o;
  o.budget_bytes = std::size_t{1} << 40;
  o.lrc_samples = 60;
  std::mt19937_64 a(3);
  std::mt19937_64 b(3);
  const SelectionResult ra = select_mutation_ntklrc(m, o, a);
  const SelectionResult rb = select_mutation_ntklrc(m, o, b);
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].edge, rb.rows[i].edge);
    EXPECT_EQ(ra.rows[i].on.lrc, rb.rows[i].on.lrc);
    EXPECT_EQ(ra.rows[i].on.ntk_condition, rb.rows[i].on.ntk_condition);
  }
  EXPECT_EQ(ra.edge, rb.edge);
}

TEST(Selection, StopsAfterNGoodAdmissions) {
  std::mt19937_64 rng(16);
  SupernetModel m = init_minimum_viable_model(small_config(2), rng);
  SelectionOptions o;
  o.n_good = 1;
  o.lrc_samples = 40;
  o.budget_bytes = std::size_t{1} << 40;
  const SelectionResult r = select_mutation_ntklrc(m, o, rng);
  std::size_t admitted = 0;
  for (const auto& row : r.rows) admitted += row.admitted;
  EXPECT_LE(admitted, 1u);
  if (admitted == 1) EXPECT_TRUE(r.rows.back().admitted);
  o.n_good = 0;
  EXPECT_THROW(select_mutation_ntklrc(m, o, rng), InputError);
}
