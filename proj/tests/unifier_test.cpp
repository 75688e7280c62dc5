#include <gtest/gtest.h>

#include <set>

#include "ckgr/errors.hpp"
#include "ckgr/knn.hpp"
#include "ckgr/unifier.hpp"
#include "support.hpp"

namespace ckgr {
namespace {

using testing::graph_of;

// Node i gets basis vector e_i, so every node is its own unique nearest neighbour.
EmbeddingTable basis_table(std::size_t n) {
  EmbeddingTable t(n, n);
  for (NodeId i = 0; i < n; ++i) {
    std::vector<float> v(n, 0.0f);
    v[i] = 1.0f;
    t.set(i, v);
  }
  return t;
}

std::vector<Triple> triples_at(const Ckg& g, const CandidateSet& c) {
  std::vector<Triple> out;
  for (auto i : c.triple_indices) out.push_back(g.triple(i));
  return out;
}

TEST(GatherCandidates, SelfRetrievalWithOneNeighbour) {
  const Ckg g = graph_of({{"a", "r", "b"}, {"a", "s", "c"}, {"b", "r", "c"}});
  const EmbeddingTable t = basis_table(g.node_count());
  KnnIndex index(t);
  const CandidateSet c = gather_candidates(g, index, 0, 1);
  EXPECT_EQ(c.source_nodes, std::vector<NodeId>{0});
  EXPECT_EQ(triples_at(g, c), g.triples_with_head(0));
  const CandidateSet only_s = gather_candidates(g, index, 0, 1, *g.vocab().find_relation("s"));
  ASSERT_EQ(only_s.triple_indices.size(), 1u);
  EXPECT_EQ(g.node_text(g.triple(only_s.triple_indices[0]).tail), "c");
}

TEST(GatherCandidates, NeighboursWithoutEdgesGiveEmptySet) {
  const Ckg g = graph_of({{"a", "r", "b"}, {"c", "r", "d"}});
  const EmbeddingTable t = basis_table(g.node_count());
  KnnIndex index(t);
  EXPECT_TRUE(gather_candidates(g, index, 1, 1).triple_indices.empty());
}

TEST(GatherCandidates, UnionOverNeighbours) {
  // Six nodes; x and y are close to each other and both point at shared tails.
  const Ckg g = graph_of({{"x", "r", "p"}, {"x", "r", "q"}, {"y", "r", "q"}, {"y", "s", "z"}, {"p", "r", "z"},
                          {"q", "r", "w"}});
  const NodeId x = *g.vocab().find_node("x"), y = *g.vocab().find_node("y");
  EmbeddingTable t(g.node_count(), 3);
  Rng rng(1);
  for (NodeId v = 0; v < g.node_count(); ++v) {
    t.set(v, std::vector<float>{static_cast<float>(rng.normal()), static_cast<float>(rng.normal()), -5.0f});
  }
  t.set(x, std::vector<float>{1.0f, 0.0f, 0.0f});
  t.set(y, std::vector<float>{0.9f, 0.1f, 0.0f});
  KnnIndex index(t);
  const CandidateSet c = gather_candidates(g, index, x, 2);
  EXPECT_EQ(c.source_nodes, (std::vector<NodeId>{x, y}));
  std::set<std::uint32_t> a(g.head_index(x).begin(), g.head_index(x).end());
  std::set<std::uint32_t> b(g.head_index(y).begin(), g.head_index(y).end());
  std::set<std::uint32_t> both = a;
  both.insert(b.begin(), b.end());
  EXPECT_EQ(c.triple_indices.size(), both.size());
  EXPECT_EQ(std::set<std::uint32_t>(c.triple_indices.begin(), c.triple_indices.end()), both);
  EXPECT_TRUE(std::is_sorted(c.triple_indices.begin(), c.triple_indices.end()));
}

TEST(GatherCandidates, FrontierWithoutEmbedding) {
  const Ckg g = graph_of({{"a", "r", "b"}});
  EmbeddingTable t(2, 2);
  t.set(0, std::vector<float>{1, 0});
  KnnIndex index(t);
  EXPECT_THROW(gather_candidates(g, index, 1, 1), DomainError);
}

TEST(BuildHypotheses, Examples) {
  const Ckg g = graph_of({{"a", "r", "b"}, {"a", "s", "b"}, {"a", "r", "c"}, {"c", "r", "b"}});
  CandidateSet dup{{0, 1}, {}};
  EXPECT_EQ(build_hypotheses(g, dup), std::vector<NodeId>{1});
  EXPECT_TRUE(build_hypotheses(g, CandidateSet{}).empty());
  CandidateSet three{{0, 2, 3}, {}};
  EXPECT_EQ(build_hypotheses(g, three), (std::vector<NodeId>{1, 2}));
}

TEST(ScoreMatrix, ExactUnificationScoresOne) {
  const Ckg g = graph_of({{"f", "r", "t"}});
  const EmbeddingTable t = basis_table(2);
  CandidateSet c{{0}, {0}};
  const auto u = score_matrix(g, t, c, build_hypotheses(g, c), 0);
  ASSERT_EQ(u.rows, 1u);
  ASSERT_EQ(u.cols, 1u);
  EXPECT_EQ(u.at(0, 0), 1.0);
}

TEST(ScoreMatrix, OrthogonalHeadBoundsRow) {
  const Ckg g = graph_of({{"h", "r", "t"}, {"f", "r", "t"}});
  const EmbeddingTable t = basis_table(3);
  CandidateSet c{{0}, {}};
  const auto u = score_matrix(g, t, c, std::vector<NodeId>{1, 2}, *g.vocab().find_node("f"));
  for (std::size_t j = 0; j < u.cols; ++j) EXPECT_LE(u.at(0, j), 0.0);
}

TEST(ScoreMatrix, HandComputedTwoByTwo) {
  // Nodes: f (frontier), a, b heads; p, q tails.
  const Ckg g = graph_of({{"a", "r", "p"}, {"b", "r", "q"}, {"f", "r", "f"}});
  const auto id = [&](const char* s) { return *g.vocab().find_node(s); };
  EmbeddingTable t(g.node_count(), 2);
  t.set(id("a"), std::vector<float>{1, 0});
  t.set(id("p"), std::vector<float>{0, 1});
  t.set(id("b"), std::vector<float>{1, 1});
  t.set(id("q"), std::vector<float>{1, 2});
  t.set(id("f"), std::vector<float>{2, 1});
  CandidateSet c{{0, 1}, {}};
  const auto h = build_hypotheses(g, c);
  ASSERT_EQ(h, (std::vector<NodeId>{id("p"), id("q")}));
  const auto u = score_matrix(g, t, c, h, id("f"));
  const double s5 = std::sqrt(5.0), s2 = std::sqrt(2.0);
  const double fa = 2 / s5, fb = 3 / (s5 * s2), pq = 2 / s5, qq = 1.0;
  EXPECT_NEAR(u.at(0, 0), std::min(fa, 1.0), 1e-6);
  EXPECT_NEAR(u.at(0, 1), std::min(fa, pq), 1e-6);
  EXPECT_NEAR(u.at(1, 0), std::min(fb, pq), 1e-6);
  EXPECT_NEAR(u.at(1, 1), std::min(fb, qq), 1e-6);
}

TEST(ScoreMatrix, EmptyInputsRejected) {
  const Ckg g = graph_of({{"a", "r", "b"}});
  const EmbeddingTable t = basis_table(2);
  EXPECT_THROW(score_matrix(g, t, CandidateSet{}, std::vector<NodeId>{1}, 0), DomainError);
  EXPECT_THROW(score_matrix(g, t, CandidateSet{{0}, {}}, std::vector<NodeId>{}, 0), DomainError);
}

UnificationMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> scores) {
  UnificationMatrix u;
  u.rows = rows;
  u.cols = cols;
  u.scores = std::move(scores);
  for (std::size_t j = 0; j < cols; ++j) u.hypotheses.push_back(static_cast<NodeId>(10 + j));
  return u;
}

TEST(SelectCandidates, RowMax) {
  const Ckg g = graph_of({{"a", "r", "b"}});
  const auto out = select_candidates(g, matrix(1, 2, {0.9, 0.2}), CandidateSet{{0}, {}}, 5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9);
  EXPECT_EQ(out[0].best_hypothesis, 10u);
}

TEST(SelectCandidates, TiesByTripleIndex) {
  const Ckg g = graph_of({{"a", "r", "b"}, {"a", "r", "c"}});
  const auto out = select_candidates(g, matrix(2, 1, {0.5, 0.5}), CandidateSet{{0, 1}, {}}, 5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].triple_index, 0u);
  EXPECT_EQ(out[1].triple_index, 1u);
}

TEST(SelectCandidates, MatchesBruteForceOnRandomMatrices) {
  Rng rng(17);
  std::vector<testing::TextTriple> rows;
  for (int i = 0; i < 5; ++i) rows.push_back({"h" + std::to_string(i), "r", "t"});
  const Ckg g = graph_of(rows);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(20);
    for (double& x : s) x = std::round(rng.uniform(-1, 1) * 4) / 4;  // coarse grid forces ties
    const auto u = matrix(5, 4, s);
    const auto out = select_candidates(g, u, CandidateSet{{0, 1, 2, 3, 4}, {}}, 2);
    std::vector<std::pair<double, std::uint32_t>> brute;
    for (std::uint32_t i = 0; i < 5; ++i) brute.emplace_back(*std::max_element(s.begin() + i * 4, s.begin() + i * 4 + 4), i);
    std::sort(brute.begin(), brute.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    ASSERT_EQ(out.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(out[k].triple_index, brute[k].second);
      EXPECT_EQ(out[k].score, brute[k].first);
    }
  }
}

class UnifierProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(UnifierProperty, SelectionInvariants) {
  Rng rng(GetParam());
  const Ckg g = add_inverse_relations(graph_of(testing::random_rows(rng, 2 + rng.below(25), 1 + rng.below(3),
                                                                    1 + rng.below(60))));
  const EmbeddingTable t = hash_embed(g.vocab(), 8, GetParam());
  KnnIndex index(t);
  for (NodeId f = 0; f < g.node_count(); ++f) {
    const std::size_t k_nodes = 1 + rng.below(5), k_triples = 1 + rng.below(6);
    CandidateSet c = gather_candidates(g, index, f, k_nodes);
    if (c.triple_indices.empty()) continue;
    const auto h = build_hypotheses(g, c);
    const auto u = score_matrix(g, t, c, h, f);
    const auto out = select_candidates(g, u, c, k_triples);
    EXPECT_LE(out.size(), std::min(k_triples, c.triple_indices.size()));
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (k > 0) {
        EXPECT_GE(out[k - 1].score, out[k].score);
      }
      const auto row = std::find(c.triple_indices.begin(), c.triple_indices.end(), out[k].triple_index) -
                       c.triple_indices.begin();
      double row_max = -2.0;
      for (std::size_t j = 0; j < u.cols; ++j) {
        EXPECT_GE(u.at(row, j), -1.0);
        EXPECT_LE(u.at(row, j), 1.0);
        row_max = std::max(row_max, u.at(row, j));
      }
      EXPECT_EQ(out[k].score, row_max);
      // The own tail is always a hypothesis, so the row max reduces to the head match.
      EXPECT_EQ(out[k].score, t.similarity(f, out[k].triple.head));
      if (out[k].triple.head == f) {
        EXPECT_EQ(out[k].score, 1.0);
      }
    }

    // Reversing the candidate order changes nothing after selection.
    CandidateSet reversed = c;
    std::reverse(reversed.triple_indices.begin(), reversed.triple_indices.end());
    const auto u2 = score_matrix(g, t, reversed, h, f);
    const auto out2 = select_candidates(g, u2, reversed, k_triples);
    ASSERT_EQ(out2.size(), out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      EXPECT_EQ(out2[k].triple_index, out[k].triple_index);
      EXPECT_EQ(out2[k].score, out[k].score);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, UnifierProperty, ::testing::Range<std::uint64_t>(0, 20));

}  // namespace
}  // namespace ckgr
