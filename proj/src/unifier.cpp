#include "ckgr/unifier.hpp"

#include <algorithm>

#include "ckgr/errors.hpp"

namespace ckgr {

CandidateSet gather_candidates(const Ckg& g, const KnnIndex& index, NodeId frontier,
                               std::size_t k_nodes, std::optional<RelationId> relation) {
  CandidateSet c;
  for (const Neighbor& n : index.search_node(frontier, k_nodes)) {
    c.source_nodes.push_back(n.node);
    if (n.node >= g.node_count()) continue;
    for (std::uint32_t i : g.head_index(n.node)) {
      if (!relation || g.triple(i).relation == *relation) c.triple_indices.push_back(i);
    }
  }
  std::sort(c.triple_indices.begin(), c.triple_indices.end());
  c.triple_indices.erase(std::unique(c.triple_indices.begin(), c.triple_indices.end()),
                         c.triple_indices.end());
  return c;
}

std::vector<NodeId> build_hypotheses(const Ckg& g, const CandidateSet& c) {
  std::vector<NodeId> h;
  h.reserve(c.triple_indices.size());
  for (std::uint32_t i : c.triple_indices) h.push_back(g.triple(i).tail);
  std::sort(h.begin(), h.end());
  h.erase(std::unique(h.begin(), h.end()), h.end());
  return h;
}

UnificationMatrix score_matrix(const Ckg& g, const EmbeddingTable& table, const CandidateSet& c,
                               std::span<const NodeId> hypotheses, NodeId frontier) {
  if (c.triple_indices.empty() || hypotheses.empty()) {
    throw DomainError("score_matrix: empty candidate or hypothesis set");
  }
  UnificationMatrix u;
  u.rows = c.triple_indices.size();
  u.cols = hypotheses.size();
  u.hypotheses.assign(hypotheses.begin(), hypotheses.end());
  u.scores.resize(u.rows * u.cols);
  for (std::size_t i = 0; i < u.rows; ++i) {
    const Triple& t = g.triple(c.triple_indices[i]);
    const double head_match = table.similarity(frontier, t.head);
    for (std::size_t j = 0; j < u.cols; ++j) {
      u.scores[i * u.cols + j] = std::min(head_match, table.similarity(t.tail, hypotheses[j]));
    }
  }
  return u;
}

std::vector<ScoredCandidate> select_candidates(const Ckg& g, const UnificationMatrix& u,
                                               const CandidateSet& c, std::size_t k_triples) {
  if (u.rows != c.triple_indices.size()) {
    throw ShapeError("select_candidates: matrix rows do not match candidate count");
  }
  std::vector<ScoredCandidate> out;
  out.reserve(u.rows);
  for (std::size_t i = 0; i < u.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < u.cols; ++j) {
      if (u.at(i, j) > u.at(i, best)) best = j;
    }
    const std::uint32_t idx = c.triple_indices[i];
    out.push_back(ScoredCandidate{idx, g.triple(idx), u.cols ? u.at(i, best) : 0.0,
                                  u.cols ? u.hypotheses[best] : 0});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.triple_index < b.triple_index;
  });
  if (out.size() > k_triples) out.resize(k_triples);
  return out;
}

}  // namespace ckgr
