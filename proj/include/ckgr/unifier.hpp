#pragma once

// One weak-unification step of backward chaining.
//
// From the frontier node of a partial proof: retrieve its nearest neighbours,
// collect every triple headed by one of them (the candidate set C), take the
// candidates' tails as the hypothesis set H, score each (candidate,
// hypothesis) pair, and keep the best-scoring candidates.
//
// A hypothesis atom r(frontier, h_j) unifies with a candidate r_i(head_i,
// tail_i) with score min(sim(frontier, head_i), sim(tail_i, h_j)), i.e. the
// two argument matches conjoined under the min t-norm. Relation symbols are
// matched exactly, upstream, by the optional relation filter.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ckgr/embedding.hpp"
#include "ckgr/kg_store.hpp"
#include "ckgr/knn.hpp"

namespace ckgr {

struct CandidateSet {
  std::vector<std::uint32_t> triple_indices;  // ascending, unique
  std::vector<NodeId> source_nodes;           // knn order
};

struct UnificationMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;  // row-major rows x cols
  std::vector<NodeId> hypotheses;

  double at(std::size_t i, std::size_t j) const { return scores[i * cols + j]; }
};

struct ScoredCandidate {
  std::uint32_t triple_index = 0;
  Triple triple;
  double score = 0.0;
  NodeId best_hypothesis = 0;
};

/// Union of triples_with_head over the k_nodes nearest neighbours of
/// `frontier`. With `relation` set, only triples of that relation are kept.
CandidateSet gather_candidates(const Ckg& g, const KnnIndex& index, NodeId frontier,
                               std::size_t k_nodes, std::optional<RelationId> relation = std::nullopt);

/// Deduplicated candidate tails, ascending.
std::vector<NodeId> build_hypotheses(const Ckg& g, const CandidateSet& c);

UnificationMatrix score_matrix(const Ckg& g, const EmbeddingTable& table, const CandidateSet& c,
                               std::span<const NodeId> hypotheses, NodeId frontier);

/// Scores each candidate by its row maximum, sorts descending (ties by
/// ascending triple index) and keeps the first k_triples.
std::vector<ScoredCandidate> select_candidates(const Ckg& g, const UnificationMatrix& u,
                                               const CandidateSet& c, std::size_t k_triples);

}  // namespace ckgr
