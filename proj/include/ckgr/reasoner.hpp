#pragma once

// Backward-chaining reasoner.
//
// A query r_q(h_q, ?) starts the rule r_q(X, Y) with X bound to h_q. At each
// depth the relation predictor proposes the next body relation, the unifier
// weakly matches an atom of that relation against the graph around the
// current frontier node, and each surviving candidate extends the proof. A
// proof scores the minimum of its unification scores; answers are the final
// tails of the best proofs, one entry per distinct tail.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ckgr/config.hpp"
#include "ckgr/embedding.hpp"
#include "ckgr/kg_store.hpp"
#include "ckgr/knn.hpp"
#include "ckgr/relation_predictor.hpp"

namespace ckgr {

struct Query {
  RelationId relation = 0;
  NodeId head = 0;

  friend bool operator==(const Query&, const Query&) = default;
  friend auto operator<=>(const Query&, const Query&) = default;
};

struct ProofStep {
  RelationId predicted = 0;
  std::uint32_t triple_index = 0;
  Triple triple;
  double score = 0.0;
};

struct ProofState {
  NodeId frontier = 0;
  std::vector<ProofStep> steps;
  double score = std::numeric_limits<double>::infinity();  // min over steps; +inf when empty

  std::size_t depth() const { return steps.size(); }
  /// Index of the step attaining the minimum (lowest index on ties).
  std::size_t weakest_step() const;
};

struct RankedAnswer {
  Query query;
  NodeId tail = 0;
  double score = 0.0;
  ProofState proof;
};

/// Maps a cosine-range score to a probability: clamp((s + 1) / 2, 1e-6, 1 - 1e-6).
double squash(double score);
inline constexpr double kProbabilityFloor = 1e-6;

struct SearchOptions {
  /// Relations proposed per expansion; 0 means every relation.
  std::size_t top_m = 0;
  /// Triple indices hidden from the search (sorted ascending).
  std::span<const std::uint32_t> masked;
};

class Reasoner {
 public:
  Reasoner(const Ckg& graph, const EmbeddingTable& table, const KnnIndex& index,
           const PredictorParams& params, ReasonerConfig cfg);

  const Ckg& graph() const { return *graph_; }
  const ReasonerConfig& config() const { return cfg_; }

  /// Ranked answers under the configured search.
  std::vector<RankedAnswer> answer(const Query& q) const;

  /// Every proof that survived the beam, in depth order then beam order.
  std::vector<ProofState> prove(const Query& q, const SearchOptions& options) const;

  /// Collapses proofs to one answer per tail and ranks them.
  std::vector<RankedAnswer> rank(const Query& q, std::span<const ProofState> proofs) const;

  /// squash(score of `target`), or the probability floor when no proof reaches it.
  double score_answer(const Query& q, NodeId target) const;

 private:
  void check_query(const Query& q) const;

  const Ckg* graph_;
  const EmbeddingTable* table_;
  const KnnIndex* index_;
  const PredictorParams* params_;
  ReasonerConfig cfg_;
};

std::vector<RankedAnswer> answer_query(const Ckg& g, const KnnIndex& index, const EmbeddingTable& table,
                                       const PredictorParams& params, const Query& q,
                                       const ReasonerConfig& cfg);

double score_query_answer(const Ckg& g, const KnnIndex& index, const EmbeddingTable& table,
                          const PredictorParams& params, const Query& q, NodeId target,
                          const ReasonerConfig& cfg);

// ---------------------------------------------------------------------------
// Explanations

/// A proof with ids resolved to text, independent of any loaded graph.
struct ProofRecord {
  struct Step {
    std::string relation;  // display name, "^-1" for inverses
    std::string head;
    std::string tail;
    double score = 0.0;
  };
  std::string query_relation;
  std::string query_head;
  double score = 0.0;
  std::vector<Step> steps;
};

ProofRecord to_record(const Ckg& g, const RankedAnswer& answer);

/// "q(X,Y) :- r0(X,Z), r1(Z,Y)".
std::string render_rule(const ProofRecord& record);

/// "a —r→ b —s→ c"; a weakly unified head shows as "frontier ≈ head".
std::string render_path(const ProofRecord& record);

/// Three lines: rule, instantiated path, concluded edge.
std::string explain(const ProofRecord& record);
std::string explain(const Ckg& g, const RankedAnswer& answer);

/// "<rule> | <path>"; the proof column of answer output.
std::string explain_line(const ProofRecord& record);

/// "<rank>\t<score, 6 decimals>\t<tail text>\t<explain_line>".
std::string format_answer_line(std::size_t rank, const Ckg& g, const RankedAnswer& answer);

/// Proof files: one tab-separated record per line.
std::string format_proof_record(const ProofRecord& record);
std::vector<ProofRecord> parse_proof_file(std::string_view text, std::string_view source = "<memory>");

}  // namespace ckgr
