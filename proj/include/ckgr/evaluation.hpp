#pragma once

// Filtered link-prediction metrics.
//
// Every test triple r(h, t) is scored twice: (h, r, ?) targeting t and
// (t, r^-1, ?) targeting h. Ranks are filtered (other known-true answers are
// removed from the competitors) and pessimistic (the gold entity loses ties).
// A triple's MRR / HITS contribution is the mean of its two directions.

#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ckgr/kg_store.hpp"
#include "ckgr/reasoner.hpp"

namespace ckgr {

enum class Direction { forward, inverse };

struct EvalRecord {
  Query query;
  NodeId gold = 0;
  Direction direction = Direction::forward;
  std::size_t rank = 1;
  bool failed = false;  // query or gold could not be scored
};

/// Rank of `gold` among the keys of `scores`, skipping `valid_others`. A gold
/// absent from `scores` is scored `floor`.
std::size_t filtered_rank(const std::map<NodeId, double>& scores, NodeId gold,
                          const std::set<NodeId>& valid_others,
                          double floor = -std::numeric_limits<double>::infinity());

/// Same rank over a universe of `entity_count` entities where only `answers`
/// carry scores and every other entity sits at the floor (below any answer).
std::size_t filtered_rank_sparse(std::span<const std::pair<NodeId, double>> answers, std::size_t entity_count,
                                 NodeId gold, const std::unordered_set<NodeId>& valid_others);

double mrr(std::span<const std::size_t> ranks);
double hits_at(std::span<const std::size_t> ranks, std::size_t k);

/// Every (head, relation) -> tails completion known to be true, both directions.
class KnownFacts {
 public:
  KnownFacts(const RelationTable& relations) : relations_(&relations) {}
  void add(const Triple& forward);
  void add_all(std::span<const Triple> forward);
  const std::unordered_set<NodeId>& tails(const Query& q) const;

 private:
  const RelationTable* relations_;
  std::map<Query, std::unordered_set<NodeId>> tails_;
  std::unordered_set<NodeId> empty_;
};

class QueryScorer {
 public:
  virtual ~QueryScorer() = default;
  virtual bool can_answer(const Query& q) const = 0;
  /// Scored answers; entities not listed rank below every listed one.
  virtual std::vector<std::pair<NodeId, double>> scores(const Query& q) const = 0;
};

class ReasonerScorer final : public QueryScorer {
 public:
  explicit ReasonerScorer(const Reasoner& reasoner) : reasoner_(&reasoner) {}
  bool can_answer(const Query& q) const override;
  std::vector<std::pair<NodeId, double>> scores(const Query& q) const override;

 private:
  const Reasoner* reasoner_;
};

struct DirectionMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct EvalReport {
  std::size_t triples = 0;
  DirectionMetrics combined;
  DirectionMetrics forward;
  DirectionMetrics inverse;
  std::size_t failures = 0;
  std::vector<EvalRecord> records;  // forward, inverse per triple, in input order
};

struct EvalOptions {
  std::size_t entity_count = 0;  // size of the ranking universe (node ids [0, n))
  std::size_t threads = 1;
};

/// `test` holds forward triples; `relations` must be inverse-augmented.
EvalReport evaluate(const QueryScorer& engine, std::span<const Triple> test, const RelationTable& relations,
                    const KnownFacts& known, const EvalOptions& options);

/// Human-readable block (percentages, 2 decimals) or "key\tvalue" lines.
std::string format_report(const EvalReport& report, bool machine_readable);

struct DatasetStats {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  double avg_in_degree = 0.0;
  double density = 0.0;
  double unseen_node_ratio = 0.0;
  double unseen_edge_ratio = 0.0;
  std::size_t relation_count = 0;
};

/// Statistics over the forward triples of train and test (shared vocabulary).
DatasetStats compute_stats(const Ckg& train, const Ckg& test);
std::string format_stats(const DatasetStats& stats);

/// Test triples with at least one endpoint that never appears in `train`.
std::vector<Triple> carve_unseen_split(const Ckg& train, std::span<const Triple> test);

}  // namespace ckgr
