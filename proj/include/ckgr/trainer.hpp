#pragma once

// Training driver.
//
// Each training triple r(h, t) becomes the query r(h, ?) with gold t, and its
// inverse r^-1(t, ?) with gold h; queries sharing (relation, head) are merged
// with the union of their golds. While a training query is searched, the
// graph edges that directly state its golds are hidden so the proofs found
// have to go through other facts.
//
// Per epoch:
//  * proofs reaching each gold are harvested with every relation explored,
//    and the best one per gold is unrolled into teacher-forcing examples for
//    the relation predictor (shuffled mini-batches, plain SGD);
//  * the cross-entropy over answer probabilities (gold answers vs. surfaced
//    answers that are not known facts) is measured on the training and dev
//    queries under the inference search; when the linear node-embedding
//    adapter is enabled its gradient is taken through the min/max scoring;
//  * the learning rate is multiplied by lr_decay whenever the dev loss fails
//    to decrease.
//
// Node embeddings themselves stay frozen.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "ckgr/config.hpp"
#include "ckgr/embedding.hpp"
#include "ckgr/kg_store.hpp"
#include "ckgr/reasoner.hpp"
#include "ckgr/relation_predictor.hpp"

namespace ckgr {

struct GoldQuery {
  Query query;
  std::vector<NodeId> golds;  // ascending
};

/// Both directions of every forward triple, merged per (relation, head), sorted by query.
std::vector<GoldQuery> make_gold_queries(std::span<const Triple> forward, const RelationTable& relations);

/// -sum log p over positives - sum log(1 - p) over negatives.
double answer_loss(std::span<const double> positive_probs, std::span<const double> negative_probs);

/// Indices of the graph triples that state some gold of `q` directly, in either direction (sorted).
std::vector<std::uint32_t> gold_edge_mask(const Ckg& g, const GoldQuery& q);

class LearningRateSchedule {
 public:
  LearningRateSchedule(double initial, double decay) : lr_(initial), decay_(decay) {}

  double rate() const { return lr_; }

  /// Records one epoch's dev loss; decays the rate if it did not decrease.
  /// A perfect epoch (nothing left to improve) never decays.
  void observe(double dev_loss, bool perfect);

 private:
  double lr_;
  double decay_;
  double previous_ = std::numeric_limits<double>::infinity();
};

/// y = adapter * x for every present row.
EmbeddingTable apply_adapter(const EmbeddingTable& table, const Matrix& adapter);

Matrix identity_matrix(std::size_t n);

struct QueryLoss {
  double loss = 0.0;
  bool perfect = false;  // every gold found at the top probability, no negatives surfaced
};

/// Answer cross-entropy of one query under the reasoner's inference search. Negatives
/// are surfaced answers outside `golds` and `known_tails`. When
/// `adapter_grad` is given, accumulates d loss / d adapter, where `base` holds
/// the unadapted vectors and `adapter` the matrix in use.
QueryLoss query_loss(const Reasoner& reasoner, const GoldQuery& q, std::span<const std::uint32_t> masked,
                     const std::unordered_set<NodeId>& known_tails, const EmbeddingTable* base = nullptr,
                     const Matrix* adapter = nullptr, Matrix* adapter_grad = nullptr);

struct EpochDiagnostics {
  std::size_t epoch = 0;
  double train_loss = 0.0;      // mean answer cross-entropy per training query
  double dev_loss = 0.0;        // mean answer cross-entropy per dev query
  double predictor_loss = 0.0;  // mean teacher-forcing loss
  double learning_rate = 0.0;   // rate in effect for the next epoch
  std::size_t examples = 0;     // harvested relation examples
  std::size_t clamped = 0;
  bool perfect = false;
};

struct TrainResult {
  PredictorParams params;
  std::optional<Matrix> adapter;
  double initial_dev_loss = 0.0;
  std::vector<EpochDiagnostics> history;
};

struct TrainInputs {
  const Ckg* graph = nullptr;  // inverse-augmented search graph
  const EmbeddingTable* table = nullptr;
  std::span<const Triple> train;  // forward triples used as training queries
  std::span<const Triple> dev;    // forward triples used for the dev loss
};

/// Predictor dimensions implied by a config and a graph.
PredictorDims predictor_dims(const ReasonerConfig& cfg, const Ckg& graph);

TrainResult train_reasoner(const TrainInputs& inputs, const ReasonerConfig& cfg,
                           const std::function<void(const EpochDiagnostics&)>& on_epoch = {});

}  // namespace ckgr
