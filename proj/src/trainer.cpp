#include "ckgr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ckgr/errors.hpp"
#include "ckgr/knn.hpp"
#include "ckgr/rng.hpp"

namespace ckgr {

std::vector<GoldQuery> make_gold_queries(std::span<const Triple> forward, const RelationTable& relations) {
  std::map<Query, std::vector<NodeId>> merged;
  for (const Triple& t : forward) {
    merged[Query{t.relation, t.head}].push_back(t.tail);
    merged[Query{relations.inverse(t.relation), t.tail}].push_back(t.head);
  }
  std::vector<GoldQuery> out;
  out.reserve(merged.size());
  for (auto& [q, golds] : merged) {
    std::sort(golds.begin(), golds.end());
    golds.erase(std::unique(golds.begin(), golds.end()), golds.end());
    out.push_back(GoldQuery{q, std::move(golds)});
  }
  return out;
}

double answer_loss(std::span<const double> positive_probs, std::span<const double> negative_probs) {
  double loss = 0.0;
  for (double p : positive_probs) loss -= std::log(p);
  for (double p : negative_probs) loss -= std::log(1.0 - p);
  return loss;
}

std::vector<std::uint32_t> gold_edge_mask(const Ckg& g, const GoldQuery& q) {
  std::vector<std::uint32_t> out;
  if (q.query.head < g.node_count()) {
    for (std::uint32_t i : g.head_index(q.query.head)) {
      const Triple& t = g.triple(i);
      if (t.relation == q.query.relation && std::binary_search(q.golds.begin(), q.golds.end(), t.tail)) {
        out.push_back(i);
      }
    }
  }
  if (g.relations().augmented()) {
    const RelationId inv = g.relations().inverse(q.query.relation);
    for (NodeId gold : q.golds) {
      if (gold >= g.node_count()) continue;
      for (std::uint32_t i : g.head_index(gold)) {
        const Triple& t = g.triple(i);
        if (t.relation == inv && t.tail == q.query.head) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void LearningRateSchedule::observe(double dev_loss, bool perfect) {
  if (!perfect && !(dev_loss < previous_)) lr_ *= decay_;
  previous_ = dev_loss;
}

Matrix identity_matrix(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

EmbeddingTable apply_adapter(const EmbeddingTable& table, const Matrix& adapter) {
  const std::size_t d = table.dim();
  if (adapter.rows != d || adapter.cols != d) throw ShapeError("adapter shape does not match embedding dim");
  EmbeddingTable out(table.size(), d);
  std::vector<float> y(d);
  for (NodeId v = 0; v < table.size(); ++v) {
    if (!table.has(v)) continue;
    auto x = table.vector(v);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += adapter(r, c) * x[c];
      y[r] = static_cast<float>(acc);
    }
    out.set(v, y);
  }
  return out;
}

namespace {

// d cos(Au, Av) / dA, scaled by `upstream`, added into `grad`.
void add_cosine_grad(std::span<const float> u, std::span<const float> v, const Matrix& a, double upstream,
                     Matrix& grad) {
  const std::size_t d = u.size();
  std::vector<double> x(d, 0.0), y(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      x[r] += a(r, c) * u[c];
      y[r] += a(r, c) * v[c];
    }
  }
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
    xy += x[i] * y[i];
  }
  const double nx = std::sqrt(xx), ny = std::sqrt(yy);
  const double cos = xy / (nx * ny);
  if (cos >= 1.0 || cos <= -1.0) return;  // clamped in the forward pass
  for (std::size_t r = 0; r < d; ++r) {
    const double gx = (y[r] / (nx * ny) - cos * x[r] / xx) * upstream;
    const double gy = (x[r] / (nx * ny) - cos * y[r] / yy) * upstream;
    for (std::size_t c = 0; c < d; ++c) grad(r, c) += gx * u[c] + gy * v[c];
  }
}

// Routes d loss / d score of one answer to the adapter through the proof's
// weakest step (lowest index on ties).
void backprop_answer(const RankedAnswer& a, double dloss_dscore, const EmbeddingTable& base, const Matrix& adapter,
                     Matrix& grad) {
  const ProofState& p = a.proof;
  const std::size_t k = p.weakest_step();
  const NodeId frontier = k == 0 ? a.query.head : p.steps[k - 1].triple.tail;
  const NodeId head = p.steps[k].triple.head;
  if (frontier == head) return;  // exact match scores a constant 1
  add_cosine_grad(base.vector(frontier), base.vector(head), adapter, dloss_dscore, grad);
}

bool upper_clamped(double score) { return squash(score) >= 1.0 - kProbabilityFloor; }
bool lower_clamped(double score) { return squash(score) <= kProbabilityFloor; }

}  // namespace

QueryLoss query_loss(const Reasoner& reasoner, const GoldQuery& q, std::span<const std::uint32_t> masked,
                     const std::unordered_set<NodeId>& known_tails, const EmbeddingTable* base,
                     const Matrix* adapter, Matrix* adapter_grad) {
  const auto proofs = reasoner.prove(q.query, SearchOptions{reasoner.config().top_m_relations, masked});
  const auto answers = reasoner.rank(q.query, proofs);

  std::vector<double> pos, neg;
  bool perfect = true;
  for (NodeId gold : q.golds) {
    auto it = std::find_if(answers.begin(), answers.end(), [&](const RankedAnswer& a) { return a.tail == gold; });
    if (it == answers.end()) {
      pos.push_back(kProbabilityFloor);
      perfect = false;
      continue;
    }
    const double p = squash(it->score);
    pos.push_back(p);
    perfect = perfect && upper_clamped(it->score);
    if (adapter_grad && !upper_clamped(it->score) && !lower_clamped(it->score)) {
      backprop_answer(*it, -1.0 / p * 0.5, *base, *adapter, *adapter_grad);
    }
  }
  for (const RankedAnswer& a : answers) {
    if (std::binary_search(q.golds.begin(), q.golds.end(), a.tail) || known_tails.count(a.tail)) continue;
    const double p = squash(a.score);
    neg.push_back(p);
    perfect = false;
    if (adapter_grad && !upper_clamped(a.score) && !lower_clamped(a.score)) {
      backprop_answer(a, 1.0 / (1.0 - p) * 0.5, *base, *adapter, *adapter_grad);
    }
  }
  return QueryLoss{answer_loss(pos, neg), perfect};
}

PredictorDims predictor_dims(const ReasonerConfig& cfg, const Ckg& graph) {
  return PredictorDims{graph.relations().size(), cfg.relation_dim, cfg.step_dim, cfg.hidden, cfg.max_depth};
}

namespace {

std::unordered_set<NodeId> graph_tails(const Ckg& g, const Query& q) {
  std::unordered_set<NodeId> out;
  if (q.head >= g.node_count()) return out;
  for (std::uint32_t i : g.head_index(q.head)) {
    if (g.triple(i).relation == q.relation) out.insert(g.triple(i).tail);
  }
  return out;
}

struct PreparedQuery {
  GoldQuery gold;
  std::vector<std::uint32_t> mask;
  std::unordered_set<NodeId> known;
};

std::vector<PreparedQuery> prepare(const Ckg& g, const EmbeddingTable& table, std::span<const Triple> triples) {
  std::vector<PreparedQuery> out;
  for (auto& gq : make_gold_queries(triples, g.relations())) {
    if (!table.has(gq.query.head)) continue;  // cannot be searched
    PreparedQuery p{gq, gold_edge_mask(g, gq), graph_tails(g, gq.query)};
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RelationExample> harvest(const Reasoner& reasoner, std::span<const PreparedQuery> queries,
                                     std::size_t explore_m) {
  std::vector<RelationPath> paths;
  for (const PreparedQuery& pq : queries) {
    const auto proofs = reasoner.prove(pq.gold.query, SearchOptions{explore_m, pq.mask});
    for (NodeId gold : pq.gold.golds) {
      const ProofState* best = nullptr;
      for (const ProofState& p : proofs) {
        if (p.steps.back().triple.tail != gold) continue;
        if (!best || p.score > best->score) best = &p;
      }
      if (!best) continue;
      RelationPath path{pq.gold.query.relation, {}};
      for (const ProofStep& s : best->steps) path.body.push_back(s.triple.relation);
      paths.push_back(std::move(path));
    }
  }
  return extract_training_sequences(paths);
}

struct LossSummary {
  double mean = 0.0;
  bool perfect = true;
};

LossSummary mean_loss(const Reasoner& reasoner, std::span<const PreparedQuery> queries, const char* split,
                      std::size_t epoch, const EmbeddingTable* base, const Matrix* adapter, Matrix* grad) {
  LossSummary s;
  if (queries.empty()) return s;
  double total = 0.0;
  for (const PreparedQuery& pq : queries) {
    const QueryLoss l = query_loss(reasoner, pq.gold, pq.mask, pq.known, base, adapter, grad);
    if (!std::isfinite(l.loss)) {
      const Ckg& g = reasoner.graph();
      std::ostringstream os;
      os << "non-finite " << split << " loss at epoch " << epoch << " on query "
         << g.relations().display_name(pq.gold.query.relation) << "(" << g.node_text(pq.gold.query.head) << ", ?)";
      throw NumericalError(os.str());
    }
    total += l.loss;
    s.perfect = s.perfect && l.perfect;
  }
  s.mean = total / static_cast<double>(queries.size());
  return s;
}

}  // namespace

TrainResult train_reasoner(const TrainInputs& in, const ReasonerConfig& cfg,
                           const std::function<void(const EpochDiagnostics&)>& on_epoch) {
  cfg.validate();
  if (!in.graph || !in.table) throw DomainError("train_reasoner: graph and embeddings are required");
  const Ckg& g = *in.graph;
  if (!g.relations().augmented()) throw DomainError("train_reasoner: graph must carry inverse relations");

  Rng rng(cfg.seed);
  TrainResult result{PredictorParams::random(predictor_dims(cfg, g), rng), std::nullopt, 0.0, {}};
  if (cfg.adapter_enabled) result.adapter = identity_matrix(in.table->dim());

  const auto train_queries = prepare(g, *in.table, in.train);
  const auto dev_queries = prepare(g, *in.table, in.dev);
  const std::size_t explore_m = cfg.train_top_m;
  KnnOptions knn_options{cfg.knn_mode, cfg.knn_clusters, cfg.knn_probes, 10, cfg.seed};

  // Search structures; rebuilt each epoch only when the adapter moves the vectors.
  EmbeddingTable adapted;
  const EmbeddingTable* active = in.table;
  if (result.adapter) {
    adapted = apply_adapter(*in.table, *result.adapter);
    active = &adapted;
  }
  auto index = std::make_unique<KnnIndex>(*active, knn_options);

  {
    Reasoner r(g, *active, *index, result.params, cfg);
    result.initial_dev_loss = mean_loss(r, dev_queries, "dev", 0, nullptr, nullptr, nullptr).mean;
  }

  std::vector<RelationExample> examples;
  bool harvested = false;
  LearningRateSchedule schedule(cfg.learning_rate, cfg.lr_decay);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochDiagnostics diag;
    diag.epoch = epoch;

    if (!harvested || result.adapter) {
      Reasoner r(g, *active, *index, result.params, cfg);
      examples = harvest(r, train_queries, explore_m);
      harvested = true;
    }
    diag.examples = examples.size();

    if (!examples.empty()) {
      rng.shuffle(examples.begin(), examples.end());
      double total = 0.0;
      for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, examples.size() - start);
        std::span<const RelationExample> batch(examples.data() + start, n);
        LossAndGrad lg = predictor_loss_and_grad(result.params, batch);
        if (!std::isfinite(lg.loss)) {
          throw NumericalError("non-finite predictor loss at epoch " + std::to_string(epoch));
        }
        total += lg.loss * static_cast<double>(n);
        diag.clamped += lg.clamped;
        sgd_step(result.params, lg.grad, schedule.rate());
      }
      diag.predictor_loss = total / static_cast<double>(examples.size());
    }

    {
      Reasoner r(g, *active, *index, result.params, cfg);
      Matrix grad;
      if (result.adapter) grad = Matrix(result.adapter->rows, result.adapter->cols);
      const auto train = mean_loss(r, train_queries, "train", epoch, in.table,
                                   result.adapter ? &*result.adapter : nullptr, result.adapter ? &grad : nullptr);
      diag.train_loss = train.mean;
      if (result.adapter && !train_queries.empty()) {
        const double scale = cfg.adapter_learning_rate / static_cast<double>(train_queries.size());
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
          if (!std::isfinite(grad.data[i])) {
            throw NumericalError("non-finite adapter gradient at epoch " + std::to_string(epoch));
          }
          result.adapter->data[i] -= scale * grad.data[i];
        }
        adapted = apply_adapter(*in.table, *result.adapter);
        index = std::make_unique<KnnIndex>(adapted, knn_options);
      }
    }

    {
      Reasoner r(g, *active, *index, result.params, cfg);
      const auto dev = mean_loss(r, dev_queries, "dev", epoch, nullptr, nullptr, nullptr);
      diag.dev_loss = dev.mean;
      diag.perfect = dev.perfect && !dev_queries.empty();
      schedule.observe(dev.mean, diag.perfect);
    }
    diag.learning_rate = schedule.rate();
    result.history.push_back(diag);
    if (on_epoch) on_epoch(diag);
  }
  return result;
}

}  // namespace ckgr
