#include "ckgr/knn.hpp"

#include <algorithm>
#include <cmath>

#include "ckgr/errors.hpp"
#include "ckgr/rng.hpp"
#include "ckgr/simd/kernels.hpp"

namespace ckgr {

namespace {

bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.node < b.node;
}

}  // namespace

void rank_neighbors(std::vector<Neighbor>& items, std::size_t k) {
  k = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(),
                    ranks_before);
  items.resize(k);
}

KnnIndex::KnnIndex(const EmbeddingTable& table, KnnOptions options)
    : table_(&table), options_(options) {
  for (NodeId v = 0; v < table.size(); ++v) {
    if (table.has(v)) rows_.push_back(v);
  }
  if (options_.mode == KnnMode::approximate) build_clusters();
}

void KnnIndex::build_clusters() {
  const std::size_t dim = table_->dim();
  const std::size_t n_clusters = std::max<std::size_t>(1, std::min(options_.clusters, rows_.size()));
  if (rows_.empty()) return;

  // Seed centroids with a seeded sample of distinct rows.
  std::vector<NodeId> order = rows_;
  Rng rng(options_.seed);
  rng.shuffle(order.begin(), order.end());
  centroids_.assign(n_clusters, std::vector<float>(dim));
  for (std::size_t c = 0; c < n_clusters; ++c) {
    auto v = table_->vector(order[c]);
    const double inv = 1.0 / table_->norm(order[c]);
    for (std::size_t i = 0; i < dim; ++i) centroids_[c][i] = static_cast<float>(v[i] * inv);
  }

  std::vector<std::size_t> assignment(rows_.size(), 0);
  auto assign_all = [&] {
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      auto v = table_->vector(rows_[r]);
      std::size_t best = 0;
      double best_score = -2.0;
      for (std::size_t c = 0; c < centroids_.size(); ++c) {
        const double s = simd::dot(v.data(), centroids_[c].data(), dim);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      assignment[r] = best;
    }
  };

  for (std::size_t it = 0; it < options_.kmeans_iterations; ++it) {
    assign_all();
    std::vector<std::vector<double>> sums(centroids_.size(), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(centroids_.size(), 0);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      auto v = table_->vector(rows_[r]);
      const double inv = 1.0 / table_->norm(rows_[r]);
      for (std::size_t i = 0; i < dim; ++i) sums[assignment[r]][i] += v[i] * inv;
      ++counts[assignment[r]];
    }
    for (std::size_t c = 0; c < centroids_.size(); ++c) {
      if (counts[c] == 0) continue;  // keep the previous centroid for empty clusters
      double sq = 0.0;
      for (double x : sums[c]) sq += x * x;
      if (!(sq > 0.0)) continue;
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t i = 0; i < dim; ++i) centroids_[c][i] = static_cast<float>(sums[c][i] * inv);
    }
  }
  assign_all();
  members_.assign(centroids_.size(), {});
  for (std::size_t r = 0; r < rows_.size(); ++r) members_[assignment[r]].push_back(rows_[r]);
}

std::vector<NodeId> KnnIndex::candidate_rows(std::span<const float> query, double query_norm) const {
  if (options_.mode == KnnMode::exact) return rows_;
  std::vector<Neighbor> cluster_scores;
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    cluster_scores.push_back(
        Neighbor{static_cast<NodeId>(c),
                 simd::dot(query.data(), centroids_[c].data(), query.size()) / query_norm});
  }
  rank_neighbors(cluster_scores, std::max<std::size_t>(1, options_.probes));
  std::vector<NodeId> out;
  for (const auto& c : cluster_scores) {
    out.insert(out.end(), members_[c.node].begin(), members_[c.node].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Neighbor> KnnIndex::search(std::span<const float> query, std::size_t k) const {
  if (rows_.empty()) throw LookupError("knn: embedding table is empty");
  if (query.size() != table_->dim()) {
    throw ShapeError("knn: query has length " + std::to_string(query.size()) + ", table dim is " +
                     std::to_string(table_->dim()));
  }
  if (k == 0) throw DomainError("knn: k must be positive");
  const double qn = std::sqrt(simd::squared_norm(query.data(), query.size()));
  if (!(qn > 0.0)) throw DomainError("knn: zero-norm query");

  const std::vector<NodeId> rows = candidate_rows(query, qn);
  std::vector<Neighbor> scored;
  scored.reserve(rows.size());
  const auto data = table_->data();
  const auto norms = table_->norms();
  const std::size_t dim = table_->dim();
  if (options_.mode == KnnMode::exact && rows.size() == table_->size()) {
    // Dense table: one pass of the batched kernel.
    std::vector<double> dots(rows.size());
    simd::dot_rows(query.data(), data.data(), rows.size(), dim, dots.data());
    for (NodeId v : rows) {
      scored.push_back(Neighbor{v, std::clamp(dots[v] / (qn * norms[v]), -1.0, 1.0)});
    }
  } else {
    for (NodeId v : rows) {
      const double d = simd::dot(query.data(), data.data() + v * dim, dim);
      scored.push_back(Neighbor{v, std::clamp(d / (qn * norms[v]), -1.0, 1.0)});
    }
  }
  rank_neighbors(scored, k);
  return scored;
}

std::vector<Neighbor> KnnIndex::search_node(NodeId node, std::size_t k) const {
  if (!table_->has(node)) throw DomainError("knn: node " + std::to_string(node) + " has no embedding");
  if (k == 0) throw DomainError("knn: k must be positive");
  const auto query = table_->vector(node);
  const std::vector<NodeId> rows = candidate_rows(query, table_->norm(node));
  std::vector<Neighbor> scored;
  scored.reserve(rows.size() + 1);
  bool self_seen = false;
  for (NodeId v : rows) {
    scored.push_back(Neighbor{v, table_->similarity(node, v)});
    self_seen = self_seen || v == node;
  }
  if (!self_seen) scored.push_back(Neighbor{node, 1.0});
  rank_neighbors(scored, k);
  return scored;
}

double measure_recall(const KnnIndex& approx, const KnnIndex& exact, std::span<const NodeId> queries,
                      std::size_t k) {
  if (queries.empty()) return 1.0;
  double total = 0.0;
  for (NodeId q : queries) {
    auto truth = exact.search_node(q, k);
    auto found = approx.search_node(q, k);
    std::size_t hit = 0;
    for (const auto& t : truth) {
      hit += std::any_of(found.begin(), found.end(), [&](const Neighbor& f) { return f.node == t.node; });
    }
    total += static_cast<double>(hit) / static_cast<double>(truth.size());
  }
  return total / static_cast<double>(queries.size());
}

}  // namespace ckgr
