#pragma once

// Cosine k-nearest-neighbour retrieval over an EmbeddingTable.
//
// Exact mode scans every stored row and is the correctness reference.
// Approximate mode is an inverted-file index: rows are assigned to spherical
// k-means centroids and a query scans only the members of its closest
// `probes` clusters. Its recall against exact mode is measured with
// measure_recall(), never assumed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ckgr/embedding.hpp"

namespace ckgr {

struct Neighbor {
  NodeId node = 0;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

enum class KnnMode { exact, approximate };

struct KnnOptions {
  KnnMode mode = KnnMode::exact;
  std::size_t clusters = 64;
  std::size_t probes = 8;
  std::size_t kmeans_iterations = 10;
  std::uint64_t seed = 0;
};

class KnnIndex {
 public:
  explicit KnnIndex(const EmbeddingTable& table, KnnOptions options = {});

  const EmbeddingTable& table() const { return *table_; }
  KnnMode mode() const { return options_.mode; }

  /// Top min(k, |rows|) rows by cosine to `query`: descending score, ties by
  /// ascending NodeId.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k) const;

  /// Neighbours of a stored node. Scores use EmbeddingTable::similarity, so
  /// the node itself scores exactly 1.
  std::vector<Neighbor> search_node(NodeId node, std::size_t k) const;

 private:
  std::vector<NodeId> candidate_rows(std::span<const float> query, double query_norm) const;
  void build_clusters();

  const EmbeddingTable* table_;
  KnnOptions options_;
  std::vector<NodeId> rows_;  // present rows, ascending
  std::vector<std::vector<float>> centroids_;
  std::vector<std::vector<NodeId>> members_;
};

/// Sorts by descending score then ascending node and keeps the first k.
void rank_neighbors(std::vector<Neighbor>& items, std::size_t k);

/// Mean fraction of the exact top-k recovered by `approx`, over `queries`.
double measure_recall(const KnnIndex& approx, const KnnIndex& exact, std::span<const NodeId> queries,
                      std::size_t k);

}  // namespace ckgr
