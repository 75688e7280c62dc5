#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckgr/kg_store.hpp"

namespace ckgr {

/// Cosine similarity <u, v> / (|u| |v|), accumulated in double precision.
/// Throws ShapeError on length mismatch and DomainError on a zero-norm input.
double cosine(std::span<const float> u, std::span<const float> v);

/// Dense float32 vectors indexed by NodeId, with cached norms.
///
/// Rows may be absent (a node with no embedding); every accessor that needs a
/// vector throws LookupError for such rows.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t node_count, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return present_.size(); }
  std::size_t present_count() const { return present_count_; }

  bool has(NodeId id) const { return id < present_.size() && present_[id]; }

  /// Stores `values` as the vector of `id`, growing the table if needed.
  void set(NodeId id, std::span<const float> values);

  std::span<const float> vector(NodeId id) const;
  double norm(NodeId id) const;

  /// Contiguous row-major storage (absent rows are zero).
  std::span<const float> data() const { return data_; }
  std::span<const double> norms() const { return norms_; }

  /// Cosine between two stored nodes, clamped to [-1, 1]. A node compared
  /// with itself scores exactly 1.
  double similarity(NodeId a, NodeId b) const;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::vector<bool> present_;
  std::size_t present_count_ = 0;
};

struct EmbeddingLoadOptions {
  /// Intern texts unknown to the vocabulary instead of rejecting them.
  bool extend_vocabulary = false;
  /// Node ids [0, n) that must receive a vector; nullopt means every node.
  std::optional<std::size_t> require_nodes_below;
};

/// Parses the embedding file format: a "<n> <d>" header followed by n
/// two-line records (node text, then d space-separated decimals).
EmbeddingTable load_embeddings(const std::filesystem::path& path, Vocabulary& vocab,
                               const EmbeddingLoadOptions& options = {});
EmbeddingTable parse_embeddings(std::string_view text, Vocabulary& vocab,
                                const EmbeddingLoadOptions& options = {},
                                std::string_view source = "<memory>");

/// Writes every present row, decimals rendered with 9 significant digits.
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     const Vocabulary& vocab);
std::string format_embeddings(const EmbeddingTable& table, const Vocabulary& vocab);

/// Deterministic pseudo-random unit vectors keyed on (node text, seed).
EmbeddingTable hash_embed(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

/// Renders `value` with 9 significant digits (round-trips float32 exactly).
std::string format_float(float value);

}  // namespace ckgr
