#pragma once

// Engine knobs and the flat "key = value" config format.
//
// Precedence when assembling an effective config: command-line override >
// ENGINE_<KEY> environment variable > config file > built-in default.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ckgr/knn.hpp"

namespace ckgr {

struct ReasonerConfig {
  std::size_t max_depth = 3;
  std::size_t k_nodes = 10;
  std::size_t k_triples = 10;
  std::size_t k_answers = 50;
  std::size_t beam_width = 32;
  std::size_t top_m_relations = 1;
  bool relation_filter = true;
  bool allow_revisit = false;
  std::uint64_t seed = 0;

  // Training.
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  double lr_decay = 0.9;
  std::size_t batch_size = 32;
  std::size_t train_top_m = 0;  // relations explored when harvesting proofs; 0 = all
  bool adapter_enabled = false;
  double adapter_learning_rate = 1e-3;

  // Embeddings and predictor shape.
  std::size_t embedding_dim = 64;  // hash embeddings only; file embeddings carry their own
  std::size_t relation_dim = 64;
  std::size_t step_dim = 64;
  std::size_t hidden = 256;

  // Neighbour index.
  KnnMode knn_mode = KnnMode::exact;
  std::size_t knn_clusters = 64;
  std::size_t knn_probes = 8;

  /// Checks the invariants (counts >= 1, 0 < lr_decay <= 1, ...).
  void validate() const;

  /// Applies one key/value pair; throws ParseError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  /// Canonical "key = value" lines for every knob, in a fixed order.
  std::string render() const;

  static const std::vector<std::string>& keys();
};

/// Parses "key = value" lines ('#' starts a comment). Errors carry line numbers.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   std::string_view source);

/// Assembles the effective config from file, environment and overrides.
ReasonerConfig resolve_config(const std::filesystem::path* config_file,
                              const std::vector<std::pair<std::string, std::string>>& overrides,
                              bool use_environment = true);

}  // namespace ckgr
