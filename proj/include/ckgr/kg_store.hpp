#pragma once

// Triple storage for a commonsense knowledge graph.
//
// Node texts and forward relation names live in a Vocabulary that several
// graphs (train, dev, test) may share, so that every split resolves the same
// text to the same id. A Ckg owns its triple list, its relation table and a
// CSR-style head index.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ckgr {

using NodeId = std::uint32_t;
using RelationId = std::uint32_t;

class Vocabulary {
 public:
  NodeId intern_node(std::string_view text);
  RelationId intern_relation(std::string_view name);

  std::size_t node_count() const { return node_texts_.size(); }
  std::size_t relation_count() const { return relation_names_.size(); }

  const std::string& node_text(NodeId id) const;
  const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }

  std::optional<NodeId> find_node(std::string_view text) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

 private:
  std::vector<std::string> node_texts_;
  std::unordered_map<std::string, NodeId> node_ids_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, RelationId> relation_ids_;
};

struct Relation {
  std::string name;  // base name; inverse rendering appends "^-1"
  bool is_inverse = false;
  RelationId inverse_of = 0;
};

/// Forward relations occupy ids [0, F); after augmentation inverses occupy
/// [F, 2F) with inverse_of(r) = r + F.
class RelationTable {
 public:
  RelationTable() = default;
  explicit RelationTable(const Vocabulary& vocab);

  std::size_t size() const { return relations_.size(); }
  std::size_t forward_count() const { return forward_count_; }
  bool augmented() const { return augmented_; }

  const Relation& operator[](RelationId id) const { return relations_.at(id); }
  bool is_inverse(RelationId id) const { return relations_.at(id).is_inverse; }
  RelationId inverse(RelationId id) const;

  /// "<name>" or "<name>^-1".
  std::string display_name(RelationId id) const;

  /// Resolves a display name (accepting the "^-1" suffix) to an id.
  std::optional<RelationId> find(std::string_view display) const;

  void add_inverses();

 private:
  std::vector<Relation> relations_;
  std::size_t forward_count_ = 0;
  bool augmented_ = false;
};

struct Triple {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

class Ckg {
 public:
  Ckg() : vocab_(std::make_shared<Vocabulary>()) {}
  Ckg(std::shared_ptr<Vocabulary> vocab, std::vector<Triple> triples);

  const Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<Vocabulary>& shared_vocab() const { return vocab_; }
  const RelationTable& relations() const { return relations_; }
  std::span<const Triple> triples() const { return triples_; }
  const Triple& triple(std::size_t index) const { return triples_.at(index); }

  /// Size of the (possibly shared) node registry.
  std::size_t node_count() const { return vocab_->node_count(); }

  /// Triple indices whose head is `v`, ordered by (relation, tail).
  std::span<const std::uint32_t> head_index(NodeId v) const;

  /// Triples whose head is `v`, ordered by (relation, tail).
  std::vector<Triple> triples_with_head(NodeId v) const;

  /// Number of duplicate input lines dropped by load_triples.
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }
  void set_duplicates_dropped(std::size_t n) { duplicates_dropped_ = n; }

  std::string node_text(NodeId id) const { return vocab_->node_text(id); }

  friend Ckg add_inverse_relations(const Ckg& g);

 private:
  void rebuild_index();

  std::shared_ptr<Vocabulary> vocab_;
  RelationTable relations_;
  std::vector<Triple> triples_;
  std::vector<std::uint32_t> head_offsets_;
  std::vector<std::uint32_t> head_triples_;
  std::size_t duplicates_dropped_ = 0;
};

/// Parses a tab-separated triple file (head, relation, tail per line). New
/// texts are interned into `vocab` when given, else into a fresh vocabulary.
/// Duplicate triples are dropped; see Ckg::duplicates_dropped().
Ckg load_triples(const std::filesystem::path& path, std::shared_ptr<Vocabulary> vocab = nullptr);

/// Same as load_triples but reading from an in-memory buffer; `source` names it in errors.
Ckg parse_triples(std::string_view text, std::shared_ptr<Vocabulary> vocab = nullptr,
                  std::string_view source = "<memory>");

/// Adds r^-1(t, h) for every r(h, t). Throws if `g` is already augmented.
Ckg add_inverse_relations(const Ckg& g);

/// The forward-relation triples of `g` (drops inverses).
std::vector<Triple> forward_triples(const Ckg& g);

}  // namespace ckgr
