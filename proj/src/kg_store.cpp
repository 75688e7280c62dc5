#include "ckgr/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ckgr/errors.hpp"

namespace ckgr {

namespace {

constexpr std::string_view kInverseSuffix = "^-1";

std::string where(std::string_view source, std::size_t line) {
  std::ostringstream os;
  os << source << ":" << line;
  return os.str();
}

}  // namespace

NodeId Vocabulary::intern_node(std::string_view text) {
  auto it = node_ids_.find(std::string(text));
  if (it != node_ids_.end()) return it->second;
  auto id = static_cast<NodeId>(node_texts_.size());
  node_texts_.emplace_back(text);
  node_ids_.emplace(node_texts_.back(), id);
  return id;
}

RelationId Vocabulary::intern_relation(std::string_view name) {
  auto it = relation_ids_.find(std::string(name));
  if (it != relation_ids_.end()) return it->second;
  auto id = static_cast<RelationId>(relation_names_.size());
  relation_names_.emplace_back(name);
  relation_ids_.emplace(relation_names_.back(), id);
  return id;
}

const std::string& Vocabulary::node_text(NodeId id) const {
  if (id >= node_texts_.size()) throw LookupError("unknown node id " + std::to_string(id));
  return node_texts_[id];
}

std::optional<NodeId> Vocabulary::find_node(std::string_view text) const {
  auto it = node_ids_.find(std::string(text));
  if (it == node_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocabulary::find_relation(std::string_view name) const {
  auto it = relation_ids_.find(std::string(name));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

RelationTable::RelationTable(const Vocabulary& vocab) {
  relations_.reserve(vocab.relation_count());
  for (RelationId r = 0; r < vocab.relation_count(); ++r) {
    relations_.push_back(Relation{vocab.relation_name(r), false, r});
  }
  forward_count_ = relations_.size();
}

RelationId RelationTable::inverse(RelationId id) const {
  if (!augmented_) throw LookupError("relation table has no inverse relations");
  return relations_.at(id).inverse_of;
}

std::string RelationTable::display_name(RelationId id) const {
  const Relation& r = relations_.at(id);
  return r.is_inverse ? r.name + std::string(kInverseSuffix) : r.name;
}

std::optional<RelationId> RelationTable::find(std::string_view display) const {
  bool inverse = false;
  if (display.size() > kInverseSuffix.size() && display.ends_with(kInverseSuffix)) {
    inverse = true;
    display.remove_suffix(kInverseSuffix.size());
  }
  for (RelationId id = 0; id < relations_.size(); ++id) {
    if (relations_[id].is_inverse == inverse && relations_[id].name == display) return id;
  }
  return std::nullopt;
}

void RelationTable::add_inverses() {
  if (augmented_) throw DomainError("relation table already augmented");
  const auto f = static_cast<RelationId>(forward_count_);
  for (RelationId r = 0; r < f; ++r) {
    relations_[r].inverse_of = r + f;
    relations_.push_back(Relation{relations_[r].name, true, r});
  }
  augmented_ = true;
}

Ckg::Ckg(std::shared_ptr<Vocabulary> vocab, std::vector<Triple> triples)
    : vocab_(std::move(vocab)), relations_(*vocab_), triples_(std::move(triples)) {
  for (const Triple& t : triples_) {
    if (t.head >= vocab_->node_count() || t.tail >= vocab_->node_count() ||
        t.relation >= relations_.size()) {
      throw LookupError("triple references an unknown node or relation");
    }
  }
  rebuild_index();
}

void Ckg::rebuild_index() {
  const std::size_t n = vocab_->node_count();
  head_offsets_.assign(n + 1, 0);
  for (const Triple& t : triples_) ++head_offsets_[t.head + 1];
  for (std::size_t v = 0; v < n; ++v) head_offsets_[v + 1] += head_offsets_[v];
  head_triples_.resize(triples_.size());
  std::vector<std::uint32_t> fill(head_offsets_.begin(), head_offsets_.end() - 1);
  for (std::uint32_t i = 0; i < triples_.size(); ++i) {
    head_triples_[fill[triples_[i].head]++] = i;
  }
  for (std::size_t v = 0; v < n; ++v) {
    auto begin = head_triples_.begin() + head_offsets_[v];
    auto end = head_triples_.begin() + head_offsets_[v + 1];
    std::sort(begin, end, [this](std::uint32_t a, std::uint32_t b) {
      const Triple& x = triples_[a];
      const Triple& y = triples_[b];
      if (x.relation != y.relation) return x.relation < y.relation;
      if (x.tail != y.tail) return x.tail < y.tail;
      return a < b;
    });
  }
}

std::span<const std::uint32_t> Ckg::head_index(NodeId v) const {
  if (v >= vocab_->node_count()) throw LookupError("invalid node id " + std::to_string(v));
  // Nodes interned after this graph was built have no outgoing triples here.
  if (static_cast<std::size_t>(v) + 1 >= head_offsets_.size()) return {};
  return std::span<const std::uint32_t>(head_triples_).subspan(
      head_offsets_[v], head_offsets_[v + 1] - head_offsets_[v]);
}

std::vector<Triple> Ckg::triples_with_head(NodeId v) const {
  std::vector<Triple> out;
  for (std::uint32_t i : head_index(v)) out.push_back(triples_[i]);
  return out;
}

Ckg parse_triples(std::string_view text, std::shared_ptr<Vocabulary> vocab,
                  std::string_view source) {
  if (!vocab) vocab = std::make_shared<Vocabulary>();
  std::vector<Triple> triples;
  std::set<Triple> seen;
  std::size_t duplicates = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::string_view fields[3];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (count < 3) fields[count] = line.substr(start, tab == std::string_view::npos ? tab : tab - start);
      ++count;
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (count != 3) {
      throw ParseError(where(source, line_no) + ": expected 3 tab-separated fields, found " +
                       std::to_string(count));
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(where(source, line_no) + ": empty field");
    }
    Triple t{vocab->intern_node(fields[0]), vocab->intern_relation(fields[1]),
             vocab->intern_node(fields[2])};
    if (!seen.insert(t).second) {
      ++duplicates;
      continue;
    }
    triples.push_back(t);
  }
  Ckg g(std::move(vocab), std::move(triples));
  g.set_duplicates_dropped(duplicates);
  return g;
}

Ckg load_triples(const std::filesystem::path& path, std::shared_ptr<Vocabulary> vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open triple file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_triples(buffer.str(), std::move(vocab), path.string());
}

Ckg add_inverse_relations(const Ckg& g) {
  if (g.relations_.augmented()) throw DomainError("graph already augmented with inverse relations");
  Ckg out = g;
  out.relations_.add_inverses();
  const std::size_t m = g.triples_.size();
  out.triples_.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    const Triple& t = g.triples_[i];
    out.triples_.push_back(Triple{t.tail, out.relations_.inverse(t.relation), t.head});
  }
  out.rebuild_index();
  return out;
}

std::vector<Triple> forward_triples(const Ckg& g) {
  std::vector<Triple> out;
  for (const Triple& t : g.triples()) {
    if (!g.relations().is_inverse(t.relation)) out.push_back(t);
  }
  return out;
}

}  // namespace ckgr
