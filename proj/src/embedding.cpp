#include "ckgr/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ckgr/errors.hpp"
#include "ckgr/rng.hpp"
#include "ckgr/simd/kernels.hpp"

namespace ckgr {

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine: length mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  const double uu = simd::squared_norm(u.data(), u.size());
  const double vv = simd::squared_norm(v.data(), v.size());
  if (!(uu > 0.0) || !(vv > 0.0)) throw DomainError("cosine: zero-norm input");
  const double c = simd::dot(u.data(), v.data(), u.size()) / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

EmbeddingTable::EmbeddingTable(std::size_t node_count, std::size_t dim)
    : dim_(dim), data_(node_count * dim, 0.0f), norms_(node_count, 0.0), present_(node_count, false) {
  if (dim == 0) throw DomainError("embedding dimension must be positive");
}

void EmbeddingTable::set(NodeId id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw ShapeError("embedding for node " + std::to_string(id) + " has length " +
                     std::to_string(values.size()) + ", expected " + std::to_string(dim_));
  }
  if (id >= present_.size()) {
    present_.resize(id + 1, false);
    norms_.resize(id + 1, 0.0);
    data_.resize((id + 1) * dim_, 0.0f);
  }
  const double sq = simd::squared_norm(values.data(), dim_);
  if (!(sq > 0.0) || !std::isfinite(sq)) {
    throw DomainError("embedding for node " + std::to_string(id) + " is zero or non-finite");
  }
  std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(id * dim_));
  norms_[id] = std::sqrt(sq);
  if (!present_[id]) ++present_count_;
  present_[id] = true;
}

std::span<const float> EmbeddingTable::vector(NodeId id) const {
  if (!has(id)) throw LookupError("no embedding for node " + std::to_string(id));
  return std::span<const float>(data_).subspan(id * dim_, dim_);
}

double EmbeddingTable::norm(NodeId id) const {
  if (!has(id)) throw LookupError("no embedding for node " + std::to_string(id));
  return norms_[id];
}

double EmbeddingTable::similarity(NodeId a, NodeId b) const {
  if (a == b) {
    if (!has(a)) throw LookupError("no embedding for node " + std::to_string(a));
    return 1.0;
  }
  const auto u = vector(a);
  const auto v = vector(b);
  const double c = simd::dot(u.data(), v.data(), dim_) / (norms_[a] * norms_[b]);
  return std::clamp(c, -1.0, 1.0);
}

namespace {

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line_no = 0;

  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t eol = text.find('\n', pos);
    line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return true;
  }
};

std::string at(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

}  // namespace

EmbeddingTable parse_embeddings(std::string_view text, Vocabulary& vocab,
                                const EmbeddingLoadOptions& options, std::string_view source) {
  LineReader reader{text};
  std::string_view line;
  if (!reader.next(line)) throw ParseError(at(source, 1) + ": missing header");
  std::size_t n = 0;
  std::size_t d = 0;
  {
    auto space = line.find(' ');
    if (space == std::string_view::npos || !parse_number(line.substr(0, space), n) ||
        !parse_number(line.substr(space + 1), d) || d == 0) {
      throw ParseError(at(source, reader.line_no) + ": header must be \"<n> <d>\" with d > 0");
    }
  }

  std::vector<std::pair<NodeId, std::vector<float>>> records;
  records.reserve(n);
  std::vector<float> values;
  for (std::size_t r = 0; r < n; ++r) {
    if (!reader.next(line)) {
      throw ParseError(at(source, reader.line_no + 1) + ": expected " + std::to_string(n) +
                       " records, file ends after " + std::to_string(r));
    }
    if (line.empty() || line.find('\t') != std::string_view::npos) {
      throw ParseError(at(source, reader.line_no) + ": node text must be non-empty and tab-free");
    }
    std::optional<NodeId> id = vocab.find_node(line);
    if (!id) {
      if (!options.extend_vocabulary) {
        throw LookupError(at(source, reader.line_no) + ": unknown node text \"" +
                          std::string(line) + "\"");
      }
      id = vocab.intern_node(line);
    }
    if (!reader.next(line)) {
      throw ParseError(at(source, reader.line_no + 1) + ": record is missing its vector line");
    }
    values.clear();
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t space = line.find(' ', start);
      std::string_view token =
          line.substr(start, space == std::string_view::npos ? std::string_view::npos : space - start);
      float v = 0.0f;
      if (token.empty() || !parse_number(token, v)) {
        throw ParseError(at(source, reader.line_no) + ": malformed number \"" +
                         std::string(token) + "\"");
      }
      values.push_back(v);
      if (space == std::string_view::npos) break;
      start = space + 1;
    }
    if (values.size() != d) {
      throw ParseError(at(source, reader.line_no) + ": expected " + std::to_string(d) +
                       " values, found " + std::to_string(values.size()));
    }
    records.emplace_back(*id, values);
  }
  while (reader.next(line)) {
    if (!line.empty()) throw ParseError(at(source, reader.line_no) + ": trailing data after records");
  }

  EmbeddingTable table(vocab.node_count(), d);
  for (const auto& [id, vec] : records) {
    if (table.has(id)) {
      throw ParseError(std::string(source) + ": duplicate record for \"" + vocab.node_text(id) + "\"");
    }
    try {
      table.set(id, vec);
    } catch (const DomainError& e) {
      throw ParseError(std::string(source) + ": \"" + vocab.node_text(id) + "\": " + e.what());
    }
  }

  const std::size_t required = options.require_nodes_below.value_or(vocab.node_count());
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (NodeId v = 0; v < required; ++v) {
    if (!table.has(v)) {
      if (missing.size() < 10) missing.push_back(vocab.node_text(v));
      ++missing_count;
    }
  }
  if (missing_count > 0) {
    std::string msg = std::string(source) + ": " + std::to_string(missing_count) +
                      " node(s) lack embeddings:";
    for (const auto& m : missing) msg += " \"" + m + "\"";
    throw LookupError(msg);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, Vocabulary& vocab,
                               const EmbeddingLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open embedding file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_embeddings(buffer.str(), vocab, options, path.string());
}

std::string format_float(float value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 9);
  return std::string(buf, ptr);
}

std::string format_embeddings(const EmbeddingTable& table, const Vocabulary& vocab) {
  std::string out = std::to_string(table.present_count()) + " " + std::to_string(table.dim()) + "\n";
  for (NodeId v = 0; v < table.size(); ++v) {
    if (!table.has(v)) continue;
    out += vocab.node_text(v);
    out += '\n';
    auto vec = table.vector(v);
    for (std::size_t i = 0; i < vec.size(); ++i) {
      if (i) out += ' ';
      out += format_float(vec[i]);
    }
    out += '\n';
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                     const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LookupError("cannot write embedding file " + path.string());
  out << format_embeddings(table, vocab);
}

EmbeddingTable hash_embed(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw DomainError("hash_embed: dim must be at least 2");
  EmbeddingTable table(vocab.node_count(), dim);
  std::vector<double> gauss(dim);
  std::vector<float> vec(dim);
  for (NodeId v = 0; v < vocab.node_count(); ++v) {
    Rng rng(keyed_hash(vocab.node_text(v), seed));
    double sq = 0.0;
    do {
      sq = 0.0;
      for (auto& g : gauss) {
        g = rng.normal();
        sq += g * g;
      }
    } while (!(sq > 0.0));
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) vec[i] = static_cast<float>(gauss[i] * inv);
    table.set(v, vec);
  }
  return table;
}

}  // namespace ckgr
