#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner. Nothing here calls into the search code it checks.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ckgr/embedding.hpp"
#include "ckgr/kg_store.hpp"
#include "ckgr/reasoner.hpp"
#include "ckgr/relation_predictor.hpp"
#include "ckgr/rng.hpp"

namespace ckgr::testing {

using TextTriple = std::array<std::string, 3>;

inline std::string tsv(const std::vector<TextTriple>& rows) {
  std::string out;
  for (const auto& r : rows) out += r[0] + "\t" + r[1] + "\t" + r[2] + "\n";
  return out;
}

inline Ckg graph_of(const std::vector<TextTriple>& rows, std::shared_ptr<Vocabulary> vocab = nullptr) {
  return parse_triples(tsv(rows), std::move(vocab));
}

/// Random multigraph over nodes "n0".. and relations "r0".. (duplicates are dropped on load).
inline std::vector<TextTriple> random_rows(Rng& rng, std::size_t nodes, std::size_t relations, std::size_t edges) {
  std::vector<TextTriple> rows;
  for (std::size_t e = 0; e < edges; ++e) {
    rows.push_back({"n" + std::to_string(rng.below(nodes)), "r" + std::to_string(rng.below(relations)),
                    "n" + std::to_string(rng.below(nodes))});
  }
  return rows;
}

inline double plain_cosine(std::span<const float> u, std::span<const float> v) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double node_cosine(const EmbeddingTable& t, NodeId a, NodeId b) {
  return a == b ? 1.0 : plain_cosine(t.vector(a), t.vector(b));
}

/// Full-scan top-k: descending cosine, ascending id on ties.
inline std::vector<NodeId> scan_neighbors(const EmbeddingTable& t, NodeId frontier, std::size_t k) {
  std::vector<std::pair<double, NodeId>> all;
  for (NodeId v = 0; v < t.size(); ++v) {
    if (t.has(v)) all.emplace_back(node_cosine(t, frontier, v), v);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

struct OracleAnswer {
  NodeId tail = 0;
  double score = 0.0;
};

/// Relation choices for one expansion: every relation when `top_m` is 0,
/// otherwise the `top_m` most probable under the predictor (ties to lower id).
inline std::vector<RelationId> oracle_relations(const PredictorParams& params, RelationId prev, std::size_t step,
                                                std::size_t top_m) {
  const std::size_t r = params.dims.relations;
  std::vector<RelationId> ids(r);
  for (RelationId i = 0; i < r; ++i) ids[i] = i;
  if (top_m == 0 || top_m >= r) return ids;
  const auto probs = predictor_forward(params, prev, step).probs;
  std::stable_sort(ids.begin(), ids.end(), [&](RelationId a, RelationId b) { return probs[a] > probs[b]; });
  ids.resize(top_m);
  return ids;
}

/// Walks every relation-filtered path of length <= max_depth from the query
/// head, scores each by the minimum of cos(frontier, matched head) over its
/// steps, and keeps the best score per final tail. Assumes the search is
/// never truncated (beam, k_triples and k_answers at least the path count).
inline std::vector<OracleAnswer> enumerate_answers(const Ckg& g, const EmbeddingTable& t,
                                                   const PredictorParams& params, const Query& q,
                                                   std::size_t max_depth, std::size_t k_nodes, std::size_t top_m) {
  std::map<NodeId, double> best;
  std::vector<NodeId> path{q.head};

  auto walk = [&](auto&& self, NodeId frontier, RelationId prev, std::size_t depth, double score) -> void {
    if (depth > max_depth) return;
    const auto neighbors = scan_neighbors(t, frontier, k_nodes);
    for (RelationId rel : oracle_relations(params, prev, depth, top_m)) {
      for (const Triple& tr : g.triples()) {
        if (tr.relation != rel) continue;
        if (std::find(neighbors.begin(), neighbors.end(), tr.head) == neighbors.end()) continue;
        if (std::find(path.begin(), path.end(), tr.tail) != path.end()) continue;
        const double s = std::min(score, node_cosine(t, frontier, tr.head));
        auto [it, fresh] = best.emplace(tr.tail, s);
        if (!fresh) it->second = std::max(it->second, s);
        path.push_back(tr.tail);
        // The engine conditions the next prediction on the matched triple's relation.
        self(self, tr.tail, tr.relation, depth + 1, s);
        path.pop_back();
      }
    }
  };
  walk(walk, q.head, q.relation, 1, std::numeric_limits<double>::infinity());

  std::vector<OracleAnswer> out;
  for (const auto& [tail, score] : best) out.push_back({tail, score});
  std::sort(out.begin(), out.end(), [](const OracleAnswer& a, const OracleAnswer& b) {
    return a.score != b.score ? a.score > b.score : a.tail < b.tail;
  });
  return out;
}

// Largest coordinate-wise relative error between analytic and central-difference
// gradients. Draws with a hidden pre-activation near zero are resampled, since
// a relu kink inside the difference stencil makes the numeric value meaningless.
inline double gradient_check_error(std::uint64_t seed) {
  const PredictorDims dims{6, 4, 4, 4, 3};
  Rng rng(seed);
  for (;;) {
    auto p = PredictorParams::random(dims, rng);
    std::vector<RelationExample> batch;
    for (int i = 0; i < 5; ++i) {
      batch.push_back({static_cast<RelationId>(rng.below(6)), 1 + rng.below(3), static_cast<RelationId>(rng.below(6))});
    }
    bool near_kink = false;
    for (const auto& ex : batch) {
      std::vector<double> x;
      for (std::size_t i = 0; i < 4; ++i) x.push_back(p.relation_embeddings(ex.prev, i));
      for (std::size_t i = 0; i < 4; ++i) x.push_back(p.step_embeddings(ex.step, i));
      std::vector<double> h1(4);
      for (std::size_t r = 0; r < 4; ++r) {
        double a = p.b1(r, 0);
        for (std::size_t c = 0; c < 8; ++c) a += p.w1(r, c) * x[c];
        near_kink = near_kink || std::fabs(a) < 1e-3;
        h1[r] = std::max(0.0, a);
      }
      for (std::size_t r = 0; r < 4; ++r) {
        double a = p.b2(r, 0);
        for (std::size_t c = 0; c < 4; ++c) a += p.w2(r, c) * h1[c];
        near_kink = near_kink || std::fabs(a) < 1e-3;
      }
    }
    if (near_kink) continue;

    const auto analytic = predictor_loss_and_grad(p, batch).grad;
    const double eps = 1e-4;
    double worst = 0.0;
    std::vector<const Matrix*> grads;
    analytic.for_each([&](std::string_view, const Matrix& m) { grads.push_back(&m); });
    std::size_t tensor = 0;
    p.for_each([&](std::string_view, Matrix& m) {
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double saved = m.data[i];
        m.data[i] = saved + eps;
        const double up = predictor_loss(p, batch);
        m.data[i] = saved - eps;
        const double down = predictor_loss(p, batch);
        m.data[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        const double exact = grads[tensor]->data[i];
        const double scale = std::max({std::fabs(numeric), std::fabs(exact), 1e-6});
        worst = std::max(worst, std::fabs(numeric - exact) / scale);
      }
      ++tensor;
    });
    return worst;
  }
}

/// Chains a -r-> b -r-> c with distractor edges under s and t at both a and
/// b. The closure edge r(a, c) never enters the graph; chains are split into
/// training queries, dev queries and held-out queries.
struct TransitiveCorpus {
  Ckg graph;  // inverse-augmented
  RelationId r = 0;
  std::vector<Triple> train, dev, held_out;
};

inline TransitiveCorpus transitive_corpus(Rng& rng, std::size_t chains) {
  std::vector<TextTriple> rows;
  std::vector<std::array<std::string, 3>> closure;
  for (std::size_t i = 0; i < chains; ++i) {
    auto name = [&](const char* role) {
      return std::string(role) + std::to_string(i) + "_" + std::to_string(rng.below(100000));
    };
    const std::string a = name("a"), b = name("b"), c = name("c");
    rows.push_back({a, "r", b});
    rows.push_back({b, "r", c});
    rows.push_back({a, "s", name("f")});
    rows.push_back({a, "t", name("g")});
    rows.push_back({b, "s", name("d")});
    rows.push_back({b, "t", name("e")});
    closure.push_back({a, "r", c});
  }
  auto vocab = std::make_shared<Vocabulary>();
  TransitiveCorpus out{add_inverse_relations(graph_of(rows, vocab)), 0, {}, {}, {}};
  out.r = *vocab->find_relation("r");
  rng.shuffle(closure.begin(), closure.end());
  for (std::size_t i = 0; i < closure.size(); ++i) {
    const Triple t{*vocab->find_node(closure[i][0]), out.r, *vocab->find_node(closure[i][2])};
    auto& split = 2 * i < closure.size() ? out.train : 4 * i < 3 * closure.size() ? out.dev : out.held_out;
    split.push_back(t);
  }
  return out;
}

/// Scratch directory removed when the object dies.
class TempDir {
 public:
  TempDir() {
    Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() / ("ckgr-test-" + std::to_string(rng.next_u64()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name, const std::string& contents) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << contents;
    return p;
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ckgr::testing
