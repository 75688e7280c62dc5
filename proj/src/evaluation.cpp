#include "ckgr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <thread>

#include "ckgr/errors.hpp"

namespace ckgr {

std::size_t filtered_rank(const std::map<NodeId, double>& scores, NodeId gold,
                          const std::set<NodeId>& valid_others, double floor) {
  auto it = scores.find(gold);
  const double gold_score = it == scores.end() ? floor : it->second;
  std::size_t rank = 1;
  for (const auto& [e, s] : scores) {
    if (e == gold || valid_others.count(e)) continue;
    if (s >= gold_score) ++rank;
  }
  return rank;
}

std::size_t filtered_rank_sparse(std::span<const std::pair<NodeId, double>> answers, std::size_t entity_count,
                                 NodeId gold, const std::unordered_set<NodeId>& valid_others) {
  const auto gold_it =
      std::find_if(answers.begin(), answers.end(), [&](const auto& a) { return a.first == gold; });
  if (gold_it == answers.end()) {
    // Gold at the floor: every unfiltered entity ties with or beats it.
    std::size_t filtered = 0;
    for (NodeId v : valid_others) filtered += (v != gold && v < entity_count);
    return entity_count - filtered;
  }
  std::size_t rank = 1;
  for (const auto& [e, s] : answers) {
    if (e == gold || valid_others.count(e)) continue;
    if (s >= gold_it->second) ++rank;
  }
  return rank;
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw DomainError("mrr: empty rank list");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw DomainError("mrr: ranks start at 1");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

double hits_at(std::span<const std::size_t> ranks, std::size_t k) {
  if (k == 0) throw DomainError("hits_at: k must be >= 1");
  if (ranks.empty()) return 0.0;
  const auto hit = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

void KnownFacts::add(const Triple& t) {
  tails_[Query{t.relation, t.head}].insert(t.tail);
  tails_[Query{relations_->inverse(t.relation), t.tail}].insert(t.head);
}

void KnownFacts::add_all(std::span<const Triple> forward) {
  for (const Triple& t : forward) add(t);
}

const std::unordered_set<NodeId>& KnownFacts::tails(const Query& q) const {
  auto it = tails_.find(q);
  return it == tails_.end() ? empty_ : it->second;
}

bool ReasonerScorer::can_answer(const Query& q) const {
  const Ckg& g = reasoner_->graph();
  return q.relation < g.relations().size() && q.head < g.node_count();
}

std::vector<std::pair<NodeId, double>> ReasonerScorer::scores(const Query& q) const {
  std::vector<std::pair<NodeId, double>> out;
  for (const RankedAnswer& a : reasoner_->answer(q)) out.emplace_back(a.tail, a.score);
  return out;
}

namespace {

EvalRecord score_direction(const QueryScorer& engine, const Query& q, NodeId gold, Direction dir,
                           const KnownFacts& known, std::size_t entity_count, bool force_fail) {
  EvalRecord rec{q, gold, dir, 1, false};
  std::unordered_set<NodeId> others = known.tails(q);
  others.erase(gold);
  if (force_fail || !engine.can_answer(q)) {
    rec.failed = true;
    rec.rank = filtered_rank_sparse({}, entity_count, gold, others);
    return rec;
  }
  try {
    const auto answers = engine.scores(q);
    rec.rank = filtered_rank_sparse(answers, entity_count, gold, others);
  } catch (const LookupError&) {
    rec.failed = true;
    rec.rank = filtered_rank_sparse({}, entity_count, gold, others);
  } catch (const DomainError&) {
    rec.failed = true;
    rec.rank = filtered_rank_sparse({}, entity_count, gold, others);
  }
  return rec;
}

DirectionMetrics metrics_of(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) return {};
  return DirectionMetrics{mrr(ranks), hits_at(ranks, 1), hits_at(ranks, 3), hits_at(ranks, 10)};
}

}  // namespace

EvalReport evaluate(const QueryScorer& engine, std::span<const Triple> test, const RelationTable& relations,
                    const KnownFacts& known, const EvalOptions& options) {
  if (!relations.augmented()) throw DomainError("evaluate: relation table lacks inverse relations");
  if (options.entity_count == 0) throw DomainError("evaluate: empty entity universe");
  EvalReport report;
  report.triples = test.size();
  report.records.resize(2 * test.size());

  auto work = [&](std::size_t i) {
    const Triple& t = test[i];
    const bool unknown_relation = t.relation >= relations.forward_count();
    const RelationId inv = unknown_relation ? t.relation : relations.inverse(t.relation);
    report.records[2 * i] = score_direction(engine, Query{t.relation, t.head}, t.tail, Direction::forward, known,
                                            options.entity_count, unknown_relation);
    report.records[2 * i + 1] = score_direction(engine, Query{inv, t.tail}, t.head, Direction::inverse, known,
                                                options.entity_count, unknown_relation);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, test.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < test.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < test.size(); i += threads) work(i);
      });
    }
  }

  std::vector<std::size_t> fwd, inv;
  double rr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& a = report.records[2 * i];
    const auto& b = report.records[2 * i + 1];
    fwd.push_back(a.rank);
    inv.push_back(b.rank);
    report.failures += a.failed + b.failed;
    rr += (1.0 / static_cast<double>(a.rank) + 1.0 / static_cast<double>(b.rank)) / 2.0;
    h1 += ((a.rank <= 1) + (b.rank <= 1)) / 2.0;
    h3 += ((a.rank <= 3) + (b.rank <= 3)) / 2.0;
    h10 += ((a.rank <= 10) + (b.rank <= 10)) / 2.0;
  }
  if (!test.empty()) {
    const double n = static_cast<double>(test.size());
    report.combined = DirectionMetrics{rr / n, h1 / n, h3 / n, h10 / n};
  }
  report.forward = metrics_of(fwd);
  report.inverse = metrics_of(inv);
  return report;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string format_report(const EvalReport& r, bool machine_readable) {
  std::ostringstream os;
  if (machine_readable) {
    auto block = [&](const std::string& prefix, const DirectionMetrics& m) {
      os << prefix << "MRR\t" << pct(m.mrr) << '\n'
         << prefix << "HITS@1\t" << pct(m.hits1) << '\n'
         << prefix << "HITS@3\t" << pct(m.hits3) << '\n'
         << prefix << "HITS@10\t" << pct(m.hits10) << '\n';
    };
    os << "triples\t" << r.triples << '\n';
    block("", r.combined);
    block("forward.", r.forward);
    block("inverse.", r.inverse);
    os << "failures\t" << r.failures << '\n';
    return os.str();
  }
  if (r.triples == 0) return "0 triples evaluated\n";
  os << r.triples << " triples evaluated\n"
     << "MRR      " << pct(r.combined.mrr) << '\n'
     << "HITS@1   " << pct(r.combined.hits1) << '\n'
     << "HITS@3   " << pct(r.combined.hits3) << '\n'
     << "HITS@10  " << pct(r.combined.hits10) << '\n';
  auto line = [&](const char* name, const DirectionMetrics& m) {
    os << name << " MRR " << pct(m.mrr) << "  HITS@1 " << pct(m.hits1) << "  HITS@3 " << pct(m.hits3)
       << "  HITS@10 " << pct(m.hits10) << '\n';
  };
  line("forward (h,r,?):   ", r.forward);
  line("inverse (t,r^-1,?):", r.inverse);
  os << "failures: " << r.failures << " of " << 2 * r.triples << " directional queries\n";
  return os.str();
}

namespace {

std::vector<bool> node_mask(const Ckg& g, std::span<const Triple> triples) {
  std::vector<bool> seen(g.node_count(), false);
  for (const Triple& t : triples) {
    seen[t.head] = true;
    seen[t.tail] = true;
  }
  return seen;
}

}  // namespace

DatasetStats compute_stats(const Ckg& train, const Ckg& test) {
  const auto train_fwd = forward_triples(train);
  const auto test_fwd = forward_triples(test);
  const std::size_t n = std::max(train.node_count(), test.node_count());
  std::vector<bool> train_nodes(n, false), test_nodes(n, false), all_nodes(n, false);
  for (const Triple& t : train_fwd) train_nodes[t.head] = train_nodes[t.tail] = true;
  for (const Triple& t : test_fwd) test_nodes[t.head] = test_nodes[t.tail] = true;

  std::set<std::tuple<NodeId, std::string, NodeId>> edges;
  std::set<std::string> relations;
  auto add_edges = [&](const Ckg& g, const std::vector<Triple>& triples) {
    for (const Triple& t : triples) {
      const std::string& name = g.relations()[t.relation].name;
      edges.emplace(t.head, name, t.tail);
      relations.insert(name);
    }
  };
  add_edges(train, train_fwd);
  add_edges(test, test_fwd);

  DatasetStats s;
  std::size_t test_node_count = 0, unseen_nodes = 0;
  for (std::size_t v = 0; v < n; ++v) {
    s.node_count += train_nodes[v] || test_nodes[v];
    if (test_nodes[v]) {
      ++test_node_count;
      unseen_nodes += !train_nodes[v];
    }
  }
  std::size_t unseen_edges = 0;
  for (const Triple& t : test_fwd) unseen_edges += !train_nodes[t.head] || !train_nodes[t.tail];

  s.edge_count = edges.size();
  s.relation_count = relations.size();
  if (s.node_count > 0) s.avg_in_degree = static_cast<double>(s.edge_count) / static_cast<double>(s.node_count);
  if (s.node_count > 1) {
    s.density = static_cast<double>(s.edge_count) /
                (static_cast<double>(s.node_count) * static_cast<double>(s.node_count - 1));
  }
  if (test_node_count > 0) s.unseen_node_ratio = static_cast<double>(unseen_nodes) / static_cast<double>(test_node_count);
  if (!test_fwd.empty()) s.unseen_edge_ratio = static_cast<double>(unseen_edges) / static_cast<double>(test_fwd.size());
  return s;
}

std::string format_stats(const DatasetStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "nodes\t%zu\nedges\t%zu\navg_in_degree\t%.4f\ndensity\t%.3e\t(edges / (nodes * (nodes - 1)))\n"
                "unseen_nodes\t%.2f%%\nunseen_edges\t%.2f%%\nrelations\t%zu\n",
                s.node_count, s.edge_count, s.avg_in_degree, s.density, 100.0 * s.unseen_node_ratio,
                100.0 * s.unseen_edge_ratio, s.relation_count);
  return buf;
}

std::vector<Triple> carve_unseen_split(const Ckg& train, std::span<const Triple> test) {
  const auto train_fwd = forward_triples(train);
  std::vector<bool> seen = node_mask(train, train_fwd);
  std::vector<Triple> out;
  for (const Triple& t : test) {
    const bool head_seen = t.head < seen.size() && seen[t.head];
    const bool tail_seen = t.tail < seen.size() && seen[t.tail];
    if (!head_seen || !tail_seen) out.push_back(t);
  }
  return out;
}

}  // namespace ckgr
