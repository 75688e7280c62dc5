#include "ckgr/reasoner.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "ckgr/errors.hpp"
#include "ckgr/unifier.hpp"

namespace ckgr {

std::size_t ProofState::weakest_step() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i].score < steps[best].score) best = i;
  }
  return best;
}

double squash(double score) { return std::clamp((score + 1.0) / 2.0, kProbabilityFloor, 1.0 - kProbabilityFloor); }

namespace {

bool state_before(const ProofState& a, const ProofState& b) {
  if (a.score != b.score) return a.score > b.score;
  const std::size_t n = std::min(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.steps[i].triple_index != b.steps[i].triple_index) {
      return a.steps[i].triple_index < b.steps[i].triple_index;
    }
  }
  return a.steps.size() < b.steps.size();
}

bool on_path(const Query& q, const ProofState& s, NodeId node) {
  if (node == q.head) return true;
  return std::any_of(s.steps.begin(), s.steps.end(), [&](const ProofStep& st) { return st.triple.tail == node; });
}

}  // namespace

Reasoner::Reasoner(const Ckg& graph, const EmbeddingTable& table, const KnnIndex& index,
                   const PredictorParams& params, ReasonerConfig cfg)
    : graph_(&graph), table_(&table), index_(&index), params_(&params), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (params.dims.relations != graph.relations().size()) {
    throw ShapeError("predictor covers " + std::to_string(params.dims.relations) + " relations, graph has " +
                     std::to_string(graph.relations().size()));
  }
  if (cfg_.max_depth > params.dims.max_depth) {
    throw DomainError("max_depth " + std::to_string(cfg_.max_depth) + " exceeds the predictor's " +
                      std::to_string(params.dims.max_depth));
  }
}

void Reasoner::check_query(const Query& q) const {
  if (q.relation >= graph_->relations().size()) throw LookupError("query relation id out of range");
  if (q.head >= graph_->node_count()) throw LookupError("query head id out of range");
  if (!table_->has(q.head)) {
    throw DomainError("query head \"" + graph_->node_text(q.head) + "\" has no embedding");
  }
}

std::vector<ProofState> Reasoner::prove(const Query& q, const SearchOptions& options) const {
  check_query(q);
  const std::size_t all = graph_->relations().size();
  const std::size_t top_m = options.top_m == 0 ? all : std::min(options.top_m, all);

  std::vector<ProofState> beam(1);
  beam[0].frontier = q.head;
  std::vector<ProofState> proofs;

  for (std::size_t depth = 1; depth <= cfg_.max_depth && !beam.empty(); ++depth) {
    std::vector<ProofState> next;
    for (const ProofState& state : beam) {
      const RelationId prev = depth == 1 ? q.relation : state.steps.back().triple.relation;
      auto predicted = predictor_topm(*params_, prev, depth, cfg_.relation_filter ? top_m : 1);

      for (const auto& [relation, prob] : predicted) {
        CandidateSet c = gather_candidates(*graph_, *index_, state.frontier, cfg_.k_nodes,
                                           cfg_.relation_filter ? std::optional<RelationId>(relation) : std::nullopt);
        std::erase_if(c.triple_indices, [&](std::uint32_t i) {
          if (std::binary_search(options.masked.begin(), options.masked.end(), i)) return true;
          return !cfg_.allow_revisit && on_path(q, state, graph_->triple(i).tail);
        });
        if (c.triple_indices.empty()) continue;

        const auto hypotheses = build_hypotheses(*graph_, c);
        const auto u = score_matrix(*graph_, *table_, c, hypotheses, state.frontier);
        for (const ScoredCandidate& cand : select_candidates(*graph_, u, c, cfg_.k_triples)) {
          ProofState extended = state;
          extended.steps.push_back(ProofStep{relation, cand.triple_index, cand.triple, cand.score});
          extended.frontier = cand.triple.tail;
          extended.score = std::min(state.score, cand.score);
          assert(extended.score <= state.score);
          next.push_back(std::move(extended));
        }
      }
    }
    std::sort(next.begin(), next.end(), state_before);
    if (next.size() > cfg_.beam_width) next.resize(cfg_.beam_width);
    proofs.insert(proofs.end(), next.begin(), next.end());
    beam = std::move(next);
  }
  return proofs;
}

std::vector<RankedAnswer> Reasoner::rank(const Query& q, std::span<const ProofState> proofs) const {
  std::vector<RankedAnswer> best;
  std::vector<std::size_t> slot(graph_->node_count(), SIZE_MAX);
  for (const ProofState& p : proofs) {
    const NodeId tail = p.steps.back().triple.tail;
    if (tail >= slot.size()) slot.resize(tail + 1, SIZE_MAX);
    if (slot[tail] == SIZE_MAX) {
      slot[tail] = best.size();
      best.push_back(RankedAnswer{q, tail, p.score, p});
    } else if (p.score > best[slot[tail]].score) {
      best[slot[tail]].score = p.score;
      best[slot[tail]].proof = p;
    }
  }
  std::sort(best.begin(), best.end(), [](const RankedAnswer& a, const RankedAnswer& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tail < b.tail;
  });
  if (best.size() > cfg_.k_answers) best.resize(cfg_.k_answers);
  return best;
}

std::vector<RankedAnswer> Reasoner::answer(const Query& q) const {
  const auto proofs = prove(q, SearchOptions{cfg_.top_m_relations, {}});
  return rank(q, proofs);
}

double Reasoner::score_answer(const Query& q, NodeId target) const {
  if (target >= graph_->node_count()) throw LookupError("target id out of range");
  for (const RankedAnswer& a : answer(q)) {
    if (a.tail == target) return squash(a.score);
  }
  return kProbabilityFloor;
}

std::vector<RankedAnswer> answer_query(const Ckg& g, const KnnIndex& index, const EmbeddingTable& table,
                                       const PredictorParams& params, const Query& q,
                                       const ReasonerConfig& cfg) {
  return Reasoner(g, table, index, params, cfg).answer(q);
}

double score_query_answer(const Ckg& g, const KnnIndex& index, const EmbeddingTable& table,
                          const PredictorParams& params, const Query& q, NodeId target,
                          const ReasonerConfig& cfg) {
  return Reasoner(g, table, index, params, cfg).score_answer(q, target);
}

// ---------------------------------------------------------------------------

ProofRecord to_record(const Ckg& g, const RankedAnswer& answer) {
  ProofRecord r;
  r.query_relation = g.relations().display_name(answer.query.relation);
  r.query_head = g.node_text(answer.query.head);
  r.score = answer.score;
  for (const ProofStep& s : answer.proof.steps) {
    r.steps.push_back(ProofRecord::Step{g.relations().display_name(s.triple.relation),
                                        g.node_text(s.triple.head), g.node_text(s.triple.tail), s.score});
  }
  return r;
}

std::string render_rule(const ProofRecord& record) {
  static constexpr const char* kIntermediate[] = {"Z", "W", "V", "U", "T", "S"};
  auto var = [&](std::size_t i) -> std::string {
    if (i == 0) return "X";
    if (i == record.steps.size()) return "Y";
    if (i - 1 < std::size(kIntermediate)) return kIntermediate[i - 1];
    return "Z" + std::to_string(i);
  };
  std::string out = record.query_relation + "(X,Y) :- ";
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    if (i) out += ", ";
    out += record.steps[i].relation + "(" + var(i) + "," + var(i + 1) + ")";
  }
  return out;
}

std::string render_path(const ProofRecord& record) {
  std::string out = record.query_head;
  const std::string* current = &record.query_head;
  for (const auto& s : record.steps) {
    if (s.head != *current) out += " ≈ " + s.head;
    out += " —" + s.relation + "→ " + s.tail;
    current = &s.tail;
  }
  return out;
}

std::string explain(const ProofRecord& record) {
  std::string tail = record.steps.empty() ? std::string("?") : record.steps.back().tail;
  return "rule: " + render_rule(record) + "\npath: " + render_path(record) + "\nconcludes: " +
         record.query_head + " ⇢" + record.query_relation + "⇢ " + tail + "\n";
}

std::string explain(const Ckg& g, const RankedAnswer& answer) { return explain(to_record(g, answer)); }

std::string explain_line(const ProofRecord& record) { return render_rule(record) + " | " + render_path(record); }

std::string format_answer_line(std::size_t rank, const Ckg& g, const RankedAnswer& answer) {
  char score[64];
  std::snprintf(score, sizeof(score), "%.6f", answer.score);
  return std::to_string(rank) + "\t" + score + "\t" + g.node_text(answer.tail) + "\t" +
         explain_line(to_record(g, answer));
}

namespace {

std::string exact(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

// Proof record line:
//   <score>\t<query relation>\t<query head>\t<n>\t(<relation>\t<head>\t<tail>\t<score>) x n
std::string format_proof_record(const ProofRecord& record) {
  std::string out = exact(record.score) + "\t" + record.query_relation + "\t" + record.query_head + "\t" +
                    std::to_string(record.steps.size());
  for (const auto& s : record.steps) {
    out += "\t" + s.relation + "\t" + s.head + "\t" + s.tail + "\t" + exact(s.score);
  }
  return out + "\n";
}

std::vector<ProofRecord> parse_proof_file(std::string_view text, std::string_view source) {
  std::vector<ProofRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto to_double = [&](std::string_view s, double& v) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size();
  };
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    ProofRecord r;
    std::size_t n = 0;
    if (f.size() < 4 || !to_double(f[0], r.score) ||
        std::from_chars(f[3].data(), f[3].data() + f[3].size(), n).ec != std::errc() || f.size() != 4 + 4 * n) {
      throw ParseError(where + ": malformed proof record");
    }
    r.query_relation = f[1];
    r.query_head = f[2];
    for (std::size_t i = 0; i < n; ++i) {
      ProofRecord::Step s{std::string(f[4 + 4 * i]), std::string(f[5 + 4 * i]), std::string(f[6 + 4 * i]), 0.0};
      if (!to_double(f[7 + 4 * i], s.score)) throw ParseError(where + ": malformed step score");
      r.steps.push_back(std::move(s));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ckgr
