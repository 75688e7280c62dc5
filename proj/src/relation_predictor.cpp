#include "ckgr/relation_predictor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ckgr/errors.hpp"
#include "ckgr/rng.hpp"

namespace ckgr {

namespace {

constexpr double kMinProb = 1e-12;

void check_dims(const PredictorDims& d) {
  if (d.relations == 0 || d.relation_dim == 0 || d.step_dim == 0 || d.hidden == 0 || d.max_depth == 0) {
    throw DomainError("predictor dimensions must all be positive");
  }
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (double& x : m.data) x = rng.uniform(-bound, bound);
}

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<double> x, a1, h1, a2, h2, logits, probs;
};

void forward(const PredictorParams& p, RelationId prev, std::size_t step, ForwardCache& c) {
  const PredictorDims& d = p.dims;
  if (prev >= d.relations) throw DomainError("predictor: relation id " + std::to_string(prev) + " out of range");
  if (step < 1 || step > d.max_depth) {
    throw DomainError("predictor: step " + std::to_string(step) + " outside [1, " +
                      std::to_string(d.max_depth) + "]");
  }
  const std::size_t in = d.relation_dim + d.step_dim;
  c.x.resize(in);
  auto er = p.relation_embeddings.row(prev);
  auto es = p.step_embeddings.row(step);
  std::copy(er.begin(), er.end(), c.x.begin());
  std::copy(es.begin(), es.end(), c.x.begin() + static_cast<std::ptrdiff_t>(d.relation_dim));

  auto affine = [](const Matrix& w, const Matrix& b, const std::vector<double>& v, std::vector<double>& out) {
    out.resize(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      auto row = w.row(r);
      out[r] = b.data[r] + std::inner_product(row.begin(), row.end(), v.begin(), 0.0);
    }
  };
  auto relu = [](const std::vector<double>& a, std::vector<double>& h) {
    h.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) h[i] = a[i] > 0.0 ? a[i] : 0.0;
  };

  affine(p.w1, p.b1, c.x, c.a1);
  relu(c.a1, c.h1);
  affine(p.w2, p.b2, c.h1, c.a2);
  relu(c.a2, c.h2);
  affine(p.wout, p.bout, c.h2, c.logits);

  const double mx = *std::max_element(c.logits.begin(), c.logits.end());
  c.probs.resize(c.logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < c.logits.size(); ++i) z += (c.probs[i] = std::exp(c.logits[i] - mx));
  for (double& q : c.probs) q /= z;
}

// -log softmax(logits)[gold], computed without forming the probability.
double neg_log_prob(const std::vector<double>& logits, RelationId gold) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[gold];
}

std::string render(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, ptr);
}

}  // namespace

PredictorParams PredictorParams::zeros(const PredictorDims& d) {
  check_dims(d);
  PredictorParams p;
  p.dims = d;
  p.relation_embeddings = Matrix(d.relations, d.relation_dim);
  p.step_embeddings = Matrix(d.max_depth + 1, d.step_dim);
  p.w1 = Matrix(d.hidden, d.relation_dim + d.step_dim);
  p.b1 = Matrix(d.hidden, 1);
  p.w2 = Matrix(d.hidden, d.hidden);
  p.b2 = Matrix(d.hidden, 1);
  p.wout = Matrix(d.relations, d.hidden);
  p.bout = Matrix(d.relations, 1);
  return p;
}

PredictorParams PredictorParams::random(const PredictorDims& d, Rng& rng) {
  PredictorParams p = zeros(d);
  auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  fill_uniform(p.relation_embeddings, inv_sqrt(d.relation_dim), rng);
  fill_uniform(p.step_embeddings, inv_sqrt(d.step_dim), rng);
  fill_uniform(p.w1, inv_sqrt(d.relation_dim + d.step_dim), rng);
  fill_uniform(p.b1, inv_sqrt(d.relation_dim + d.step_dim), rng);
  fill_uniform(p.w2, inv_sqrt(d.hidden), rng);
  fill_uniform(p.b2, inv_sqrt(d.hidden), rng);
  fill_uniform(p.wout, inv_sqrt(d.hidden), rng);
  fill_uniform(p.bout, inv_sqrt(d.hidden), rng);
  return p;
}

void PredictorParams::for_each(const std::function<void(std::string_view, Matrix&)>& fn) {
  fn("relation_embeddings", relation_embeddings);
  fn("step_embeddings", step_embeddings);
  fn("W1", w1);
  fn("b1", b1);
  fn("W2", w2);
  fn("b2", b2);
  fn("Wout", wout);
  fn("bout", bout);
}

void PredictorParams::for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const {
  const_cast<PredictorParams*>(this)->for_each(
      [&](std::string_view name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

std::size_t PredictorParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Matrix& m) { n += m.data.size(); });
  return n;
}

bool PredictorParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Matrix& m) {
    ok = ok && std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
  });
  return ok;
}

RelationDistribution predictor_forward(const PredictorParams& params, RelationId prev, std::size_t step) {
  ForwardCache c;
  forward(params, prev, step, c);
  return RelationDistribution{std::move(c.probs)};
}

std::vector<std::pair<RelationId, double>> predictor_topm(const PredictorParams& params, RelationId prev,
                                                          std::size_t step, std::size_t m) {
  if (m == 0) throw DomainError("predictor_topm: m must be positive");
  const auto dist = predictor_forward(params, prev, step);
  std::vector<std::pair<RelationId, double>> out;
  out.reserve(dist.probs.size());
  for (RelationId r = 0; r < dist.probs.size(); ++r) out.emplace_back(r, dist.probs[r]);
  m = std::min(m, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m), out.end(),
                    [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second > b.second;
                      return a.first < b.first;
                    });
  out.resize(m);
  return out;
}

double predictor_loss(const PredictorParams& params, std::span<const RelationExample> batch) {
  if (batch.empty()) throw DomainError("predictor_loss: empty batch");
  ForwardCache c;
  double total = 0.0;
  for (const auto& ex : batch) {
    forward(params, ex.prev, ex.step, c);
    if (ex.next >= params.dims.relations) throw DomainError("predictor_loss: gold relation out of range");
    total += std::min(neg_log_prob(c.logits, ex.next), -std::log(kMinProb));
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrad predictor_loss_and_grad(const PredictorParams& params, std::span<const RelationExample> batch) {
  if (batch.empty()) throw DomainError("predictor_loss_and_grad: empty batch");
  const PredictorDims& d = params.dims;
  LossAndGrad out{0.0, PredictorParams::zeros(d), 0};
  PredictorParams& g = out.grad;
  const double scale = 1.0 / static_cast<double>(batch.size());

  ForwardCache c;
  std::vector<double> dz(d.relations), dh2(d.hidden), da2(d.hidden), dh1(d.hidden), da1(d.hidden);
  const std::size_t in = d.relation_dim + d.step_dim;
  std::vector<double> dx(in);

  for (const auto& ex : batch) {
    forward(params, ex.prev, ex.step, c);
    if (ex.next >= d.relations) throw DomainError("predictor_loss_and_grad: gold relation out of range");
    const double nll = neg_log_prob(c.logits, ex.next);
    if (nll > -std::log(kMinProb)) {
      // Clamped term is constant in the parameters.
      out.loss += -std::log(kMinProb) * scale;
      ++out.clamped;
      continue;
    }
    out.loss += nll * scale;

    for (std::size_t r = 0; r < d.relations; ++r) dz[r] = (c.probs[r] - (r == ex.next ? 1.0 : 0.0)) * scale;

    std::fill(dh2.begin(), dh2.end(), 0.0);
    for (std::size_t r = 0; r < d.relations; ++r) {
      g.bout.data[r] += dz[r];
      for (std::size_t j = 0; j < d.hidden; ++j) {
        g.wout(r, j) += dz[r] * c.h2[j];
        dh2[j] += params.wout(r, j) * dz[r];
      }
    }
    for (std::size_t j = 0; j < d.hidden; ++j) da2[j] = c.a2[j] > 0.0 ? dh2[j] : 0.0;

    std::fill(dh1.begin(), dh1.end(), 0.0);
    for (std::size_t r = 0; r < d.hidden; ++r) {
      g.b2.data[r] += da2[r];
      if (da2[r] == 0.0) continue;
      for (std::size_t j = 0; j < d.hidden; ++j) {
        g.w2(r, j) += da2[r] * c.h1[j];
        dh1[j] += params.w2(r, j) * da2[r];
      }
    }
    for (std::size_t j = 0; j < d.hidden; ++j) da1[j] = c.a1[j] > 0.0 ? dh1[j] : 0.0;

    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t r = 0; r < d.hidden; ++r) {
      g.b1.data[r] += da1[r];
      if (da1[r] == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) {
        g.w1(r, j) += da1[r] * c.x[j];
        dx[j] += params.w1(r, j) * da1[r];
      }
    }
    for (std::size_t j = 0; j < d.relation_dim; ++j) g.relation_embeddings(ex.prev, j) += dx[j];
    for (std::size_t j = 0; j < d.step_dim; ++j) g.step_embeddings(ex.step, j) += dx[d.relation_dim + j];
  }
  return out;
}

void sgd_step(PredictorParams& params, const PredictorParams& grad, double learning_rate) {
  if (!(learning_rate > 0.0)) throw DomainError("sgd_step: learning rate must be positive");
  if (!(params.dims == grad.dims)) throw ShapeError("sgd_step: gradient shape mismatch");
  if (!grad.all_finite()) throw NumericalError("sgd_step: non-finite gradient");
  std::vector<const Matrix*> grads;
  grad.for_each([&](std::string_view, const Matrix& m) { grads.push_back(&m); });
  std::size_t k = 0;
  params.for_each([&](std::string_view, Matrix& m) {
    const Matrix& gm = *grads[k++];
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] -= learning_rate * gm.data[i];
  });
  if (!params.all_finite()) throw NumericalError("sgd_step: parameters became non-finite");
}

std::vector<RelationExample> extract_training_sequences(std::span<const RelationPath> proofs) {
  std::vector<RelationExample> out;
  for (const auto& p : proofs) {
    RelationId prev = p.query;
    for (std::size_t i = 0; i < p.body.size(); ++i) {
      out.push_back(RelationExample{prev, i + 1, p.body[i]});
      prev = p.body[i];
    }
  }
  return out;
}

// Checkpoint text:
//   rpredict-v1 <relations> <d_r> <d_s> <hidden> <max_depth>
//   <section name> <rows> <cols>
//   <row> ... one line per row
std::string format_checkpoint(const Checkpoint& ckpt) {
  const PredictorDims& d = ckpt.predictor.dims;
  std::ostringstream os;
  os << "rpredict-v1 " << d.relations << ' ' << d.relation_dim << ' ' << d.step_dim << ' ' << d.hidden
     << ' ' << d.max_depth << '\n';
  auto write = [&](std::string_view name, const Matrix& m) {
    os << name << ' ' << m.rows << ' ' << m.cols << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        if (c) os << ' ';
        os << render(m(r, c));
      }
      os << '\n';
    }
  };
  ckpt.predictor.for_each(write);
  if (ckpt.adapter) write("adapter", *ckpt.adapter);
  return os.str();
}

Checkpoint parse_checkpoint(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw fail("empty checkpoint");
  PredictorDims dims;
  {
    std::istringstream hs(line);
    std::string magic;
    if (!(hs >> magic >> dims.relations >> dims.relation_dim >> dims.step_dim >> dims.hidden >> dims.max_depth) ||
        magic != "rpredict-v1") {
      throw fail("expected header \"rpredict-v1 <relations> <d_r> <d_s> <hidden> <max_depth>\"");
    }
  }
  Checkpoint ckpt{PredictorParams::zeros(dims), std::nullopt};

  auto read_section_header = [&](std::string& name, std::size_t& rows, std::size_t& cols) {
    std::istringstream hs(line);
    if (!(hs >> name >> rows >> cols)) throw fail("expected \"<section> <rows> <cols>\"");
  };
  auto read_rows = [&](const std::string& name, Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      if (!next_line()) throw fail("section " + name + " is truncated");
      std::size_t c = 0;
      const char* p = line.data();
      const char* end = line.data() + line.size();
      while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(p, end, v);
        if (ec != std::errc() || c >= m.cols) throw fail("malformed row in section " + name);
        m(r, c++) = v;
        p = ptr;
      }
      if (c != m.cols) throw fail("row in section " + name + " has " + std::to_string(c) + " values");
    }
  };
  ckpt.predictor.for_each([&](std::string_view expected, Matrix& m) {
    if (!next_line()) throw fail("missing section " + std::string(expected));
    std::string name;
    std::size_t rows = 0, cols = 0;
    read_section_header(name, rows, cols);
    if (name != expected) throw fail("expected section \"" + std::string(expected) + "\"");
    if (rows != m.rows || cols != m.cols) throw fail("section " + name + " has wrong shape");
    read_rows(name, m);
  });
  while (next_line()) {
    if (line.empty()) continue;
    std::string name;
    std::size_t rows = 0, cols = 0;
    read_section_header(name, rows, cols);
    if (name != "adapter" || ckpt.adapter) throw fail("unexpected section \"" + name + "\"");
    if (rows == 0 || rows != cols) throw fail("adapter must be square");
    Matrix a(rows, cols);
    read_rows(name, a);
    ckpt.adapter = std::move(a);
  }
  if (!ckpt.predictor.all_finite()) throw NumericalError(std::string(source) + ": non-finite parameters");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LookupError("cannot write checkpoint " + path.string());
  out << format_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str(), path.string());
}

}  // namespace ckgr
