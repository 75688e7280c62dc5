#pragma once

// Next-relation predictor for rule construction.
//
// Given the previous body relation and the current step k, predicts a
// distribution over the next relation:
//
//   x  = [E_rel[prev] ; E_step[k]]
//   h1 = relu(W1 x + b1)
//   h2 = relu(W2 h1 + b2)
//   p  = softmax(Wout h2 + bout)
//
// Parameters are double precision; gradients are analytic and checked against
// central finite differences in the tests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ckgr/kg_store.hpp"

namespace ckgr {

class Rng;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols, cols);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct PredictorDims {
  std::size_t relations = 0;
  std::size_t relation_dim = 64;
  std::size_t step_dim = 64;
  std::size_t hidden = 256;
  std::size_t max_depth = 3;

  friend bool operator==(const PredictorDims&, const PredictorDims&) = default;
};

struct PredictorParams {
  PredictorDims dims;
  Matrix relation_embeddings;  // relations x relation_dim
  Matrix step_embeddings;      // (max_depth + 1) x step_dim; row 0 unused
  Matrix w1, b1;               // hidden x (relation_dim + step_dim), hidden x 1
  Matrix w2, b2;               // hidden x hidden, hidden x 1
  Matrix wout, bout;           // relations x hidden, relations x 1

  /// All-zero parameters with the given shapes.
  static PredictorParams zeros(const PredictorDims& dims);

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every tensor.
  static PredictorParams random(const PredictorDims& dims, Rng& rng);

  /// Visits (name, tensor) in checkpoint order.
  void for_each(const std::function<void(std::string_view, Matrix&)>& fn);
  void for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const;

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

struct RelationDistribution {
  std::vector<double> probs;
};

RelationDistribution predictor_forward(const PredictorParams& params, RelationId prev, std::size_t step);

/// Top-m relations by probability, ties by ascending id.
std::vector<std::pair<RelationId, double>> predictor_topm(const PredictorParams& params, RelationId prev,
                                                          std::size_t step, std::size_t m);

struct RelationExample {
  RelationId prev = 0;
  std::size_t step = 1;
  RelationId next = 0;

  friend bool operator==(const RelationExample&, const RelationExample&) = default;
};

struct LossAndGrad {
  double loss = 0.0;
  PredictorParams grad;
  std::size_t clamped = 0;  // examples whose gold probability fell below 1e-12
};

/// Mean negative log-probability of the gold next relations, with exact gradients.
LossAndGrad predictor_loss_and_grad(const PredictorParams& params, std::span<const RelationExample> batch);

/// Loss only; used by finite-difference checks and evaluation.
double predictor_loss(const PredictorParams& params, std::span<const RelationExample> batch);

/// params -= learning_rate * grad. Throws NumericalError on non-finite gradients.
void sgd_step(PredictorParams& params, const PredictorParams& grad, double learning_rate);

/// Relation sequence of one proof: the query relation followed by the body.
struct RelationPath {
  RelationId query = 0;
  std::vector<RelationId> body;
};

/// Teacher-forcing examples: (r_q, 1, r_0) and (r_{i-1}, i + 1, r_i) for i >= 1.
std::vector<RelationExample> extract_training_sequences(std::span<const RelationPath> proofs);

struct Checkpoint {
  PredictorParams predictor;
  std::optional<Matrix> adapter;  // square node-embedding adapter, when trained
};

std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text, std::string_view source = "<memory>");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ckgr
