#pragma once

// Two-layer pair scorer: [x_cause ; x_effect] (2d) -> tanh (h) -> sigmoid (1).
// Applied to every admissible (effect, cause) pair of an N x d matrix at once.

#include <random>
#include <span>
#include <vector>

#include "cdid/graph.hpp"

namespace cdid {

struct MlpParams {
  Matrix w1;        // h x 2d; left d columns see the cause, right d the effect
  Vector b1;        // h
  Vector w2;        // h
  double b2 = 0.0;

  static MlpParams zeros(int dim, int hidden);
  /// Glorot-uniform weights, zero biases.
  static MlpParams random(int dim, int hidden, std::mt19937_64& rng);

  int dim() const { return static_cast<int>(w1.cols() / 2); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  size_t size() const { return static_cast<size_t>(w1.size() + b1.size() + w2.size() + 1); }
  bool is_finite() const;

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;

  bool operator==(const MlpParams& o) const;
};

/// Per-pair activations kept for the backward pass.
struct PairTape {
  std::vector<Edge> pairs;  // admissible_pairs(N)
  Matrix hidden;            // h x K tanh activations
  Vector out;               // K sigmoid outputs
};

PairTape mlp_forward(const MlpParams& p, const Matrix& x);

/// Accumulates parameter gradients into `grad` given dL/d(out). Returns dL/dX
/// when `want_input_grad` is set, otherwise an empty matrix.
Matrix mlp_backward(const MlpParams& p, const Matrix& x, const PairTape& tape, const Vector& grad_out,
                    MlpParams& grad, bool want_input_grad);

/// Scatters K pair outputs into an N x N matrix (inadmissible entries zero).
Matrix pairs_to_matrix(const std::vector<Edge>& pairs, const Vector& values, int n_vars);
/// Gathers admissible entries of an N x N matrix in pair order.
Vector matrix_to_pairs(const std::vector<Edge>& pairs, const Matrix& m);

}  // namespace cdid
