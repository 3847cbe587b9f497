#pragma once

// Adjacency types shared by every module.
//
// Convention: entry (i, j) of an adjacency matrix means x_j -> x_i, and the
// variable index is the time order, so only strictly lower-triangular
// ("admissible") entries may carry an edge. Indices are 0-based in code and
// 1-based in every text or JSON surface.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cdid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BinaryMatrix = Eigen::MatrixXi;

/// (effect, cause) with cause < effect.
struct Edge {
  int effect = 0;
  int cause = 0;
  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Admissible (effect, cause) pairs in row-major order: (1,0), (2,0), (2,1), ...
std::vector<Edge> admissible_pairs(int n_vars);
inline int admissible_count(int n_vars) { return n_vars * (n_vars - 1) / 2; }

class CausalStructure {
 public:
  CausalStructure() = default;
  /// Empty graph over n_vars variables.
  explicit CausalStructure(int n_vars);

  static CausalStructure from_edges(int n_vars, const std::vector<Edge>& edges);

  int n_vars() const { return static_cast<int>(adj_.rows()); }
  const BinaryMatrix& adj() const { return adj_; }
  bool has_edge(int effect, int cause) const { return adj_(effect, cause) != 0; }
  std::vector<Edge> edges() const;
  int edge_count() const { return adj_.sum(); }
  Matrix as_real() const { return adj_.cast<double>(); }
  std::vector<int> parents(int var) const;

  bool operator==(const CausalStructure& other) const;

 private:
  friend CausalStructure validate_structure(const Matrix& adj);
  BinaryMatrix adj_;
};

enum class EstimateSource { StructurePath, RepresentationPath };

/// Weighted adjacency in [0,1]; inadmissible entries are exactly zero.
class AdjacencyEstimate {
 public:
  AdjacencyEstimate() = default;
  AdjacencyEstimate(Matrix weights, EstimateSource source);

  int n_vars() const { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }
  double operator()(int effect, int cause) const { return weights_(effect, cause); }
  EstimateSource source() const { return source_; }

  /// Admissible entries in admissible_pairs() order.
  Vector admissible_values() const;

 private:
  Matrix weights_;
  EstimateSource source_ = EstimateSource::StructurePath;
};

/// One do_g target set. Targets are sorted, distinct, 0-based.
class InterventionView {
 public:
  InterventionView() = default;
  InterventionView(std::vector<int> targets, int n_vars);

  const std::vector<int>& targets() const { return targets_; }
  int arity() const { return static_cast<int>(targets_.size()); }
  bool contains(int var) const;
  /// "{1,3}" with 1-based indices.
  std::string label() const;

  bool operator==(const InterventionView&) const = default;
  auto operator<=>(const InterventionView&) const = default;

 private:
  std::vector<int> targets_;
};

CausalStructure validate_structure(const Matrix& adj);
CausalStructure binarize(const AdjacencyEstimate& est, double threshold = 0.5);
int hamming_distance(const CausalStructure& a, const CausalStructure& b);

std::vector<InterventionView> enumerate_interventions(int n_vars, int arity);
std::vector<InterventionView> sample_intervention_subset(const std::vector<InterventionView>& views,
                                                         double fraction, std::uint64_t seed);

/// Strict lower-triangular mask with ones on admissible entries.
Matrix admissible_mask(int n_vars);

}  // namespace cdid
