#include "cdid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cdid/error.hpp"

namespace cdid {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NonBinaryEntry: return "NonBinaryEntry";
    case ErrorCode::TimeOrderViolation: return "TimeOrderViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ArityOutOfRange: return "ArityOutOfRange";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingHead: return "MissingHead";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingAnswer: return "MissingAnswer";
    case ErrorCode::AmbiguousAnswer: return "AmbiguousAnswer";
    case ErrorCode::DegenerateDialogue: return "DegenerateDialogue";
    case ErrorCode::OracleFailure: return "OracleFailure";
  }
  return "Unknown";
}

std::vector<Edge> admissible_pairs(int n_vars) {
  std::vector<Edge> pairs;
  pairs.reserve(static_cast<size_t>(std::max(0, admissible_count(n_vars))));
  for (int i = 1; i < n_vars; ++i)
    for (int j = 0; j < i; ++j) pairs.push_back({i, j});
  return pairs;
}

Matrix admissible_mask(int n_vars) {
  Matrix mask = Matrix::Zero(n_vars, n_vars);
  for (int i = 1; i < n_vars; ++i) mask.row(i).head(i).setOnes();
  return mask;
}

// --- CausalStructure ---------------------------------------------------------

CausalStructure::CausalStructure(int n_vars) {
  if (n_vars < 1) throw Error(ErrorCode::InvalidArgument, "n_vars must be positive");
  adj_ = BinaryMatrix::Zero(n_vars, n_vars);
}

CausalStructure CausalStructure::from_edges(int n_vars, const std::vector<Edge>& edges) {
  Matrix adj = Matrix::Zero(n_vars, n_vars);
  for (const auto& e : edges) {
    if (e.effect < 0 || e.effect >= n_vars || e.cause < 0 || e.cause >= n_vars)
      throw Error(ErrorCode::IndexOutOfRange, "edge index outside [1, n_vars]");
    adj(e.effect, e.cause) = 1.0;
  }
  return validate_structure(adj);
}

std::vector<Edge> CausalStructure::edges() const {
  std::vector<Edge> out;
  for (const auto& p : admissible_pairs(n_vars()))
    if (has_edge(p.effect, p.cause)) out.push_back(p);
  return out;
}

std::vector<int> CausalStructure::parents(int var) const {
  std::vector<int> out;
  for (int j = 0; j < var; ++j)
    if (adj_(var, j)) out.push_back(j);
  return out;
}

bool CausalStructure::operator==(const CausalStructure& other) const {
  return adj_.rows() == other.adj_.rows() && adj_ == other.adj_;
}

CausalStructure validate_structure(const Matrix& adj) {
  if (adj.rows() != adj.cols() || adj.rows() == 0)
    throw Error(ErrorCode::NonSquare, "adjacency must be a non-empty square matrix");
  const int n = static_cast<int>(adj.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = adj(i, j);
      if (v != 0.0 && v != 1.0) {
        std::ostringstream os;
        os << "entry (" << i + 1 << "," << j + 1 << ") = " << v;
        throw Error(ErrorCode::NonBinaryEntry, os.str());
      }
      if (v == 1.0 && j >= i) {
        std::ostringstream os;
        os << "(" << i + 1 << "," << j + 1 << ")";
        throw Error(ErrorCode::TimeOrderViolation, os.str());
      }
    }
  }
  CausalStructure s;
  s.adj_ = adj.cast<int>();
  return s;
}

// --- AdjacencyEstimate -------------------------------------------------------

AdjacencyEstimate::AdjacencyEstimate(Matrix weights, EstimateSource source)
    : weights_(std::move(weights)), source_(source) {
  if (weights_.rows() != weights_.cols() || weights_.rows() == 0)
    throw Error(ErrorCode::NonSquare, "estimate must be square");
  const int n = n_vars();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w = weights_(i, j);
      if (!(w >= 0.0 && w <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "estimate entries must lie in [0,1]");
      if (j >= i && w != 0.0) {
        std::ostringstream os;
        os << "(" << i + 1 << "," << j + 1 << ")";
        throw Error(ErrorCode::TimeOrderViolation, os.str());
      }
    }
  }
}

Vector AdjacencyEstimate::admissible_values() const {
  const auto pairs = admissible_pairs(n_vars());
  Vector v(static_cast<Eigen::Index>(pairs.size()));
  for (size_t k = 0; k < pairs.size(); ++k) v(static_cast<Eigen::Index>(k)) = weights_(pairs[k].effect, pairs[k].cause);
  return v;
}

// --- InterventionView --------------------------------------------------------

InterventionView::InterventionView(std::vector<int> targets, int n_vars) : targets_(std::move(targets)) {
  if (targets_.empty()) throw Error(ErrorCode::ArityOutOfRange, "a view needs at least one target");
  std::sort(targets_.begin(), targets_.end());
  if (std::adjacent_find(targets_.begin(), targets_.end()) != targets_.end())
    throw Error(ErrorCode::InvalidArgument, "view targets must be distinct");
  if (targets_.front() < 0 || targets_.back() >= n_vars)
    throw Error(ErrorCode::IndexOutOfRange, "view target outside [1, n_vars]");
}

bool InterventionView::contains(int var) const {
  return std::binary_search(targets_.begin(), targets_.end(), var);
}

std::string InterventionView::label() const {
  std::string s = "{";
  for (size_t k = 0; k < targets_.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(targets_[k] + 1);
  }
  return s + "}";
}

// --- operations --------------------------------------------------------------

CausalStructure binarize(const AdjacencyEstimate& est, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0,1)");
  Matrix adj = (est.weights().array() > threshold).cast<double>();
  return validate_structure(adj);
}

int hamming_distance(const CausalStructure& a, const CausalStructure& b) {
  if (a.n_vars() != b.n_vars()) throw Error(ErrorCode::DimensionMismatch, "structures differ in size");
  int d = 0;
  for (const auto& p : admissible_pairs(a.n_vars()))
    d += a.has_edge(p.effect, p.cause) != b.has_edge(p.effect, p.cause);
  return d;
}

std::vector<InterventionView> enumerate_interventions(int n_vars, int arity) {
  if (arity < 1 || arity > n_vars) throw Error(ErrorCode::ArityOutOfRange, "arity must lie in [1, n_vars]");
  std::vector<InterventionView> views;
  std::vector<int> pick(static_cast<size_t>(arity));
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    views.emplace_back(pick, n_vars);
    int k = arity - 1;
    while (k >= 0 && pick[static_cast<size_t>(k)] == n_vars - arity + k) --k;
    if (k < 0) break;
    ++pick[static_cast<size_t>(k)];
    for (int r = k + 1; r < arity; ++r) pick[static_cast<size_t>(r)] = pick[static_cast<size_t>(r - 1)] + 1;
  }
  return views;
}

std::vector<InterventionView> sample_intervention_subset(const std::vector<InterventionView>& views,
                                                         double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "fraction must lie in [0,1]");
  const auto keep = static_cast<size_t>(std::llround(fraction * static_cast<double>(views.size())));
  std::vector<size_t> idx(views.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; the kept indices are re-sorted so output order stays lexicographic.
  for (size_t k = 0; k < keep; ++k) {
    std::uniform_int_distribution<size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<InterventionView> out;
  out.reserve(keep);
  for (size_t i : idx) out.push_back(views[i]);
  return out;
}

}  // namespace cdid
