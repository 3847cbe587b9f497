#pragma once

// Brute-force checks on small linear SCMs: interventional strength sets,
// Monte-Carlo distribution comparison, and reachability fingerprints that
// show how arity affects which models can be told apart.

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdid/graph.hpp"

namespace cdid {

struct LinearScmSpec {
  Matrix weights;    // strictly lower-triangular, any real values
  Vector noise_std;  // per variable, positive

  int n_vars() const { return static_cast<int>(weights.rows()); }
  /// Throws NonSquare / TimeOrderViolation / InvalidArgument.
  void validate() const;
  static LinearScmSpec with_unit_noise(Matrix weights);
};

/// Total-effect matrix (I - W_do)^{-1} per view, admissible entries only
/// (everything on and above the diagonal is zero).
struct ViewStrengths {
  InterventionView view;
  Matrix total;
};
using StrengthSet = std::vector<ViewStrengths>;

StrengthSet strength_set(const LinearScmSpec& scm, int arity);

bool abstraction_equivalent(const LinearScmSpec& a, const LinearScmSpec& b, int arity, double tol);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// c(alpha) * sqrt((n + m) / (n m)) with c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_critical_value(size_t n, size_t m, double alpha = 0.05);

/// Shared: both SCMs are driven by the same noise draws, mirroring the
/// theorem's fixed noise mapping. Independent: each SCM gets its own stream.
enum class NoiseCoupling { Shared, Independent };

/// Largest per-variable KS statistic between samples of the two intervened SCMs.
double distribution_check(const LinearScmSpec& a, const LinearScmSpec& b, const InterventionView& view,
                          int n_draws, std::uint64_t seed, NoiseCoupling coupling = NoiseCoupling::Shared);

/// Pairs (source, reached) with source in the view and `reached` reachable
/// from it in the intervened graph (nonzero weights count as edges).
using Fingerprint = std::set<std::pair<int, int>>;
Fingerprint existence_fingerprint(const LinearScmSpec& scm, const InterventionView& view);

/// Smallest arity whose per-view fingerprints differ; nullopt when none up to max_arity.
std::optional<int> min_distinguishing_arity(const LinearScmSpec& a, const LinearScmSpec& b, int max_arity);

/// Chain 1->2->3->4 and the same chain plus 1->4, unit weights.
std::pair<LinearScmSpec, LinearScmSpec> chain_with_shortcut_pair();

// --- random-pair study ---------------------------------------------------------

struct AbstractionTrialConfig {
  int n_vars = 4;
  int trials = 100;
  int arity = 1;
  int n_draws = 10000;
  double alpha = 0.05;
  double edge_density = 0.6;
  double weight_lo = 0.5;
  double weight_hi = 1.0;
  double perturbation = 0.5;
  double tol = 1e-9;
  NoiseCoupling coupling = NoiseCoupling::Shared;
  std::uint64_t seed = 17;
};

struct AbstractionTrial {
  bool perturbed = false;
  bool strength_equivalent = false;
  double max_ks = 0.0;
  bool distribution_equivalent = false;
};

struct AbstractionStudy {
  AbstractionTrialConfig config;
  double critical_value = 0.0;
  std::vector<AbstractionTrial> trials;
  int agreements() const;
};

/// Half the pairs are identical, half have one edge shifted by `perturbation`.
/// The distribution verdict is "equivalent" when every view of the configured
/// arity stays below the KS critical value.
AbstractionStudy run_abstraction_study(const AbstractionTrialConfig& cfg);

nlohmann::json to_json(const AbstractionStudy& s);

}  // namespace cdid
