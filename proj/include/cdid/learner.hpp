#pragma once

// Structure scorer + base classifier + per-view augmentation heads trained
// under two reconstruction losses and the multi-view consistency loss.
//
// The head used for view k has parameters theta_base + delta_k, so the shared
// base classifier receives consistency gradients while each view keeps its own
// offset. In shared-augmentation mode every view points at one delta.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdid/graph.hpp"
#include "cdid/metrics.hpp"
#include "cdid/mlp.hpp"
#include "cdid/synth.hpp"

namespace cdid {

enum class DistanceMetric { Mse, Cosine };
const char* to_string(DistanceMetric m);
DistanceMetric distance_metric_from_string(const std::string& s);

struct LearnerParams {
  MlpParams structure;
  MlpParams base;
  std::vector<InterventionView> views;
  std::vector<MlpParams> deltas;  // one per view, or a single one when shared
  bool shared = false;

  static LearnerParams init(int dim, int hidden, std::vector<InterventionView> views, bool shared,
                            std::mt19937_64& rng);
  /// Same shapes, all zero.
  LearnerParams zeros_like() const;

  /// Index into deltas for a view; throws MissingHead.
  size_t delta_index(const InterventionView& view) const;
  /// theta_base + delta for the view.
  MlpParams head_for(const InterventionView& view) const;

  size_t size() const;
  bool is_finite() const;
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

struct TrainConfig {
  double lr = 0.01;
  int epochs = 50;
  int batch_size = 32;
  double lambda_s = 1.0;
  double lambda_r = 1.0;
  double lambda_c = 1.0;
  DistanceMetric metric = DistanceMetric::Mse;
  int arity = 2;
  double fraction = 1.0;
  int hidden = 32;
  std::uint64_t seed = 0;
  bool shared_augmentation = false;
  bool detach_structure = false;
  double trainset_fraction = 1.0;
  int workers = 1;

  void validate(int n_vars) const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct LossBreakdown {
  double total = 0.0;
  double structure = 0.0;
  double representation = 0.0;
  double consistency = 0.0;
};

AdjacencyEstimate estimate_structure(const MlpParams& theta_struct, const Matrix& x);
AdjacencyEstimate classify_pairs(const MlpParams& head, const Matrix& x);

/// Distance over admissible entries given as pair vectors.
double pair_distance(const Vector& a, const Vector& b, DistanceMetric metric);

double consistency_loss(const LearnerParams& params, const AdjacencyEstimate& a_s, const Matrix& noise,
                        const std::vector<InterventionView>& views, DistanceMetric metric);

/// Loss for one sample; `truth` is the ground-truth adjacency.
LossBreakdown total_loss(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                         const TrainConfig& config);

/// Loss plus exact gradients accumulated into `grad` (same shapes as params).
LossBreakdown loss_and_gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                                 const TrainConfig& config, LearnerParams& grad);
LearnerParams gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                        const TrainConfig& config);

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t n_params = 0;
  size_t worst_index = 0;
};
/// Central differences on every parameter against loss_and_gradients.
GradCheckResult check_gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                                const TrainConfig& config, double step = 1e-5);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double loss_structure = 0.0;
  double loss_representation = 0.0;
  double loss_consistency = 0.0;
  MetricValues valid{};
};

struct TrainReport {
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  LearnerParams params;
  double wall_seconds = 0.0;
};

/// Pooled metrics over samples, in kMetricNames order.
MetricValues evaluate_samples(const LearnerParams& params, const std::vector<const IndefiniteSample*>& samples);

TrainReport train(const IndefiniteDataset& ds, const TrainConfig& config);

nlohmann::json to_json(const MlpParams& p);
MlpParams mlp_params_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const LearnerParams& p);
LearnerParams learner_params_from_json(const nlohmann::json& j, const std::string& path = "params");
nlohmann::json to_json(const TrainReport& r);
TrainReport train_report_from_json(const nlohmann::json& j);
/// epoch, validation metrics, loss components; no timing columns.
std::string epochs_csv(const TrainReport& r);

}  // namespace cdid
