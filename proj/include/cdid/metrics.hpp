#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdid/graph.hpp"

namespace cdid {

/// Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie).
/// Throws SingleClass when either class is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  Confusion& operator+=(const Confusion& o);
  /// 1 when there are no positives on either side.
  double f1() const;
};

/// Admissible-entry confusion counts, edge = positive.
Confusion confusion(const CausalStructure& pred, const CausalStructure& truth);
double f1_score(const CausalStructure& pred, const CausalStructure& truth);

/// Mean squared difference over admissible entries.
double inconsistency(const AdjacencyEstimate& a_s, const AdjacencyEstimate& a_r);
/// Entrywise disagreement count over the full matrix.
int c_dis(const CausalStructure& pred, const CausalStructure& truth);

// --- reports -------------------------------------------------------------------

/// Names of the per-run metrics in report order (Structure / Representation /
/// Consistency x two metrics, plus the raw inconsistency).
inline constexpr std::array<const char*, 7> kMetricNames = {
    "stru_auroc", "stru_hd", "rep_auroc", "rep_f1", "cons_auroc", "cons_one_minus_mse", "inco_mse"};

struct MetricSummary {
  double mean = 0.0;
  std::optional<double> ci_half_width;  // 95% t-interval, only with >= 2 seeds
  std::vector<double> per_seed;
};

struct EvalReport {
  std::array<MetricSummary, kMetricNames.size()> metrics;

  MetricSummary& at(const std::string& name);
  const MetricSummary& at(const std::string& name) const;
  double mean(const std::string& name) const { return at(name).mean; }
};

/// Single-run values in kMetricNames order; NaN marks an undefined metric.
using MetricValues = std::array<double, kMetricNames.size()>;
EvalReport single_run_report(const MetricValues& values);

/// Pools per-seed reports; CI omitted for a single seed. NaN values are
/// excluded from the mean and CI of their metric.
EvalReport aggregate(const std::vector<EvalReport>& reports);

/// t_{0.975, n-1} * s / sqrt(n); requires n >= 2.
double t_confidence_half_width(std::span<const double> values);

nlohmann::json to_json(const EvalReport& r);
/// Two header rows (group, metric) then one row of means and one of CI half-widths.
std::string table_csv(const EvalReport& r);

}  // namespace cdid
