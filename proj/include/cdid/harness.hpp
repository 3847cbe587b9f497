#pragma once

// Experiment configs and restartable sweeps over one training axis.
//
// Layout of a sweep directory:
//   points/<axis>=<value>_seed=<seed>.json   one file per grid point
//   sweep_long.csv                           axis,axis_value,seed,metric,value
//   sweep_summary.csv                        axis,axis_value,metric,n,mean,ci95_half_width
//   plot_data.json                           per-metric mean +- CI series

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdid/learner.hpp"
#include "cdid/metrics.hpp"
#include "cdid/synth.hpp"

namespace cdid {

enum class SweepAxis { InterventionFraction, InterventionArity, TrainsetFraction };
const char* to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct ExperimentConfig {
  std::string command = "sweep";
  /// Exactly one of the two. A spec is re-sampled per seed (spec.seed + seed);
  /// a dataset file is shared by every seed.
  std::optional<DatasetSpec> dataset_spec;
  std::optional<std::filesystem::path> dataset_path;
  TrainConfig train;
  SweepAxis axis = SweepAxis::InterventionFraction;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path out_dir = "sweep";
  int workers = 1;  // grid points run in parallel; each point trains on one thread

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep the values of `base`; relative dataset paths resolve against `dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {},
                                             const std::filesystem::path& dir = {});

/// TrainConfig for one grid point.
TrainConfig apply_axis(TrainConfig base, SweepAxis axis, double value);

struct SweepRun {
  double axis_value = 0.0;
  std::uint64_t seed = 0;
  std::optional<MetricValues> metrics;  // test-split metrics; empty when the point failed
  std::string error;
  int best_epoch = 0;
};

struct SweepTable {
  SweepAxis axis = SweepAxis::InterventionFraction;
  std::vector<SweepRun> runs;  // value-major, then seed, in config order
};

std::string point_filename(SweepAxis axis, double value, std::uint64_t seed);

/// Trains and evaluates every (value, seed) point not already on disk, then
/// writes the long and summary CSVs and plot data. Files whose content would
/// not change are left untouched.
SweepTable run_sweep(const ExperimentConfig& cfg);

/// One point, no files: train on the point's dataset and evaluate on its test split.
SweepRun run_point(const ExperimentConfig& cfg, double value, std::uint64_t seed);

std::string long_csv(const SweepTable& t);
std::string summary_csv(const SweepTable& t);

/// Header of the per-metric plot series CSV.
inline constexpr std::array<const char*, 7> kPlotHeader = {"metric", "axis", "axis_value", "n",
                                                           "mean",   "lo",   "hi"};

struct PlotData {
  nlohmann::json series;  // {"axis": ..., "metrics": {name: [{x, n, mean, lo, hi}, ...]}}
  std::string csv;        // kPlotHeader columns
};
/// Throws InvalidArgument on an empty table.
PlotData emit_plot_data(const SweepTable& t);

/// Mean over seeds of one metric at each axis value, in first-seen order.
std::vector<std::pair<double, double>> metric_by_value(const SweepTable& t, const std::string& metric);

/// Writes only when the file is missing or its bytes differ.
bool write_if_changed(const std::filesystem::path& path, const std::string& text);

}  // namespace cdid
