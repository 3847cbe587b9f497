#include "cdid/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cdid/error.hpp"
#include "cdid/format.hpp"
#include "cdid/json_util.hpp"

namespace cdid {

using nlohmann::json;

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::InterventionFraction: return "intervention_fraction";
    case SweepAxis::InterventionArity: return "intervention_arity";
    case SweepAxis::TrainsetFraction: return "trainset_fraction";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  for (auto a : {SweepAxis::InterventionFraction, SweepAxis::InterventionArity, SweepAxis::TrainsetFraction})
    if (s == to_string(a)) return a;
  throw Error(ErrorCode::InvalidArgument,
              "axis must be intervention_fraction, intervention_arity or trainset_fraction (got '" + s + "')");
}

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidArgument, "experiment." + field + ": " + why);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset_spec.has_value() == dataset_path.has_value()) bad("dataset", "give exactly one of spec or path");
  if (dataset_spec) dataset_spec->validate();
  if (values.empty()) bad("values", "needs at least one axis value");
  if (seeds.empty()) bad("seeds", "needs at least one seed");
  if (workers < 1) bad("workers", "must be >= 1");
  for (double v : values) {
    switch (axis) {
      case SweepAxis::InterventionFraction:
        if (!(v >= 0.0 && v <= 1.0)) bad("values", "intervention fractions must lie in [0,1]");
        break;
      case SweepAxis::TrainsetFraction:
        if (!(v > 0.0 && v <= 1.0)) bad("values", "trainset fractions must lie in (0,1]");
        break;
      case SweepAxis::InterventionArity:
        if (v != std::floor(v) || v < 1) bad("values", "arities must be positive integers");
        if (dataset_spec && v > dataset_spec->n_vars) bad("values", "arity exceeds n_vars");
        break;
    }
  }
  if (dataset_spec) apply_axis(train, axis, values.front()).validate(dataset_spec->n_vars);
}

json to_json(const ExperimentConfig& c) {
  json j = {{"command", c.command}, {"train", to_json(c.train)}, {"axis", to_string(c.axis)},
            {"values", c.values},   {"seeds", c.seeds},          {"out", c.out_dir.string()},
            {"workers", c.workers}};
  if (c.dataset_spec) j["dataset"] = {{"spec", to_json(*c.dataset_spec)}};
  if (c.dataset_path) j["dataset"] = {{"path", c.dataset_path->string()}};
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c, const std::filesystem::path& dir) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "$: expected object");
  jsonu::read_optional(j, "command", "$", c.command);
  if (auto it = j.find("dataset"); it != j.end()) {
    if (it->contains("spec")) {
      c.dataset_spec = dataset_spec_from_json((*it)["spec"], "$.dataset.spec");
      c.dataset_path.reset();
    } else if (it->contains("path")) {
      std::filesystem::path p = jsonu::get_as<std::string>((*it)["path"], "$.dataset.path");
      c.dataset_path = p.is_relative() && !dir.empty() ? dir / p : p;
      c.dataset_spec.reset();
    } else {
      throw Error(ErrorCode::SchemaError, "$.dataset: expected \"spec\" or \"path\"");
    }
  }
  if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it, c.train);
  if (auto it = j.find("axis"); it != j.end())
    c.axis = sweep_axis_from_string(jsonu::get_as<std::string>(*it, "$.axis"));
  jsonu::read_optional(j, "values", "$", c.values);
  jsonu::read_optional(j, "seeds", "$", c.seeds);
  std::string out;
  if (jsonu::read_optional(j, "out", "$", out)) c.out_dir = out;
  jsonu::read_optional(j, "workers", "$", c.workers);
  return c;
}

TrainConfig apply_axis(TrainConfig base, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::InterventionFraction: base.fraction = value; break;
    case SweepAxis::InterventionArity: base.arity = static_cast<int>(value); break;
    case SweepAxis::TrainsetFraction: base.trainset_fraction = value; break;
  }
  return base;
}

std::string point_filename(SweepAxis axis, double value, std::uint64_t seed) {
  return std::string(to_string(axis)) + "=" + format_double(value) + "_seed=" + std::to_string(seed) + ".json";
}

namespace {

SweepRun run_point_on(const IndefiniteDataset& ds, const ExperimentConfig& cfg, double value, std::uint64_t seed) {
  SweepRun run;
  run.axis_value = value;
  run.seed = seed;
  try {
    TrainConfig tc = apply_axis(cfg.train, cfg.axis, value);
    tc.seed = seed;
    tc.workers = 1;
    const TrainReport report = train(ds, tc);
    run.best_epoch = report.best_epoch;
    run.metrics = evaluate_samples(report.params, ds.split(Split::Test));
  } catch (const std::exception& e) {
    run.metrics.reset();
    run.error = e.what();
  }
  return run;
}

IndefiniteDataset dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  DatasetSpec spec = *cfg.dataset_spec;
  spec.seed += seed;
  return sample_dataset(spec);
}

json point_json(SweepAxis axis, const SweepRun& r) {
  json j = {{"axis", to_string(axis)},
            {"axis_value", r.axis_value},
            {"seed", r.seed},
            {"status", r.metrics ? "ok" : "failed"},
            {"best_epoch", r.best_epoch}};
  if (r.metrics) {
    json m = json::object();
    for (size_t k = 0; k < kMetricNames.size(); ++k) m[kMetricNames[k]] = json_number((*r.metrics)[k]);
    j["metrics"] = m;
  } else {
    j["error"] = r.error;
  }
  return j;
}

SweepRun point_from_json(const json& j, const std::string& path) {
  SweepRun r;
  r.axis_value = jsonu::get_as<double>(jsonu::require(j, "axis_value", path), path + ".axis_value");
  r.seed = jsonu::get_as<std::uint64_t>(jsonu::require(j, "seed", path), path + ".seed");
  jsonu::read_optional(j, "best_epoch", path, r.best_epoch);
  if (jsonu::get_as<std::string>(jsonu::require(j, "status", path), path + ".status") == "ok") {
    const json& m = jsonu::require(j, "metrics", path);
    MetricValues v{};
    for (size_t k = 0; k < kMetricNames.size(); ++k) {
      const json& x = jsonu::require(m, kMetricNames[k], path + ".metrics");
      v[k] = x.is_null() ? std::nan("") : jsonu::get_as<double>(x, path + ".metrics." + kMetricNames[k]);
    }
    r.metrics = v;
  } else {
    jsonu::read_optional(j, "error", path, r.error);
  }
  return r;
}

struct Cell {
  double value;
  std::string metric;
  std::vector<double> finite;
};

// Per (value, metric) finite samples, in table order.
std::vector<Cell> cells(const SweepTable& t) {
  std::vector<Cell> out;
  std::map<std::pair<double, size_t>, size_t> where;
  for (const auto& r : t.runs) {
    for (size_t k = 0; k < kMetricNames.size(); ++k) {
      auto key = std::make_pair(r.axis_value, k);
      auto it = where.find(key);
      if (it == where.end()) {
        it = where.emplace(key, out.size()).first;
        out.push_back({r.axis_value, kMetricNames[k], {}});
      }
      if (r.metrics && std::isfinite((*r.metrics)[k])) out[it->second].finite.push_back((*r.metrics)[k]);
    }
  }
  return out;
}

struct Band {
  double mean = std::nan("");
  double half = std::nan("");
};

Band band(const std::vector<double>& v) {
  Band b;
  if (v.empty()) return b;
  double sum = 0.0;
  for (double x : v) sum += x;
  b.mean = sum / static_cast<double>(v.size());
  b.half = v.size() >= 2 ? t_confidence_half_width(v) : 0.0;
  return b;
}

}  // namespace

SweepRun run_point(const ExperimentConfig& cfg, double value, std::uint64_t seed) {
  if (cfg.dataset_spec) return run_point_on(dataset_for_seed(cfg, seed), cfg, value, seed);
  return run_point_on(load_dataset(*cfg.dataset_path), cfg, value, seed);
}

bool write_if_changed(const std::filesystem::path& path, const std::string& text) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    const std::string old((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (old == text) return false;
  }
  write_text_atomic(path, text);
  return true;
}

SweepTable run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto points_dir = cfg.out_dir / "points";
  std::filesystem::create_directories(points_dir);

  struct Slot {
    double value;
    std::uint64_t seed;
    std::filesystem::path file;
    std::optional<SweepRun> run;
  };
  std::vector<Slot> slots;
  for (double v : cfg.values)
    for (auto s : cfg.seeds) slots.push_back({v, s, points_dir / point_filename(cfg.axis, v, s), std::nullopt});

  std::vector<size_t> pending;
  for (size_t k = 0; k < slots.size(); ++k) {
    if (std::filesystem::exists(slots[k].file))
      slots[k].run = point_from_json(read_json_file(slots[k].file), slots[k].file.filename().string());
    else
      pending.push_back(k);
  }

  std::optional<IndefiniteDataset> shared;
  if (cfg.dataset_path && !pending.empty()) shared = load_dataset(*cfg.dataset_path);

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < pending.size(); i = next++) {
      Slot& slot = slots[pending[i]];
      SweepRun run;
      try {
        run = shared ? run_point_on(*shared, cfg, slot.value, slot.seed)
                     : run_point_on(dataset_for_seed(cfg, slot.seed), cfg, slot.value, slot.seed);
      } catch (const std::exception& e) {
        run.axis_value = slot.value;
        run.seed = slot.seed;
        run.error = e.what();
      }
      write_text_atomic(slot.file, point_json(cfg.axis, run).dump(2) + "\n");
      slot.run = std::move(run);
    }
  };
  const int n_threads = std::min<int>(cfg.workers, static_cast<int>(pending.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepTable table;
  table.axis = cfg.axis;
  for (auto& s : slots) table.runs.push_back(std::move(*s.run));

  write_if_changed(cfg.out_dir / "sweep_long.csv", long_csv(table));
  write_if_changed(cfg.out_dir / "sweep_summary.csv", summary_csv(table));
  const PlotData plot = emit_plot_data(table);
  write_if_changed(cfg.out_dir / "plot_data.json", plot.series.dump(2) + "\n");
  write_if_changed(cfg.out_dir / "plot_data.csv", plot.csv);
  return table;
}

std::string long_csv(const SweepTable& t) {
  std::ostringstream os;
  os << "axis,axis_value,seed,metric,value\n";
  for (const auto& r : t.runs)
    for (size_t k = 0; k < kMetricNames.size(); ++k)
      os << to_string(t.axis) << ',' << format_double(r.axis_value) << ',' << r.seed << ',' << kMetricNames[k] << ','
         << (r.metrics ? format_double((*r.metrics)[k]) : std::string("failed")) << '\n';
  return os.str();
}

std::string summary_csv(const SweepTable& t) {
  std::ostringstream os;
  os << "axis,axis_value,metric,n,mean,ci95_half_width\n";
  for (const auto& c : cells(t)) {
    const Band b = band(c.finite);
    os << to_string(t.axis) << ',' << format_double(c.value) << ',' << c.metric << ',' << c.finite.size() << ','
       << format_double(b.mean) << ',' << (c.finite.size() >= 2 ? format_double(b.half) : std::string()) << '\n';
  }
  return os.str();
}

PlotData emit_plot_data(const SweepTable& t) {
  if (t.runs.empty()) throw Error(ErrorCode::InvalidArgument, "plot data needs a non-empty sweep table");
  PlotData out;
  json metrics = json::object();
  for (const char* name : kMetricNames) metrics[name] = json::array();
  std::ostringstream csv;
  for (size_t k = 0; k < kPlotHeader.size(); ++k) csv << (k ? "," : "") << kPlotHeader[k];
  csv << '\n';
  // Metric-major in the CSV so each series is contiguous.
  const auto all = cells(t);
  for (const char* name : kMetricNames) {
    for (const auto& c : all) {
      if (c.metric != name) continue;
      const Band b = band(c.finite);
      metrics[name].push_back({{"x", c.value},
                               {"n", c.finite.size()},
                               {"mean", json_number(b.mean)},
                               {"lo", json_number(b.mean - b.half)},
                               {"hi", json_number(b.mean + b.half)}});
      csv << name << ',' << to_string(t.axis) << ',' << format_double(c.value) << ',' << c.finite.size() << ','
          << format_double(b.mean) << ',' << format_double(b.mean - b.half) << ',' << format_double(b.mean + b.half)
          << '\n';
    }
  }
  out.series = {{"axis", to_string(t.axis)}, {"metrics", metrics}};
  out.csv = csv.str();
  return out;
}

std::vector<std::pair<double, double>> metric_by_value(const SweepTable& t, const std::string& metric) {
  std::vector<std::pair<double, double>> out;
  for (const auto& c : cells(t))
    if (c.metric == metric) out.emplace_back(c.value, band(c.finite).mean);
  return out;
}

}  // namespace cdid
