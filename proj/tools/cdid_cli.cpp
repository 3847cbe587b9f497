// cdid: data generation, training, evaluation, sweeps, abstraction checks,
// the dialogue instruction loop and gradient checks from one binary.
//
// Exit codes: 0 success, 1 usage, 2 runtime failure, 3 gradient check failed.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "cdid/abstraction.hpp"
#include "cdid/error.hpp"
#include "cdid/format.hpp"
#include "cdid/harness.hpp"
#include "cdid/json_util.hpp"
#include "cdid/learner.hpp"
#include "cdid/llm_loop.hpp"
#include "cdid/metrics.hpp"
#include "cdid/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cdid;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;

// Flags shared by every subcommand. A flag given on the command line wins
// over the same field in the --config file.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "JSON config file");
  sub->add_option("--seed", c.seed, "seed override");
  sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  auto* out = sub->add_option("--out", c.out, "output path");
  if (out_required) out->required();
}

json load_config(const Common& c) { return c.config.empty() ? json::object() : read_json_file(c.config); }

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path s = p;
  s.replace_extension();
  s += suffix;
  return s;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_json(const fs::path& p, const json& j) {
  ensure_parent(p);
  write_text_atomic(p, j.dump(2) + "\n");
}

// --- gen-data ---------------------------------------------------------------------

struct GenData {
  Common common;
  std::string spec;
};

int run_gen_data(const GenData& g) {
  const std::string spec_path = g.spec.empty() ? g.common.config : g.spec;
  DatasetSpec spec = spec_path.empty() ? DatasetSpec{} : dataset_spec_from_json(read_json_file(spec_path));
  if (g.common.seed) spec.seed = *g.common.seed;
  const auto ds = sample_dataset(spec);
  ensure_parent(g.common.out);
  save_dataset(ds, g.common.out);
  std::cout << "wrote " << ds.samples.size() << " samples over " << ds.structures.size() << " structures to "
            << g.common.out << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------------

struct Train {
  Common common;
  std::string data;
  std::string epochs_csv;
};

int run_train(const Train& t) {
  TrainConfig cfg = train_config_from_json(load_config(t.common));
  if (t.common.seed) cfg.seed = *t.common.seed;
  if (t.common.workers) cfg.workers = *t.common.workers;
  const auto ds = load_dataset(t.data);
  const auto report = train(ds, cfg);
  write_json(t.common.out, to_json(report));
  const fs::path csv = t.epochs_csv.empty() ? sibling(t.common.out, "_epochs.csv") : fs::path(t.epochs_csv);
  ensure_parent(csv);
  write_text_atomic(csv, epochs_csv(report));
  std::cout << "best epoch " << report.best_epoch << " of " << report.epochs.size() << "; report " << t.common.out
            << ", epochs " << csv.string() << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------------

struct Eval {
  Common common;
  std::string report;
  std::string data;
  std::string split = "test";
  std::string table;
};

int run_eval(const Eval& e) {
  const auto report = train_report_from_json(read_json_file(e.report));
  const auto ds = load_dataset(e.data);
  const Split split = e.split == "train" ? Split::Train : e.split == "valid" ? Split::Valid : Split::Test;
  const auto values = evaluate_samples(report.params, ds.split(split));
  const auto r = single_run_report(values);
  json j = to_json(r);
  j["split"] = e.split;
  j["n_samples"] = ds.split(split).size();
  write_json(e.common.out, j);
  const fs::path csv = e.table.empty() ? sibling(e.common.out, ".csv") : fs::path(e.table);
  ensure_parent(csv);
  write_text_atomic(csv, table_csv(r));
  for (size_t k = 0; k < kMetricNames.size(); ++k)
    std::cout << kMetricNames[k] << " " << format_double(values[k]) << "\n";
  return 0;
}

// --- sweep ------------------------------------------------------------------------

struct Sweep {
  Common common;
  std::string axis;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::string data;
};

int run_sweep_cmd(const Sweep& s) {
  ExperimentConfig cfg;
  if (!s.common.config.empty())
    cfg = experiment_config_from_json(read_json_file(s.common.config), cfg, fs::path(s.common.config).parent_path());
  if (!s.data.empty()) {
    cfg.dataset_path = s.data;
    cfg.dataset_spec.reset();
  }
  if (!cfg.dataset_spec && !cfg.dataset_path) cfg.dataset_spec = DatasetSpec{};
  if (!s.axis.empty()) cfg.axis = sweep_axis_from_string(s.axis);
  if (!s.values.empty()) cfg.values = s.values;
  if (!s.seeds.empty()) cfg.seeds = s.seeds;
  if (s.common.seed) cfg.seeds = {*s.common.seed};
  if (s.common.workers) cfg.workers = *s.common.workers;
  if (!s.common.out.empty()) cfg.out_dir = s.common.out;
  fs::create_directories(cfg.out_dir);
  write_if_changed(cfg.out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  const auto table = run_sweep(cfg);
  int failed = 0;
  for (const auto& r : table.runs)
    if (!r.metrics) {
      ++failed;
      std::cerr << "point " << format_double(r.axis_value) << " seed " << r.seed << " failed: " << r.error << "\n";
    }
  std::cout << table.runs.size() << " points (" << failed << " failed); results in " << cfg.out_dir.string() << "\n";
  return 0;
}

// --- verify-abstraction -------------------------------------------------------------

struct Verify {
  Common common;
  std::optional<int> n_vars, trials, arity, draws;
  std::optional<std::string> noise;
};

int run_verify(const Verify& v) {
  AbstractionTrialConfig trial;
  std::string noise = "shared";
  const json file = load_config(v.common);
  jsonu::read_optional(file, "n", "$", trial.n_vars);
  jsonu::read_optional(file, "trials", "$", trial.trials);
  jsonu::read_optional(file, "arity", "$", trial.arity);
  jsonu::read_optional(file, "draws", "$", trial.n_draws);
  jsonu::read_optional(file, "seed", "$", trial.seed);
  jsonu::read_optional(file, "noise", "$", noise);
  if (v.n_vars) trial.n_vars = *v.n_vars;
  if (v.trials) trial.trials = *v.trials;
  if (v.arity) trial.arity = *v.arity;
  if (v.draws) trial.n_draws = *v.draws;
  if (v.noise) noise = *v.noise;
  if (v.common.seed) trial.seed = *v.common.seed;
  if (noise != "shared" && noise != "independent")
    throw Error(ErrorCode::InvalidArgument, "noise must be shared or independent");
  trial.coupling = noise == "shared" ? NoiseCoupling::Shared : NoiseCoupling::Independent;

  const auto study = run_abstraction_study(trial);
  const auto [chain, shortcut] = chain_with_shortcut_pair();
  json j = to_json(study);
  const auto arity1 = min_distinguishing_arity(chain, shortcut, 1);
  const auto any = min_distinguishing_arity(chain, shortcut, 4);
  j["chain_with_shortcut"] = {
      {"arity_1", arity1 ? json("distinguishable") : json("not_distinguishable")},
      {"min_distinguishing_arity", any ? json(*any) : json(nullptr)}};
  write_json(v.common.out, j);
  std::cout << "agreements " << study.agreements() << "/" << study.trials.size() << " (KS critical value "
            << format_double(study.critical_value) << "); chain-with-shortcut min arity "
            << (any ? std::to_string(*any) : std::string("none")) << "\n";
  return 0;
}

// --- llm-loop ---------------------------------------------------------------------

struct LlmLoop {
  Common common;
  std::string dialogues;
  int synthetic = 0;
  int n_vars = 4;
  double density = 0.5;
  std::string oracle = "mock";
  std::string supervision;
  int max_iters = 8;
  int arity = 2;
  double flip_prob = 0.0;
  std::optional<int> flip_count;
  double correction_prob = 1.0;
  std::string step2_endpoint;
};

// Fills fields from the --config file unless the matching flag was given.
LlmLoop merge_llm_config(LlmLoop l, const CLI::App& cmd) {
  const json file = load_config(l.common);
  auto take = [&](const char* key, const char* flag, auto& field) {
    if (cmd.count(flag) == 0) jsonu::read_optional(file, key, "$", field);
  };
  take("dialogues", "--dialogues", l.dialogues);
  take("synthetic", "--synthetic", l.synthetic);
  take("n_vars", "--n-vars", l.n_vars);
  take("density", "--density", l.density);
  take("oracle", "--oracle", l.oracle);
  take("supervision", "--supervision", l.supervision);
  take("max_iters", "--max-iters", l.max_iters);
  take("arity", "--arity", l.arity);
  take("flip_prob", "--flip-prob", l.flip_prob);
  take("correction_prob", "--correction-prob", l.correction_prob);
  take("step2_endpoint", "--step2-endpoint", l.step2_endpoint);
  if (cmd.count("--flip-count") == 0 && file.contains("flip_count"))
    l.flip_count = jsonu::get_as<int>(file["flip_count"], "$.flip_count");
  if (!l.common.seed && file.contains("seed")) l.common.seed = jsonu::get_as<std::uint64_t>(file["seed"], "$.seed");
  return l;
}

int run_llm_loop(const LlmLoop& l) {
  const std::uint64_t seed = l.common.seed.value_or(0);
  std::vector<Dialogue> dialogues;
  if (!l.dialogues.empty())
    dialogues = dialogues_from_json(read_json_file(l.dialogues));
  else if (l.synthetic > 0)
    dialogues = make_synthetic_dialogues(l.synthetic, l.n_vars, l.density, seed);
  else
    throw Error(ErrorCode::InvalidArgument, "give --dialogues FILE or --synthetic COUNT");

  LoopOptions opt;
  opt.max_iters = l.max_iters;
  opt.arity = l.arity;
  opt.supervision = !l.supervision.empty()   ? supervision_from_string(l.supervision)
                    : l.oracle == "label"    ? Supervision::Label
                                             : Supervision::Self;
  if ((l.oracle == "mock" || l.oracle == "label"))
    for (const auto& d : dialogues)
      if (!d.truth) throw Error(ErrorCode::InvalidArgument, "mock and label oracles need dialogues with truth");

  std::vector<json> traces(dialogues.size());
  std::vector<std::vector<double>> f1(dialogues.size());
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto one = [&](size_t k) {
    const Dialogue& d = dialogues[k];
    std::unique_ptr<LlmOracle> oracle;
    if (l.oracle == "mock" || l.oracle == "label") {
      MockOracleConfig mc;
      mc.hidden_truth = *d.truth;
      mc.flip_prob = l.flip_prob;
      mc.flip_count = l.flip_count;
      mc.correction_prob = l.correction_prob;
      mc.seed = seed * 1000003ULL + k;
      oracle = std::make_unique<MockOracle>(d, mc);
    } else if (l.oracle == "http") {
      oracle = std::make_unique<HttpOracle>(HttpOracleConfig::from_env());
    } else {
      throw Error(ErrorCode::InvalidArgument, "--oracle must be mock, label or http");
    }
    std::unique_ptr<LlmOracle> step2;
    LoopOptions o = opt;
    if (o.supervision == Supervision::SecondOracle) {
      if (l.step2_endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "second supervision needs --step2-endpoint");
      HttpOracleConfig hc = HttpOracleConfig::from_env();
      hc.endpoint = l.step2_endpoint;
      step2 = std::make_unique<HttpOracle>(hc);
      o.step2 = step2.get();
    }
    json entry;
    try {
      const auto result = run_loop(d, *oracle, o);
      entry = to_json(result);
      for (const auto& s : result.trace)
        if (s.f1) f1[k].push_back(*s.f1);
    } catch (const LoopAborted& e) {
      entry = to_json(e.partial());
      entry["aborted"] = e.what();
    }
    entry["dialogue"] = k + 1;
    traces[k] = std::move(entry);
  };
  auto worker = [&] {
    for (size_t k = next++; k < dialogues.size(); k = next++) {
      try {
        one(k);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(l.common.workers.value_or(1), static_cast<int>(dialogues.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  // Mean F1 per iteration; a finished dialogue keeps its last value.
  size_t longest = 0;
  for (const auto& v : f1) longest = std::max(longest, v.size());
  json mean_f1 = json::array();
  for (size_t it = 0; it < longest; ++it) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : f1)
      if (!v.empty()) {
        sum += v[std::min(it, v.size() - 1)];
        ++n;
      }
    mean_f1.push_back(n ? json(sum / n) : json(nullptr));
  }
  int aborted = 0;
  for (const auto& t : traces) aborted += t.contains("aborted");
  json out = {{"oracle", l.oracle},
              {"supervision", to_string(opt.supervision)},
              {"max_iters", l.max_iters},
              {"arity", l.arity},
              {"mean_f1_by_iteration", mean_f1},
              {"aborted", aborted},
              {"dialogues", traces}};
  write_json(l.common.out, out);
  std::cout << dialogues.size() << " dialogues, " << aborted << " aborted";
  if (!mean_f1.empty() && mean_f1.back().is_number())
    std::cout << ", final mean F1 " << format_double(mean_f1.back().get<double>());
  std::cout << "\n";
  return 0;
}

// --- grad-check -------------------------------------------------------------------

struct GradCheck {
  Common common;
  int n_vars = 4;
  int dim = 6;
  int hidden = 5;
  double tol = 1e-4;
};

int run_grad_check(const GradCheck& g) {
  const std::uint64_t seed = g.common.seed.value_or(0);
  std::vector<TrainConfig> cells;
  if (!g.common.config.empty()) {
    cells.push_back(train_config_from_json(load_config(g.common)));
  } else {
    for (auto metric : {DistanceMetric::Mse, DistanceMetric::Cosine})
      for (int arity : {1, 2})
        for (bool shared : {false, true}) {
          TrainConfig c;
          c.metric = metric;
          c.arity = arity;
          c.shared_augmentation = shared;
          c.hidden = g.hidden;
          cells.push_back(c);
        }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  json rows = json::array();
  bool ok = true;
  for (size_t k = 0; k < cells.size(); ++k) {
    TrainConfig c = cells[k];
    c.validate(g.n_vars);
    const Matrix x = Matrix::NullaryExpr(g.n_vars, g.dim, [&] { return normal(rng); });
    std::vector<Edge> edges;
    for (const auto& p : admissible_pairs(g.n_vars))
      if (coin(rng)) edges.push_back(p);
    const auto truth = CausalStructure::from_edges(g.n_vars, edges);
    const auto views = sample_intervention_subset(enumerate_interventions(g.n_vars, c.arity), c.fraction, c.seed);
    auto params = LearnerParams::init(g.dim, c.hidden, views, c.shared_augmentation, rng);
    // Non-zero deltas so the per-view paths differ.
    for (auto& d : params.deltas)
      for (auto block : d.blocks())
        for (double& v : block) v = 0.1 * normal(rng);
    const auto r = check_gradients(params, x, truth, c);
    const bool pass = r.max_rel_error < g.tol;
    ok = ok && pass;
    std::printf("%-7s arity %d %-8s params %5zu  max rel err %.3e  %s\n", to_string(c.metric), c.arity,
                c.shared_augmentation ? "shared" : "per-view", r.n_params, r.max_rel_error, pass ? "ok" : "FAIL");
    rows.push_back({{"metric", to_string(c.metric)},
                    {"arity", c.arity},
                    {"shared_augmentation", c.shared_augmentation},
                    {"n_params", r.n_params},
                    {"max_rel_error", r.max_rel_error},
                    {"pass", pass}});
  }
  if (!g.common.out.empty()) write_json(g.common.out, {{"tolerance", g.tol}, {"cells", rows}, {"pass", ok}});
  return ok ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal discovery on indefinite data"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "sample a synthetic indefinite dataset");
  add_common(gen_cmd, gen.common, true);
  gen_cmd->add_option("--spec", gen.spec, "dataset spec JSON (same as --config)");

  Train tr;
  auto* train_cmd = app.add_subcommand("train", "train on a dataset");
  add_common(train_cmd, tr.common, true);
  train_cmd->add_option("--data", tr.data, "dataset JSON")->required();
  train_cmd->add_option("--epochs-csv", tr.epochs_csv, "per-epoch CSV (default <out>_epochs.csv)");

  Eval ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained report");
  add_common(eval_cmd, ev.common, true);
  eval_cmd->add_option("--report", ev.report, "train report JSON")->required();
  eval_cmd->add_option("--data", ev.data, "dataset JSON")->required();
  eval_cmd->add_option("--split", ev.split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_option("--table", ev.table, "table CSV (default <out>.csv)");

  Sweep sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a restartable parameter sweep");
  add_common(sweep_cmd, sw.common, false);
  sweep_cmd->add_option("--axis", sw.axis, "intervention_fraction, intervention_arity or trainset_fraction");
  sweep_cmd->add_option("--values", sw.values, "axis values");
  sweep_cmd->add_option("--seeds", sw.seeds, "seed list");
  sweep_cmd->add_option("--data", sw.data, "dataset JSON shared by all seeds");

  Verify ver;
  auto* ver_cmd = app.add_subcommand("verify-abstraction", "compare strength sets with sampled distributions");
  add_common(ver_cmd, ver.common, true);
  ver_cmd->add_option("--n", ver.n_vars, "variables per SCM");
  ver_cmd->add_option("--trials", ver.trials, "random SCM pairs");
  ver_cmd->add_option("--arity", ver.arity, "intervention arity");
  ver_cmd->add_option("--draws", ver.draws, "Monte-Carlo draws per view");
  ver_cmd->add_option("--noise", ver.noise, "shared or independent noise streams");

  LlmLoop ll;
  auto* ll_cmd = app.add_subcommand("llm-loop", "run the iterative instruction loop");
  add_common(ll_cmd, ll.common, true);
  ll_cmd->add_option("--dialogues", ll.dialogues, "dialogues JSON");
  ll_cmd->add_option("--synthetic", ll.synthetic, "generate this many dialogues instead");
  ll_cmd->add_option("--n-vars", ll.n_vars, "utterances per synthetic dialogue");
  ll_cmd->add_option("--density", ll.density, "edge density of synthetic dialogues");
  ll_cmd->add_option("--oracle", ll.oracle, "mock, label or http")->check(CLI::IsMember({"mock", "label", "http"}));
  ll_cmd->add_option("--supervision", ll.supervision, "none, self, second or label");
  ll_cmd->add_option("--max-iters", ll.max_iters, "iteration cap");
  ll_cmd->add_option("--arity", ll.arity, "intervention arity");
  ll_cmd->add_option("--flip-prob", ll.flip_prob, "mock: initial per-entry error");
  ll_cmd->add_option("--flip-count", ll.flip_count, "mock: exact number of initial errors");
  ll_cmd->add_option("--correction-prob", ll.correction_prob, "mock: chance a flagged entry is fixed");
  ll_cmd->add_option("--step2-endpoint", ll.step2_endpoint, "endpoint answering reduced dialogues");

  GradCheck gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of the analytic gradients");
  add_common(gc_cmd, gc.common, false);
  gc_cmd->add_option("--n-vars", gc.n_vars, "variables");
  gc_cmd->add_option("--dim", gc.dim, "representation width");
  gc_cmd->add_option("--hidden", gc.hidden, "hidden units");
  gc_cmd->add_option("--tol", gc.tol, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*sweep_cmd) return run_sweep_cmd(sw);
    if (*ver_cmd) return run_verify(ver);
    if (*ll_cmd) return run_llm_loop(merge_llm_config(ll, *ll_cmd));
    if (*gc_cmd) return run_grad_check(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
