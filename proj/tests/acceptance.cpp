// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "cdid/abstraction.hpp"
#include "cdid/graph.hpp"
#include "cdid/harness.hpp"
#include "cdid/learner.hpp"
#include "cdid/llm_loop.hpp"
#include "cdid/metrics.hpp"
#include "cdid/scm.hpp"
#include "cdid/synth.hpp"

using namespace cdid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix random_lower(int n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::bernoulli_distribution keep(density);
  Matrix a = Matrix::Zero(n, n);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (keep(rng)) a(i, j) = w(rng);
  return a;
}

Matrix random_normal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Matrix::NullaryExpr(rows, cols, [&] { return g(rng); });
}

InterventionView random_view(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> arity_dist(1, n);
  std::vector<int> all(n);
  for (int k = 0; k < n; ++k) all[k] = k;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(arity_dist(rng));
  std::sort(all.begin(), all.end());
  return InterventionView(all, n);
}

// --- 1 ------------------------------------------------------------------------

void round_trip() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> nd(1, 8), dd(1, 32);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = nd(rng), d = dd(rng);
    const Matrix a = random_lower(n, density(rng), rng);
    const Matrix e = random_normal(n, d, rng);
    const Matrix x = random_normal(n, d, rng);
    worst = std::max(worst, (encode(a, decode(a, e)) - e).cwiseAbs().maxCoeff());
    worst = std::max(worst, (decode(a, encode(a, x)) - x).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-9 && secs < 1.0,
         "1000 instances, max abs error " + fmt("%.2e", worst) + ", " + fmt("%.3f", secs) + " s");
}

// --- 2 ------------------------------------------------------------------------

// Targets plus everything reachable from them along edges of `a`.
std::vector<bool> downstream(const Matrix& a, const std::vector<int>& targets) {
  const int n = static_cast<int>(a.rows());
  std::vector<bool> seen(n, false);
  std::vector<int> stack(targets.begin(), targets.end());
  for (int t : targets) seen[t] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int child = 0; child < n; ++child)
      if (a(child, v) != 0.0 && !seen[child]) {
        seen[child] = true;
        stack.push_back(child);
      }
  }
  return seen;
}

void intervention_algebra() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> nd(1, 8), dd(1, 16);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  int idem = 0, comm = 0, local = 0, rows_zeroed = 0;
  const int cases = 1000;
  for (int trial = 0; trial < cases; ++trial) {
    const int n = nd(rng), d = dd(rng);
    const Matrix a = random_lower(n, density(rng), rng);
    const auto v1 = random_view(n, rng), v2 = random_view(n, rng);

    const Matrix once = intervene_structure(a, v1);
    if (intervene_structure(once, v1) == once) ++idem;
    if (intervene_structure(once, v2) == intervene_structure(intervene_structure(a, v2), v1)) ++comm;

    bool zeroed = true;
    for (int i = 0; i < n; ++i) {
      const bool target = v1.contains(i);
      for (int j = 0; j < n; ++j)
        if (once(i, j) != (target ? 0.0 : a(i, j))) zeroed = false;
    }
    if (zeroed) ++rows_zeroed;

    const Matrix e = random_normal(n, d, rng);
    const Matrix before = decode(a, e);
    const Matrix after = intervene_representation(a, e, v1);
    const auto affected = downstream(a, v1.targets());
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (!affected[i] && after.row(i) != before.row(i)) ok = false;
    // A target's row becomes its own noise.
    for (int t : v1.targets())
      if (after.row(t) != e.row(t)) ok = false;
    if (ok) ++local;
  }
  const bool pass = idem == cases && comm == cases && local == cases && rows_zeroed == cases;
  report(2, pass,
         "row zeroing " + std::to_string(rows_zeroed) + "/1000, idempotent " + std::to_string(idem) +
             "/1000, commutative " + std::to_string(comm) + "/1000, downstream-local " + std::to_string(local) +
             "/1000");
}

// --- 3 ------------------------------------------------------------------------

void gradient_fidelity() {
  const int n_vars = 4, dim = 6, hidden = 5;
  const double h = 1e-5;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  size_t total_params = 0;
  std::string cells;
  const auto t0 = Clock::now();
  for (DistanceMetric metric : {DistanceMetric::Mse, DistanceMetric::Cosine})
    for (int arity : {1, 2})
      for (bool shared : {false, true}) {
        TrainConfig c;
        c.metric = metric;
        c.arity = arity;
        c.shared_augmentation = shared;
        c.hidden = hidden;
        const Matrix x = random_normal(n_vars, dim, rng);
        std::vector<Edge> edges;
        for (const auto& p : admissible_pairs(n_vars))
          if (coin(rng)) edges.push_back(p);
        const auto truth = CausalStructure::from_edges(n_vars, edges);
        auto params = LearnerParams::init(dim, hidden, enumerate_interventions(n_vars, arity), shared, rng);
        for (auto& delta : params.deltas)
          for (auto block : delta.blocks())
            for (double& v : block) v = 0.1 * g(rng);

        const LearnerParams analytic = gradients(params, x, truth, c);
        const auto an_blocks = analytic.blocks();
        LearnerParams probe = params;
        auto blocks = probe.blocks();
        double cell_worst = 0.0;
        for (size_t b = 0; b < blocks.size(); ++b)
          for (size_t k = 0; k < blocks[b].size(); ++k) {
            double& v = blocks[b][k];
            const double saved = v;
            v = saved + h;
            const double up = total_loss(probe, x, truth, c).total;
            v = saved - h;
            const double down = total_loss(probe, x, truth, c).total;
            v = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = an_blocks[b][k];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            cell_worst = std::max(cell_worst, rel);
            ++total_params;
          }
        worst = std::max(worst, cell_worst);
      }
  const double secs = seconds_since(t0);
  report(3, worst < 1e-4 && secs < 30.0,
         "8 cells, " + std::to_string(total_params) + " parameters, max rel error " + fmt("%.2e", worst) + ", " +
             fmt("%.1f", secs) + " s");
}

// --- 4 ------------------------------------------------------------------------

void metric_oracles() {
  std::mt19937_64 rng(404);
  int auroc_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 60)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 12)(rng);  // few levels force ties
    std::uniform_int_distribution<int> level(0, levels - 1);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int k = 0; k < n; ++k) {
      scores[k] = level(rng) / static_cast<double>(levels);
      labels[k] = static_cast<int>(rng() & 1u);
    }
    labels[0] = 1;
    labels[1] = 0;
    long long doubled_wins = 0, pos = 0, neg = 0;
    for (int p = 0; p < n; ++p) {
      if (labels[p]) ++pos;
      else ++neg;
      if (!labels[p]) continue;
      for (int q = 0; q < n; ++q) {
        if (labels[q]) continue;
        doubled_wins += scores[p] > scores[q] ? 2 : scores[p] == scores[q] ? 1 : 0;
      }
    }
    const double brute = static_cast<double>(doubled_wins) / (2.0 * static_cast<double>(pos * neg));
    if (auroc(scores, labels) == brute) ++auroc_ok;
  }
  int cdis_ok = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    std::vector<Edge> ea, eb;
    for (const auto& p : admissible_pairs(n)) {
      if (coin(rng)) ea.push_back(p);
      if (coin(rng)) eb.push_back(p);
    }
    const auto a = CausalStructure::from_edges(n, ea), b = CausalStructure::from_edges(n, eb);
    int diff = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) diff += a.has_edge(i, j) != b.has_edge(i, j);
    if (c_dis(a, b) == diff && hamming_distance(a, b) == diff) ++cdis_ok;
  }
  report(4, auroc_ok == 200 && cdis_ok == 500,
         "AUROC exact " + std::to_string(auroc_ok) + "/200, C-Dis == Hamming " + std::to_string(cdis_ok) + "/500");
}

// --- 5, 6, 7 ------------------------------------------------------------------

constexpr int kSeeds = 5;

ExperimentConfig base_experiment() {
  ExperimentConfig cfg;
  cfg.dataset_spec = DatasetSpec{};  // M=5, N=4, d=16, S=1000
  cfg.train.epochs = 50;
  return cfg;
}

using SeedMetrics = std::vector<MetricValues>;

SeedMetrics run_seeds(const ExperimentConfig& cfg, SweepAxis axis = SweepAxis::InterventionFraction,
                      double value = 1.0) {
  ExperimentConfig c = cfg;
  c.axis = axis;
  SeedMetrics out;
  for (int s = 0; s < kSeeds; ++s) {
    const SweepRun run = run_point(c, value, static_cast<std::uint64_t>(s));
    if (!run.metrics) {
      std::printf("  run failed (seed %d): %s\n", s, run.error.c_str());
      MetricValues nan;
      nan.fill(std::nan(""));
      out.push_back(nan);
    } else {
      out.push_back(*run.metrics);
    }
  }
  return out;
}

size_t metric_slot(const std::string& name) {
  for (size_t k = 0; k < kMetricNames.size(); ++k)
    if (name == kMetricNames[k]) return k;
  std::abort();
}

double mean_of(const SeedMetrics& runs, const std::string& metric) {
  const size_t k = metric_slot(metric);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : runs)
    if (std::isfinite(r[k])) {
      sum += r[k];
      ++n;
    }
  return n ? sum / n : std::nan("");
}

void ssl_and_ablations() {
  const auto t0 = Clock::now();
  ExperimentConfig on = base_experiment();
  ExperimentConfig off = on;
  off.train.lambda_c = 0.0;
  const SeedMetrics with = run_seeds(on);
  const SeedMetrics without = run_seeds(off);
  const double secs5 = seconds_since(t0);

  const double inco_on = mean_of(with, "inco_mse"), inco_off = mean_of(without, "inco_mse");
  const double reduction = 1.0 - inco_on / inco_off;
  const double d_stru = mean_of(without, "stru_auroc") - mean_of(with, "stru_auroc");
  const double d_rep = mean_of(without, "rep_auroc") - mean_of(with, "rep_auroc");
  report(5, reduction >= 0.30 && d_stru <= 0.02 && d_rep <= 0.02 && secs5 < 900.0,
         "inco_mse " + fmt("%.4f", inco_off) + " -> " + fmt("%.4f", inco_on) + " (reduction " +
             fmt("%.1f", 100.0 * reduction) + "%), stru_auroc drop " + fmt("%+.3f", d_stru) + ", rep_auroc drop " +
             fmt("%+.3f", d_rep) + ", " + fmt("%.0f", secs5) + " s");

  ExperimentConfig shared = on;
  shared.train.shared_augmentation = true;
  ExperimentConfig cosine = on;
  cosine.train.metric = DistanceMetric::Cosine;
  const SeedMetrics with_shared = run_seeds(shared);
  const SeedMetrics with_cosine = run_seeds(cosine);
  const size_t ca = metric_slot("cons_auroc");
  int not_better = 0;
  for (int s = 0; s < kSeeds; ++s)
    if (with_shared[s][ca] <= with[s][ca]) ++not_better;
  const double gap = std::abs(mean_of(with_cosine, "cons_auroc") - mean_of(with, "cons_auroc"));
  const double gap_stru = std::abs(mean_of(with_cosine, "stru_auroc") - mean_of(with, "stru_auroc"));
  const double gap_rep = std::abs(mean_of(with_cosine, "rep_auroc") - mean_of(with, "rep_auroc"));
  report(6, not_better >= 4 && gap <= 0.02,
         "shared <= per-view cons_auroc in " + std::to_string(not_better) + "/5 seeds (" +
             fmt("%.3f", mean_of(with_shared, "cons_auroc")) + " vs " + fmt("%.3f", mean_of(with, "cons_auroc")) +
             "), |cosine - mse| cons_auroc gap " + fmt("%.3f", gap) + " (stru " + fmt("%.3f", gap_stru) + ", rep " +
             fmt("%.3f", gap_rep) + ")");

  const std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> trend;
  for (double f : fractions) {
    // The fraction 1.0 point is the same configuration as the lambda_c = 1 arm above.
    const SeedMetrics runs = f == 1.0 ? with : run_seeds(on, SweepAxis::InterventionFraction, f);
    trend.push_back(mean_of(runs, "cons_one_minus_mse"));
  }
  bool monotone = true;
  std::string series;
  for (size_t k = 0; k < trend.size(); ++k) {
    if (k > 0 && !(trend[k] >= trend[k - 1] - 0.02)) monotone = false;
    series += (k ? ", " : "") + fmt("%.2f", fractions[k]) + ":" + fmt("%.4f", trend[k]);
  }
  report(7, monotone, "mean cons_one_minus_mse by fraction {" + series + "}");
}

// --- 8 ------------------------------------------------------------------------

void causal_consistency() {
  AbstractionTrialConfig cfg;  // N=4, 100 pairs, 10000 draws, KS at 0.05
  const auto study = run_abstraction_study(cfg);
  AbstractionTrialConfig ind = cfg;
  ind.coupling = NoiseCoupling::Independent;
  const auto independent = run_abstraction_study(ind);

  const auto [m, n] = chain_with_shortcut_pair();
  const auto arity1 = min_distinguishing_arity(m, n, 1);
  const auto first = min_distinguishing_arity(m, n, 4);
  const bool fig7 = !arity1.has_value() && first == 2;
  report(8, study.agreements() >= 98 && fig7,
         "agreement " + std::to_string(study.agreements()) + "/100 (independent noise " +
             std::to_string(independent.agreements()) + "/100), chain-with-shortcut pair " +
             (arity1 ? "distinguishable" : "not distinguishable") + " at arity 1, first distinguishable at arity " +
             (first ? std::to_string(*first) : std::string("none")));
}

// --- 9 ------------------------------------------------------------------------

struct LoopBatch {
  std::vector<double> finals;
  std::vector<double> mean_trace;  // padded with each dialogue's last value
};

LoopBatch run_batch(double q, std::uint64_t seed, int max_iters) {
  const auto dialogues = make_synthetic_dialogues(20, 4, 0.5, seed);
  std::vector<std::vector<double>> traces;
  LoopBatch out;
  for (size_t k = 0; k < dialogues.size(); ++k) {
    const Dialogue& d = dialogues[k];
    MockOracleConfig mc;
    mc.hidden_truth = *d.truth;
    mc.flip_count = 2;
    mc.correction_prob = q;
    mc.seed = seed * 1000 + k;
    MockOracle oracle(d, mc);
    LoopOptions opt;
    opt.supervision = Supervision::Label;
    opt.max_iters = max_iters;
    const auto r = run_loop(d, oracle, opt);
    std::vector<double> t;
    for (const auto& st : r.trace) t.push_back(*st.f1);
    out.finals.push_back(f1_score(r.final_structure, *d.truth));
    traces.push_back(std::move(t));
  }
  size_t len = 0;
  for (const auto& t : traces) len = std::max(len, t.size());
  for (size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto& t : traces) sum += t[std::min(i, t.size() - 1)];
    out.mean_trace.push_back(sum / static_cast<double>(traces.size()));
  }
  return out;
}

void loop_convergence() {
  const LoopBatch exact = run_batch(1.0, 9, 5);
  const int perfect = static_cast<int>(std::count(exact.finals.begin(), exact.finals.end(), 1.0));

  const int max_iters = 5;
  std::vector<double> mean(static_cast<size_t>(max_iters), 0.0);
  bool each_seed_monotone = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LoopBatch b = run_batch(0.7, 100 + seed, max_iters);
    b.mean_trace.resize(mean.size(), b.mean_trace.back());
    for (size_t i = 1; i < b.mean_trace.size(); ++i)
      if (b.mean_trace[i] < b.mean_trace[i - 1]) each_seed_monotone = false;
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += b.mean_trace[i] / 10.0;
  }
  bool monotone = true;
  std::string series;
  for (size_t i = 0; i < mean.size(); ++i) {
    if (i > 0 && mean[i] < mean[i - 1]) monotone = false;
    series += (i ? ", " : "") + fmt("%.3f", mean[i]);
  }
  report(9, perfect == 20 && monotone,
         "q=1: F1 = 1 on " + std::to_string(perfect) + "/20 dialogues within 5 iterations; q=0.7 mean F1 by iteration [" +
             series + "]" + (each_seed_monotone ? ", non-decreasing for every seed" : ""));
}

// --- 10 -----------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "cdid_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "spec.json") << R"({"n_structures": 3, "n_vars": 4, "dim": 8, "n_samples": 200, "seed": 5})";
    std::ofstream(root / "train.json") << R"({"epochs": 4})";
    std::ofstream(root / "sweep.json")
        << R"({"train": {"epochs": 3}, "axis": "intervention_fraction", "values": [0.5, 1.0], "seeds": [0, 1]})";
  }
  const std::string r = root.string();
  bool ok = run_cli("gen-data --config " + r + "/spec.json --out " + r + "/data.json") == 0;
  std::vector<std::pair<std::string, std::string>> pairs;  // files that must match
  for (const std::string tag : {"a", "b"}) {
    const std::string t = r + "/" + tag;
    fs::create_directories(t);
    ok = ok && run_cli("train --data " + r + "/data.json --config " + r + "/train.json --seed 3 --out " + t +
                       "/report.json") == 0;
    ok = ok && run_cli("eval --report " + t + "/report.json --data " + r + "/data.json --out " + t + "/eval.json") == 0;
    ok = ok && run_cli("sweep --config " + r + "/sweep.json --data " + r + "/data.json --out " + t + "/sweep") == 0;
    ok = ok && run_cli("verify-abstraction --trials 5 --draws 500 --out " + t + "/ccc.json") == 0;
    ok = ok && run_cli("llm-loop --synthetic 4 --oracle mock --flip-count 2 --correction-prob 0.7 --seed 2 --out " + t +
                       "/loop.json") == 0;
  }
  const std::vector<std::string> files = {"report_epochs.csv",     "eval.csv",
                                          "eval.json",             "sweep/sweep_long.csv",
                                          "sweep/sweep_summary.csv", "sweep/plot_data.csv",
                                          "sweep/plot_data.json",  "ccc.json",
                                          "loop.json"};
  int same = 0;
  std::string differing;
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    if (!a.empty() && a == b) ++same;
    else differing += " " + f;
  }
  const bool pass = ok && same == static_cast<int>(files.size());
  report(10, pass,
         std::to_string(same) + "/" + std::to_string(files.size()) + " output files byte-identical across two runs" +
             (ok ? "" : ", a command failed") + (differing.empty() ? "" : ", differing:" + differing));
  if (pass) fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks = {round_trip,         intervention_algebra, gradient_fidelity,
                                                     metric_oracles,     ssl_and_ablations,   causal_consistency,
                                                     loop_convergence,   determinism};
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      std::printf("error: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d failing criteria\n", failures);
  return failures == 0 ? 0 : 1;
}
