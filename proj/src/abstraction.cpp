#include "cdid/abstraction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdid/error.hpp"
#include "cdid/scm.hpp"

namespace cdid {

void LinearScmSpec::validate() const {
  check_admissible(weights, weights.rows());
  if (noise_std.size() != weights.rows())
    throw Error(ErrorCode::DimensionMismatch, "noise_std length differs from variable count");
  for (Eigen::Index i = 0; i < noise_std.size(); ++i)
    if (!(noise_std(i) > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std entries must be positive");
}

LinearScmSpec LinearScmSpec::with_unit_noise(Matrix weights) {
  LinearScmSpec s;
  s.noise_std = Vector::Ones(weights.rows());
  s.weights = std::move(weights);
  s.validate();
  return s;
}

namespace {

void require_same_size(const LinearScmSpec& a, const LinearScmSpec& b) {
  if (a.n_vars() != b.n_vars()) throw Error(ErrorCode::DimensionMismatch, "SCMs differ in variable count");
}

Matrix total_effects(const Matrix& w) {
  const auto n = w.rows();
  Matrix t = decode(w, Matrix::Identity(n, n));
  t.triangularView<Eigen::Upper>().setZero();
  return t;
}

}  // namespace

StrengthSet strength_set(const LinearScmSpec& scm, int arity) {
  scm.validate();
  StrengthSet out;
  for (auto& view : enumerate_interventions(scm.n_vars(), arity))
    out.push_back({view, total_effects(intervene_structure(scm.weights, view))});
  return out;
}

bool abstraction_equivalent(const LinearScmSpec& a, const LinearScmSpec& b, int arity, double tol) {
  require_same_size(a, b);
  const auto sa = strength_set(a, arity);
  const auto sb = strength_set(b, arity);
  for (size_t k = 0; k < sa.size(); ++k)
    if ((sa[k].total - sb[k].total).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "KS statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical_value(size_t n, size_t m, double alpha) {
  const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

double distribution_check(const LinearScmSpec& a, const LinearScmSpec& b, const InterventionView& view,
                          int n_draws, std::uint64_t seed, NoiseCoupling coupling) {
  require_same_size(a, b);
  a.validate();
  b.validate();
  if (n_draws < 1) throw Error(ErrorCode::InvalidArgument, "n_draws must be positive");
  const int n = a.n_vars();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] { return Matrix(Matrix::NullaryExpr(n, n_draws, [&] { return normal(rng); })); };

  const Matrix z_a = draw();
  const Matrix z_b = coupling == NoiseCoupling::Shared ? z_a : draw();
  const Matrix x_a = decode(intervene_structure(a.weights, view), a.noise_std.asDiagonal() * z_a);
  const Matrix x_b = decode(intervene_structure(b.weights, view), b.noise_std.asDiagonal() * z_b);

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> ra(x_a.row(i).begin(), x_a.row(i).end());
    std::vector<double> rb(x_b.row(i).begin(), x_b.row(i).end());
    worst = std::max(worst, ks_statistic(std::move(ra), std::move(rb)));
  }
  return worst;
}

Fingerprint existence_fingerprint(const LinearScmSpec& scm, const InterventionView& view) {
  const Matrix w = intervene_structure(scm.weights, view);
  const int n = scm.n_vars();
  Fingerprint fp;
  for (int s : view.targets()) {
    // Edges only point to higher indices, so one forward sweep finds every descendant.
    std::vector<bool> reached(static_cast<size_t>(n), false);
    reached[static_cast<size_t>(s)] = true;
    for (int t = s + 1; t < n; ++t) {
      for (int u = s; u < t && !reached[static_cast<size_t>(t)]; ++u)
        if (reached[static_cast<size_t>(u)] && w(t, u) != 0.0) reached[static_cast<size_t>(t)] = true;
      if (reached[static_cast<size_t>(t)]) fp.insert({s, t});
    }
  }
  return fp;
}

std::optional<int> min_distinguishing_arity(const LinearScmSpec& a, const LinearScmSpec& b, int max_arity) {
  require_same_size(a, b);
  const int top = std::min(max_arity, a.n_vars());
  for (int k = 1; k <= top; ++k)
    for (const auto& view : enumerate_interventions(a.n_vars(), k))
      if (existence_fingerprint(a, view) != existence_fingerprint(b, view)) return k;
  return std::nullopt;
}

std::pair<LinearScmSpec, LinearScmSpec> chain_with_shortcut_pair() {
  Matrix chain = Matrix::Zero(4, 4);
  chain(1, 0) = chain(2, 1) = chain(3, 2) = 1.0;
  Matrix shortcut = chain;
  shortcut(3, 0) = 1.0;
  return {LinearScmSpec::with_unit_noise(chain), LinearScmSpec::with_unit_noise(shortcut)};
}

// --- random-pair study ---------------------------------------------------------

int AbstractionStudy::agreements() const {
  return static_cast<int>(std::count_if(trials.begin(), trials.end(), [](const AbstractionTrial& t) {
    return t.strength_equivalent == t.distribution_equivalent;
  }));
}

AbstractionStudy run_abstraction_study(const AbstractionTrialConfig& cfg) {
  if (cfg.n_vars < 2 || cfg.trials < 0 || cfg.n_draws < 1 || cfg.arity < 1 || cfg.arity > cfg.n_vars)
    throw Error(ErrorCode::InvalidArgument, "invalid abstraction study configuration");
  AbstractionStudy study;
  study.config = cfg;
  study.critical_value = ks_critical_value(static_cast<size_t>(cfg.n_draws), static_cast<size_t>(cfg.n_draws),
                                           cfg.alpha);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto pairs = admissible_pairs(cfg.n_vars);
  const auto views = enumerate_interventions(cfg.n_vars, cfg.arity);

  for (int t = 0; t < cfg.trials; ++t) {
    Matrix w = Matrix::Zero(cfg.n_vars, cfg.n_vars);
    std::vector<Edge> edges;
    for (const auto& p : pairs) {
      if (unit(rng) < cfg.edge_density) {
        w(p.effect, p.cause) = cfg.weight_lo + (cfg.weight_hi - cfg.weight_lo) * unit(rng);
        edges.push_back(p);
      }
    }
    AbstractionTrial trial;
    trial.perturbed = t % 2 == 1;
    Matrix w_b = w;
    if (trial.perturbed) {
      const auto& pool = edges.empty() ? pairs : edges;
      std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
      const Edge e = pool[pick(rng)];
      w_b(e.effect, e.cause) += cfg.perturbation;
    }
    const auto a = LinearScmSpec::with_unit_noise(w);
    const auto b = LinearScmSpec::with_unit_noise(w_b);
    trial.strength_equivalent = abstraction_equivalent(a, b, cfg.arity, cfg.tol);
    for (size_t v = 0; v < views.size(); ++v) {
      const std::uint64_t stream = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(t) * 131ULL + v;
      trial.max_ks = std::max(trial.max_ks, distribution_check(a, b, views[v], cfg.n_draws, stream, cfg.coupling));
    }
    trial.distribution_equivalent = trial.max_ks < study.critical_value;
    study.trials.push_back(trial);
  }
  return study;
}

nlohmann::json to_json(const AbstractionStudy& s) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : s.trials)
    trials.push_back({{"perturbed", t.perturbed},
                      {"strength_equivalent", t.strength_equivalent},
                      {"max_ks", t.max_ks},
                      {"distribution_equivalent", t.distribution_equivalent}});
  const auto& c = s.config;
  return {{"config",
           {{"n_vars", c.n_vars},
            {"trials", c.trials},
            {"arity", c.arity},
            {"n_draws", c.n_draws},
            {"alpha", c.alpha},
            {"edge_density", c.edge_density},
            {"weight_range", {c.weight_lo, c.weight_hi}},
            {"perturbation", c.perturbation},
            {"tol", c.tol},
            {"noise", c.coupling == NoiseCoupling::Shared ? "shared" : "independent"},
            {"seed", c.seed}}},
          {"critical_value", s.critical_value},
          {"agreements", s.agreements()},
          {"trials", trials}};
}

}  // namespace cdid
