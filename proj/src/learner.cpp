#include "cdid/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "cdid/error.hpp"
#include "cdid/format.hpp"
#include "cdid/json_util.hpp"
#include "cdid/scm.hpp"

namespace cdid {

using nlohmann::json;

namespace {

constexpr double kCosineEps = 1e-12;

void add_into(MlpParams& dst, const MlpParams& src) {
  dst.w1 += src.w1;
  dst.b1 += src.b1;
  dst.w2 += src.w2;
  dst.b2 += src.b2;
}

void zero_rows(Matrix& m, const InterventionView& view) {
  for (int t : view.targets()) m.row(t).setZero();
}

// Distance and its gradients w.r.t. both arguments (either pointer may be null).
double distance_with_grad(const Vector& a, const Vector& b, DistanceMetric metric, Vector* ga, Vector* gb) {
  const auto k = static_cast<double>(a.size());
  if (a.size() == 0) {
    if (ga) *ga = Vector::Zero(0);
    if (gb) *gb = Vector::Zero(0);
    return 0.0;
  }
  if (metric == DistanceMetric::Mse) {
    const Vector diff = a - b;
    if (ga) *ga = 2.0 * diff / k;
    if (gb) *gb = -2.0 * diff / k;
    return diff.squaredNorm() / k;
  }
  const double na = std::sqrt(a.squaredNorm() + kCosineEps);
  const double nb = std::sqrt(b.squaredNorm() + kCosineEps);
  const double c = a.dot(b) / (na * nb);
  if (ga) *ga = -(b / (na * nb) - c * a / (na * na));
  if (gb) *gb = -(a / (na * nb) - c * b / (nb * nb));
  return 1.0 - c;
}

LossBreakdown run_sample(const LearnerParams& p, const Matrix& x, const CausalStructure& truth,
                         const TrainConfig& cfg, LearnerParams* grad) {
  const int n = static_cast<int>(x.rows());
  if (truth.n_vars() != n) throw Error(ErrorCode::DimensionMismatch, "truth size differs from sample");
  const PairTape ts = mlp_forward(p.structure, x);
  const std::vector<Edge>& pairs = ts.pairs;
  const Vector a = matrix_to_pairs(pairs, truth.as_real());
  const Vector& s = ts.out;

  LossBreakdown lb;
  Vector gs_vec, ds = Vector::Zero(s.size());
  lb.structure = distance_with_grad(s, a, DistanceMetric::Mse, grad ? &gs_vec : nullptr, nullptr);
  if (grad) ds += cfg.lambda_s * gs_vec;

  const PairTape tr = mlp_forward(p.base, x);
  Vector gr;
  lb.representation = distance_with_grad(tr.out, a, DistanceMetric::Mse, grad ? &gr : nullptr, nullptr);
  if (grad && cfg.lambda_r != 0.0) mlp_backward(p.base, x, tr, cfg.lambda_r * gr, grad->base, false);

  // The consistency term is skipped outright when its weight is zero so the
  // deltas are never touched.
  if (cfg.lambda_c != 0.0 && !p.views.empty()) {
    const Matrix a_s = pairs_to_matrix(pairs, s, n);
    const Matrix e = encode(a_s, x);
    const bool through_structure = grad && !cfg.detach_structure;
    Matrix g_as = Matrix::Zero(n, n);
    Matrix g_e = Matrix::Zero(n, x.cols());
    for (const auto& view : p.views) {
      const size_t di = p.delta_index(view);
      const MlpParams head = p.head_for(view);
      const Matrix a_do = intervene_structure(a_s, view);
      const Matrix x_do = decode(a_do, e);
      const PairTape th = mlp_forward(head, x_do);
      const Vector target = matrix_to_pairs(pairs, a_do);
      Vector gh, gt;
      lb.consistency += distance_with_grad(th.out, target, cfg.metric, grad ? &gh : nullptr, grad ? &gt : nullptr);
      if (!grad) continue;

      MlpParams hg = MlpParams::zeros(head.dim(), head.hidden());
      const Matrix g_xdo = mlp_backward(head, x_do, th, cfg.lambda_c * gh, hg, through_structure);
      add_into(grad->base, hg);
      add_into(grad->deltas[di], hg);
      if (!through_structure) continue;

      Matrix g_target = pairs_to_matrix(pairs, cfg.lambda_c * gt, n);
      zero_rows(g_target, view);
      const Matrix g_edo = decode_adjoint(a_do, g_xdo);
      Matrix g_ado = g_edo * x_do.transpose();
      zero_rows(g_ado, view);
      g_as += g_target + g_ado;
      g_e += g_edo;
    }
    if (through_structure) {
      g_as.noalias() -= g_e * x.transpose();
      ds += matrix_to_pairs(pairs, g_as);
    }
  }

  lb.total = cfg.lambda_s * lb.structure + cfg.lambda_r * lb.representation + cfg.lambda_c * lb.consistency;
  if (grad) mlp_backward(p.structure, x, ts, ds, grad->structure, false);
  return lb;
}

}  // namespace

// --- config --------------------------------------------------------------------

const char* to_string(DistanceMetric m) { return m == DistanceMetric::Mse ? "mse" : "cosine"; }

DistanceMetric distance_metric_from_string(const std::string& s) {
  if (s == "mse") return DistanceMetric::Mse;
  if (s == "cosine") return DistanceMetric::Cosine;
  throw Error(ErrorCode::InvalidArgument, "metric must be mse or cosine, got '" + s + "'");
}

void TrainConfig::validate(int n_vars) const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidArgument, "config." + field + ": " + why);
  };
  if (!(lr > 0.0)) bad("lr", "must be positive");
  if (epochs < 0) bad("epochs", "must be non-negative");
  if (batch_size < 1) bad("batch_size", "must be positive");
  if (lambda_s < 0.0 || lambda_r < 0.0 || lambda_c < 0.0) bad("lambda", "weights must be non-negative");
  if (arity < 1 || arity > n_vars) bad("arity", "must lie in [1, n_vars]");
  if (fraction < 0.0 || fraction > 1.0) bad("fraction", "must lie in [0, 1]");
  if (hidden < 1) bad("hidden", "must be positive");
  if (!(trainset_fraction > 0.0 && trainset_fraction <= 1.0)) bad("trainset_fraction", "must lie in (0, 1]");
  if (workers < 1) bad("workers", "must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lambda_s", c.lambda_s},
          {"lambda_r", c.lambda_r},
          {"lambda_c", c.lambda_c},
          {"metric", to_string(c.metric)},
          {"arity", c.arity},
          {"fraction", c.fraction},
          {"hidden", c.hidden},
          {"seed", c.seed},
          {"shared_augmentation", c.shared_augmentation},
          {"detach_structure", c.detach_structure},
          {"trainset_fraction", c.trainset_fraction},
          {"workers", c.workers}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string path = "config";
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, path + ": expected object");
  using jsonu::read_optional;
  read_optional(j, "lr", path, c.lr);
  read_optional(j, "epochs", path, c.epochs);
  read_optional(j, "batch_size", path, c.batch_size);
  read_optional(j, "lambda_s", path, c.lambda_s);
  read_optional(j, "lambda_r", path, c.lambda_r);
  read_optional(j, "lambda_c", path, c.lambda_c);
  if (j.contains("metric"))
    c.metric = distance_metric_from_string(jsonu::get_as<std::string>(j["metric"], path + ".metric"));
  read_optional(j, "arity", path, c.arity);
  read_optional(j, "fraction", path, c.fraction);
  read_optional(j, "hidden", path, c.hidden);
  read_optional(j, "seed", path, c.seed);
  read_optional(j, "shared_augmentation", path, c.shared_augmentation);
  read_optional(j, "detach_structure", path, c.detach_structure);
  read_optional(j, "trainset_fraction", path, c.trainset_fraction);
  read_optional(j, "workers", path, c.workers);
  return c;
}

// --- params --------------------------------------------------------------------

LearnerParams LearnerParams::init(int dim, int hidden, std::vector<InterventionView> views, bool shared,
                                  std::mt19937_64& rng) {
  LearnerParams p;
  p.structure = MlpParams::random(dim, hidden, rng);
  p.base = MlpParams::random(dim, hidden, rng);
  p.views = std::move(views);
  p.shared = shared;
  const size_t n_deltas = shared ? (p.views.empty() ? 0 : 1) : p.views.size();
  p.deltas.assign(n_deltas, MlpParams::zeros(dim, hidden));
  return p;
}

LearnerParams LearnerParams::zeros_like() const {
  LearnerParams z = *this;
  for (auto block : z.blocks()) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

size_t LearnerParams::delta_index(const InterventionView& view) const {
  auto it = std::find(views.begin(), views.end(), view);
  const size_t k = shared ? 0 : static_cast<size_t>(it - views.begin());
  if (it == views.end() || k >= deltas.size())
    throw Error(ErrorCode::MissingHead, "no augmentation head for view " + view.label());
  return k;
}

MlpParams LearnerParams::head_for(const InterventionView& view) const {
  MlpParams h = base;
  add_into(h, deltas[delta_index(view)]);
  return h;
}

size_t LearnerParams::size() const {
  size_t total = structure.size() + base.size();
  for (const auto& d : deltas) total += d.size();
  return total;
}

bool LearnerParams::is_finite() const {
  return structure.is_finite() && base.is_finite() &&
         std::all_of(deltas.begin(), deltas.end(), [](const MlpParams& d) { return d.is_finite(); });
}

std::vector<std::span<double>> LearnerParams::blocks() {
  auto out = structure.blocks();
  for (auto b : base.blocks()) out.push_back(b);
  for (auto& d : deltas)
    for (auto b : d.blocks()) out.push_back(b);
  return out;
}

std::vector<std::span<const double>> LearnerParams::blocks() const {
  auto out = structure.blocks();
  for (auto b : base.blocks()) out.push_back(b);
  for (const auto& d : deltas)
    for (auto b : d.blocks()) out.push_back(b);
  return out;
}

// --- forward / backward --------------------------------------------------------

AdjacencyEstimate estimate_structure(const MlpParams& theta_struct, const Matrix& x) {
  const PairTape t = mlp_forward(theta_struct, x);
  return {pairs_to_matrix(t.pairs, t.out, static_cast<int>(x.rows())), EstimateSource::StructurePath};
}

AdjacencyEstimate classify_pairs(const MlpParams& head, const Matrix& x) {
  const PairTape t = mlp_forward(head, x);
  return {pairs_to_matrix(t.pairs, t.out, static_cast<int>(x.rows())), EstimateSource::RepresentationPath};
}

double pair_distance(const Vector& a, const Vector& b, DistanceMetric metric) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "distance arguments differ in length");
  return distance_with_grad(a, b, metric, nullptr, nullptr);
}

double consistency_loss(const LearnerParams& params, const AdjacencyEstimate& a_s, const Matrix& noise,
                        const std::vector<InterventionView>& views, DistanceMetric metric) {
  if (views.empty()) throw Error(ErrorCode::InvalidArgument, "consistency loss needs at least one view");
  const auto pairs = admissible_pairs(a_s.n_vars());
  double total = 0.0;
  for (const auto& view : views) {
    const MlpParams head = params.head_for(view);
    const Matrix a_do = intervene_structure(a_s.weights(), view);
    const AdjacencyEstimate r_do = classify_pairs(head, decode(a_do, noise));
    total += pair_distance(r_do.admissible_values(), matrix_to_pairs(pairs, a_do), metric);
  }
  return total;
}

LossBreakdown total_loss(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                         const TrainConfig& config) {
  return run_sample(params, x, truth, config, nullptr);
}

LossBreakdown loss_and_gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                                 const TrainConfig& config, LearnerParams& grad) {
  return run_sample(params, x, truth, config, &grad);
}

LearnerParams gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                        const TrainConfig& config) {
  LearnerParams g = params.zeros_like();
  run_sample(params, x, truth, config, &g);
  return g;
}

GradCheckResult check_gradients(const LearnerParams& params, const Matrix& x, const CausalStructure& truth,
                                const TrainConfig& config, double step) {
  const LearnerParams analytic = gradients(params, x, truth, config);
  std::vector<double> flat_grad;
  for (auto b : analytic.blocks()) flat_grad.insert(flat_grad.end(), b.begin(), b.end());

  LearnerParams probe = params;
  auto blocks = probe.blocks();
  GradCheckResult res;
  size_t idx = 0;
  for (auto block : blocks) {
    for (double& v : block) {
      const double saved = v;
      v = saved + step;
      const double up = total_loss(probe, x, truth, config).total;
      v = saved - step;
      const double down = total_loss(probe, x, truth, config).total;
      v = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = flat_grad[idx];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_index = idx;
      }
      ++idx;
    }
  }
  res.n_params = idx;
  return res;
}

// --- evaluation ----------------------------------------------------------------

MetricValues evaluate_samples(const LearnerParams& params, const std::vector<const IndefiniteSample*>& samples) {
  MetricValues out;
  out.fill(std::nan(""));
  if (samples.empty()) return out;
  std::vector<double> s_scores, r_scores;
  std::vector<int> truth_labels, s_labels;
  Confusion rep;
  double hd_sum = 0.0, inco_sum = 0.0;
  for (const auto* smp : samples) {
    const AdjacencyEstimate a_s = estimate_structure(params.structure, smp->x);
    const AdjacencyEstimate a_r = classify_pairs(params.base, smp->x);
    const CausalStructure s_bin = binarize(a_s), r_bin = binarize(a_r);
    hd_sum += hamming_distance(s_bin, smp->truth);
    inco_sum += inconsistency(a_s, a_r);
    rep += confusion(r_bin, smp->truth);
    for (const auto& p : admissible_pairs(smp->truth.n_vars())) {
      s_scores.push_back(a_s(p.effect, p.cause));
      r_scores.push_back(a_r(p.effect, p.cause));
      truth_labels.push_back(smp->truth.has_edge(p.effect, p.cause) ? 1 : 0);
      s_labels.push_back(s_bin.has_edge(p.effect, p.cause) ? 1 : 0);
    }
  }
  auto safe_auroc = [](const std::vector<double>& sc, const std::vector<int>& lb) {
    try {
      return auroc(sc, lb);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingleClass) throw;
      return std::nan("");
    }
  };
  const double count = static_cast<double>(samples.size());
  const double inco = inco_sum / count;
  out = {safe_auroc(s_scores, truth_labels), hd_sum / count, safe_auroc(r_scores, truth_labels), rep.f1(),
         safe_auroc(r_scores, s_labels),     1.0 - inco,     inco};
  return out;
}

// --- training ------------------------------------------------------------------

namespace {

struct Adam {
  std::vector<double> m, v;
  long t = 0;
  static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(LearnerParams& params, const LearnerParams& grad, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto pb = params.blocks();
    auto gb = grad.blocks();
    size_t k = 0;
    for (size_t b = 0; b < pb.size(); ++b) {
      for (size_t i = 0; i < pb[b].size(); ++i, ++k) {
        const double g = gb[b][i];
        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
        pb[b][i] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }
};

void scale_into(LearnerParams& acc, const LearnerParams& g, double factor) {
  auto ab = acc.blocks();
  auto gb = g.blocks();
  for (size_t b = 0; b < ab.size(); ++b)
    for (size_t i = 0; i < ab[b].size(); ++i) ab[b][i] += factor * gb[b][i];
}

}  // namespace

TrainReport train(const IndefiniteDataset& ds, const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_vars = ds.spec.n_vars;
  config.validate(n_vars);

  auto train_set = ds.split(Split::Train);
  const auto valid_set = ds.split(Split::Valid);
  if (train_set.empty()) throw Error(ErrorCode::InvalidArgument, "dataset has no training samples");
  const auto keep = std::max<size_t>(
      1, static_cast<size_t>(std::llround(config.trainset_fraction * static_cast<double>(train_set.size()))));
  train_set.resize(std::min(keep, train_set.size()));

  std::mt19937_64 rng(config.seed);
  auto views = sample_intervention_subset(enumerate_interventions(n_vars, config.arity), config.fraction, config.seed);
  LearnerParams params = LearnerParams::init(ds.spec.dim, config.hidden, std::move(views),
                                             config.shared_augmentation, rng);

  TrainReport report;
  report.config = config;
  report.params = params;
  Adam adam(params.size());
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const auto batch = static_cast<size_t>(config.batch_size);
  std::vector<LearnerParams> slot_grads(batch, params.zeros_like());
  std::vector<LossBreakdown> slot_loss(batch);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_loss;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t count = std::min(batch, order.size() - start);
      auto work = [&](size_t w) {
        for (size_t k = w; k < count; k += static_cast<size_t>(config.workers)) {
          const IndefiniteSample& smp = *train_set[order[start + k]];
          slot_grads[k] = params.zeros_like();
          slot_loss[k] = loss_and_gradients(params, smp.x, smp.truth, config, slot_grads[k]);
        }
      };
      if (config.workers == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < config.workers; ++w) pool.emplace_back(work, static_cast<size_t>(w));
        for (auto& th : pool) th.join();
      }
      // Index-ordered reduction keeps results independent of worker count.
      LearnerParams grad = params.zeros_like();
      for (size_t k = 0; k < count; ++k) {
        if (!std::isfinite(slot_loss[k].total))
          throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch));
        scale_into(grad, slot_grads[k], 1.0 / static_cast<double>(count));
        epoch_loss.total += slot_loss[k].total;
        epoch_loss.structure += slot_loss[k].structure;
        epoch_loss.representation += slot_loss[k].representation;
        epoch_loss.consistency += slot_loss[k].consistency;
      }
      adam.step(params, grad, config.lr);
    }
    if (!params.is_finite())
      throw Error(ErrorCode::NonFiniteLoss, "parameters diverged at epoch " + std::to_string(epoch));

    const double n_train = static_cast<double>(train_set.size());
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss.total / n_train;
    em.loss_structure = epoch_loss.structure / n_train;
    em.loss_representation = epoch_loss.representation / n_train;
    em.loss_consistency = epoch_loss.consistency / n_train;
    em.valid = evaluate_samples(params, valid_set);
    report.epochs.push_back(em);

    const double score = em.valid[4];  // cons_auroc
    if (std::isfinite(score) && score > best_score) {
      best_score = score;
      report.best_epoch = epoch;
      report.params = params;
    }
  }
  if (report.best_epoch == 0 && config.epochs > 0) {
    report.best_epoch = config.epochs;
    report.params = params;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// --- serialization -------------------------------------------------------------

json to_json(const MlpParams& p) {
  return {{"w1", matrix_to_json(p.w1)},
          {"b1", std::vector<double>(p.b1.data(), p.b1.data() + p.b1.size())},
          {"w2", std::vector<double>(p.w2.data(), p.w2.data() + p.w2.size())},
          {"b2", p.b2}};
}

MlpParams mlp_params_from_json(const json& j, const std::string& path) {
  using jsonu::get_as;
  using jsonu::require;
  MlpParams p;
  p.w1 = matrix_from_json(require(j, "w1", path), path + ".w1");
  const auto b1 = get_as<std::vector<double>>(require(j, "b1", path), path + ".b1");
  const auto w2 = get_as<std::vector<double>>(require(j, "w2", path), path + ".w2");
  p.b2 = get_as<double>(require(j, "b2", path), path + ".b2");
  if (p.w1.cols() % 2 != 0) throw Error(ErrorCode::SchemaError, path + ".w1: odd column count");
  if (b1.size() != static_cast<size_t>(p.w1.rows()) || w2.size() != b1.size())
    throw Error(ErrorCode::SchemaError, path + ": hidden sizes disagree");
  p.b1 = Eigen::Map<const Vector>(b1.data(), static_cast<Eigen::Index>(b1.size()));
  p.w2 = Eigen::Map<const Vector>(w2.data(), static_cast<Eigen::Index>(w2.size()));
  return p;
}

json to_json(const LearnerParams& p) {
  json views = json::array();
  for (const auto& v : p.views) {
    json t = json::array();
    for (int i : v.targets()) t.push_back(i + 1);
    views.push_back(t);
  }
  json deltas = json::array();
  for (const auto& d : p.deltas) deltas.push_back(to_json(d));
  return {{"structure", to_json(p.structure)}, {"base", to_json(p.base)}, {"views", views},
          {"deltas", deltas},                  {"shared", p.shared}};
}

LearnerParams learner_params_from_json(const json& j, const std::string& path) {
  using jsonu::get_as;
  using jsonu::require;
  LearnerParams p;
  p.structure = mlp_params_from_json(require(j, "structure", path), path + ".structure");
  p.base = mlp_params_from_json(require(j, "base", path), path + ".base");
  p.shared = get_as<bool>(require(j, "shared", path), path + ".shared");
  const int n_vars_hint = std::numeric_limits<int>::max();
  const auto& views = require(j, "views", path);
  if (!views.is_array()) throw Error(ErrorCode::SchemaError, path + ".views: expected array");
  for (size_t k = 0; k < views.size(); ++k) {
    auto t = get_as<std::vector<int>>(views[k], path + ".views[" + std::to_string(k) + "]");
    for (int& i : t) --i;
    try {
      p.views.emplace_back(t, n_vars_hint);
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, path + ".views[" + std::to_string(k) + "]: " + e.what());
    }
  }
  const auto& deltas = require(j, "deltas", path);
  if (!deltas.is_array()) throw Error(ErrorCode::SchemaError, path + ".deltas: expected array");
  for (size_t k = 0; k < deltas.size(); ++k)
    p.deltas.push_back(mlp_params_from_json(deltas[k], path + ".deltas[" + std::to_string(k) + "]"));
  return p;
}

json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json valid = json::object();
    for (size_t k = 0; k < kMetricNames.size(); ++k) valid[kMetricNames[k]] = json_number(e.valid[k]);
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"loss_structure", e.loss_structure},
                      {"loss_representation", e.loss_representation},
                      {"loss_consistency", e.loss_consistency},
                      {"valid", valid}});
  }
  return {{"config", to_json(r.config)},   {"epochs", epochs},
          {"best_epoch", r.best_epoch},    {"wall_seconds", r.wall_seconds},
          {"params", to_json(r.params)}};
}

TrainReport train_report_from_json(const json& j) {
  using jsonu::get_as;
  using jsonu::require;
  TrainReport r;
  r.config = train_config_from_json(require(j, "config", "$"));
  r.best_epoch = get_as<int>(require(j, "best_epoch", "$"), "$.best_epoch");
  if (j.contains("wall_seconds")) r.wall_seconds = get_as<double>(j["wall_seconds"], "$.wall_seconds");
  r.params = learner_params_from_json(require(j, "params", "$"), "$.params");
  const auto& epochs = require(j, "epochs", "$");
  if (!epochs.is_array()) throw Error(ErrorCode::SchemaError, "$.epochs: expected array");
  for (size_t k = 0; k < epochs.size(); ++k) {
    const std::string ep = "$.epochs[" + std::to_string(k) + "]";
    const auto& e = epochs[k];
    EpochMetrics em;
    em.epoch = get_as<int>(require(e, "epoch", ep), ep + ".epoch");
    em.train_loss = get_as<double>(require(e, "train_loss", ep), ep + ".train_loss");
    em.loss_structure = get_as<double>(require(e, "loss_structure", ep), ep + ".loss_structure");
    em.loss_representation = get_as<double>(require(e, "loss_representation", ep), ep + ".loss_representation");
    em.loss_consistency = get_as<double>(require(e, "loss_consistency", ep), ep + ".loss_consistency");
    const auto& valid = require(e, "valid", ep);
    for (size_t m = 0; m < kMetricNames.size(); ++m) {
      const auto& v = require(valid, kMetricNames[m], ep + ".valid");
      em.valid[m] = v.is_null() ? std::nan("") : get_as<double>(v, ep + ".valid." + kMetricNames[m]);
    }
    r.epochs.push_back(em);
  }
  return r;
}

std::string epochs_csv(const TrainReport& r) {
  std::ostringstream os;
  os << "epoch";
  for (const char* name : kMetricNames) os << "," << name;
  os << ",train_loss,loss_structure,loss_representation,loss_consistency\n";
  for (const auto& e : r.epochs) {
    os << e.epoch;
    for (double v : e.valid) os << "," << format_double(v);
    os << "," << format_double(e.train_loss) << "," << format_double(e.loss_structure) << ","
       << format_double(e.loss_representation) << "," << format_double(e.loss_consistency) << "\n";
  }
  return os.str();
}

}  // namespace cdid
