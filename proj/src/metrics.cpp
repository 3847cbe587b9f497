#include "cdid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "cdid/error.hpp"
#include "cdid/format.hpp"

namespace cdid {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Rank sum of positives with mid-ranks for ties; counts are kept doubled so
  // every intermediate stays an integer.
  long long pos = 0, neg = 0, doubled_rank_sum = 0;
  for (size_t lo = 0; lo < n;) {
    size_t hi = lo;
    while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const long long doubled_mid = static_cast<long long>(lo + hi) + 2;  // 2 * (mean 1-based rank)
    for (size_t k = lo; k <= hi; ++k) {
      if (labels[order[k]]) {
        ++pos;
        doubled_rank_sum += doubled_mid;
      } else {
        ++neg;
      }
    }
    lo = hi + 1;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "auroc needs both classes");
  const long long doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double Confusion::f1() const {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  // 2PR/(P+R) == 2TP/(2TP+FP+FN). No edges predicted and none present is a perfect match.
  if (denom == 0.0) return 1.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

Confusion confusion(const CausalStructure& pred, const CausalStructure& truth) {
  if (pred.n_vars() != truth.n_vars()) throw Error(ErrorCode::DimensionMismatch, "structures differ in size");
  Confusion c;
  for (const auto& p : admissible_pairs(pred.n_vars())) {
    const bool yp = pred.has_edge(p.effect, p.cause), yt = truth.has_edge(p.effect, p.cause);
    if (yp && yt) ++c.tp;
    else if (yp) ++c.fp;
    else if (yt) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_score(const CausalStructure& pred, const CausalStructure& truth) { return confusion(pred, truth).f1(); }

double inconsistency(const AdjacencyEstimate& a_s, const AdjacencyEstimate& a_r) {
  if (a_s.n_vars() != a_r.n_vars()) throw Error(ErrorCode::DimensionMismatch, "estimates differ in size");
  const int k = admissible_count(a_s.n_vars());
  if (k == 0) return 0.0;
  return (a_s.admissible_values() - a_r.admissible_values()).squaredNorm() / k;
}

int c_dis(const CausalStructure& pred, const CausalStructure& truth) {
  if (pred.n_vars() != truth.n_vars()) throw Error(ErrorCode::DimensionMismatch, "structures differ in size");
  return static_cast<int>((pred.adj().array() != truth.adj().array()).count());
}

// --- reports -------------------------------------------------------------------

namespace {
size_t metric_index(const std::string& name) {
  for (size_t k = 0; k < kMetricNames.size(); ++k)
    if (name == kMetricNames[k]) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}
}  // namespace

MetricSummary& EvalReport::at(const std::string& name) { return metrics[metric_index(name)]; }
const MetricSummary& EvalReport::at(const std::string& name) const { return metrics[metric_index(name)]; }

EvalReport single_run_report(const MetricValues& values) {
  EvalReport r;
  for (size_t k = 0; k < values.size(); ++k) {
    r.metrics[k].mean = values[k];
    r.metrics[k].per_seed = {values[k]};
  }
  return r;
}

double t_confidence_half_width(std::span<const double> values) {
  const size_t n = values.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "confidence interval needs at least two values");
  // Shifted by the first value so identical inputs give exactly zero.
  const double shift = values[0];
  double sum = 0.0, sq = 0.0;
  for (double v : values) {
    sum += v - shift;
    sq += (v - shift) * (v - shift);
  }
  const double var = std::max(0.0, (sq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1));
  const double sd = std::sqrt(var);
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate needs at least one report");
  EvalReport out;
  for (size_t k = 0; k < kMetricNames.size(); ++k) {
    std::vector<double> all, finite;
    for (const auto& r : reports)
      for (double v : r.metrics[k].per_seed) {
        all.push_back(v);
        if (std::isfinite(v)) finite.push_back(v);
      }
    auto& m = out.metrics[k];
    m.per_seed = all;
    m.mean = finite.empty() ? std::nan("")
                            : std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
    if (finite.size() >= 2) m.ci_half_width = t_confidence_half_width(finite);
  }
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (size_t k = 0; k < kMetricNames.size(); ++k) {
    const auto& m = r.metrics[k];
    nlohmann::json entry = {{"mean", json_number(m.mean)}};
    entry["ci95_half_width"] = m.ci_half_width ? json_number(*m.ci_half_width) : nlohmann::json(nullptr);
    nlohmann::json per = nlohmann::json::array();
    for (double v : m.per_seed) per.push_back(json_number(v));
    entry["per_seed"] = per;
    j[kMetricNames[k]] = entry;
  }
  return j;
}

std::string table_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "group,Structure,Structure,Representation,Representation,Consistency,Consistency,Consistency\n";
  os << "metric";
  for (const char* name : kMetricNames) os << "," << name;
  os << "\nmean";
  for (const auto& m : r.metrics) os << "," << format_double(m.mean);
  os << "\nci95_half_width";
  for (const auto& m : r.metrics) os << "," << (m.ci_half_width ? format_double(*m.ci_half_width) : std::string());
  os << "\n";
  return os.str();
}

}  // namespace cdid
