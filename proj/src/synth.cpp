#include "cdid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cdid/error.hpp"
#include "cdid/json_util.hpp"
#include "cdid/scm.hpp"

namespace cdid {

using nlohmann::json;

namespace {

using jsonu::get_as;
using jsonu::require;

Split split_from_string(const std::string& s, const std::string& path) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::SchemaError, path + ": unknown split '" + s + "'");
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

void DatasetSpec::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidArgument, "spec." + field + ": " + why);
  };
  if (n_structures <= 1) bad("n_structures", "indefinite data needs more than one structure");
  if (n_vars < 2) bad("n_vars", "must be at least 2");
  if (dim < 1) bad("dim", "must be at least 1");
  if (n_samples < n_structures) bad("n_samples", "must cover every structure at least once");
  if (!(edge_density > 0.0 && edge_density <= 1.0)) bad("edge_density", "must lie in (0,1]");
  if (!(weight_lo > 0.0 && weight_lo <= weight_hi && weight_hi <= 1.0)) bad("weight_range", "must satisfy 0 < lo <= hi <= 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) bad("noise_std", "must be finite and non-negative");
  if (!structure_weights.empty()) {
    if (static_cast<int>(structure_weights.size()) != n_structures) bad("structure_weights", "needs one entry per structure");
    for (double w : structure_weights)
      if (!(w > 0.0) || !std::isfinite(w)) bad("structure_weights", "entries must be positive");
  }
}

std::vector<const IndefiniteSample*> IndefiniteDataset::split(Split s) const {
  std::vector<const IndefiniteSample*> out;
  for (const auto& sample : samples)
    if (sample.split == s) out.push_back(&sample);
  return out;
}

std::vector<CausalStructure> generate_structures(int m, int n_vars, double density, std::mt19937_64& rng) {
  if (!(density > 0.0 && density <= 1.0)) throw Error(ErrorCode::InvalidArgument, "density must lie in (0,1]");
  const int free_entries = admissible_count(n_vars);
  // 2^{C(N,2)} distinct admissible graphs; anything past 62 bits is effectively unbounded.
  if (free_entries < 62 && static_cast<unsigned long long>(m) > (1ULL << free_entries)) {
    std::ostringstream os;
    os << m << " structures requested but only " << (1ULL << free_entries) << " exist over " << n_vars << " variables";
    throw Error(ErrorCode::CapacityExceeded, os.str());
  }
  const auto pairs = admissible_pairs(n_vars);
  std::bernoulli_distribution coin(density);
  std::vector<CausalStructure> out;
  std::set<std::vector<int>> seen;
  const long max_attempts = 100000L * m;
  for (long attempt = 0; static_cast<int>(out.size()) < m; ++attempt) {
    if (attempt >= max_attempts)
      throw Error(ErrorCode::CapacityExceeded, "could not draw enough distinct structures at this density");
    std::vector<int> bits(pairs.size());
    std::vector<Edge> edges;
    for (size_t k = 0; k < pairs.size(); ++k) {
      bits[k] = coin(rng) ? 1 : 0;
      if (bits[k]) edges.push_back(pairs[k]);
    }
    if (seen.insert(bits).second) out.push_back(CausalStructure::from_edges(n_vars, edges));
  }
  return out;
}

IndefiniteDataset sample_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  IndefiniteDataset ds;
  ds.spec = spec;
  ds.structures = generate_structures(spec.n_structures, spec.n_vars, spec.edge_density, rng);

  std::vector<double> freq = spec.structure_weights;
  if (freq.empty()) freq.assign(static_cast<size_t>(spec.n_structures), 1.0);
  std::discrete_distribution<int> pick_structure(freq.begin(), freq.end());

  // Redraw the assignment until every structure is represented.
  std::vector<int> assignment(static_cast<size_t>(spec.n_samples));
  while (true) {
    std::vector<int> counts(static_cast<size_t>(spec.n_structures), 0);
    for (auto& m : assignment) {
      m = pick_structure(rng);
      ++counts[static_cast<size_t>(m)];
    }
    if (std::find(counts.begin(), counts.end(), 0) == counts.end()) break;
  }

  std::uniform_real_distribution<double> weight(spec.weight_lo, spec.weight_hi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n_train = spec.n_samples * 7 / 10;
  const int n_valid = spec.n_samples / 10;

  ds.samples.reserve(static_cast<size_t>(spec.n_samples));
  for (int s = 0; s < spec.n_samples; ++s) {
    IndefiniteSample sample;
    sample.structure = assignment[static_cast<size_t>(s)];
    sample.truth = ds.structures[static_cast<size_t>(sample.structure)];
    sample.truth_weights = Matrix::Zero(spec.n_vars, spec.n_vars);
    for (const auto& e : sample.truth.edges()) sample.truth_weights(e.effect, e.cause) = weight(rng);
    sample.e.resize(spec.n_vars, spec.dim);
    for (int i = 0; i < spec.n_vars; ++i)
      for (int k = 0; k < spec.dim; ++k) sample.e(i, k) = spec.noise_std * gauss(rng);
    sample.x = decode(sample.truth_weights, sample.e);
    sample.split = s < n_train ? Split::Train : (s < n_train + n_valid ? Split::Valid : Split::Test);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

// --- JSON -------------------------------------------------------------------

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::SchemaError, path + ": expected non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw Error(ErrorCode::SchemaError, path + "[0]: expected array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorCode::SchemaError, rp + ": ragged or non-array row");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& v = row[static_cast<size_t>(k)];
      if (!v.is_number()) throw Error(ErrorCode::SchemaError, rp + "[" + std::to_string(k) + "]: expected number");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

json to_json(const DatasetSpec& spec) {
  json j = {{"n_structures", spec.n_structures}, {"n_vars", spec.n_vars},     {"dim", spec.dim},
            {"n_samples", spec.n_samples},       {"edge_density", spec.edge_density},
            {"weight_range", {spec.weight_lo, spec.weight_hi}},
            {"noise_std", spec.noise_std},       {"seed", spec.seed}};
  if (!spec.structure_weights.empty()) j["structure_weights"] = spec.structure_weights;
  return j;
}

DatasetSpec dataset_spec_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, path + ": expected object");
  DatasetSpec spec;
  auto opt = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end())
      field = get_as<std::decay_t<decltype(field)>>(*it, path + "." + key);
  };
  opt("n_structures", spec.n_structures);
  opt("n_vars", spec.n_vars);
  opt("dim", spec.dim);
  opt("n_samples", spec.n_samples);
  opt("edge_density", spec.edge_density);
  opt("noise_std", spec.noise_std);
  opt("seed", spec.seed);
  opt("structure_weights", spec.structure_weights);
  if (auto it = j.find("weight_range"); it != j.end()) {
    auto wr = get_as<std::vector<double>>(*it, path + ".weight_range");
    if (wr.size() != 2) throw Error(ErrorCode::SchemaError, path + ".weight_range: expected [lo, hi]");
    spec.weight_lo = wr[0];
    spec.weight_hi = wr[1];
  }
  return spec;
}

json to_json(const CausalStructure& s) {
  json edges = json::array();
  for (const auto& e : s.edges()) edges.push_back({e.effect + 1, e.cause + 1});
  return {{"n_vars", s.n_vars()}, {"edges", edges}};
}

CausalStructure structure_from_json(const json& j, const std::string& path) {
  const int n = get_as<int>(require(j, "n_vars", path), path + ".n_vars");
  if (n < 1) throw Error(ErrorCode::SchemaError, path + ".n_vars: must be positive");
  const auto& edges = require(j, "edges", path);
  if (!edges.is_array()) throw Error(ErrorCode::SchemaError, path + ".edges: expected array");
  std::vector<Edge> out;
  for (size_t k = 0; k < edges.size(); ++k) {
    const std::string ep = path + ".edges[" + std::to_string(k) + "]";
    auto pair = get_as<std::vector<int>>(edges[k], ep);
    if (pair.size() != 2) throw Error(ErrorCode::SchemaError, ep + ": expected [effect, cause]");
    out.push_back({pair[0] - 1, pair[1] - 1});
  }
  return CausalStructure::from_edges(n, out);
}

json to_json(const IndefiniteDataset& ds) {
  json structures = json::array();
  for (const auto& s : ds.structures) structures.push_back(to_json(s));
  json samples = json::array();
  for (const auto& s : ds.samples) {
    json weights = json::array();
    for (const auto& e : s.truth.edges()) weights.push_back({e.effect + 1, e.cause + 1, s.truth_weights(e.effect, e.cause)});
    samples.push_back({{"m", s.structure + 1},
                       {"split", to_string(s.split)},
                       {"x", matrix_to_json(s.x)},
                       {"e", matrix_to_json(s.e)},
                       {"weights", weights}});
  }
  return {{"spec", to_json(ds.spec)}, {"structures", structures}, {"samples", samples}};
}

IndefiniteDataset dataset_from_json(const json& j) {
  IndefiniteDataset ds;
  ds.spec = dataset_spec_from_json(require(j, "spec", "$"), "$.spec");
  const auto& structures = require(j, "structures", "$");
  if (!structures.is_array()) throw Error(ErrorCode::SchemaError, "$.structures: expected array");
  for (size_t k = 0; k < structures.size(); ++k)
    ds.structures.push_back(structure_from_json(structures[k], "$.structures[" + std::to_string(k) + "]"));
  const auto& samples = require(j, "samples", "$");
  if (!samples.is_array()) throw Error(ErrorCode::SchemaError, "$.samples: expected array");
  ds.samples.reserve(samples.size());
  for (size_t k = 0; k < samples.size(); ++k) {
    const std::string sp = "$.samples[" + std::to_string(k) + "]";
    const auto& js = samples[k];
    IndefiniteSample s;
    const int m = get_as<int>(require(js, "m", sp), sp + ".m");
    if (m < 1 || m > static_cast<int>(ds.structures.size()))
      throw Error(ErrorCode::SchemaError, sp + ".m: structure id out of range");
    s.structure = m - 1;
    s.truth = ds.structures[static_cast<size_t>(s.structure)];
    s.split = Split::Train;
    if (auto it = js.find("split"); it != js.end()) s.split = split_from_string(get_as<std::string>(*it, sp + ".split"), sp + ".split");
    s.x = matrix_from_json(require(js, "x", sp), sp + ".x");
    s.e = matrix_from_json(require(js, "e", sp), sp + ".e");
    const int n = s.truth.n_vars();
    if (s.x.rows() != n || s.e.rows() != n || s.e.cols() != s.x.cols())
      throw Error(ErrorCode::SchemaError, sp + ": x/e shape does not match n_vars");
    s.truth_weights = Matrix::Zero(n, n);
    if (auto it = js.find("weights"); it != js.end()) {
      for (size_t w = 0; w < it->size(); ++w) {
        const std::string wp = sp + ".weights[" + std::to_string(w) + "]";
        auto triple = get_as<std::vector<double>>((*it)[w], wp);
        if (triple.size() != 3) throw Error(ErrorCode::SchemaError, wp + ": expected [effect, cause, weight]");
        const int eff = static_cast<int>(triple[0]) - 1, cau = static_cast<int>(triple[1]) - 1;
        if (eff < 0 || eff >= n || cau < 0 || cau >= n || !s.truth.has_edge(eff, cau))
          throw Error(ErrorCode::SchemaError, wp + ": weight on a non-edge");
        s.truth_weights(eff, cau) = triple[2];
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, "$: " + std::string(e.what()));
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
}

void save_dataset(const IndefiniteDataset& ds, const std::filesystem::path& path) {
  write_text_atomic(path, to_json(ds).dump());
}

IndefiniteDataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json_file(path)); }

}  // namespace cdid
