#pragma once

// Synthetic indefinite datasets: M distinct ground-truth DAGs, vector-valued
// variables generated by a linear SCM, one structure per sample.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdid/graph.hpp"

namespace cdid {

struct DatasetSpec {
  int n_structures = 5;
  int n_vars = 4;
  int dim = 16;
  int n_samples = 1000;
  double edge_density = 0.5;
  double weight_lo = 0.5;
  double weight_hi = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 7;
  /// Optional relative frequencies per structure; empty means uniform.
  std::vector<double> structure_weights;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

enum class Split { Train, Valid, Test };
const char* to_string(Split s);

struct IndefiniteSample {
  Matrix x;              // N x d representation
  Matrix e;              // N x d noise with x = decode(truth_weights, e)
  int structure = 0;     // 0-based index into IndefiniteDataset::structures
  CausalStructure truth;
  Matrix truth_weights;  // weights on truth edges, zero elsewhere
  Split split = Split::Train;
};

struct IndefiniteDataset {
  DatasetSpec spec;
  std::vector<CausalStructure> structures;
  std::vector<IndefiniteSample> samples;

  std::vector<const IndefiniteSample*> split(Split s) const;
};

/// M pairwise-distinct structures, each admissible entry on with probability
/// `density`. Throws CapacityExceeded when M > 2^{C(N,2)}.
std::vector<CausalStructure> generate_structures(int m, int n_vars, double density, std::mt19937_64& rng);

IndefiniteDataset sample_dataset(const DatasetSpec& spec);

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j, const std::string& path = "spec");

nlohmann::json to_json(const CausalStructure& s);
CausalStructure structure_from_json(const nlohmann::json& j, const std::string& path = "structure");

nlohmann::json to_json(const IndefiniteDataset& ds);
IndefiniteDataset dataset_from_json(const nlohmann::json& j);

void save_dataset(const IndefiniteDataset& ds, const std::filesystem::path& path);
IndefiniteDataset load_dataset(const std::filesystem::path& path);

/// Shared JSON helpers (also used by the learner and CLI).
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes via a temp file and rename so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cdid
