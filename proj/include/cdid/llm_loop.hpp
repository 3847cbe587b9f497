#pragma once

// Iterative instruction loop: ask an oracle for pairwise causal answers,
// re-ask on intervention-reduced dialogues, feed inconsistencies back, repeat.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdid/error.hpp"
#include "cdid/graph.hpp"

namespace cdid {

struct Dialogue {
  std::vector<std::string> utterances;
  std::optional<CausalStructure> truth;

  int size() const { return static_cast<int>(utterances.size()); }
  /// N >= 2, single-line utterances, truth (if any) of matching size.
  void validate() const;
};

nlohmann::json to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j, const std::string& path = "dialogue");
/// Accepts a bare array or {"dialogues": [...]}.
std::vector<Dialogue> dialogues_from_json(const nlohmann::json& j);

/// `count` dialogues of n_vars distinct utterances over random DAGs.
std::vector<Dialogue> make_synthetic_dialogues(int count, int n_vars, double edge_density, std::uint64_t seed);

class LlmOracle {
 public:
  virtual ~LlmOracle() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// --- prompt protocol -------------------------------------------------------------

std::string build_initial_prompt(const Dialogue& d);
/// "Answer k: Yes." lines for every admissible pair in question order.
std::string render_answers(const CausalStructure& s);
/// Throws MissingAnswer(k) / AmbiguousAnswer(k), k 1-based.
CausalStructure parse_answers(const std::string& text, int n_vars);

/// Utterances of the last "Dialogue:" block in a prompt, in order.
std::vector<std::string> extract_target_utterances(const std::string& prompt);

struct ReducedDialogue {
  Dialogue dialogue;
  std::vector<int> original_index;  // reduced position -> original 0-based index
};

/// Deletes utterances that are parents (under a_s) of any target; targets stay.
/// Throws DegenerateDialogue when fewer than two utterances remain.
ReducedDialogue intervene_dialogue(const Dialogue& d, const CausalStructure& a_s, const InterventionView& view);

enum class ConflictKind { Drop, Add };
const char* to_string(ConflictKind k);

struct Conflict {
  int cause = 0;   // earlier utterance, 0-based
  int effect = 0;  // later utterance, 0-based
  ConflictKind kind = ConflictKind::Drop;
  bool operator==(const Conflict&) const = default;
  auto operator<=>(const Conflict&) const = default;
};

/// "first", "second", ... ; numeric suffix form past twenty.
std::string ordinal_word(int one_based);
std::string build_feedback(const std::vector<Conflict>& conflicts);
/// Inverse of build_feedback, used by the mock oracle.
std::vector<Conflict> parse_feedback(const std::string& text);

// --- oracles ---------------------------------------------------------------------

struct MockOracleConfig {
  CausalStructure hidden_truth;
  double flip_prob = 0.0;             // per admissible entry, initial error
  std::optional<int> flip_count;      // exact number of initial flips (overrides flip_prob)
  double correction_prob = 1.0;       // chance each flagged entry is fixed
  std::uint64_t seed = 0;
  void validate() const;
};

/// Simulated model. Answers the full dialogue from a noisy belief that moves
/// toward feedback; answers reduced dialogues from the truth restricted to the
/// utterances it is shown.
class MockOracle : public LlmOracle {
 public:
  MockOracle(Dialogue full, MockOracleConfig cfg);
  std::string complete(const std::string& prompt) override;
  const CausalStructure& belief() const { return belief_; }
  int calls() const { return calls_; }

 private:
  Dialogue full_;
  MockOracleConfig cfg_;
  CausalStructure belief_;
  std::mt19937_64 rng_;
  int calls_ = 0;
};

/// Answers any sub-dialogue of `full` with the true relations among the
/// utterances shown.
class LabelOracle : public LlmOracle {
 public:
  explicit LabelOracle(Dialogue full);
  std::string complete(const std::string& prompt) override;

 private:
  Dialogue full_;
};

struct HttpOracleConfig {
  std::string endpoint;  // http://host[:port]/path
  std::string api_key;   // sent as a Bearer token when non-empty
  int retries = 3;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::seconds timeout{120};

  /// Reads LLM_ENDPOINT and LLM_API_KEY. Throws InvalidArgument when the endpoint is unset.
  static HttpOracleConfig from_env();
};

/// POST {"prompt": ...} -> {"text": ...}; retries with exponential backoff,
/// then throws OracleFailure.
class HttpOracle : public LlmOracle {
 public:
  explicit HttpOracle(HttpOracleConfig cfg);
  std::string complete(const std::string& prompt) override;

 private:
  HttpOracleConfig cfg_;
  std::string host_;
  std::string path_;
};

// --- loop ------------------------------------------------------------------------

/// Where Step 2's reduced-dialogue answers come from.
enum class Supervision {
  None,          // single query, no feedback
  Self,          // the same oracle re-answers reduced dialogues
  SecondOracle,  // a separate oracle answers reduced dialogues
  Label          // ground truth replaces Step 2
};
const char* to_string(Supervision s);
Supervision supervision_from_string(const std::string& s);

struct LoopOptions {
  int max_iters = 8;
  int arity = 2;
  Supervision supervision = Supervision::Self;
  LlmOracle* step2 = nullptr;  // required for SecondOracle
  int parse_retries = 3;
};

struct ViewRecord {
  InterventionView view;
  BinaryMatrix s_do;
  BinaryMatrix r_do;
  std::vector<int> retained;  // original indices the Step-2 answer covers
};

struct LoopState {
  int iteration = 0;  // 1-based
  CausalStructure a_s;
  std::vector<ViewRecord> views;
  std::vector<InterventionView> skipped_views;
  std::vector<Conflict> conflicts;
  std::optional<double> f1;
};

struct LoopResult {
  CausalStructure final_structure;
  std::vector<LoopState> trace;
  bool converged = false;
};

/// Carries the partial trace when the oracle keeps failing.
class LoopAborted : public Error {
 public:
  LoopAborted(const std::string& what, LoopResult partial)
      : Error(ErrorCode::OracleFailure, what), partial_(std::move(partial)) {}
  const LoopResult& partial() const { return partial_; }

 private:
  LoopResult partial_;
};

LoopResult run_loop(const Dialogue& d, LlmOracle& oracle, const LoopOptions& options);

nlohmann::json to_json(const LoopResult& r);

}  // namespace cdid
