#include "cdid/llm_loop.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "cdid/json_util.hpp"
#include "cdid/metrics.hpp"
#include "cdid/synth.hpp"

namespace cdid {

using nlohmann::json;

// --- dialogues -------------------------------------------------------------------

void Dialogue::validate() const {
  if (utterances.size() < 2) throw Error(ErrorCode::InvalidArgument, "a dialogue needs at least two utterances");
  for (const auto& u : utterances)
    if (u.find('\n') != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "utterances must be single lines");
  if (truth && truth->n_vars() != size())
    throw Error(ErrorCode::DimensionMismatch, "truth size differs from utterance count");
}

json to_json(const Dialogue& d) {
  json j = {{"utterances", d.utterances}};
  if (d.truth) j["truth"] = to_json(*d.truth);
  return j;
}

Dialogue dialogue_from_json(const json& j, const std::string& path) {
  Dialogue d;
  d.utterances = jsonu::get_as<std::vector<std::string>>(jsonu::require(j, "utterances", path), path + ".utterances");
  if (j.contains("truth") && !j["truth"].is_null()) d.truth = structure_from_json(j["truth"], path + ".truth");
  try {
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaError, path + ": " + e.what());
  }
  return d;
}

std::vector<Dialogue> dialogues_from_json(const json& j) {
  const json& arr = j.is_object() ? jsonu::require(j, "dialogues", "$") : j;
  if (!arr.is_array()) throw Error(ErrorCode::SchemaError, "$: expected an array of dialogues");
  std::vector<Dialogue> out;
  for (size_t k = 0; k < arr.size(); ++k) out.push_back(dialogue_from_json(arr[k], "$[" + std::to_string(k) + "]"));
  return out;
}

std::vector<Dialogue> make_synthetic_dialogues(int count, int n_vars, double edge_density, std::uint64_t seed) {
  if (count < 0 || n_vars < 2) throw Error(ErrorCode::InvalidArgument, "need count >= 0 and n_vars >= 2");
  static const char* const kTopics[] = {"the party", "estate taxes", "a headache", "the weather", "a new job",
                                        "the garden", "a late train", "the exam",   "a birthday",  "the budget"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> topic(0, 9);
  std::vector<Dialogue> out;
  for (int c = 0; c < count; ++c) {
    Dialogue d;
    std::vector<Edge> edges;
    for (const auto& p : admissible_pairs(n_vars))
      if (unit(rng) < edge_density) edges.push_back(p);
    d.truth = CausalStructure::from_edges(n_vars, edges);
    for (int k = 0; k < n_vars; ++k)
      d.utterances.push_back("Speaker " + std::string(k % 2 ? "B" : "A") + " (dialogue " + std::to_string(c + 1) +
                             ", turn " + std::to_string(k + 1) + ") talks about " + kTopics[topic(rng)] + ".");
    out.push_back(std::move(d));
  }
  return out;
}

// --- prompt protocol -------------------------------------------------------------

namespace {

const char* const kPreamble =
    "You are assuming the role of a researcher capable of distinguishing between causation and correlation, "
    "charged with the task of recognizing the causal relationships among individual utterances within a given "
    "dialogue. We prescribe that the judgment of causation between two utterances is based on whether the former "
    "is the intended target of the latter's response. Whereas, correlation is gauged on whether the two share "
    "similar topics or vocabulary. The following is an example:";

const char* const kDemonstration =
    "Dialogue:\n\n"
    "`1. Hazel drank too much champagne at the party.\n\n"
    "2. Oh my goodness! That sounds like quite an eventful party.\n\n"
    "3. Well, drinking too much alcohol can have many negative effects.\n\n"
    "4. Oh no, I can imagine Hazel waking up with a massive headache tomorrow.'\n\n"
    "Question 1: Is there a causal relationship from utterance 1 to 2?\n\n"
    "Answer 1: Yes.\n\n"
    "......\n\n"
    "Question 6: Is there a causal relationship from utterance 3 to 4?\n\n"
    "Answer 6: Yes.";

const char* const kTransition =
    "Given the above example, with its associated questions and answers, consider the following dialogue:";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Question order: (cause, effect) lexicographic, i.e. (1,2), (1,3), ..., (N-1,N).
std::vector<Edge> question_pairs(int n) {
  std::vector<Edge> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back({j, i});
  return out;
}

CausalStructure restrict_truth(const CausalStructure& truth, const std::vector<int>& idx) {
  const int k = static_cast<int>(idx.size());
  std::vector<Edge> edges;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (truth.has_edge(idx[static_cast<size_t>(b)], idx[static_cast<size_t>(a)])) edges.push_back({b, a});
  return CausalStructure::from_edges(k, edges);
}

// Original indices of the utterances shown in a prompt; empty when any is unknown.
std::vector<int> locate(const Dialogue& full, const std::vector<std::string>& shown) {
  std::vector<int> idx;
  for (const auto& u : shown) {
    auto it = std::find(full.utterances.begin(), full.utterances.end(), u);
    if (it == full.utterances.end()) return {};
    idx.push_back(static_cast<int>(it - full.utterances.begin()));
  }
  return idx;
}

}  // namespace

std::string build_initial_prompt(const Dialogue& d) {
  d.validate();
  std::ostringstream os;
  os << kPreamble << "\n\n" << kDemonstration << "\n\n" << kTransition << "\n\nDialogue:\n\n`";
  for (int k = 0; k < d.size(); ++k) {
    if (k) os << "\n\n";
    os << k + 1 << ". " << d.utterances[static_cast<size_t>(k)];
  }
  os << "'";
  const auto qs = question_pairs(d.size());
  for (size_t k = 0; k < qs.size(); ++k)
    os << "\n\nQuestion " << k + 1 << ": Is there a causal relationship from utterance " << qs[k].cause + 1
       << " to utterance " << qs[k].effect + 1 << "?";
  return os.str();
}

std::string render_answers(const CausalStructure& s) {
  std::ostringstream os;
  const auto qs = question_pairs(s.n_vars());
  for (size_t k = 0; k < qs.size(); ++k) {
    if (k) os << "\n";
    os << "Answer " << k + 1 << ": " << (s.has_edge(qs[k].effect, qs[k].cause) ? "Yes." : "No.");
  }
  return os.str();
}

CausalStructure parse_answers(const std::string& text, int n_vars) {
  const std::string low = lower(text);
  const auto qs = question_pairs(n_vars);
  static const std::regex any_marker(R"(answer\s+\d+\s*:)");
  std::vector<Edge> edges;
  for (size_t k = 0; k < qs.size(); ++k) {
    const std::string marker = "answer " + std::to_string(k + 1) + ":";
    const size_t at = low.find(marker);
    if (at == std::string::npos)
      throw Error(ErrorCode::MissingAnswer, "answer " + std::to_string(k + 1) + " not found");
    const size_t from = at + marker.size();
    std::smatch next;
    std::string rest = low.substr(from);
    const size_t until = std::regex_search(rest, next, any_marker) ? static_cast<size_t>(next.position(0)) : rest.size();
    rest.resize(until);
    // First whole-word yes/no wins.
    static const std::regex word(R"([a-z]+)");
    std::optional<bool> verdict;
    for (std::sregex_iterator it(rest.begin(), rest.end(), word), end; it != end; ++it) {
      const std::string w = it->str();
      if (w == "yes" || w == "no") {
        verdict = w == "yes";
        break;
      }
    }
    if (!verdict)
      throw Error(ErrorCode::AmbiguousAnswer, "answer " + std::to_string(k + 1) + " has no yes/no");
    if (*verdict) edges.push_back(qs[k]);
  }
  return CausalStructure::from_edges(n_vars, edges);
}

std::vector<std::string> extract_target_utterances(const std::string& prompt) {
  const std::string open = "Dialogue:\n\n`";
  const size_t at = prompt.rfind(open);
  if (at == std::string::npos) return {};
  const size_t start = at + open.size();
  size_t stop = prompt.find("'\n\nQuestion 1:", start);
  if (stop == std::string::npos) stop = prompt.find('\'', start);
  if (stop == std::string::npos) return {};
  const std::string block = prompt.substr(start, stop - start);
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= block.size()) {
    size_t end = block.find("\n\n", pos);
    if (end == std::string::npos) end = block.size();
    std::string line = block.substr(pos, end - pos);
    const size_t dot = line.find(". ");
    out.push_back(dot == std::string::npos ? line : line.substr(dot + 2));
    pos = end + 2;
  }
  return out;
}

ReducedDialogue intervene_dialogue(const Dialogue& d, const CausalStructure& a_s, const InterventionView& view) {
  if (a_s.n_vars() != d.size()) throw Error(ErrorCode::DimensionMismatch, "structure size differs from dialogue");
  std::vector<bool> drop(static_cast<size_t>(d.size()), false);
  for (int t : view.targets()) {
    if (t >= d.size()) throw Error(ErrorCode::IndexOutOfRange, "view target outside dialogue");
    for (int p : a_s.parents(t))
      if (!view.contains(p)) drop[static_cast<size_t>(p)] = true;
  }
  ReducedDialogue r;
  for (int k = 0; k < d.size(); ++k) {
    if (drop[static_cast<size_t>(k)]) continue;
    r.dialogue.utterances.push_back(d.utterances[static_cast<size_t>(k)]);
    r.original_index.push_back(k);
  }
  if (r.dialogue.size() < 2)
    throw Error(ErrorCode::DegenerateDialogue, "view " + view.label() + " leaves fewer than two utterances");
  if (d.truth) r.dialogue.truth = restrict_truth(*d.truth, r.original_index);
  return r;
}

const char* to_string(ConflictKind k) { return k == ConflictKind::Drop ? "drop" : "add"; }

std::string ordinal_word(int n) {
  static const char* const kWords[] = {"first",      "second",     "third",      "fourth",      "fifth",
                                       "sixth",      "seventh",    "eighth",     "ninth",       "tenth",
                                       "eleventh",   "twelfth",    "thirteenth", "fourteenth",  "fifteenth",
                                       "sixteenth",  "seventeenth", "eighteenth", "nineteenth", "twentieth"};
  if (n >= 1 && n <= 20) return kWords[n - 1];
  const int mod100 = n % 100;
  const char* suffix = "th";
  if (mod100 < 11 || mod100 > 13) {
    if (n % 10 == 1) suffix = "st";
    else if (n % 10 == 2) suffix = "nd";
    else if (n % 10 == 3) suffix = "rd";
  }
  return std::to_string(n) + suffix;
}

std::string build_feedback(const std::vector<Conflict>& conflicts) {
  if (conflicts.empty()) return "";
  std::ostringstream os;
  os << "After intervention, ";
  for (size_t k = 0; k < conflicts.size(); ++k) {
    const auto& c = conflicts[k];
    const std::string i = ordinal_word(c.cause + 1), j = ordinal_word(c.effect + 1);
    const bool drop = c.kind == ConflictKind::Drop;
    if (k) os << ", and ";
    if (c.cause != 0)
      os << "there should be " << (drop ? "no" : "a") << " common cause between the " << i << " utterance and the "
         << j << " utterance, and ";
    os << "the " << i << " utterance should " << (drop ? "not " : "") << "have a causal relationship with the " << j
       << " utterance";
  }
  os << ". Please re-answer based on these circumstances.";
  return os.str();
}

std::vector<Conflict> parse_feedback(const std::string& text) {
  static const std::regex clause(
      R"(the (\w+) utterance should (not )?have a causal relationship with the (\w+) utterance)");
  auto index_of = [](const std::string& w) {
    for (int n = 1; n <= 20; ++n)
      if (ordinal_word(n) == w) return n - 1;
    return std::stoi(w) - 1;  // "21st" and beyond
  };
  std::vector<Conflict> out;
  for (std::sregex_iterator it(text.begin(), text.end(), clause), end; it != end; ++it) {
    Conflict c;
    c.cause = index_of((*it)[1].str());
    c.effect = index_of((*it)[3].str());
    c.kind = (*it)[2].matched ? ConflictKind::Drop : ConflictKind::Add;
    out.push_back(c);
  }
  return out;
}

// --- oracles ---------------------------------------------------------------------

void MockOracleConfig::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0) throw Error(ErrorCode::InvalidArgument, "flip_prob must lie in [0, 1]");
  if (correction_prob < 0.0 || correction_prob > 1.0)
    throw Error(ErrorCode::InvalidArgument, "correction_prob must lie in [0, 1]");
  if (flip_count && (*flip_count < 0 || *flip_count > admissible_count(hidden_truth.n_vars())))
    throw Error(ErrorCode::InvalidArgument, "flip_count out of range");
}

MockOracle::MockOracle(Dialogue full, MockOracleConfig cfg)
    : full_(std::move(full)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  full_.validate();
  cfg_.validate();
  if (cfg_.hidden_truth.n_vars() != full_.size())
    throw Error(ErrorCode::DimensionMismatch, "hidden truth size differs from dialogue");
  auto pairs = admissible_pairs(full_.size());
  std::vector<Edge> flips;
  if (cfg_.flip_count) {
    std::shuffle(pairs.begin(), pairs.end(), rng_);
    flips.assign(pairs.begin(), pairs.begin() + *cfg_.flip_count);
  } else {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& p : pairs)
      if (unit(rng_) < cfg_.flip_prob) flips.push_back(p);
  }
  std::set<Edge> edges;
  for (const auto& e : cfg_.hidden_truth.edges()) edges.insert(e);
  for (const auto& f : flips)
    if (!edges.erase(f)) edges.insert(f);
  belief_ = CausalStructure::from_edges(full_.size(), {edges.begin(), edges.end()});
}

std::string MockOracle::complete(const std::string& prompt) {
  ++calls_;
  const auto idx = locate(full_, extract_target_utterances(prompt));
  if (idx.size() < 2) return "I cannot tell which dialogue this is.";
  if (static_cast<int>(idx.size()) != full_.size()) return render_answers(restrict_truth(cfg_.hidden_truth, idx));

  std::set<Edge> edges;
  for (const auto& e : belief_.edges()) edges.insert(e);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& c : parse_feedback(prompt)) {
    if (c.cause < 0 || c.effect >= full_.size() || c.cause >= c.effect) continue;
    const bool act = unit(rng_) < cfg_.correction_prob;
    if (!act) continue;
    const Edge e{c.effect, c.cause};
    if (c.kind == ConflictKind::Drop) edges.erase(e);
    else edges.insert(e);
  }
  belief_ = CausalStructure::from_edges(full_.size(), {edges.begin(), edges.end()});
  return render_answers(belief_);
}

LabelOracle::LabelOracle(Dialogue full) : full_(std::move(full)) {
  full_.validate();
  if (!full_.truth) throw Error(ErrorCode::InvalidArgument, "label oracle needs a dialogue with truth");
}

std::string LabelOracle::complete(const std::string& prompt) {
  const auto idx = locate(full_, extract_target_utterances(prompt));
  if (idx.size() < 2) return "I cannot tell which dialogue this is.";
  return render_answers(restrict_truth(*full_.truth, idx));
}

HttpOracleConfig HttpOracleConfig::from_env() {
  HttpOracleConfig c;
  const char* ep = std::getenv("LLM_ENDPOINT");
  if (!ep || !*ep) throw Error(ErrorCode::InvalidArgument, "LLM_ENDPOINT is not set");
  c.endpoint = ep;
  if (const char* key = std::getenv("LLM_API_KEY")) c.api_key = key;
  return c;
}

HttpOracle::HttpOracle(HttpOracleConfig cfg) : cfg_(std::move(cfg)) {
  const std::string scheme = "http://";
  if (cfg_.endpoint.rfind(scheme, 0) != 0)
    throw Error(ErrorCode::InvalidArgument, "endpoint must start with http:// (got '" + cfg_.endpoint + "')");
  const size_t slash = cfg_.endpoint.find('/', scheme.size());
  host_ = cfg_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
  if (cfg_.retries < 0) throw Error(ErrorCode::InvalidArgument, "retries must be non-negative");
}

std::string HttpOracle::complete(const std::string& prompt) {
  httplib::Client client(host_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  const std::string body = json{{"prompt", prompt}}.dump();

  std::string last_error;
  auto delay = cfg_.base_delay;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      const json reply = json::parse(res->body);
      if (reply.contains("text") && reply["text"].is_string()) return reply["text"].get<std::string>();
      last_error = "reply has no string field 'text'";
    } catch (const json::exception& e) {
      last_error = std::string("reply is not JSON: ") + e.what();
    }
  }
  throw Error(ErrorCode::OracleFailure,
              last_error + " after " + std::to_string(cfg_.retries + 1) + " attempts");
}

// --- loop ------------------------------------------------------------------------

const char* to_string(Supervision s) {
  switch (s) {
    case Supervision::None: return "none";
    case Supervision::Self: return "self";
    case Supervision::SecondOracle: return "second";
    case Supervision::Label: return "label";
  }
  return "?";
}

Supervision supervision_from_string(const std::string& s) {
  if (s == "none") return Supervision::None;
  if (s == "self") return Supervision::Self;
  if (s == "second") return Supervision::SecondOracle;
  if (s == "label") return Supervision::Label;
  throw Error(ErrorCode::InvalidArgument, "supervision must be none, self, second or label (got '" + s + "')");
}

namespace {

CausalStructure ask(LlmOracle& oracle, const std::string& prompt, int n_vars, int retries, const LoopResult& partial) {
  std::string last;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    std::string text;
    try {
      text = oracle.complete(prompt);
    } catch (const Error& e) {
      throw LoopAborted(e.what(), partial);
    }
    try {
      return parse_answers(text, n_vars);
    } catch (const Error& e) {
      last = e.what();
    }
  }
  throw LoopAborted("unparseable answer after " + std::to_string(retries + 1) + " attempts: " + last, partial);
}

BinaryMatrix zero_target_rows(BinaryMatrix m, const InterventionView& view) {
  for (int t : view.targets()) m.row(t).setZero();
  return m;
}

}  // namespace

LoopResult run_loop(const Dialogue& d, LlmOracle& oracle, const LoopOptions& options) {
  d.validate();
  const int n = d.size();
  if (options.arity < 1 || options.arity > n) throw Error(ErrorCode::ArityOutOfRange, "loop arity outside [1, N]");
  if (options.supervision == Supervision::Label && !d.truth)
    throw Error(ErrorCode::InvalidArgument, "label supervision needs a dialogue with truth");
  if (options.supervision == Supervision::SecondOracle && !options.step2)
    throw Error(ErrorCode::InvalidArgument, "second-oracle supervision needs a Step-2 oracle");
  LlmOracle& step2 = options.supervision == Supervision::SecondOracle ? *options.step2 : oracle;
  const auto views = enumerate_interventions(n, options.arity);
  const int budget = std::max(options.max_iters, 1);
  const std::string initial = build_initial_prompt(d);

  LoopResult result;
  std::string prompt = initial;
  for (int it = 1; it <= budget; ++it) {
    LoopState state;
    state.iteration = it;
    state.a_s = ask(oracle, prompt, n, options.parse_retries, result);
    if (d.truth) state.f1 = f1_score(state.a_s, *d.truth);
    result.final_structure = state.a_s;

    if (options.supervision == Supervision::None) {
      result.trace.push_back(std::move(state));
      break;
    }

    std::set<Conflict> conflicts;
    for (const auto& view : views) {
      ViewRecord rec;
      rec.view = view;
      rec.s_do = zero_target_rows(state.a_s.adj(), view);
      BinaryMatrix lifted = BinaryMatrix::Zero(n, n);
      if (options.supervision == Supervision::Label) {
        lifted = d.truth->adj();
        for (int k = 0; k < n; ++k) rec.retained.push_back(k);
      } else {
        ReducedDialogue reduced;
        try {
          reduced = intervene_dialogue(d, state.a_s, view);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateDialogue) throw;
          state.skipped_views.push_back(view);
          continue;
        }
        LoopResult partial = result;
        partial.trace.push_back(state);
        const CausalStructure answer =
            ask(step2, build_initial_prompt(reduced.dialogue), reduced.dialogue.size(), options.parse_retries, partial);
        for (const auto& e : answer.edges())
          lifted(reduced.original_index[static_cast<size_t>(e.effect)],
                 reduced.original_index[static_cast<size_t>(e.cause)]) = 1;
        rec.retained = reduced.original_index;
      }
      rec.r_do = zero_target_rows(lifted, view);

      std::vector<bool> kept(static_cast<size_t>(n), false);
      for (int k : rec.retained) kept[static_cast<size_t>(k)] = true;
      for (const auto& p : admissible_pairs(n)) {
        if (!kept[static_cast<size_t>(p.effect)] || !kept[static_cast<size_t>(p.cause)]) continue;
        const int s = rec.s_do(p.effect, p.cause), r = rec.r_do(p.effect, p.cause);
        if (s == 1 && r == 0) conflicts.insert({p.cause, p.effect, ConflictKind::Drop});
        if (s == 0 && r == 1) conflicts.insert({p.cause, p.effect, ConflictKind::Add});
      }
      state.views.push_back(std::move(rec));
    }
    state.conflicts.assign(conflicts.begin(), conflicts.end());
    const bool done = state.conflicts.empty();
    const std::string feedback = build_feedback(state.conflicts);
    result.trace.push_back(std::move(state));
    if (done) {
      result.converged = true;
      break;
    }
    prompt = initial + "\n\n" + feedback;
  }
  return result;
}

json to_json(const LoopResult& r) {
  auto edges_of = [](const BinaryMatrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        if (m(i, j)) out.push_back({i + 1, j + 1});
    return out;
  };
  json iters = json::array();
  for (const auto& s : r.trace) {
    json conflicts = json::array();
    for (const auto& c : s.conflicts)
      conflicts.push_back({{"cause", c.cause + 1}, {"effect", c.effect + 1}, {"direction", to_string(c.kind)}});
    json views = json::array();
    for (const auto& v : s.views) {
      json retained = json::array();
      for (int k : v.retained) retained.push_back(k + 1);
      views.push_back({{"view", v.view.label()},
                       {"s_do", edges_of(v.s_do)},
                       {"r_do", edges_of(v.r_do)},
                       {"retained", retained}});
    }
    json skipped = json::array();
    for (const auto& v : s.skipped_views) skipped.push_back(v.label());
    iters.push_back({{"iteration", s.iteration},
                     {"a_s", to_json(s.a_s)},
                     {"conflicts", conflicts},
                     {"views", views},
                     {"skipped_views", skipped},
                     {"f1", s.f1 ? json(*s.f1) : json(nullptr)}});
  }
  return {{"final", to_json(r.final_structure)}, {"converged", r.converged}, {"iterations", iters}};
}

}  // namespace cdid
