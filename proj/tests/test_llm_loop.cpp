#include <atomic>
#include <regex>
#include <thread>

#include <gtest/gtest.h>

#include "cdid/error.hpp"
#include "cdid/llm_loop.hpp"
#include "cdid/metrics.hpp"

#include <httplib.h>  // after Eigen: <resolv.h> defines _res

using namespace cdid;

namespace {

Dialogue four_turns(std::optional<CausalStructure> truth = std::nullopt) {
  Dialogue d;
  d.utterances = {"I finally finished the report.", "Great, did you send it to Maria?",
                  "Not yet, the printer jammed.", "Use the one on the third floor."};
  d.truth = std::move(truth);
  return d;
}

CausalStructure chain4() { return CausalStructure::from_edges(4, {{1, 0}, {2, 1}, {3, 2}}); }

int count(const std::string& text, const std::string& pattern) {
  const std::regex re(pattern);
  return static_cast<int>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

class ScriptedOracle : public LlmOracle {
 public:
  explicit ScriptedOracle(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const std::string&) override {
    const auto r = replies_[std::min(next_, replies_.size() - 1)];
    ++next_;
    return r;
  }
  size_t calls() const { return next_; }

 private:
  std::vector<std::string> replies_;
  size_t next_ = 0;
};

}  // namespace

TEST(Prompt, QuestionCount) {
  const std::string p = build_initial_prompt(four_turns());
  // The demonstration contributes "Question 1" and "Question 6" with "to 2?" / "to 4?" phrasing.
  EXPECT_EQ(count(p, R"(Question \d+: Is there a causal relationship from utterance \d to utterance \d\?)"), 6);
  EXPECT_NE(p.find("Question 6: Is there a causal relationship from utterance 3 to utterance 4?"), std::string::npos);
  EXPECT_EQ(p, build_initial_prompt(four_turns()));
  Dialogue two;
  two.utterances = {"Hi.", "Hello."};
  EXPECT_EQ(count(build_initial_prompt(two), R"(to utterance \d\?)"), 1);
}

TEST(Prompt, StartsWithRoleText) {
  const std::string p = build_initial_prompt(four_turns());
  EXPECT_EQ(p.rfind("You are assuming the role of a researcher capable of distinguishing between causation and "
                    "correlation",
                    0),
            0u);
  EXPECT_NE(p.find("Given the above example, with its associated questions and answers, consider the following "
                   "dialogue:"),
            std::string::npos);
}

TEST(Prompt, ExtractTargetUtterances) {
  const auto d = four_turns();
  EXPECT_EQ(extract_target_utterances(build_initial_prompt(d)), d.utterances);
  EXPECT_EQ(extract_target_utterances(build_initial_prompt(d) + "\n\n" + build_feedback({{1, 2, ConflictKind::Drop}})),
            d.utterances);
}

TEST(Answers, RoundTrip) {
  for (int mask = 0; mask < 64; ++mask) {
    std::vector<Edge> edges;
    const auto pairs = admissible_pairs(4);
    for (size_t k = 0; k < pairs.size(); ++k)
      if (mask >> k & 1) edges.push_back(pairs[k]);
    const auto s = CausalStructure::from_edges(4, edges);
    EXPECT_EQ(parse_answers(render_answers(s), 4), s);
  }
}

TEST(Answers, QuestionOrder) {
  const std::string text = "Answer 1: Yes. Answer 2: No. Answer 3: No. Answer 4: No. Answer 5: No. Answer 6: Yes.";
  EXPECT_EQ(parse_answers(text, 4), CausalStructure::from_edges(4, {{1, 0}, {3, 2}}));
}

TEST(Answers, CaseInsensitiveFirstTokenWins) {
  const auto s = parse_answers("answer 1: no, wait, yes\nANSWER 2: Yes\nanswer 3: nothing known, yes", 3);
  EXPECT_FALSE(s.has_edge(1, 0));
  EXPECT_TRUE(s.has_edge(2, 0));
  EXPECT_TRUE(s.has_edge(2, 1));
}

TEST(Answers, Errors) {
  EXPECT_EQ(code_of([] { parse_answers("Answer 1: Yes. Answer 2: No. Answer 4: No.", 3); }), ErrorCode::MissingAnswer);
  try {
    parse_answers("Answer 1: Yes. Answer 2: No.", 3);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("answer 3"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { parse_answers("Answer 1: maybe. Answer 2: no. Answer 3: yes", 3); }),
            ErrorCode::AmbiguousAnswer);
}

TEST(Intervene, EmptyStructureKeepsEverything) {
  const auto r = intervene_dialogue(four_turns(), CausalStructure(4), InterventionView({1, 2}, 4));
  EXPECT_EQ(r.dialogue.utterances, four_turns().utterances);
  EXPECT_EQ(r.original_index, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Intervene, ChainKeepsTargets) {
  const auto r = intervene_dialogue(four_turns(), chain4(), InterventionView({2, 3}, 4));
  EXPECT_EQ(r.original_index, (std::vector<int>{0, 2, 3}));
  const auto root = intervene_dialogue(four_turns(), chain4(), InterventionView({0}, 4));
  EXPECT_EQ(root.dialogue.size(), 4);
}

TEST(Intervene, Degenerate) {
  Dialogue d;
  d.utterances = {"a", "b", "c"};
  const auto full = CausalStructure::from_edges(3, {{2, 0}, {2, 1}});
  EXPECT_EQ(code_of([&] { intervene_dialogue(d, full, InterventionView({2}, 3)); }), ErrorCode::DegenerateDialogue);
}

TEST(Feedback, MatchesReferenceInstruction) {
  const std::string expected =
      "After intervention, there should be no common cause between the second utterance and the third utterance, "
      "and the second utterance should not have a causal relationship with the third utterance, and there should "
      "be no common cause between the third utterance and the fourth utterance, and the third utterance should not "
      "have a causal relationship with the fourth utterance. Please re-answer based on these circumstances.";
  const std::vector<Conflict> c = {{1, 2, ConflictKind::Drop}, {2, 3, ConflictKind::Drop}};
  EXPECT_EQ(build_feedback(c), expected);
  EXPECT_EQ(parse_feedback(expected), c);
}

TEST(Feedback, FirstUtteranceHasNoCommonCause) {
  const std::string f = build_feedback({{0, 2, ConflictKind::Add}});
  EXPECT_EQ(f.find("common cause"), std::string::npos);
  EXPECT_NE(f.find("the first utterance should have a causal relationship with the third utterance"),
            std::string::npos);
  EXPECT_TRUE(build_feedback({}).empty());
}

TEST(Feedback, Ordinals) {
  EXPECT_EQ(ordinal_word(1), "first");
  EXPECT_EQ(ordinal_word(20), "twentieth");
  EXPECT_EQ(ordinal_word(21), "21st");
  EXPECT_EQ(ordinal_word(23), "23rd");
  EXPECT_EQ(ordinal_word(112), "112th");
  const std::vector<Conflict> c = {{20, 31, ConflictKind::Add}};
  EXPECT_EQ(parse_feedback(build_feedback(c)), c);
}

TEST(Loop, CorrectOracleStopsAtOnce) {
  const auto d = four_turns(chain4());
  MockOracle oracle(d, {chain4(), 0.0, std::nullopt, 1.0, 5});
  const auto r = run_loop(d, oracle, {});
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.trace[0].conflicts.empty());
  EXPECT_DOUBLE_EQ(*r.trace[0].f1, 1.0);
  EXPECT_EQ(r.final_structure, chain4());
  EXPECT_EQ(r.trace[0].views.size() + r.trace[0].skipped_views.size(), 6u);
}

TEST(Loop, LabelSupervisionRepairsFlips) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = four_turns(chain4());
    MockOracle oracle(d, {chain4(), 0.0, 2, 1.0, seed});
    EXPECT_EQ(hamming_distance(oracle.belief(), chain4()), 2);
    LoopOptions opt;
    opt.supervision = Supervision::Label;
    const auto r = run_loop(d, oracle, opt);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.trace.size(), 3u);
    EXPECT_EQ(r.final_structure, chain4());
    for (size_t k = 1; k < r.trace.size(); ++k)
      EXPECT_LT(r.trace[k].conflicts.size(), r.trace[k - 1].conflicts.size());
  }
}

TEST(Loop, SelfSupervisionWithMock) {
  const auto d = four_turns(chain4());
  MockOracle oracle(d, {chain4(), 0.0, 1, 1.0, 2});
  const auto r = run_loop(d, oracle, {});
  EXPECT_GE(r.trace.size(), 1u);
  EXPECT_LE(r.trace.size(), 8u);
  EXPECT_GE(*r.trace.back().f1, *r.trace.front().f1);
}

TEST(Loop, MaxItersZeroStillAsksOnce) {
  const auto d = four_turns(chain4());
  MockOracle oracle(d, {chain4(), 0.0, 3, 1.0, 1});
  LoopOptions opt;
  opt.max_iters = 0;
  opt.supervision = Supervision::Label;
  const auto r = run_loop(d, oracle, opt);
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.final_structure, r.trace[0].a_s);
}

TEST(Loop, NoSupervisionIsOneQuery) {
  const auto d = four_turns(chain4());
  MockOracle oracle(d, {chain4(), 0.0, 2, 1.0, 1});
  LoopOptions opt;
  opt.supervision = Supervision::None;
  const auto r = run_loop(d, oracle, opt);
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(oracle.calls(), 1);
}

TEST(Loop, ParseFailuresAbortWithPartialTrace) {
  const auto d = four_turns(chain4());
  ScriptedOracle oracle({"I am not sure."});
  LoopOptions opt;
  opt.parse_retries = 2;
  try {
    run_loop(d, oracle, opt);
    FAIL();
  } catch (const LoopAborted& e) {
    EXPECT_EQ(e.code(), ErrorCode::OracleFailure);
    EXPECT_TRUE(e.partial().trace.empty());
    EXPECT_EQ(oracle.calls(), 3u);
  }
}

TEST(Loop, RetryRecoversFromOneBadReply) {
  const auto d = four_turns(chain4());
  ScriptedOracle oracle({"hmm", render_answers(chain4())});
  LoopOptions opt;
  opt.supervision = Supervision::None;
  EXPECT_EQ(run_loop(d, oracle, opt).final_structure, chain4());
}

TEST(Loop, TraceJson) {
  const auto d = four_turns(chain4());
  MockOracle oracle(d, {chain4(), 0.0, 2, 1.0, 3});
  LoopOptions opt;
  opt.supervision = Supervision::Label;
  const auto j = to_json(run_loop(d, oracle, opt));
  ASSERT_TRUE(j.contains("iterations"));
  const auto& first = j["iterations"][0];
  EXPECT_EQ(first["iteration"], 1);
  EXPECT_TRUE(first["f1"].is_number());
  EXPECT_FALSE(first["conflicts"].empty());
  EXPECT_TRUE(first["conflicts"][0].contains("direction"));
}

TEST(Dialogues, SyntheticAreDistinctAndValid) {
  const auto ds = make_synthetic_dialogues(5, 4, 0.5, 9);
  ASSERT_EQ(ds.size(), 5u);
  for (const auto& d : ds) {
    d.validate();
    ASSERT_TRUE(d.truth.has_value());
    std::set<std::string> u(d.utterances.begin(), d.utterances.end());
    EXPECT_EQ(u.size(), 4u);
  }
  const auto back = dialogues_from_json(nlohmann::json{{"dialogues", {to_json(ds[0])}}});
  EXPECT_EQ(back[0].utterances, ds[0].utterances);
  EXPECT_EQ(*back[0].truth, *ds[0].truth);
}

TEST(HttpOracle, PostsPromptAndReadsText) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth, seen_prompt;
  server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_prompt = nlohmann::json::parse(req.body)["prompt"];
    res.set_content(nlohmann::json{{"text", "Answer 1: Yes."}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpOracleConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
  cfg.api_key = "k3y";
  cfg.base_delay = std::chrono::milliseconds(5);
  HttpOracle oracle(cfg);
  EXPECT_EQ(oracle.complete("hello"), "Answer 1: Yes.");
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(seen_auth, "Bearer k3y");
  EXPECT_EQ(seen_prompt, "hello");
  server.stop();
  t.join();
}

TEST(HttpOracle, GivesUpAfterRetries) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpOracleConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.base_delay = std::chrono::milliseconds(1);
  HttpOracle oracle(cfg);
  EXPECT_EQ(code_of([&] { oracle.complete("x"); }), ErrorCode::OracleFailure);
  EXPECT_EQ(hits.load(), 4);
  server.stop();
  t.join();
}

TEST(HttpOracle, RejectsHttps) {
  HttpOracleConfig cfg;
  cfg.endpoint = "https://example.com/v1";
  EXPECT_EQ(code_of([&] { HttpOracle o(cfg); }), ErrorCode::InvalidArgument);
}
