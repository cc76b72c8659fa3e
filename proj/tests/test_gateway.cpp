#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "auxcal/error.hpp"
#include "auxcal/gateway.hpp"
#include "test_support.hpp"

using namespace auxcal;

namespace {

CalibrationRecord question(const std::string& q) {
  CalibrationRecord r;
  r.id = "id";
  r.question = q;
  r.gold_answers = {"x"};
  return r;
}

nlohmann::json chat_reply(const std::string& content, const std::vector<std::pair<std::string, double>>& tokens) {
  nlohmann::json lp = nlohmann::json::array();
  for (const auto& [t, v] : tokens) lp.push_back({{"token", t}, {"logprob", v}});
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"logprobs", {{"content", lp}}}}}}};
}

// Answers chat requests with "echo:<prompt>" and embeds text as
// [length, first byte, 1].
class FakeTransport : public Transport {
 public:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) override {
    ++calls;
    paths.push_back(path);
    if (failures_left > 0) {
      --failures_left;
      throw TransportError("HTTP " + std::to_string(fail_status), fail_status);
    }
    if (path == "/chat/completions") {
      const std::string prompt = body.at("messages").at(0).at("content");
      return chat_reply("echo:" + prompt + " Question: more", {{"echo:" + prompt, -0.5}, {" Question", -1.0}});
    }
    nlohmann::json data = nlohmann::json::array();
    for (const auto& t : body.at("input")) {
      const std::string s = t;
      std::vector<double> v{static_cast<double>(s.size()), s.empty() ? 0.0 : static_cast<double>(s[0]), 1.0};
      if (wrong_dim && s == "odd") v.push_back(2.0);
      data.push_back({{"embedding", v}});
    }
    return {{"data", data}};
  }
  std::atomic<int> calls{0};
  std::vector<std::string> paths;
  int failures_left = 0;
  int fail_status = 503;
  bool wrong_dim = false;
};

EndpointConfig fast_config() {
  EndpointConfig c;
  c.backoff_seconds = 0.0;
  c.parallelism = 1;
  return c;
}

}  // namespace

TEST(Prompt, TriviaPlain) {
  EXPECT_EQ(build_qa_prompt(question("Q1?"), {}), "Question: Q1? Answer:");
}

TEST(Prompt, TriviaCotStartsWithInstruction) {
  PromptSpec spec;
  spec.cot = true;
  const auto p = build_qa_prompt(question("Q1?"), spec);
  EXPECT_EQ(p.rfind("Briefly answer the following question by thinking step by step.", 0), 0u);
  EXPECT_EQ(p, "Briefly answer the following question by thinking step by step.\nQuestion: Q1? Answer:");
}

TEST(Prompt, TriviaDemonstrationsUseSameTemplate) {
  PromptSpec spec;
  spec.icl_examples = {{"Who?", "Me"}, {"Where?", "Here"}};
  EXPECT_EQ(build_qa_prompt(question("Q1?"), spec),
            "Question: Who? Answer: Me\nQuestion: Where? Answer: Here\nQuestion: Q1? Answer:");
}

TEST(Prompt, CoqaLayout) {
  CalibrationRecord r = question("Who went?");
  r.context = "Anna went home.";
  PromptSpec spec;
  spec.style = PromptStyle::coqa;
  const auto plain = build_qa_prompt(r, spec);
  EXPECT_EQ(plain, "Context: Anna went home.\nQuestion: Who went?\nAnswer:");
  EXPECT_EQ(plain.find("Instruction:"), std::string::npos);
  spec.cot = true;
  EXPECT_EQ(build_qa_prompt(r, spec),
            "Context: Anna went home.\nInstruction: Briefly answer the following question by thinking step by "
            "step.\nQuestion: Who went?\nAnswer:");
}

TEST(Prompt, Errors) {
  PromptSpec coqa;
  coqa.style = PromptStyle::coqa;
  EXPECT_THROW(build_qa_prompt(question("Q?"), coqa), MissingFieldError);
  EXPECT_THROW(build_qa_prompt(question(""), {}), PreconditionError);
  PromptSpec conflicting;
  conflicting.confidence_mode = ConfidenceMode::percent;
  conflicting.icl_examples = {{"a", "b"}};
  EXPECT_THROW(build_qa_prompt(question("Q?"), conflicting), PreconditionError);
}

TEST(Prompt, ConfidencePrompts) {
  const auto pct = build_confidence_prompt("Q?", "A", ConfidenceMode::percent);
  EXPECT_EQ(pct, "Q? A Please provide your confidence in the answer only in percent (0-100 %):");
  const auto qual = build_confidence_prompt("Q?", "A", ConfidenceMode::qualitative);
  for (const char* level : {"'Very Low'", "'Low'", "'Somewhat Low'", "'Medium'", "'Somewhat High'", "'High'",
                            "'Very High'"}) {
    EXPECT_NE(qual.find(level), std::string::npos) << level;
  }
  EXPECT_THROW(build_confidence_prompt("Q?", "", ConfidenceMode::percent), PreconditionError);
  EXPECT_THROW(build_confidence_prompt("Q?", "A", ConfidenceMode::none), PreconditionError);
}

TEST(Prompt, PureAndByteStable) {
  PromptSpec spec;
  spec.cot = true;
  spec.icl_examples = {{"a?", "b"}};
  EXPECT_EQ(build_qa_prompt(question("z?"), spec), build_qa_prompt(question("z?"), spec));
}

TEST(Stop, TruncatesAtEarliest) {
  EXPECT_EQ(truncate_at_stop("Paris. Question: next"), "Paris. ");
  EXPECT_EQ(truncate_at_stop("x A: y Q: z"), "x ");
  EXPECT_EQ(truncate_at_stop("no stop here"), "no stop here");
  const std::vector<std::string> extra{"###"};
  EXPECT_EQ(truncate_at_stop("abc ### Answer:", extra), "abc ");
}

TEST(Stop, DropsLogprobsPastCut) {
  std::vector<TokenLogprob> toks{{"Paris", -0.1}, {".", -0.2}, {" Question", -3.0}, {":", -0.5}};
  const auto g = truncate_generation("Paris. Question:", toks);
  EXPECT_EQ(g.text, "Paris. ");
  ASSERT_TRUE(g.token_logprobs);
  EXPECT_EQ(*g.token_logprobs, (std::vector<double>{-0.1, -0.2}));

  std::vector<TokenLogprob> spaced{{"Paris", -0.1}, {".", -0.2}, {" ", -0.3}, {"Question", -3.0}, {":", -0.4}};
  const auto h = truncate_generation("Paris. Question:", spaced);
  EXPECT_EQ(h.text, "Paris. ");
  EXPECT_EQ(*h.token_logprobs, (std::vector<double>{-0.1, -0.2, -0.3}));
}

TEST(Fixture, RecordThenReplayIsBitExactWithoutNetwork) {
  TempDir dir;
  auto fake = std::make_shared<FakeTransport>();
  EndpointConfig cfg = fast_config();
  cfg.mode = GatewayMode::record;
  cfg.fixture_path = dir / "fx.jsonl";
  GenerationParams params;
  Generation recorded;
  {
    LlmClient client(cfg, fake);
    recorded = client.generate("hi there", params);
    EXPECT_EQ(recorded.text, "echo:hi there ");
    EXPECT_EQ(*recorded.token_logprobs, (std::vector<double>{-0.5}));
    EXPECT_EQ(client.network_calls(), 1u);
    // Cached: a second call does not touch the transport.
    EXPECT_EQ(client.generate("hi there", params), recorded);
    EXPECT_EQ(fake->calls.load(), 1);
  }
  const std::string fixture_bytes = read_file(cfg.fixture_path);
  const auto row = nlohmann::json::parse(fixture_bytes.substr(0, fixture_bytes.find('\n')));
  EXPECT_TRUE(row.contains("prompt_hash"));
  EXPECT_TRUE(row.contains("request"));
  EXPECT_TRUE(row.contains("response"));

  cfg.mode = GatewayMode::replay;
  auto unused = std::make_shared<FakeTransport>();
  LlmClient replay(cfg, unused);
  EXPECT_EQ(replay.generate("hi there", params), recorded);
  EXPECT_EQ(replay.generate("hi there", params), recorded);
  EXPECT_THROW(replay.generate("Question: other Answer:", params), FixtureMissError);
  EXPECT_EQ(replay.network_calls(), 0u);
  EXPECT_EQ(unused->calls.load(), 0);
  EXPECT_EQ(read_file(cfg.fixture_path), fixture_bytes);
}

TEST(Fixture, HashDependsOnModelAndParams) {
  EndpointConfig a, b;
  b.chat_model = "other";
  GenerationParams p, q;
  q.max_new_tokens = 10;
  EXPECT_NE(chat_request_hash(a, "x", p), chat_request_hash(b, "x", p));
  EXPECT_NE(chat_request_hash(a, "x", p), chat_request_hash(a, "x", q));
  EXPECT_NE(chat_request_hash(a, "x", p), chat_request_hash(a, "y", p));
  EXPECT_EQ(chat_request_hash(a, "x", p), chat_request_hash(a, "x", p));
}

TEST(Fixture, ReplayNeedsPath) {
  EndpointConfig cfg;
  cfg.mode = GatewayMode::replay;
  EXPECT_THROW(LlmClient{cfg}, PreconditionError);
}

TEST(Client, RetriesTransientFailures) {
  auto fake = std::make_shared<FakeTransport>();
  fake->failures_left = 2;
  LlmClient client(fast_config(), fake);
  EXPECT_NO_THROW(client.generate("p", {}));
  EXPECT_EQ(fake->calls.load(), 3);
}

TEST(Client, GivesUpAfterBoundedRetries) {
  auto fake = std::make_shared<FakeTransport>();
  fake->failures_left = 10;
  LlmClient client(fast_config(), fake);
  EXPECT_THROW(client.generate("p", {}), TransportError);
  EXPECT_EQ(fake->calls.load(), 4);
}

TEST(Client, ClientErrorsAreNotRetried) {
  auto fake = std::make_shared<FakeTransport>();
  fake->failures_left = 10;
  fake->fail_status = 401;
  LlmClient client(fast_config(), fake);
  EXPECT_THROW(client.generate("p", {}), TransportError);
  EXPECT_EQ(fake->calls.load(), 1);
}

TEST(Client, BatchKeepsInputOrder) {
  auto fake = std::make_shared<FakeTransport>();
  EndpointConfig cfg = fast_config();
  cfg.parallelism = 4;
  LlmClient client(cfg, fake);
  std::vector<std::string> prompts;
  for (int i = 0; i < 40; ++i) prompts.push_back("p" + std::to_string(i));
  const auto out = client.generate_batch(prompts, {});
  ASSERT_EQ(out.size(), prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) EXPECT_EQ(out[i].text, "echo:" + prompts[i] + " ");
}

TEST(Client, ParamsValidated) {
  LlmClient client(fast_config(), std::make_shared<FakeTransport>());
  GenerationParams bad;
  bad.max_new_tokens = 0;
  EXPECT_THROW(client.generate("p", bad), PreconditionError);
}

TEST(Embed, ShapeOrderAndCache) {
  auto fake = std::make_shared<FakeTransport>();
  EndpointConfig cfg = fast_config();
  cfg.embedding_batch = 2;
  LlmClient client(cfg, fake);
  const auto m = client.embed_texts({"a", "bb", "ccc"});
  ASSERT_EQ(m.rows(), 3u);
  ASSERT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 0), 2.0);
  EXPECT_EQ(m(2, 1), static_cast<double>('c'));
  EXPECT_EQ(fake->calls.load(), 2);
  const auto again = client.embed_texts({"bb", "bb"});
  EXPECT_EQ(fake->calls.load(), 2);
  EXPECT_EQ(again.row(0)[0], again.row(1)[0]);
}

TEST(Embed, EmptyAndInconsistentDimension) {
  auto fake = std::make_shared<FakeTransport>();
  fake->wrong_dim = true;
  LlmClient client(fast_config(), fake);
  EXPECT_THROW(client.embed_texts({}), PreconditionError);
  client.embed_texts({"a"});
  EXPECT_THROW(client.embed_texts({"odd"}), ValidationError);
}

TEST(Embed, ReplayMiss) {
  TempDir dir;
  EndpointConfig cfg = fast_config();
  cfg.mode = GatewayMode::replay;
  cfg.fixture_path = dir / "none.jsonl";
  LlmClient client(cfg);
  EXPECT_THROW(client.embed_texts({"x"}), FixtureMissError);
  EXPECT_EQ(client.network_calls(), 0u);
}

TEST(Http, SpeaksTheChatAndEmbeddingWireFormat) {
  httplib::Server server;
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(chat_reply("Paris. Question: x", {}).dump(), "application/json");
  });
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json data = nlohmann::json::array();
    // Returned out of order; the index field restores it.
    for (std::size_t i = body["input"].size(); i-- > 0;) {
      data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
    }
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  server.Post("/v1/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointConfig cfg = fast_config();
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key = "sk-test";
  cfg.chat_model = "tiny";
  LlmClient client(cfg);
  const auto g = client.generate("Question: capital? Answer:", {});
  EXPECT_EQ(g.text, "Paris. ");
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  EXPECT_EQ(seen_body["model"], "tiny");
  EXPECT_EQ(seen_body["messages"][0]["role"], "user");
  EXPECT_EQ(seen_body["max_tokens"], 50);
  EXPECT_EQ(seen_body["temperature"], 0.0);

  const auto m = client.embed_texts({"a", "b", "c"});
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_EQ(m(2, 0), 2.0);

  HttpTransport raw(cfg.base_url, "", 5.0);
  try {
    raw.post("/broken", nlohmann::json::object());
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 500);
  }
  server.stop();
  worker.join();
}

TEST(Http, UnreachableEndpointIsTransportError) {
  EndpointConfig cfg = fast_config();
  cfg.base_url = "http://127.0.0.1:9/v1";
  cfg.max_retries = 1;
  cfg.timeout_seconds = 1.0;
  LlmClient client(cfg);
  EXPECT_THROW(client.generate("p", {}), TransportError);
  EXPECT_EQ(client.network_calls(), 2u);
}
