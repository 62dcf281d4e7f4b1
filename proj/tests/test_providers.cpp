#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "toolforge/providers.hpp"
#include "toolforge/util.hpp"

#include "test_support.hpp"

using namespace toolforge;

TEST_CASE("parse_reply: judge rating") {
  auto payload = parse_reply(Role::QualityJudge, "<rating>9.0</rating><reasoning>ok</reasoning>");
  auto& rating = std::get<RatingReply>(payload);
  CHECK(rating.rating == 9.0);
  CHECK(rating.reasoning == "ok");
  CHECK_THROWS_AS(parse_reply(Role::QualityJudge, "<rating>11</rating>"), ProviderError);
  CHECK_THROWS_AS(parse_reply(Role::QualityJudge, "<rating>fine</rating>"), ProviderError);
}

TEST_CASE("parse_reply: cluster block per the analyst grammar") {
  const std::string raw =
      "<cluster>\n<example_ids>1, 2, 3, 4</example_ids>\n<pattern>ratio math</pattern>\n"
      "<parameters>labels</parameters>\n<abstraction_potential>9.5</abstraction_potential>\n"
      "<reasoning>strong</reasoning>\n</cluster>";
  auto payload = parse_reply(Role::ClusterAnalyst, raw);
  auto& reply = std::get<ClusterReply>(payload);
  REQUIRE(reply.clusters.size() == 1);
  CHECK(reply.clusters[0].ids == std::vector<std::string>{"1", "2", "3", "4"});
  CHECK(reply.clusters[0].potential == 9.5);
  CHECK(reply.clusters[0].pattern == "ratio math");
}

TEST_CASE("parse_reply: tool and dedup grammars") {
  const std::string tool_raw =
      "<tool>\n<name>t1</name>\n<params>a: label; b: number</params>\n"
      "<docstring>Does a thing.</docstring>\n<code>\ndef t1(a, b) {\n  return b\n}\n</code>\n"
      "</tool>";
  auto tool = std::get<ToolReply>(parse_reply(Role::Abstractor, tool_raw));
  CHECK(tool.name == "t1");
  REQUIRE(tool.params.size() == 2);
  CHECK(tool.params[1].semantic_type == "number");
  CHECK(tool.code.find("def t1") == 0);

  auto dedup = std::get<DedupReply>(parse_reply(
      Role::DedupAnalyst,
      "<merge_group><tools>a, b</tools><similarity>0.97</similarity></merge_group>"));
  REQUIRE(dedup.groups.size() == 1);
  CHECK(dedup.groups[0].similarity == 0.97);
  CHECK(std::get<DedupReply>(parse_reply(Role::DedupAnalyst, "<no_duplicates/>")).groups.empty());
  CHECK_THROWS_AS(parse_reply(Role::DedupAnalyst, "nothing to report"), ProviderError);
}

TEST_CASE("parse_reply: programs unwrap code fences") {
  auto prog =
      std::get<ProgramReply>(parse_reply(Role::ProgGen, "```\nreturn 1\n```\ntrailing note"));
  CHECK(prog.source == "return 1");
  auto bare = std::get<ProgramReply>(parse_reply(Role::Rewriter, "  return 2  "));
  CHECK(bare.source == "return 2");
  CHECK_THROWS_AS(parse_reply(Role::ProgGen, "   "), ProviderError);
}

TEST_CASE("scripted provider: lookup by fingerprint, loud misses") {
  auto provider = tft::ScriptBuilder()
                      .add(Role::QualityJudge, "q=q1;prog=abc",
                           "<rating>9.0</rating><reasoning>ok</reasoning>")
                      .provider();
  ChatRequest req;
  req.role = Role::QualityJudge;
  req.context_key = "q=q1;prog=abc";
  CHECK(provider->chat_raw(req) == "<rating>9.0</rating><reasoning>ok</reasoning>");
  req.context_key = "q=q2;prog=abc";
  CHECK_THROWS_AS(provider->chat_raw(req), ProviderError);
}

TEST_CASE("chat_parsed: one reformat retry, then malformed-reply error") {
  // First reply malformed, retry entry well-formed: succeeds.
  auto ok_provider = tft::ScriptBuilder()
                         .add(Role::QualityJudge, "k", "<rating>9.0")
                         .add(Role::QualityJudge, "k;retry=1",
                              "<rating>8.0</rating><reasoning>second try</reasoning>")
                         .provider();
  ChatRequest req;
  req.role = Role::QualityJudge;
  req.context_key = "k";
  auto reply = chat_parsed(*ok_provider, req);
  CHECK(std::get<RatingReply>(reply.parsed).rating == 8.0);

  // Malformed twice: surfaced as a provider error.
  auto bad_provider = tft::ScriptBuilder()
                          .add(Role::QualityJudge, "k", "<rating>9.0")
                          .add(Role::QualityJudge, "k;retry=1", "<rating>9.0")
                          .provider();
  CHECK_THROWS_AS(chat_parsed(*bad_provider, req), ProviderError);
}

TEST_CASE("recording provider: replay equals the recorded conversation") {
  auto inner = tft::ScriptBuilder()
                   .add(Role::QualityJudge, "k", "<rating>9.0</rating><reasoning>x</reasoning>")
                   .provider();
  RecordingChatProvider recorder(inner);
  ChatRequest req;
  req.role = Role::QualityJudge;
  req.context_key = "k";
  recorder.chat_raw(req);
  ScriptedChatProvider replay(recorder.script());
  CHECK(replay.chat_raw(req) == "<rating>9.0</rating><reasoning>x</reasoning>");
}

TEST_CASE("deterministic embedder: identity, repeatability, topical ordering") {
  DeterministicEmbedder embedder;
  auto a = embedder.embed({"how tall is the sofa"});
  auto b = embedder.embed({"how tall is the sofa"});
  CHECK(a[0] == b[0]);
  CHECK(cosine(a[0], a[0]) == doctest::Approx(1.0).epsilon(1e-12));

  auto vecs = embedder.embed(
      {"how tall is the sofa", "how tall is the chair", "count the red cups"});
  CHECK(cosine(vecs[0], vecs[1]) > cosine(vecs[0], vecs[2]));

  // Unit norm.
  double norm = 0;
  for (double v : vecs[0]) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(embedder.embed({"!!!"}), ProviderError);  // zero information
  CHECK_THROWS_AS(embedder.embed({}), ProviderError);
}

TEST_CASE("cosine: identities and errors") {
  std::vector<double> v{1, 1, 0};
  CHECK(cosine(v, v) == doctest::Approx(1.0));
  CHECK(cosine({1, 0, 0}, {0, 1, 0}) == doctest::Approx(0.0));
  CHECK(cosine({1, 1, 0}, {1, 0, 0}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cosine({1, 0}, {1, 0, 0}), Error);
  CHECK_THROWS_AS(cosine({0, 0}, {1, 0}), Error);
}

TEST_CASE("embedding bank: at most one provider call per distinct text") {
  class CountingEmbedder : public EmbeddingProvider {
   public:
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
      calls += texts.size();
      return inner.embed(texts);
    }
    std::string fingerprint() const override { return inner.fingerprint(); }
    DeterministicEmbedder inner;
    std::size_t calls = 0;
  };
  auto counting = std::make_shared<CountingEmbedder>();
  EmbeddingBank bank(counting);
  bank.get("alpha beta");
  bank.get("alpha beta");
  bank.get("gamma delta");
  bank.get("alpha beta");
  CHECK(counting->calls == 2);

  // Serialization keeps the cache; a fingerprint mismatch drops it.
  auto snapshot = bank.to_json();
  EmbeddingBank bank2(counting);
  bank2.restore(snapshot);
  CHECK(bank2.size() == 2);
  auto stale = snapshot;
  stale["provider_fingerprint"] = "other/model";
  EmbeddingBank bank3(counting);
  bank3.restore(stale);
  CHECK(bank3.size() == 0);
}

TEST_CASE("http chat provider: wire shape, auth, and retry on 500") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int n = ++hits;
    if (n == 1) {
      res.status = 500;
      return;
    }
    auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("model") == "judge-model");
    CHECK(body.at("messages").size() == 2);
    CHECK(req.get_header_value("Authorization") == "Bearer sekrit");
    nlohmann::json out = {
        {"choices",
         {{{"message", {{"role", "assistant"}, {"content", "<rating>9.0</rating>"}}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  setenv("TOOLFORGE_TEST_KEY", "sekrit", 1);
  ProviderSettings settings;
  settings.type = "http";
  settings.base_url = "http://127.0.0.1:" + std::to_string(port);
  settings.model = "default-model";
  settings.role_models["quality_judge"] = "judge-model";
  settings.api_key_env = "TOOLFORGE_TEST_KEY";
  settings.max_retries = 2;
  HttpChatProvider provider(settings);

  ChatRequest req;
  req.role = Role::QualityJudge;
  req.messages = {{"system", "judge"}, {"user", "program"}};
  req.temperature = 0.0;
  CHECK(provider.chat_raw(req) == "<rating>9.0</rating>");
  CHECK(hits.load() == 2);  // one 500, one success

  server.stop();
  server_thread.join();
}

TEST_CASE("http embedding provider: normalizes and validates the response") {
  httplib::Server server;
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("input").size() == 2);
    nlohmann::json out = {{"data", {{{"embedding", {3.0, 4.0}}}, {{"embedding", {1.0, 0.0}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  ProviderSettings settings;
  settings.base_url = "http://127.0.0.1:" + std::to_string(port);
  settings.embedding = "http";
  HttpEmbeddingProvider provider(settings);
  auto vecs = provider.embed({"a", "b"});
  REQUIRE(vecs.size() == 2);
  CHECK(vecs[0][0] == doctest::Approx(0.6));
  CHECK(vecs[0][1] == doctest::Approx(0.8));

  server.stop();
  server_thread.join();
}
