#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "toolforge/pipeline.hpp"
#include "toolforge/solver.hpp"
#include "toolforge/util.hpp"

#include "test_support.hpp"

using namespace toolforge;

namespace {

std::string prog_key(const std::string& qid, const std::string& mode, int sample) {
  return "q=" + qid + ";it=" + mode + ";s=" + std::to_string(sample);
}

std::string judge_key(const std::string& qid, const std::string& program) {
  return "q=" + qid + ";prog=" + to_hex(fnv1a64(program)).substr(0, 12);
}

std::string rating(const std::string& value) {
  return "<rating>" + value + "</rating><reasoning>scripted</reasoning>";
}

Libraries library_with_questions(const std::vector<std::pair<std::string, std::string>>& qs) {
  Libraries libs = make_initial_libraries();
  for (const auto& [id, question] : qs) {
    auto e = tft::make_example(id, question, "return 1", 9.0);
    libs.examples.emplace(id, e);
  }
  return libs;
}

}  // namespace

TEST_CASE("retrieve_similar: empty library yields nothing") {
  Libraries libs = make_initial_libraries();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  auto hits = retrieve_similar(libs, "q", "how tall is the sofa", bank, tft::make_config());
  CHECK(hits.empty());
}

TEST_CASE("retrieve_similar: top-k by similarity with threshold and tie-breaks") {
  // Five questions above threshold against the query, k_max = 3.
  Libraries libs = library_with_questions({
      {"a", "how tall is the red sofa in this room"},
      {"b", "how tall is the blue sofa in this room"},
      {"c", "how tall is the green sofa in this room"},
      {"d", "how tall is the wooden sofa in this room"},
      {"e", "how tall is the metal sofa in this room"},
      {"f", "count every framed poster hanging upstairs"},  // far away
  });
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  Config config = tft::make_config();
  auto hits =
      retrieve_similar(libs, "query", "how tall is the red sofa in this room", bank, config);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].example->id == "a");  // exact text, similarity 1
  for (const auto& hit : hits) {
    CHECK(hit.similarity >= config.sim_threshold);
  }
  for (std::size_t i = 1; i < hits.size(); ++i) {
    CHECK(hits[i - 1].similarity >= hits[i].similarity);
  }
  // The distant question never shows up.
  for (const auto& hit : hits) CHECK(hit.example->id != "f");
}

TEST_CASE("retrieve_similar: the query's own id is excluded") {
  Libraries libs = library_with_questions({{"self", "how tall is the sofa"}});
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  auto hits = retrieve_similar(libs, "self", "how tall is the sofa", bank, tft::make_config());
  CHECK(hits.empty());  // the only match is the question itself
  auto other = retrieve_similar(libs, "other", "how tall is the sofa", bank, tft::make_config());
  CHECK(other.size() == 1);
}

TEST_CASE("generation prompt: demos, tool catalog, grammar, no bodies") {
  Config config = tft::make_config();
  auto scene = tft::make_test_scene();
  Libraries libs = make_initial_libraries();

  Tool learned;
  learned.name = "find_closest_obj";
  learned.params = {{"labels", "list"}};
  learned.docstring = "Label of the object nearest the camera.";
  learned.body = "def find_closest_obj(labels) {\n  return labels[0]\n}";
  learned.level = 1;
  learned.source_example_ids = {"x"};
  libs.tools.emplace(learned.name, learned);

  Tool dead = learned;
  dead.name = "old_tool";
  dead.body = "def old_tool(labels) {\n  return labels[0]\n}";
  dead.deprecated = true;
  dead.deprecation_reason = "Merged into find_closest_obj";
  libs.tools.emplace(dead.name, dead);

  Example demo1 = tft::make_example("d1", "which stool is nearest?", "return 1", 9.0);
  Example demo2 = tft::make_example("d2", "which lamp is nearest?", "return 2", 9.0);

  SUBCASE("no demos -> no demonstration section") {
    auto req = prompts::build_generation_request(config, "q1", "1", 0, "which is closest?", {},
                                                 libs.active_tools(), scene);
    CHECK(req.messages[1].text.find("Solved examples") == std::string::npos);
    CHECK(req.temperature == 1.0);
    CHECK(req.context_key == "q=q1;it=1;s=0");
  }
  SUBCASE("demos appear in order; active tools by signature only") {
    auto req = prompts::build_generation_request(config, "q1", "2", 1, "which is closest?",
                                                 {&demo1, &demo2}, libs.active_tools(), scene);
    const std::string& text = req.messages[1].text;
    auto p1 = text.find("which stool is nearest?");
    auto p2 = text.find("which lamp is nearest?");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    CHECK(p1 < p2);
    CHECK(text.find("find_closest_obj(labels)") != std::string::npos);
    CHECK(text.find("Label of the object nearest") != std::string::npos);
    // Never the body, never the deprecated tool.
    CHECK(text.find("return labels[0]") == std::string::npos);
    CHECK(text.find("old_tool") == std::string::npos);
    // Grammar reminder included.
    CHECK(text.find("VPL quick reference") != std::string::npos);
  }
}

TEST_CASE("solve_question: all candidates fail to parse -> unsolved, library unchanged") {
  Config config = tft::make_config();
  config.candidates_per_question = 2;
  Libraries libs = make_initial_libraries();
  auto scene = tft::make_test_scene();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  auto provider = tft::ScriptBuilder()
                      .add(Role::ProgGen, prog_key("q1", "1", 0), "```\nlet x =\n```")
                      .add(Role::ProgGen, prog_key("q1", "1", 1), "```\nreturn )\n```")
                      .provider();
  auto result = solve_question(libs, "q1", "how big?", scene, *provider, bank, config, "1");
  CHECK(result.outcome == SolveOutcome::Unsolved);
  CHECK_FALSE(result.candidates.best_index.has_value());
  CHECK(libs.examples.empty());
  CHECK(result.candidates.candidates[0].status == "parse_error");
}

TEST_CASE("solve_question: argmax with filtered failures; admission applies") {
  Config config = tft::make_config();
  config.candidates_per_question = 4;
  Libraries libs = make_initial_libraries();
  auto scene = tft::make_test_scene();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  const std::string p0 = "return 7";
  const std::string p1 = "return depth(loc(\"sofa\")[0])";
  const std::string p2 = "return len(loc(\"stool\"))";
  auto provider = tft::ScriptBuilder()
                      .add(Role::ProgGen, prog_key("q1", "1", 0), "```\n" + p0 + "\n```")
                      .add(Role::ProgGen, prog_key("q1", "1", 1), "```\n" + p1 + "\n```")
                      .add(Role::ProgGen, prog_key("q1", "1", 2), "```\n" + p2 + "\n```")
                      .add(Role::ProgGen, prog_key("q1", "1", 3), "```\nreturn 1 / 0\n```")
                      .add(Role::QualityJudge, judge_key("q1", p0), rating("7.0"))
                      .add(Role::QualityJudge, judge_key("q1", p1), rating("9.2"))
                      .add(Role::QualityJudge, judge_key("q1", p2), rating("8.6"))
                      .provider();
  auto result = solve_question(libs, "q1", "how deep is the sofa?", scene, *provider, bank,
                               config, "1");
  REQUIRE(result.candidates.best_index.has_value());
  CHECK(*result.candidates.best_index == 1);
  CHECK(result.outcome == SolveOutcome::Inserted);
  CHECK(result.candidates.candidates[3].status == "exec_error");
  REQUIRE(libs.examples.count("q1") == 1);
  const Example& admitted = libs.examples.at("q1");
  CHECK(admitted.quality == 9.2);
  CHECK(admitted.program == p1);
  CHECK(admitted.tools_used == std::set<std::string>{"loc", "depth"});
  CHECK(admitted.result.as_real() == doctest::Approx(2.0));
  CHECK(admitted.status == ExampleStatus::Fresh);
}

TEST_CASE("solve_question: best candidate below threshold -> rejected, library unchanged") {
  Config config = tft::make_config();
  config.candidates_per_question = 2;
  Libraries libs = make_initial_libraries();
  auto scene = tft::make_test_scene();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  const std::string p0 = "return 1";
  const std::string p1 = "return 2";
  auto provider = tft::ScriptBuilder()
                      .add(Role::ProgGen, prog_key("q1", "1", 0), p0)
                      .add(Role::ProgGen, prog_key("q1", "1", 1), p1)
                      .add(Role::QualityJudge, judge_key("q1", p0), rating("8.0"))
                      .add(Role::QualityJudge, judge_key("q1", p1), rating("8.4"))
                      .provider();
  auto result = solve_question(libs, "q1", "?", scene, *provider, bank, config, "1");
  CHECK(result.outcome == SolveOutcome::RejectedQuality);
  REQUIRE(result.candidates.best_index.has_value());
  CHECK(*result.candidates.best_index == 1);
  CHECK(libs.examples.empty());
}

TEST_CASE("solve_question: equal qualities break ties toward the lowest index") {
  Config config = tft::make_config();
  config.candidates_per_question = 2;
  Libraries libs = make_initial_libraries();
  auto scene = tft::make_test_scene();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  const std::string p0 = "return 10";
  const std::string p1 = "return 20";
  auto provider = tft::ScriptBuilder()
                      .add(Role::ProgGen, prog_key("q1", "1", 0), p0)
                      .add(Role::ProgGen, prog_key("q1", "1", 1), p1)
                      .add(Role::QualityJudge, judge_key("q1", p0), rating("9.0"))
                      .add(Role::QualityJudge, judge_key("q1", p1), rating("9.0"))
                      .provider();
  auto result = solve_question(libs, "q1", "?", scene, *provider, bank, config, "1");
  CHECK(*result.candidates.best_index == 0);
  CHECK(libs.examples.at("q1").program == p0);
}

TEST_CASE("solve_question: candidates calling deprecated tools are filtered pre-execution") {
  Config config = tft::make_config();
  config.candidates_per_question = 2;
  Libraries libs = make_initial_libraries();
  Tool dead;
  dead.name = "zombie";
  dead.params = {{"x", "number"}};
  dead.docstring = "gone";
  dead.body = "def zombie(x) {\n  return x\n}";
  dead.level = 1;
  dead.deprecated = true;
  dead.source_example_ids = {"x"};
  libs.tools.emplace(dead.name, dead);

  auto scene = tft::make_test_scene();
  EmbeddingBank bank(std::make_shared<DeterministicEmbedder>());
  const std::string p1 = "return 5";
  auto provider = tft::ScriptBuilder()
                      .add(Role::ProgGen, prog_key("q1", "1", 0), "return zombie(1)")
                      .add(Role::ProgGen, prog_key("q1", "1", 1), p1)
                      .add(Role::QualityJudge, judge_key("q1", p1), rating("9.0"))
                      .provider();
  auto result = solve_question(libs, "q1", "?", scene, *provider, bank, config, "1");
  CHECK(result.candidates.candidates[0].status == "deprecated_tool");
  CHECK(*result.candidates.best_index == 1);
}

TEST_CASE("argmax invariance: scaling every quality preserves the choice") {
  // Direct argmax property over the candidate-selection rule.
  SplitMix64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> qualities;
    const int n = 2 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) qualities.push_back(1.0 + rng.uniform(0, 9));
    const double scale = 0.1 + rng.uniform(0, 5);
    auto argmax = [](const std::vector<double>& xs) {
      int best = 0;
      for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
        if (xs[i] > xs[best]) best = i;
      }
      return best;
    };
    std::vector<double> scaled;
    for (double q : qualities) scaled.push_back(q * scale);
    CHECK(argmax(qualities) == argmax(scaled));
  }
}
