#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "toolforge/model.hpp"
#include "toolforge/pipeline.hpp"
#include "toolforge/util.hpp"

#include "test_support.hpp"

using namespace toolforge;

namespace {

Libraries sample_libraries() {
  Libraries libs = make_initial_libraries();
  libs.step_counter = 7;
  libs.rng_state = 0xdeadbeefULL;

  Tool t;
  t.name = "double_depth";
  t.params = {{"label", "label"}};
  t.docstring = "Twice the object's depth.";
  t.body = "def double_depth(label) {\n  return depth(loc(label)[0]) * 2\n}";
  t.level = 1;
  t.source_example_ids = {"q1"};
  libs.tools.emplace(t.name, t);

  Example e = tft::make_example("q1", "how deep is the sofa, doubled?",
                                "return double_depth(\"sofa\")", 9.0, Value::real(4.0));
  e.tools_used = {"double_depth"};
  e.status = ExampleStatus::Abstracted;
  e.trace_namespace = {{"answer", Value::real(4.0)}};
  libs.examples.emplace(e.id, e);
  return libs;
}

}  // namespace

TEST_CASE("config: defaults carry the documented values") {
  Config c = tft::make_config();
  CHECK(c.iterations == 3);
  CHECK(c.candidates_per_question == 4);
  CHECK(c.retrieval_k_max == 3);
  CHECK(c.sim_threshold == 0.8);
  CHECK(c.quality_threshold == 8.5);
  CHECK(c.cluster_min_size == 4);
  CHECK(c.potential_threshold == 9.0);
  CHECK(c.abstraction_interval == 1);
  CHECK(c.dedup_interval == 1);
  CHECK(c.exec_success_min == 1.0);
  CHECK(c.correctness_min == 0.85);
  CHECK(c.dedup_sim_threshold == 0.95);
  CHECK(c.max_abstraction_retries == 2);
  CHECK(c.max_rewrite_retries == 2);
  CHECK(c.max_merge_retries == 2);
  CHECK(c.seed == 42);
  CHECK(c.ordering == Ordering::Random);
  CHECK(c.temperature_for(Role::QualityJudge) == 0.0);
  CHECK(c.temperature_for(Role::CorrectnessJudge) == 0.0);
  CHECK(c.temperature_for(Role::ProgGen) == 1.0);
  CHECK(c.temperature_for(Role::Abstractor) == 1.0);
  CHECK(c.temperature_for(Role::Rewriter) == 1.0);
}

TEST_CASE("config: validation rejects out-of-range values and missing temperatures") {
  Config c = tft::make_config();
  c.sim_threshold = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tft::make_config();
  c.quality_threshold = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tft::make_config();
  c.temperatures.erase("merger");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tft::make_config();
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("save/load: empty state round-trips") {
  auto dir = tft::temp_dir("model_empty");
  Libraries empty;
  empty.tools = init_tool_library();
  save_libraries(empty, dir + "/libs.json");
  Libraries loaded = load_libraries(dir + "/libs.json");
  CHECK(loaded.examples.empty());
  CHECK(loaded.step_counter == 0);
  CHECK(loaded.tools.size() == 5);
  CHECK(libraries_to_string(loaded) == libraries_to_string(empty));
}

TEST_CASE("save/load: populated round-trip is value-equal") {
  auto dir = tft::temp_dir("model_roundtrip");
  Libraries libs = sample_libraries();
  save_libraries(libs, dir + "/libs.json");
  Libraries loaded = load_libraries(dir + "/libs.json");
  CHECK(libraries_to_string(loaded) == libraries_to_string(libs));
  CHECK(loaded.rng_state == libs.rng_state);
  CHECK(loaded.examples.at("q1").status == ExampleStatus::Abstracted);
}

TEST_CASE("save: two saves of equal state are byte-identical") {
  auto dir = tft::temp_dir("model_bytes");
  Libraries libs = sample_libraries();
  save_libraries(libs, dir + "/a.json");
  save_libraries(libs, dir + "/b.json");
  CHECK(tft::slurp(dir + "/a.json") == tft::slurp(dir + "/b.json"));
}

TEST_CASE("load: sub-threshold quality is an integrity error") {
  auto dir = tft::temp_dir("model_quality");
  Libraries libs = sample_libraries();
  nlohmann::json j = libs.to_json();
  j["examples"]["q1"]["quality"] = 0.5;
  std::ofstream(dir + "/libs.json") << j.dump(2);
  try {
    load_libraries(dir + "/libs.json");
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.invariant()).find("quality") != std::string::npos);
  }
}

TEST_CASE("load: missing file is an IO error, not an empty library") {
  CHECK_THROWS_AS(load_libraries("/nonexistent/libs.json"), IoError);
}

TEST_CASE("load: corruption carries the offending key path") {
  auto dir = tft::temp_dir("model_corrupt");
  Libraries libs = sample_libraries();
  nlohmann::json j = libs.to_json();
  j["examples"]["q1"]["result"] = {{"t", "wat"}};
  std::ofstream(dir + "/libs.json") << j.dump(2);
  try {
    load_libraries(dir + "/libs.json");
    FAIL("expected CorruptionError");
  } catch (const CorruptionError& e) {
    CHECK(std::string(e.key_path()).find("examples.q1") != std::string::npos);
  }
}

TEST_CASE("load: structural invariants re-validated") {
  auto dir = tft::temp_dir("model_invariants");
  Libraries libs = sample_libraries();

  // tools_used must resolve.
  nlohmann::json j = libs.to_json();
  j["examples"]["q1"]["tools_used"] = {"ghost_tool"};
  std::ofstream(dir + "/a.json") << j.dump(2);
  CHECK_THROWS_AS(load_libraries(dir + "/a.json"), IntegrityError);

  // abstracted implies a learned tool in tools_used.
  j = libs.to_json();
  j["examples"]["q1"]["tools_used"] = nlohmann::json::array({"loc"});
  std::ofstream(dir + "/b.json") << j.dump(2);
  CHECK_THROWS_AS(load_libraries(dir + "/b.json"), IntegrityError);

  // level-0 set is exactly the five primitives.
  j = libs.to_json();
  j["tools"]["double_depth"]["level"] = 0;
  std::ofstream(dir + "/c.json") << j.dump(2);
  CHECK_THROWS_AS(load_libraries(dir + "/c.json"), IntegrityError);

  // programs must parse.
  j = libs.to_json();
  j["examples"]["q1"]["program"] = "let x =";
  std::ofstream(dir + "/d.json") << j.dump(2);
  CHECK_THROWS_AS(load_libraries(dir + "/d.json"), IntegrityError);
}

TEST_CASE("admit: quality below threshold is rejected") {
  Libraries libs = make_initial_libraries();
  Config config = tft::make_config();
  auto cand = tft::make_example("q9", "q?", "return 1", 8.4);
  CHECK(admit_example(libs, cand, config) == AdmitOutcome::RejectedQuality);
  CHECK(libs.examples.empty());
  // Exactly at the threshold is admitted.
  cand.quality = 8.5;
  CHECK(admit_example(libs, cand, config) == AdmitOutcome::Inserted);
}

TEST_CASE("admit: empty slot inserts") {
  Libraries libs = make_initial_libraries();
  Config config = tft::make_config();
  CHECK(admit_example(libs, tft::make_example("q1", "?", "return 1", 9.0), config) ==
        AdmitOutcome::Inserted);
}

TEST_CASE("admit: replacement truth table") {
  Config config = tft::make_config();
  Libraries libs = sample_libraries();  // has learned tool double_depth

  Example base = tft::make_example("qx", "some question?", "return 2", 9.0);
  REQUIRE(admit_example(libs, base, config) == AdmitOutcome::Inserted);

  // Lower quality: kept.
  auto lower = base;
  lower.quality = 8.7;
  CHECK(admit_example(libs, lower, config) == AdmitOutcome::KeptExisting);
  CHECK(libs.examples.at("qx").quality == 9.0);

  // Equal quality, same tools: kept.
  CHECK(admit_example(libs, base, config) == AdmitOutcome::KeptExisting);

  // Equal quality, new learned tool: replaced.
  auto with_tool = base;
  with_tool.program = "return double_depth(\"sofa\")";
  with_tool.tools_used = {"double_depth"};
  CHECK(admit_example(libs, with_tool, config) == AdmitOutcome::Replaced);
  CHECK(libs.examples.at("qx").tools_used.count("double_depth") == 1);

  // Equal quality, only level-0 tools new: kept (the tie clause needs a
  // learned tool).
  auto with_basic = base;
  with_basic.tools_used = {"loc"};
  CHECK(admit_example(libs, with_basic, config) == AdmitOutcome::KeptExisting);

  // Strictly higher quality always replaces.
  auto better = base;
  better.quality = 9.5;
  CHECK(admit_example(libs, better, config) == AdmitOutcome::Replaced);

  // Equal-quality tie with the same learned tool present in old: kept.
  auto repeat_tool = with_tool;
  repeat_tool.quality = 9.5;
  repeat_tool.status = ExampleStatus::Fresh;
  CHECK(admit_example(libs, repeat_tool, config) == AdmitOutcome::KeptExisting);
}

TEST_CASE("admit property: quality floor, uniqueness, monotone quality") {
  Config config = tft::make_config();
  Libraries libs = sample_libraries();
  SplitMix64 rng(123);
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  std::map<std::string, double> last_quality;
  for (int trial = 0; trial < 2000; ++trial) {
    Example cand = tft::make_example(ids[rng.below(ids.size())], "?", "return 1",
                                     1.0 + rng.uniform(0, 9.0));
    if (rng.below(3) == 0) cand.tools_used = {"double_depth"};
    if (rng.below(4) == 0) cand.tools_used.insert("loc");
    auto before = last_quality.count(cand.id) ? last_quality[cand.id] : -1.0;
    auto outcome = admit_example(libs, cand, config);
    if (outcome == AdmitOutcome::Replaced) {
      CHECK(cand.quality >= before);  // never lowered, even via the tie clause
    }
    std::set<std::string> seen;
    for (const auto& [id, e] : libs.examples) {
      CHECK(e.quality >= config.quality_threshold);
      CHECK(seen.insert(id).second);
      if (last_quality.count(id)) CHECK(e.quality >= last_quality[id] - 1e-12);
      last_quality[id] = e.quality;
    }
  }
}

TEST_CASE("init_tool_library: exactly the five level-0 primitives") {
  auto tools = init_tool_library();
  CHECK(tools.size() == 5);
  for (const char* name : {"loc", "depth", "get_2d_object_size", "same_object", "vqa"}) {
    REQUIRE(tools.count(name) == 1);
    CHECK(tools.at(name).level == 0);
    CHECK_FALSE(tools.at(name).deprecated);
  }
  auto again = init_tool_library();  // idempotent
  REQUIRE(again.size() == tools.size());
  for (const auto& [name, t] : tools) CHECK(again.at(name).to_json() == t.to_json());
}
