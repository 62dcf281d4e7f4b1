#include "toolforge/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "toolforge/prompts.hpp"
#include "toolforge/synth.hpp"
#include "toolforge/util.hpp"

namespace fs = std::filesystem;

namespace toolforge {

void truncate_file(const std::string& path, std::uint64_t size) {
  std::error_code ec;
  fs::resize_file(path, size, ec);
  if (ec) throw IoError("cannot truncate audit log: " + ec.message(), path);
}

const QuestionSpec* Dataset::find(const std::string& id) const {
  for (const auto& q : questions) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest", manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), manifest_path);
  }
  Dataset dataset;
  std::string fixtures_dir;
  try {
    fixtures_dir = j.at("fixtures_dir").get<std::string>();
    for (std::size_t i = 0; i < j.at("questions").size(); ++i) {
      const auto& qj = j["questions"][i];
      const std::string path = manifest_path + ".questions[" + std::to_string(i) + "]";
      QuestionSpec q;
      q.id = qj.at("id").get<std::string>();
      q.question = qj.at("question").get<std::string>();
      q.scene_id = qj.at("scene").get<std::string>();
      q.answer_type = scene::answer_type_from_name(qj.at("answer_type").get<std::string>());
      q.oracle = scene::TemplateInstance::from_json(qj.at("oracle"), path + ".oracle");
      dataset.questions.push_back(std::move(q));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), manifest_path);
  }
  const fs::path base = fs::path(manifest_path).parent_path() / fixtures_dir;
  std::set<std::string> scene_ids;
  for (const auto& q : dataset.questions) scene_ids.insert(q.scene_id);
  for (const auto& id : scene_ids) {
    dataset.fixtures.emplace(id, scene::load_fixture((base / (id + ".json")).string()));
  }
  std::set<std::string> seen;
  for (const auto& q : dataset.questions) {
    if (!seen.insert(q.id).second) {
      throw IntegrityError("question-ids-unique", q.id);
    }
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& manifest_path,
                  const std::string& fixtures_dir_name) {
  const fs::path base = fs::path(manifest_path).parent_path();
  fs::create_directories(base / fixtures_dir_name);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["fixtures_dir"] = fixtures_dir_name;
  auto arr = nlohmann::json::array();
  for (const auto& q : dataset.questions) {
    nlohmann::json qj;
    qj["id"] = q.id;
    qj["question"] = q.question;
    qj["scene"] = q.scene_id;
    qj["answer_type"] = scene::answer_type_name(q.answer_type);
    qj["oracle"] = q.oracle.to_json();
    arr.push_back(std::move(qj));
  }
  j["questions"] = std::move(arr);
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset manifest", manifest_path);
  out << j.dump(2) << "\n";
  for (const auto& [id, fixture] : dataset.fixtures) {
    scene::save_fixture(fixture, (base / fixtures_dir_name / (id + ".json")).string());
  }
}

std::map<std::string, Tool> init_tool_library() {
  auto make = [](const std::string& name, std::vector<ToolParam> params,
                 const std::string& doc) {
    Tool t;
    t.name = name;
    t.params = std::move(params);
    t.docstring = doc;
    t.level = 0;
    return t;
  };
  std::map<std::string, Tool> tools;
  tools["loc"] = make(
      "loc", {{"label", "label"}},
      "Locate all objects matching a base category label; returns a list of boxes "
      "(empty when none match).");
  tools["depth"] = make(
      "depth", {{"box", "box"}},
      "Depth in meters (distance from camera) of the object under the box.");
  tools["get_2d_object_size"] = make(
      "get_2d_object_size", {{"box", "box"}},
      "Pixel size of a box as [width, height].");
  tools["same_object"] = make(
      "same_object", {{"box_a", "box"}, {"box_b", "box"}},
      "True when two boxes overlap enough to be the same object.");
  tools["vqa"] = make(
      "vqa", {{"question", "text"}},
      "Answer a short free-form question about the scene; returns text.");
  return tools;
}

Libraries make_initial_libraries() {
  Libraries libs;
  libs.tools = init_tool_library();
  return libs;
}

ProviderBundle make_providers(const Config& config, const Dataset* dataset,
                              const std::string& scripted_override) {
  ProviderBundle bundle;
  const ProviderSettings& p = config.provider;
  if (!scripted_override.empty()) {
    bundle.chat = std::make_shared<ScriptedChatProvider>(
        ScriptedChatProvider::load(scripted_override));
  } else if (p.type == "scripted") {
    if (p.scripts_path.empty()) throw ConfigError("scripted provider requires scripts_path");
    bundle.chat =
        std::make_shared<ScriptedChatProvider>(ScriptedChatProvider::load(p.scripts_path));
  } else if (p.type == "http") {
    bundle.chat = std::make_shared<HttpChatProvider>(p);
  } else if (p.type == "synthetic") {
    if (!dataset) throw ConfigError("synthetic provider needs a dataset to answer from");
    bundle.chat = std::make_shared<SyntheticChatProvider>(*dataset);
  } else {
    throw ConfigError("unknown provider type '" + p.type + "'");
  }
  if (p.embedding == "deterministic") {
    bundle.embedder = std::make_shared<DeterministicEmbedder>();
  } else if (p.embedding == "http") {
    bundle.embedder = std::make_shared<HttpEmbeddingProvider>(p);
  } else {
    throw ConfigError("unknown embedding provider '" + p.embedding + "'");
  }
  return bundle;
}

RunPaths RunPaths::for_dir(const std::string& out_dir) {
  RunPaths paths;
  paths.out_dir = out_dir;
  paths.libraries = (fs::path(out_dir) / "libraries.json").string();
  paths.checkpoint = (fs::path(out_dir) / "checkpoint.json").string();
  paths.solve_audit = (fs::path(out_dir) / "audit" / "solve.jsonl").string();
  paths.validation_audit = (fs::path(out_dir) / "audit" / "validation.jsonl").string();
  paths.evolution_trace = (fs::path(out_dir) / "trace" / "evolution.jsonl").string();
  paths.iteration_summaries = (fs::path(out_dir) / "trace" / "iterations.jsonl").string();
  paths.run_meta = (fs::path(out_dir) / "run_meta.json").string();
  paths.ratings = (fs::path(out_dir) / "ratings.json").string();
  return paths;
}

namespace {

struct RunState {
  Dataset dataset;
  Config config;
  ProviderBundle providers;
  RunPaths paths;
  std::string dataset_path;
  std::string scripts_path;

  Libraries libs;
  std::unique_ptr<EmbeddingBank> bank;
  std::vector<std::size_t> permutation;
  std::map<std::string, double> ratings;  // curriculum scores, when used
  int iteration = 1;                      // 1-based
  std::size_t position = 0;               // next index into permutation
  std::set<std::string> failed_clusters;

  JsonlWriter solve_audit;
  JsonlWriter validation_audit;
  JsonlWriter evolution;
  JsonlWriter iterations;
};

std::vector<std::size_t> make_ordering(RunState& state) {
  const auto& questions = state.dataset.questions;
  std::vector<std::size_t> order(questions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  switch (state.config.ordering) {
    case Ordering::Dataset:
      break;
    case Ordering::Random: {
      SplitMix64 rng(static_cast<std::uint64_t>(state.config.seed));
      deterministic_shuffle(order, rng);
      state.libs.rng_state = rng.state();
      break;
    }
    case Ordering::Curriculum: {
      // Rate each question once, then process easiest first.
      for (const auto& q : questions) {
        ChatRequest req = prompts::build_rating_request(
            state.config, q.id, q.question, scene::answer_type_name(q.answer_type));
        StructuredReply reply = chat_parsed(*state.providers.chat, req);
        state.ratings[q.id] = std::get<ScoreReply>(reply.parsed).score;
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double ra = state.ratings.at(questions[a].id);
        double rb = state.ratings.at(questions[b].id);
        if (ra != rb) return ra < rb;
        return questions[a].id < questions[b].id;
      });
      std::ofstream out(state.paths.ratings, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write ratings", state.paths.ratings);
      out << nlohmann::json(state.ratings).dump(2) << "\n";
      break;
    }
  }
  return order;
}

void write_checkpoint(RunState& state) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["config"] = state.config.to_json();
  j["config_fingerprint"] = state.config.fingerprint();
  j["dataset_path"] = state.dataset_path;
  j["scripts_path"] = state.scripts_path;
  j["out_dir"] = state.paths.out_dir;
  j["cursor"] = {{"iteration", state.iteration}, {"position", state.position}};
  j["permutation"] = state.permutation;
  j["ratings"] = state.ratings;
  j["failed_clusters"] = std::vector<std::string>(state.failed_clusters.begin(),
                                                  state.failed_clusters.end());
  j["libraries"] = state.libs.to_json();
  j["embedding_bank"] = state.bank->to_json();
  j["audit_offsets"] = {{"solve", state.solve_audit.offset()},
                        {"validation", state.validation_audit.offset()},
                        {"evolution", state.evolution.offset()},
                        {"iterations", state.iterations.offset()}};
  const std::string tmp = state.paths.checkpoint + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint", tmp);
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, state.paths.checkpoint);
}

void write_evolution_row(RunState& state, std::int64_t step, const std::string& question_id,
                         const std::string& outcome, bool abstraction_ran, bool dedup_ran,
                         int merges) {
  nlohmann::json row;
  row["step"] = step;
  row["iteration"] = state.iteration;
  row["question_id"] = question_id;
  row["outcome"] = outcome;
  row["examples"] = state.libs.examples.size();
  row["tools_created"] = state.libs.created_learned_count();
  row["tools_active"] = state.libs.active_learned_count();
  row["abstraction_ran"] = abstraction_ran;
  row["dedup_ran"] = dedup_ran;
  row["merges"] = merges;
  state.evolution.write(row);
}

void write_iteration_summary(RunState& state) {
  std::vector<int> ccn;
  for (const auto& [_, example] : state.libs.examples) {
    ccn.push_back(vpl::cyclomatic_complexity(vpl::parse(example.program)).max);
  }
  nlohmann::json row;
  row["iteration"] = state.iteration;
  row["examples"] = state.libs.examples.size();
  row["ccn_values"] = ccn;  // id-sorted via the examples map
  state.iterations.write(row);
}

void open_audit_logs(RunState& state) {
  fs::create_directories(fs::path(state.paths.solve_audit).parent_path());
  fs::create_directories(fs::path(state.paths.evolution_trace).parent_path());
  state.solve_audit = JsonlWriter(state.paths.solve_audit);
  state.validation_audit = JsonlWriter(state.paths.validation_audit);
  state.evolution = JsonlWriter(state.paths.evolution_trace);
  state.iterations = JsonlWriter(state.paths.iteration_summaries);
}

RunReport run_loop(RunState& state, int max_questions) {
  RunReport report;
  report.paths = state.paths;
  const int total_iterations = state.config.iterations;

  while (state.iteration <= total_iterations) {
    while (state.position < state.permutation.size()) {
      if (max_questions >= 0 && report.questions_processed >= max_questions) {
        report.finished = false;
        report.libraries = state.libs;
        return report;
      }
      const QuestionSpec& q = state.dataset.questions[state.permutation[state.position]];
      const scene::SceneFixture& fixture = fixture_for(state.dataset.fixtures, q.scene_id);

      state.libs.step_counter += 1;
      const std::int64_t step = state.libs.step_counter;
      SolveResult solved =
          solve_question(state.libs, q.id, q.question, fixture, *state.providers.chat,
                         *state.bank, state.config, std::to_string(state.iteration));

      nlohmann::json audit_row;
      audit_row["step"] = step;
      audit_row["iteration"] = state.iteration;
      audit_row["outcome"] = solve_outcome_name(solved.outcome);
      audit_row["candidates"] = solved.candidates.to_json();
      state.solve_audit.write(audit_row);

      bool mutated = solved.outcome == SolveOutcome::Inserted ||
                     solved.outcome == SolveOutcome::Replaced;
      bool abstraction_ran = false, dedup_ran = false;
      int merges = 0;
      if (mutated) {
        const auto n = static_cast<std::int64_t>(state.libs.examples.size());
        if (n % state.config.abstraction_interval == 0) {
          abstraction_ran = true;
          run_abstraction_pass(state.libs, *state.bank, *state.providers.chat, state.config,
                               state.dataset.fixtures, state.failed_clusters,
                               state.validation_audit);
        }
        if (n % state.config.dedup_interval == 0) {
          dedup_ran = true;
          DedupPassStats stats =
              run_dedup_pass(state.libs, *state.providers.chat, state.config,
                             state.dataset.fixtures, state.validation_audit);
          merges = stats.merges;
        }
      }
      write_evolution_row(state, step, q.id, solve_outcome_name(solved.outcome),
                          abstraction_ran, dedup_ran, merges);
      state.position += 1;
      report.questions_processed += 1;
      write_checkpoint(state);
    }
    write_iteration_summary(state);
    state.iteration += 1;
    state.position = 0;
    write_checkpoint(state);
  }

  save_libraries(state.libs, state.paths.libraries);
  report.finished = true;
  report.libraries = state.libs;
  return report;
}

void write_run_meta(const RunState& state) {
  nlohmann::json j;
  j["dataset_path"] = state.dataset_path;
  j["scripts_path"] = state.scripts_path;
  j["config"] = state.config.to_json();
  j["config_fingerprint"] = state.config.fingerprint();
  j["ordering"] = ordering_name(state.config.ordering);
  j["seed"] = state.config.seed;
  std::ofstream out(state.paths.run_meta, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write run metadata", state.paths.run_meta);
  out << j.dump(2) << "\n";
}

}  // namespace

RunReport run(const Dataset& dataset, const Config& config, const ProviderBundle& providers,
              const RunOptions& options) {
  config.validate();
  RunState state;
  state.dataset = dataset;
  state.config = config;
  state.providers = providers;
  state.paths = RunPaths::for_dir(options.out_dir);
  state.dataset_path = options.dataset_path;
  state.scripts_path = options.scripts_path;
  fs::create_directories(options.out_dir);
  open_audit_logs(state);

  state.libs = make_initial_libraries();
  state.bank = std::make_unique<EmbeddingBank>(providers.embedder);
  write_run_meta(state);

  // Genesis row before any question.
  write_evolution_row(state, 0, "", "genesis", false, false, 0);

  state.permutation = make_ordering(state);
  write_checkpoint(state);
  return run_loop(state, options.max_questions);
}

RunReport resume(const std::string& checkpoint_path) {
  std::ifstream in(checkpoint_path);
  if (!in) throw IoError("cannot open checkpoint", checkpoint_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), checkpoint_path);
  }

  RunState state;
  try {
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw CorruptionError("unsupported checkpoint schema_version", checkpoint_path);
    }
    state.config = Config::from_json(j.at("config"));
    const std::string stored = j.at("config_fingerprint").get<std::string>();
    if (stored != state.config.fingerprint()) {
      throw IntegrityError("config-fingerprint",
                           "checkpoint fingerprint " + stored + " does not match config " +
                               state.config.fingerprint() + "; refusing to resume");
    }
    state.dataset_path = j.at("dataset_path").get<std::string>();
    state.scripts_path = j.at("scripts_path").get<std::string>();
    state.paths = RunPaths::for_dir(j.at("out_dir").get<std::string>());
    state.iteration = j.at("cursor").at("iteration").get<int>();
    state.position = j.at("cursor").at("position").get<std::size_t>();
    state.permutation = j.at("permutation").get<std::vector<std::size_t>>();
    state.ratings = j.at("ratings").get<std::map<std::string, double>>();
    for (const auto& key : j.at("failed_clusters")) {
      state.failed_clusters.insert(key.get<std::string>());
    }
    state.libs = Libraries::from_json(j.at("libraries"), state.config.quality_threshold);

    state.dataset = load_dataset(state.dataset_path);
    state.providers = make_providers(state.config, &state.dataset, state.scripts_path);
    state.bank = std::make_unique<EmbeddingBank>(state.providers.embedder);
    state.bank->restore(j.at("embedding_bank"));

    const auto& offsets = j.at("audit_offsets");
    truncate_file(state.paths.solve_audit, offsets.at("solve").get<std::uint64_t>());
    truncate_file(state.paths.validation_audit, offsets.at("validation").get<std::uint64_t>());
    truncate_file(state.paths.evolution_trace, offsets.at("evolution").get<std::uint64_t>());
    truncate_file(state.paths.iteration_summaries,
                  offsets.at("iterations").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(e.what(), checkpoint_path);
  }
  open_audit_logs(state);
  return run_loop(state, -1);
}

TransferAnswer transfer_solve(const Libraries& libs, const std::string& question,
                              const scene::SceneFixture& fixture, ChatProvider& chat,
                              EmbeddingBank& bank, const Config& config) {
  TransferAnswer answer;
  auto retrieved = retrieve_similar(libs, "", question, bank, config);
  std::vector<const Example*> demos;
  for (const auto& r : retrieved) demos.push_back(r.example);

  const auto active = libs.active_tools();
  const vpl::ToolView view = libs.tool_view();
  const std::string key = "#" + to_hex(fnv1a64(normalize_question(question))).substr(0, 12);
  for (int sample = 0; sample < config.candidates_per_question; ++sample) {
    ++answer.candidates_tried;
    ChatRequest req = prompts::build_generation_request(config, key, "solve", sample, question,
                                                        demos, active, fixture);
    StructuredReply reply = chat_parsed(chat, req);
    const std::string source = std::get<ProgramReply>(reply.parsed).source;
    vpl::Program prog;
    try {
      prog = vpl::parse(source);
    } catch (const vpl::ParseError&) {
      continue;
    }
    vpl::ExecutionTrace trace = vpl::execute(prog, fixture, view);
    if (trace.error || !trace.result || trace.result->is_null()) continue;
    answer.answer = trace.result;
    answer.program = source;
    answer.tools_used = vpl::called_tools(prog, view);
    return answer;
  }
  return answer;
}

}  // namespace toolforge
