#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/abstraction.hpp"
#include "toolforge/maintenance.hpp"
#include "toolforge/model.hpp"
#include "toolforge/providers.hpp"
#include "toolforge/scene.hpp"
#include "toolforge/solver.hpp"

namespace toolforge {

inline constexpr int kCheckpointSchemaVersion = 1;

struct QuestionSpec {
  std::string id;
  std::string question;
  std::string scene_id;
  scene::AnswerType answer_type = scene::AnswerType::Float;
  scene::TemplateInstance oracle;
};

struct Dataset {
  std::vector<QuestionSpec> questions;
  FixtureStore fixtures;

  const QuestionSpec* find(const std::string& id) const;
};

// Manifest: {"schema_version", "fixtures_dir", "questions": [...]}; fixtures
// live one JSON file per scene under fixtures_dir, relative to the manifest.
Dataset load_dataset(const std::string& manifest_path);
void save_dataset(const Dataset& dataset, const std::string& manifest_path,
                  const std::string& fixtures_dir_name);

// The five level-0 primitives, never deprecatable.
std::map<std::string, Tool> init_tool_library();

Libraries make_initial_libraries();

struct ProviderBundle {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<EmbeddingProvider> embedder;
};

// Builds providers from the config block. `scripted_override`, when set,
// forces a ScriptedChatProvider over that file (the CLI --scripted flag).
// The synthetic backend needs the dataset to answer from.
ProviderBundle make_providers(const Config& config, const Dataset* dataset,
                              const std::string& scripted_override);

struct RunPaths {
  std::string out_dir;
  std::string libraries;
  std::string checkpoint;
  std::string solve_audit;
  std::string validation_audit;
  std::string evolution_trace;
  std::string iteration_summaries;
  std::string run_meta;
  std::string ratings;

  static RunPaths for_dir(const std::string& out_dir);
};

struct RunOptions {
  std::string out_dir;
  std::string dataset_path;   // recorded for resume
  std::string scripts_path;   // recorded for resume ("" when not scripted)
  int max_questions = -1;     // stop (checkpointed) after N questions; <0 = run to completion
};

struct RunReport {
  bool finished = false;
  std::int64_t questions_processed = 0;  // this invocation
  Libraries libraries;
  RunPaths paths;
};

// Alg-1 orchestration: ordered questions over T iterations, solve + admit,
// interval-triggered abstraction/dedup when admission mutates the library,
// checkpoint after every question, evolution trace rows throughout.
RunReport run(const Dataset& dataset, const Config& config, const ProviderBundle& providers,
              const RunOptions& options);

// Continues an interrupted run; the checkpoint must carry a matching config
// fingerprint. Produces final state identical to an uninterrupted run.
RunReport resume(const std::string& checkpoint_path);

struct TransferAnswer {
  std::optional<Value> answer;
  std::string program;
  std::set<std::string> tools_used;
  int candidates_tried = 0;
};

// Zero-shot application of built libraries: retrieve demonstrations, generate
// up to m candidates, answer with the first that executes to a result. The
// libraries are read-only here.
TransferAnswer transfer_solve(const Libraries& libs, const std::string& question,
                              const scene::SceneFixture& fixture, ChatProvider& chat,
                              EmbeddingBank& bank, const Config& config);

}  // namespace toolforge
