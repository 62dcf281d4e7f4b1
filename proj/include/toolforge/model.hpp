#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/errors.hpp"
#include "toolforge/value.hpp"
#include "toolforge/vpl.hpp"

namespace toolforge {

// Chat roles. Every role has exactly one prompt template and one configured
// temperature; building a request for an unconfigured role is impossible.
enum class Role {
  ProgGen,
  QualityJudge,
  CorrectnessJudge,
  ClusterAnalyst,
  Abstractor,
  DedupAnalyst,
  Merger,
  Rewriter,
  ComplexityRater,
};

std::string role_name(Role role);
Role role_from_name(const std::string& name);
std::vector<Role> all_roles();

enum class Ordering { Random, Curriculum, Dataset };
std::string ordering_name(Ordering o);
Ordering ordering_from_name(const std::string& name);

struct ProviderSettings {
  std::string type = "synthetic";  // synthetic | scripted | http
  std::string base_url;            // http only
  std::string model = "default-model";
  std::map<std::string, std::string> role_models;  // optional per-role override
  std::string api_key_env = "TOOLFORGE_API_KEY";
  std::string scripts_path;  // scripted only
  int timeout_s = 60;
  int max_retries = 3;
  std::string embedding = "deterministic";  // deterministic | http
  std::string embedding_model = "default-embedding";

  nlohmann::json to_json() const;
  static ProviderSettings from_json(const nlohmann::json& j);
};

struct Config {
  int iterations = 3;             // T
  int candidates_per_question = 4;  // m
  int retrieval_k_max = 3;
  double sim_threshold = 0.8;     // tau_sim
  double quality_threshold = 8.5; // tau_q
  int cluster_min_size = 4;       // tau_cluster
  double potential_threshold = 9.0;
  int abstraction_interval = 1;   // n_a
  int dedup_interval = 1;         // n_d
  double exec_success_min = 1.0;
  double correctness_min = 0.85;
  double dedup_sim_threshold = 0.95;
  int max_abstraction_retries = 2;  // R_max
  int max_rewrite_retries = 2;      // R_rewrite
  int max_merge_retries = 2;        // R_merge
  std::int64_t seed = 42;
  Ordering ordering = Ordering::Random;
  std::map<std::string, double> temperatures;  // role name -> temperature
  ProviderSettings provider;

  Config();  // fills the default temperature map

  double temperature_for(Role role) const;
  void validate() const;

  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::string& path);

  // Stable digest used to guard checkpoint resume.
  std::string fingerprint() const;
};

enum class ExampleStatus { Fresh, Abstracted };

struct Example {
  std::string id;  // one entry per question: id == question id
  std::string question;
  std::string scene_id;
  std::string program;
  double quality = 0;
  Value result;
  std::vector<std::pair<std::string, Value>> trace_namespace;  // binding order preserved
  std::set<std::string> tools_used;
  ExampleStatus status = ExampleStatus::Fresh;
  std::int64_t created_at_step = 0;

  nlohmann::json to_json() const;
  static Example from_json(const nlohmann::json& j, const std::string& key_path);
};

struct ToolParam {
  std::string name;
  std::string semantic_type;  // label | box | number | text | list | bool
};

struct Tool {
  std::string name;
  std::vector<ToolParam> params;
  std::string docstring;
  std::string body;  // empty for the five level-0 primitives
  int level = 0;
  bool deprecated = false;
  std::optional<std::string> deprecation_reason;
  std::set<std::string> source_example_ids;
  std::int64_t created_at_step = 0;

  std::string signature() const;  // "name(a, b)"

  nlohmann::json to_json() const;
  static Tool from_json(const nlohmann::json& j, const std::string& key_path);
};

struct Libraries {
  std::map<std::string, Example> examples;
  std::map<std::string, Tool> tools;
  std::int64_t step_counter = 0;
  std::uint64_t rng_state = 0;

  std::vector<const Tool*> active_tools() const;          // non-deprecated, any level
  std::vector<const Tool*> active_learned_tools() const;  // non-deprecated, level >= 1
  int created_learned_count() const;
  int active_learned_count() const;

  // Executor view over the active tools (optionally with one extra tool under
  // validation). Parses learned bodies; throws IntegrityError on a bad body.
  vpl::ToolView tool_view(const Tool* extra = nullptr) const;

  nlohmann::json to_json() const;
  static Libraries from_json(const nlohmann::json& j, double min_quality);
};

inline constexpr int kLibrarySchemaVersion = 1;

// Canonical serialization: sorted keys, shortest round-trip reals. Equal
// values produce byte-identical files.
void save_libraries(const Libraries& libs, const std::string& path);
std::string libraries_to_string(const Libraries& libs);

// Re-validates invariants on load; min_quality is the admission threshold the
// examples were gated with (tau_q).
Libraries load_libraries(const std::string& path, double min_quality = 8.5);

enum class AdmitOutcome { Inserted, Replaced, RejectedQuality, KeptExisting };
std::string admit_outcome_name(AdmitOutcome o);

// Alg-style admission: reject below tau_q; insert when the question is new;
// replace on strictly higher quality, or on equal-or-higher quality when the
// candidate uses a learned tool the stored entry lacks.
AdmitOutcome admit_example(Libraries& libs, const Example& candidate, const Config& config);

// Marks a learned tool deprecated. The five level-0 primitives can never be
// deprecated; trying is an integrity error.
void deprecate_tool(Libraries& libs, const std::string& name, const std::string& reason);

}  // namespace toolforge
