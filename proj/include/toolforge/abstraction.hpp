#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "toolforge/audit.hpp"
#include "toolforge/model.hpp"
#include "toolforge/providers.hpp"
#include "toolforge/scene.hpp"

namespace toolforge {

using FixtureStore = std::map<std::string, scene::SceneFixture>;

const scene::SceneFixture& fixture_for(const FixtureStore& fixtures, const std::string& id);

// Numeric tolerance below which a rewrite's result counts as identical.
inline constexpr double kDivergenceTol = 1e-9;

struct Cluster {
  std::vector<std::string> ids;  // sorted example ids
  std::string pattern;           // set by assess_cluster
  std::string parameters;
  double potential = -1;         // unset until assessed
};

// Stable key identifying a cluster by membership; drives the skip cache.
std::string cluster_membership_key(const std::vector<std::string>& ids);

// Deterministic average-link agglomerative clustering over the questions of
// fresh examples: merge while the best average similarity stays >= tau_sim,
// ties broken by ascending minimum example id; clusters below tau_cluster are
// dropped. Returned in ascending min-id order, pattern/potential unset.
std::vector<Cluster> cluster_by_similarity(const Libraries& libs, EmbeddingBank& bank,
                                           const Config& config);

// Sends one cluster to the analyst. The reply may refine it into sub-clusters
// plus an unclustered remainder, but must partition the submitted ids exactly
// (the exactly-one-cluster rule); violations count as malformed replies.
std::vector<Cluster> assess_cluster(const Cluster& cluster, const Libraries& libs,
                                    ChatProvider& chat, const Config& config);

struct RewriteRecord {
  std::string program;
  Value result;
  std::vector<std::pair<std::string, Value>> bindings;
  std::set<std::string> tools_used;
  bool divergent = false;
  bool judged_correct = false;  // meaningful only when divergent
};

struct ValidationResult {
  bool passed = false;
  std::string stage;  // "execution" | "correctness" | "passed"
  std::map<std::string, RewriteRecord> rewrites;  // example id -> accepted rewrite
  int divergent_count = 0;
  int correct_divergent_count = 0;
  std::string failure_detail;
};

// Two-stage gate. Stage 1: every example must gain an executing rewrite that
// actually calls the tool (up to R_rewrite attempts each); the first example
// that cannot kills the tool immediately. Stage 2: divergent results are
// judged CORRECT/INCORRECT; overall = (|G| - divergent + correct) / |G| must
// reach correctness_min, exiting the moment the bound is unreachable.
// `early_exit=false` runs exhaustively (same verdict, used by property tests).
ValidationResult validate_tool(const Tool& tool, const std::vector<const Example*>& members,
                               const Libraries& libs, ChatProvider& chat, const Config& config,
                               const FixtureStore& fixtures, JsonlWriter& audit,
                               bool early_exit = true);

struct AbstractionOutcome {
  bool created = false;
  std::string tool_name;
  int attempts = 0;
  ValidationResult validation;
  std::string failure;
};

// Alg-2 creation loop: abstractor reply -> semantic checks -> unique name ->
// level from callees -> validate_tool; first passing attempt wins. On success
// the tool is admitted and every cluster example is rewritten in place
// (program/trace/result/tools_used replaced, status -> abstracted).
AbstractionOutcome create_tool(const Cluster& assessed, Libraries& libs, ChatProvider& chat,
                               const Config& config, const FixtureStore& fixtures,
                               JsonlWriter& audit);

struct AbstractionPassStats {
  int clusters_considered = 0;
  int clusters_skipped_cached = 0;
  int clusters_skipped_potential = 0;
  int tools_created = 0;
};

// Full Phase-II pass. `skip_cache` holds membership keys of clusters that were
// assessed below threshold or exhausted their retries; they are not retried
// until membership changes.
AbstractionPassStats run_abstraction_pass(Libraries& libs, EmbeddingBank& bank,
                                          ChatProvider& chat, const Config& config,
                                          const FixtureStore& fixtures,
                                          std::set<std::string>& skip_cache, JsonlWriter& audit);

// Shared with maintenance: apply accepted rewrites to their examples.
void apply_rewrites(Libraries& libs, const ValidationResult& validation,
                    const std::string& tool_name);

// Turns an abstractor/merger reply into an admissible Tool: collision-free
// name (deterministic _2/_3 suffixing, def header renamed to match), parsed
// body, declared params matching the definition, level computed from callees.
// Returns nullopt and fills `error` when the reply cannot become a tool.
std::optional<Tool> tool_from_reply(const ToolReply& reply, const Libraries& libs,
                                    std::string* error);

// Level is 1 + the maximum level among tools the body calls (level-0 callees
// give 1; no tool callees also give 1). Throws Error on unknown callees.
int compute_tool_level(const std::string& body, const std::string& name, const Libraries& libs);

}  // namespace toolforge
